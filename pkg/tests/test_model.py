"""
Unit tests for the model configuration and the streaming pipeline (model.py)
Tests feature memories, slice accumulation and streaming-versus-offline agreement
"""

import unittest

import numpy as np
import pytest

import config
from error_handler import DimensionMismatchError, ModelConfigError, SliceMismatchError
from events_io import Event, SensorConfig, synth_events
from model import (FeatureMemory, FrontEnd, ModelConfig, StreamingPipeline, TemporalChannel, accumulate_slice,
                   feature_memory_step, load_model_config, normalize_events, preset_path, run_inference,
                   run_inference_float, run_inference_offline, window_span)
from weights import generate_weights


def random_stream(rng, cfg, windows=2):
    """Short synthetic stream spanning up to `windows` time windows"""
    pattern = config.SYNTH_PATTERNS[int(rng.integers(0, len(config.SYNTH_PATTERNS)))]
    count = int(rng.integers(1, 80))
    duration = int(rng.integers(1, windows * cfg.time_window))
    return synth_events(pattern, cfg.sensor(), count, seed=int(rng.integers(0, 1 << 30)), duration_us=duration)


class TestModelConfig(unittest.TestCase):
    """Test cases for ModelConfig"""

    def test_defaults(self):
        """Base, beta=128, 100 ms, R=3"""
        cfg = ModelConfig()
        self.assertEqual((cfg.variant, cfg.beta, cfg.time_window, cfg.radius), ('B', 128, 100_000, 3))
        self.assertEqual(cfg.dims, (16, 32, 32, 64, 64))

    def test_derived_sizes(self):
        """Grid sizes, PoolOut kernel and cadence follow beta and T"""
        cfg = ModelConfig()
        self.assertEqual((cfg.pool1_size, cfg.pool2_size), (32, 16))
        self.assertEqual(cfg.poolout_kernel, 4)
        self.assertEqual(cfg.slices_per_quarter, 4)
        self.assertEqual(cfg.prediction_interval_us, 25_000)
        self.assertEqual(cfg.time_window // cfg.pool1_size, 3125)
        wide = ModelConfig('L', 256, 50_000)
        self.assertEqual((wide.pool1_size, wide.pool2_size, wide.poolout_kernel), (64, 32, 8))

    def test_memory_depth(self):
        """2 + ceil(R / G) buffers"""
        cfg = ModelConfig()
        self.assertEqual(cfg.memory_depth(4), 3)
        self.assertEqual(cfg.memory_depth(8), 3)
        self.assertEqual(cfg.memory_depth(1), 5)

    def test_validation(self):
        """Unknown variants and unsupported window pairs are rejected"""
        with self.assertRaises(ModelConfigError):
            ModelConfig(variant='XL')
        with self.assertRaises(ModelConfigError):
            ModelConfig(beta=256, time_window=100_000)
        with self.assertRaises(ModelConfigError):
            ModelConfig(beta=64)
        custom = ModelConfig(beta=256, time_window=100_000, allow_custom_window=True)
        self.assertEqual(custom.time_window, 100_000)

    def test_from_dict(self):
        """Known keys map onto fields; unknown keys are errors"""
        cfg = ModelConfig.from_dict({'variant': 's', 'beta': 256, 'time_window_us': 50_000})
        self.assertEqual((cfg.variant, cfg.beta, cfg.time_window), ('S', 256, 50_000))
        with self.assertRaises(ModelConfigError):
            ModelConfig.from_dict({'variant': 'S', 'colour': 'red'})

    def test_presets(self):
        """Bundled presets load"""
        for name in ('small_128', 'base_128', 'large_128', 'small_256', 'base_256', 'large_256'):
            cfg = load_model_config(preset_path(name))
            self.assertEqual(cfg.beta, int(name.split('_')[1]))
        with self.assertRaises(ModelConfigError):
            preset_path('huge_512')


def test_config_from_environment(monkeypatch):
    """$EVGRAPH_CONFIG is used when no path is given"""
    monkeypatch.setenv(config.CONFIG_ENV_VAR, str(preset_path('large_256')))
    cfg = load_model_config()
    assert (cfg.variant, cfg.beta, cfg.time_window) == ('L', 256, 50_000)


def test_config_defaults_without_environment(monkeypatch):
    """No path and no environment means defaults"""
    monkeypatch.delenv(config.CONFIG_ENV_VAR, raising=False)
    assert load_model_config() == ModelConfig()


def test_bad_config_file(tmp_path):
    """Malformed YAML is a configuration error"""
    path = tmp_path / "bad.yaml"
    path.write_text("variant: [unclosed\n")
    with pytest.raises(ModelConfigError):
        load_model_config(path)


class TestTemporalChannel(unittest.TestCase):
    """Test cases for slice accumulation"""

    def setUp(self):
        """Set up test fixtures"""
        self.channel = TemporalChannel(5, 32, 3)

    def test_first_write(self):
        """An empty cell takes the features as they are"""
        accumulate_slice(self.channel, (1, 2, 5), np.array([1, 2, 3]), [(1, 0, 0)])
        np.testing.assert_array_equal(self.channel.features(1, 2), [1, 2, 3])
        self.assertEqual(self.channel.edges[(1, 2)], {(1, 0, 0)})

    def test_max_merge(self):
        """Two arrivals keep the element-wise max and the union of edges"""
        accumulate_slice(self.channel, (1, 2, 5), np.array([1, 9, 3]), [(1, 0, 0)])
        accumulate_slice(self.channel, (1, 2, 5), np.array([4, 2, 3]), [(0, 1, 1)])
        np.testing.assert_array_equal(self.channel.features(1, 2), [4, 9, 3])
        self.assertEqual(self.channel.edges[(1, 2)], {(1, 0, 0), (0, 1, 1)})

    def test_wrong_slice(self):
        """Vertices of another slice are rejected"""
        with self.assertRaises(SliceMismatchError):
            accumulate_slice(self.channel, (1, 2, 6), np.zeros(3))

    def test_populated_order(self):
        """Populated cells come back row-major"""
        for x, y in [(3, 1), (0, 2), (1, 1)]:
            accumulate_slice(self.channel, (x, y, 5), np.zeros(3))
        self.assertEqual(self.channel.populated(), [(1, 1), (3, 1), (0, 2)])


class TestFeatureMemory(unittest.TestCase):
    """Test cases for rotating feature memories"""

    def test_rotation(self):
        """Over three slices each buffer is the writer exactly once"""
        fm = FeatureMemory(32, 4, depth=3)
        for _ in range(3):
            fm.mark_consumed(fm.writer.n)
            feature_memory_step(fm)
        writers = [index for _, index in fm.role_log[:3]]
        self.assertEqual(sorted(writers), [0, 1, 2])
        self.assertEqual([n for n, _ in fm.role_log], [0, 1, 2, 3])
        self.assertEqual(fm.violations, 0)

    def test_recycled_buffer_is_clear(self):
        """A recycled buffer starts empty"""
        fm = FeatureMemory(32, 4, depth=3)
        accumulate_slice(fm.writer, (0, 0, 0), np.ones(4))
        for _ in range(3):
            fm.mark_consumed(fm.writer.n)
            feature_memory_step(fm)
        self.assertEqual(fm.writer.n, 3)
        self.assertEqual(fm.writer.cells, {})
        self.assertIsNone(fm.channel(0))

    def test_slow_consumer(self):
        """Stepping past an unconsumed slice is a violation"""
        fm = FeatureMemory(32, 4, depth=3)
        feature_memory_step(fm)
        self.assertEqual(fm.violations, 0)
        feature_memory_step(fm)
        self.assertEqual(fm.violations, 1)

    def test_minimum_depth(self):
        """Fewer than three buffers cannot pipeline"""
        with self.assertRaises(ModelConfigError):
            FeatureMemory(32, 4, depth=2)


class TestInference(unittest.TestCase):
    """Test cases for streaming and offline inference"""

    def setUp(self):
        """Set up test fixtures"""
        self.cfg = ModelConfig()
        self.weights = generate_weights('B', 2, seed=1)

    def test_empty_stream(self):
        """No events still yields one window of floor predictions, the first three flagged"""
        predictions = run_inference([], self.cfg, self.weights)
        self.assertEqual([p.t_end_us for p in predictions], [25_000, 50_000, 75_000, 100_000])
        self.assertEqual([p.warmup for p in predictions], [True, True, True, False])
        self.assertEqual(len({p.scores for p in predictions}), 1)
        self.assertEqual(predictions, run_inference_offline([], self.cfg, self.weights))

    def test_cadence(self):
        """Predictions come every T/4 to the end of the last window"""
        events = [Event(10, 10, 1_000, 1), Event(11, 10, 160_000, 0)]
        predictions = run_inference(events, self.cfg, self.weights)
        self.assertEqual(len(predictions), 8)
        self.assertTrue(all(b.t_end_us - a.t_end_us == 25_000 for a, b in zip(predictions, predictions[1:])))
        self.assertEqual(predictions[-1].t_end_us, 200_000)

    def test_late_first_window(self):
        """A stream starting in window 2 predicts from that window on"""
        predictions = run_inference([Event(5, 5, 210_000, 1)], self.cfg, self.weights)
        self.assertEqual(predictions[0].t_end_us, 225_000)
        self.assertEqual(len(predictions), 4)
        self.assertTrue(predictions[0].warmup)

    def test_streaming_matches_offline(self):
        """Slice-by-slice streaming equals the whole-graph run for every variant"""
        rng = np.random.default_rng(2024)
        for variant in ('S', 'B', 'L'):
            cfg = ModelConfig(variant)
            weights = generate_weights(variant, 2, seed=int(rng.integers(0, 1000)))
            for _ in range(100):
                events = random_stream(rng, cfg)
                self.assertEqual(run_inference(events, cfg, weights), run_inference_offline(events, cfg, weights))

    def test_streaming_matches_offline_wide(self):
        """The beta=256 configuration agrees as well"""
        rng = np.random.default_rng(7)
        cfg = ModelConfig('L', 256, 50_000)
        weights = generate_weights('L', 4, seed=3)
        for _ in range(20):
            events = random_stream(rng, cfg)
            self.assertEqual(run_inference(events, cfg, weights), run_inference_offline(events, cfg, weights))

    def test_dense_stream(self):
        """A dense burst exercises many edges and still agrees"""
        sensor = self.cfg.sensor()
        events = synth_events('burst', sensor, 3000, seed=4)
        self.assertEqual(run_inference(events, self.cfg, self.weights),
                         run_inference_offline(events, self.cfg, self.weights))

    def test_threaded_matches_sequential(self):
        """Running the front end on a thread changes nothing"""
        events = synth_events('moving-edge', self.cfg.sensor(), 2000, seed=2, duration_us=150_000)
        self.assertEqual(run_inference(events, self.cfg, self.weights, threaded=True),
                         run_inference(events, self.cfg, self.weights))

    def test_float_exact_matches_integer(self):
        """The rounded float reference reproduces the integer predictions"""
        events = synth_events('burst', self.cfg.sensor(), 1500, seed=6)
        integer = run_inference_offline(events, self.cfg, self.weights)
        floating = run_inference_float(events, self.cfg, self.weights, exact=True)
        self.assertEqual([p.argmax for p in integer], [p.argmax for p in floating])
        self.assertEqual([p.scores for p in integer], [p.scores for p in floating])

    def test_no_violations_in_software(self):
        """The software pipeline always consumes a slice before it is recycled"""
        events = normalize_events(synth_events('burst', self.cfg.sensor(), 1000, seed=8), self.cfg, None)
        first, last = window_span(events)
        front_end = FrontEnd(self.cfg, self.weights.convs[0])
        pipeline = StreamingPipeline(self.cfg, self.weights, first)
        for ne in events:
            pipeline.push(*front_end.process(ne))
        pipeline.finish(last)
        self.assertEqual(pipeline.violations, 0)

    def test_sensor_scaling(self):
        """Raw events from a smaller sensor are normalised before streaming"""
        sensor = SensorConfig(120, 100, 100_000, 128)
        events = synth_events('moving-edge', sensor, 500, seed=3)
        self.assertEqual(run_inference(events, self.cfg, self.weights, sensor=sensor),
                         run_inference_offline(events, self.cfg, self.weights, sensor=sensor))

    def test_sensor_disagreement(self):
        """A sensor with another beta is a configuration error"""
        with self.assertRaises(ModelConfigError):
            run_inference([Event(0, 0, 0, 1)], self.cfg, self.weights, sensor=SensorConfig(240, 180, 50_000, 256))

    def test_dimension_mismatch(self):
        """Weights of another variant are rejected"""
        with self.assertRaises(DimensionMismatchError):
            run_inference([], self.cfg, generate_weights('S'))


if __name__ == '__main__':
    unittest.main()
