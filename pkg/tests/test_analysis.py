"""
Unit tests for FLOPs accounting and reduction statistics (analysis.py)
"""

import unittest
from fractions import Fraction

import numpy as np

from analysis import (FlopsReport, flops_components, flops_per_event, flops_report, flops_total,
                      instrumented_flops, pool_ablation, reduction_figure, reduction_stats, verify_flops)
from error_handler import InputError
from events_io import NormalizedEvent, synth_events
from graph_builder import build_graph
from layers import FeatureGraph, OpCounter, PoolSpec, graph_conv_float, maxpool
from model import ModelConfig
from weights import generate_weights


def random_graph(rng, count, box=10):
    x0, y0 = (int(v) for v in rng.integers(0, 128 - box, size=2))
    t = np.cumsum(rng.integers(0, 2, size=count))
    events = [NormalizedEvent(x0 + int(rng.integers(0, box)), y0 + int(rng.integers(0, box)), int(t[i]),
                              int(rng.integers(0, 2)), 0, int(t[i])) for i in range(count)]
    return FeatureGraph.from_event_graph(build_graph(events, 128))


class TestFlopsFormula(unittest.TestCase):
    """Test cases for the per-layer FLOPs formula"""

    def test_no_edges(self):
        """E=0 costs nothing"""
        self.assertEqual(flops_total(0, 4, 16, 0), 0)

    def test_worked_example(self):
        """E=1, F_in=4, F_out=16, K=1 is 160"""
        self.assertEqual(flops_total(1, 4, 16, 1), 160)
        parts = flops_components(1, 4, 16, 1)
        self.assertEqual(parts, {'mlp': 128, 'aggr': 16, 'updt': 16})

    def test_fractional_degree(self):
        """K may be fractional; the total stays exact"""
        self.assertEqual(flops_total(3, 4, 16, Fraction(3, 2)), 3 * 16 * (8 + Fraction(3, 2) + 1))

    def test_matches_counter(self):
        """The formula equals the counted operations of the float layer"""
        rng = np.random.default_rng(0)
        weights = generate_weights('L', seed=2)
        for trial in range(500):
            layer = weights.convs[0]
            graph = random_graph(rng, int(rng.integers(1, 60)))
            if trial % 2:
                pooled = maxpool(graph.with_features(np.repeat(graph.features, 16, axis=1)), PoolSpec(4))
                layer, graph = weights.convs[1], pooled
            counter = OpCounter()
            graph_conv_float(layer, graph, exact=False, counter=counter)
            if graph.num_vertices == 0:
                continue
            expected = flops_total(graph.num_edges, layer.in_dim, layer.out_dim, graph.average_degree)
            self.assertEqual(counter.layer_flops(layer.name)['tot'], expected)


class TestFlopsReport(unittest.TestCase):
    """Test cases for whole-stream FLOPs reports"""

    def setUp(self):
        """Set up test fixtures"""
        self.cfg = ModelConfig()
        self.events = synth_events('burst', self.cfg.sensor(), 2000, seed=1)

    def test_report_rows(self):
        """One row per conv layer, pooled layers share their input graph"""
        report, stats = flops_report(self.events, self.cfg)
        self.assertEqual([row['layer'] for row in report.rows], ['conv1', 'conv2', 'conv3', 'conv4', 'conv5'])
        self.assertEqual(report.rows[0]['N'], 2000)
        self.assertEqual(report.rows[1]['N'], report.rows[2]['N'])
        self.assertEqual([s.stage for s in stats.stages], ['input', 'pool1', 'pool2'])
        frame = report.to_frame()
        self.assertEqual(list(frame.columns), ['layer', 'N', 'E', 'K', 'flops_mlp', 'flops_aggr', 'flops_updt',
                                               'flops_tot'])

    def test_verify_against_counter(self):
        """The instrumented float network agrees layer by layer"""
        report, _ = flops_report(self.events, self.cfg)
        counter = instrumented_flops(self.events, self.cfg, generate_weights('B'))
        self.assertEqual(verify_flops(report, counter), [])
        self.assertEqual(counter.total(), report.total)

    def test_verify_detects_mismatch(self):
        """A tampered row is reported"""
        report, _ = flops_report(self.events, self.cfg)
        counter = instrumented_flops(self.events, self.cfg, generate_weights('B'))
        report.rows[3]['flops_tot'] += 1
        self.assertEqual(verify_flops(report, counter), ['conv4'])

    def test_per_event(self):
        """Doubling the event count with the same graph halves the figure"""
        report, _ = flops_report(self.events, self.cfg)
        single = flops_per_event(report, 1000)
        self.assertAlmostEqual(flops_per_event(report, 2000), single / 2)
        self.assertEqual(flops_per_event(FlopsReport(), 5), 0)
        with self.assertRaises(InputError):
            flops_per_event(report, 0)

    def test_order_of_magnitude(self):
        """A sparse sensor-sized stream costs a fraction of a MFLOP per event"""
        report, _ = flops_report(self.events, self.cfg)
        self.assertGreater(report.mflops_per_event(), 0.001)
        self.assertLess(report.mflops_per_event(), 1.0)


class TestReduction(unittest.TestCase):
    """Test cases for reduction statistics"""

    def test_no_pooling(self):
        """A single stage is its own reference"""
        graph = random_graph(np.random.default_rng(1), 30)
        stats = reduction_stats([('input', graph)])
        self.assertEqual(stats.vertex_reduction(), {'input': 1.0})

    def test_single_cluster(self):
        """Everything inside one cube reduces by the vertex count"""
        events = [NormalizedEvent(x, y, t, 1, 0, t) for t, (x, y) in enumerate([(0, 0), (1, 1), (2, 3), (3, 2)])]
        graph = FeatureGraph.from_event_graph(build_graph(events, 128))
        pooled = maxpool(graph, PoolSpec(4))
        stats = reduction_stats([('input', graph), ('pool1', pooled)])
        self.assertEqual(stats.vertex_reduction()['pool1'], 4.0)

    def test_pool_ablation(self):
        """Five pooling variants, 2-D pooling never keeps more vertices than 3-D"""
        graph = random_graph(np.random.default_rng(2), 200, box=30)
        table = pool_ablation(graph)
        self.assertEqual(list(table['pooling']), ['none', '2D-average', '2D-divide', '3D-average', '3D-divide'])
        rows = table.set_index('pooling')
        self.assertLessEqual(rows.loc['2D-divide', 'N_pool1'], rows.loc['3D-divide', 'N_pool1'])
        self.assertEqual(rows.loc['none', 'N_pool1'], 200)
        self.assertEqual(list(table.loc[table['hardware'], 'pooling']), ['3D-divide'])

    def test_figure(self):
        """The figure carries vertex, edge and three FLOPs traces"""
        cfg = ModelConfig()
        report, stats = flops_report(synth_events('moving-edge', cfg.sensor(), 500, seed=3), cfg)
        figure = reduction_figure(stats, report)
        self.assertEqual(len(figure.data), 5)


if __name__ == '__main__':
    unittest.main()
