"""
Model configuration and inference orchestration.

The streaming pipeline mirrors the hardware: an asynchronous front end
(neighbourhood matrix + Conv1) feeds 4x4x4 pooling into per-slice feature
memories; Conv2..Conv5 run synchronously once a slice is closed, with a 2x2x2
pool between Conv3 and Conv4; PoolOut emits a prediction every quarter window.
The offline path builds the whole graph first and applies each layer globally.
"""

from __future__ import annotations

import math
import os
import queue
import threading
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Deque, Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

import numpy as np
import yaml

import config
from error_handler import ModelConfigError, SliceMismatchError
from events_io import Event, NormalizedEvent, SensorConfig, normalize_stream
from graph_builder import Edge, GraphBuilder, Vertex, build_graph
from layers import (FeatureGraph, OpCounter, PoolSpec, QuantizedLinear, classify, classify_float,
                    conv_vertex, graph_conv, graph_conv_float, maxpool, merged_edge_offset, pool_out,
                    spatial_pool_out)
from logger import get_logger
from weights import ModelWeights

logger = get_logger(__name__)

Offset = Tuple[int, int, int]
Cell = Tuple[int, int]


@dataclass(frozen=True)
class ModelConfig:
    variant: str = 'B'
    beta: int = config.DEFAULT_BETA
    time_window: int = config.DEFAULT_TIME_WINDOW_US
    radius: int = config.DEFAULT_RADIUS
    allow_custom_window: bool = False

    def __post_init__(self):
        if self.variant not in config.MODEL_VARIANTS:
            raise ModelConfigError(
                f"unknown variant '{self.variant}' (known: {', '.join(config.MODEL_VARIANTS)})"
            )
        if self.beta not in config.SUPPORTED_BETAS:
            raise ModelConfigError(f"beta must be one of {config.SUPPORTED_BETAS}, got {self.beta}")
        if self.time_window <= 0:
            raise ModelConfigError(f"time window must be positive, got {self.time_window}")
        if not self.allow_custom_window and config.SUPPORTED_WINDOW_CONFIGS[self.beta] != self.time_window:
            raise ModelConfigError(
                f"beta={self.beta} requires a {config.SUPPORTED_WINDOW_CONFIGS[self.beta]} us time window "
                f"(got {self.time_window}); set allow_custom_window to override"
            )
        if self.radius < 1:
            raise ModelConfigError(f"radius must be >= 1, got {self.radius}")

    @property
    def name(self) -> str:
        return config.VARIANT_NAMES[self.variant]

    @property
    def dims(self) -> Tuple[int, ...]:
        return config.MODEL_VARIANTS[self.variant]

    @property
    def pool1_size(self) -> int:
        return self.beta // config.POOL_SIZES[0]

    @property
    def pool2_size(self) -> int:
        return self.pool1_size // config.POOL_SIZES[1]

    @property
    def poolout_kernel(self) -> int:
        """Spatial kernel that reduces the post-pool grid to POOLOUT_GRID cells per side"""
        return self.pool2_size // config.POOLOUT_GRID

    @property
    def slices_per_quarter(self) -> int:
        """Post-pool-2 slices folded into one prediction quarter"""
        return self.pool2_size // config.PREDICTIONS_PER_WINDOW

    @property
    def prediction_interval_us(self) -> Fraction:
        return Fraction(self.time_window, config.PREDICTIONS_PER_WINDOW)

    def memory_depth(self, cumulative_pool: int) -> int:
        """Slice buffers a feature memory needs for this radius: 2 + ceil(R / G)"""
        return 2 + math.ceil(self.radius / cumulative_pool)

    def sync_layers(self) -> List[Tuple[str, int, int]]:
        """(layer, grid size, output dim) for the synchronous convolutions Conv2..Conv5"""
        dims = self.dims
        return [('conv2', self.pool1_size, dims[1]), ('conv3', self.pool1_size, dims[2]),
                ('conv4', self.pool2_size, dims[3]), ('conv5', self.pool2_size, dims[4])]

    def sensor(self, width: Optional[int] = None, height: Optional[int] = None) -> SensorConfig:
        return SensorConfig(width or self.beta, height or self.beta, self.time_window, self.beta)

    @classmethod
    def from_dict(cls, data: Dict) -> "ModelConfig":
        known = {'variant', 'beta', 'time_window_us', 'radius', 'allow_custom_window'}
        unknown = set(data) - known
        if unknown:
            raise ModelConfigError(f"unknown model config keys: {', '.join(sorted(unknown))}")
        try:
            return cls(
                variant=str(data.get('variant', 'B')).upper(),
                beta=int(data.get('beta', config.DEFAULT_BETA)),
                time_window=int(data.get('time_window_us', config.DEFAULT_TIME_WINDOW_US)),
                radius=int(data.get('radius', config.DEFAULT_RADIUS)),
                allow_custom_window=bool(data.get('allow_custom_window', False)),
            )
        except (TypeError, ValueError) as e:
            raise ModelConfigError(f"invalid model config value: {e}") from e

    @classmethod
    def from_yaml(cls, path: Union[str, Path]) -> "ModelConfig":
        try:
            with open(path, 'r') as f:
                data = yaml.safe_load(f) or {}
        except (OSError, yaml.YAMLError) as e:
            raise ModelConfigError(f"cannot read model config {path}: {e}") from e
        if not isinstance(data, dict):
            raise ModelConfigError(f"model config {path} must be a mapping")
        return cls.from_dict(data)


def load_model_config(path: Optional[Union[str, Path]] = None) -> ModelConfig:
    """
    Model configuration from path, else $EVGRAPH_CONFIG, else built-in defaults.
    """
    path = path or os.getenv(config.CONFIG_ENV_VAR)
    if path:
        cfg = ModelConfig.from_yaml(path)
        logger.info(f"Loaded model config {path}: {cfg.name}, beta={cfg.beta}, T={cfg.time_window} us")
        return cfg
    logger.debug("No model config given, using defaults")
    return ModelConfig()


def preset_path(name: str) -> Path:
    """Path of a bundled preset, e.g. 'base_128'"""
    path = Path(__file__).parent / config.MODEL_CONFIG_DIR / f"{name}.yaml"
    if not path.exists():
        raise ModelConfigError(f"no bundled model preset '{name}'")
    return path


# ---------------------------------------------------------------------------
# Temporal channels and feature memory
# ---------------------------------------------------------------------------

@dataclass
class TemporalChannel:
    """Sparse 2-D feature map of one time slice; absent cells are unpopulated"""
    n: int
    size: int
    dim: int
    cells: Dict[Cell, np.ndarray] = field(default_factory=dict)
    edges: Dict[Cell, Set[Offset]] = field(default_factory=dict)

    def reset(self, n: int) -> None:
        self.n = n
        self.cells.clear()
        self.edges.clear()

    def features(self, x: int, y: int) -> Optional[np.ndarray]:
        return self.cells.get((x, y))

    def populated(self) -> List[Cell]:
        """Populated cells in (y, x) row-major order"""
        return sorted(self.cells, key=lambda cell: (cell[1], cell[0]))


def accumulate_slice(channel: TemporalChannel, position: Offset, features: np.ndarray,
                     edges: Iterable[Offset] = ()) -> TemporalChannel:
    """
    Merge a vertex into its cell: element-wise max of features, union of edge offsets.

    Raises:
        SliceMismatchError: the vertex belongs to another slice
    """
    x, y, t = position
    if t != channel.n:
        raise SliceMismatchError(f"vertex in slice {t} written to channel {channel.n}")
    if not (0 <= x < channel.size and 0 <= y < channel.size):
        raise SliceMismatchError(f"cell ({x}, {y}) outside {channel.size}x{channel.size} channel")
    features = np.asarray(features, dtype=np.int64)
    prior = channel.cells.get((x, y))
    channel.cells[(x, y)] = features.copy() if prior is None else np.maximum(prior, features)
    channel.edges.setdefault((x, y), set()).update(edges)
    return channel


class FeatureMemory:
    """
    Rotating slice buffers between two pipeline stages.

    One buffer is written (slice n) while the consumer reads the older ones;
    stepping resets the oldest buffer to the floor state and makes it the writer.
    """

    def __init__(self, size: int, dim: int, depth: int = 3, first_slice: int = 0):
        if depth < 3:
            raise ModelConfigError(f"feature memory needs at least 3 buffers, got {depth}")
        self.depth = depth
        self.buffers = [TemporalChannel(first_slice - i, size, dim) for i in range(depth)]
        self.writer_index = 0
        self.consumer_done = first_slice - 1
        self.violations = 0
        self.role_log: List[Tuple[int, int]] = [(first_slice, 0)]

    @property
    def writer(self) -> TemporalChannel:
        return self.buffers[self.writer_index]

    def channel(self, n: int) -> Optional[TemporalChannel]:
        for buffer in self.buffers:
            if buffer.n == n:
                return buffer
        return None

    def mark_consumed(self, n: int) -> None:
        self.consumer_done = max(self.consumer_done, n)


def feature_memory_step(fm: FeatureMemory) -> FeatureMemory:
    """
    Close the writer slice and recycle the oldest buffer for slice n+1.

    A consumer that has not finished slice n-1 still needs the recycled buffer;
    that overrun is counted as a scheduling violation.
    """
    n = fm.writer.n
    if fm.consumer_done < n - 1:
        fm.violations += 1
        logger.warning(f"Feature memory overrun: slice {n + 1} starts while slice "
                       f"{fm.consumer_done + 1} is unconsumed")
    oldest = min(range(fm.depth), key=lambda i: fm.buffers[i].n)
    fm.buffers[oldest].reset(n + 1)
    fm.writer_index = oldest
    fm.role_log.append((n + 1, oldest))
    return fm


# ---------------------------------------------------------------------------
# Streaming pipeline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Prediction:
    t_end_us: int
    scores: Tuple
    argmax: int
    warmup: bool = False
    quarter: int = 0


def _signed_polarity(p: int) -> np.ndarray:
    return np.array([2 * p - 1], dtype=np.int64)


class FrontEnd:
    """Neighbourhood matrix plus asynchronous Conv1, one event at a time"""

    def __init__(self, cfg: ModelConfig, conv1: QuantizedLinear):
        self.builder = GraphBuilder(cfg.beta, cfg.radius)
        self.conv1 = conv1

    def process(self, ne: NormalizedEvent) -> Tuple[Vertex, np.ndarray, List[Edge]]:
        vertex, edges = self.builder.insert(ne)
        neighbours = [(_signed_polarity(e.dst_polarity), e.offset) for e in edges]
        return vertex, conv_vertex(self.conv1, _signed_polarity(vertex.p), neighbours), edges


class SyncConvStage:
    """Convolution over one closed slice, reading neighbours from the input memory"""

    def __init__(self, layer: QuantizedLinear, source: FeatureMemory, size: int, depth: int, first_slice: int):
        self.layer = layer
        self.source = source
        self.memory = FeatureMemory(size, layer.out_dim, depth, first_slice)
        self.vertices = 0

    def process(self, n: int) -> TemporalChannel:
        channel = self.source.channel(n)
        out = self.memory.writer
        if channel is None or out.n != n:
            raise SliceMismatchError(f"{self.layer.name}: slice {n} not available")
        for x, y in channel.populated():
            offsets = sorted(channel.edges[(x, y)])
            neighbours = []
            for dx, dy, dt in offsets:
                older = self.source.channel(n - dt)
                feat = None if older is None else older.features(x - dx, y - dy)
                if feat is None:
                    raise SliceMismatchError(
                        f"{self.layer.name}: neighbour ({x - dx}, {y - dy}) of slice {n - dt} missing"
                    )
                neighbours.append((feat, (dx, dy, dt)))
            accumulate_slice(out, (x, y, n), conv_vertex(self.layer, channel.cells[(x, y)], neighbours), offsets)
            self.vertices += 1
        self.source.mark_consumed(n)
        return out

    def step(self) -> None:
        feature_memory_step(self.memory)


def _pool_into(memory: FeatureMemory, channel: TemporalChannel, g: int) -> None:
    """Fold a closed slice into the coarser memory's writer (slice n // g)"""
    for (x, y), feat in channel.cells.items():
        merged = set()
        for offset in channel.edges[(x, y)]:
            m = merged_edge_offset((x, y, channel.n), offset, g)
            if m is not None:
                merged.add(m)
        accumulate_slice(memory.writer, (x // g, y // g, channel.n // g), feat, merged)


class StreamingPipeline:
    """
    Slice-by-slice execution of Conv2..PoolOut.

    push() takes the front end's output in event order; finish() flushes every
    slice up to the end of the last window. Empty slices are stepped through.
    """

    def __init__(self, cfg: ModelConfig, weights: ModelWeights, first_window: int = 0):
        self.cfg = cfg
        self.weights = weights
        g1, g2 = config.POOL_SIZES
        depth1 = cfg.memory_depth(g1)
        depth2 = cfg.memory_depth(g1 * g2)
        first1 = first_window * cfg.pool1_size
        first2 = first_window * cfg.pool2_size
        conv1, conv2, conv3, conv4, conv5 = weights.convs

        self.pool1 = FeatureMemory(cfg.pool1_size, conv1.out_dim, depth1, first1)
        self.conv2 = SyncConvStage(conv2, self.pool1, cfg.pool1_size, depth1, first1)
        self.conv3 = SyncConvStage(conv3, self.conv2.memory, cfg.pool1_size, depth1, first1)
        self.pool2 = FeatureMemory(cfg.pool2_size, conv3.out_dim, depth2, first2)
        self.conv4 = SyncConvStage(conv4, self.pool2, cfg.pool2_size, depth2, first2)
        self.conv5 = SyncConvStage(conv5, self.conv4.memory, cfg.pool2_size, depth2, first2)

        self.floor = conv5.activation_min
        self.first_quarter = first_window * config.PREDICTIONS_PER_WINDOW
        self.quarter_maps: Deque[np.ndarray] = deque(maxlen=config.PREDICTIONS_PER_WINDOW)
        self.current_map = self._empty_map()
        self.predictions: List[Prediction] = []

    def _empty_map(self) -> np.ndarray:
        dim = self.weights.convs[-1].out_dim
        return np.full((config.POOLOUT_GRID, config.POOLOUT_GRID, dim), self.floor, dtype=np.int64)

    @property
    def memories(self) -> List[FeatureMemory]:
        return [self.pool1, self.conv2.memory, self.conv3.memory, self.pool2,
                self.conv4.memory, self.conv5.memory]

    def push(self, vertex: Vertex, features: np.ndarray, edges: Sequence[Edge]) -> None:
        g = config.POOL_SIZES[0]
        slice_index = vertex.t // g
        if slice_index < self.pool1.writer.n:
            raise SliceMismatchError(f"vertex {vertex.id} arrived after slice {slice_index} closed")
        self._advance_to(slice_index)
        merged = set()
        for e in edges:
            m = merged_edge_offset((vertex.x, vertex.y, vertex.t), e.offset, g)
            if m is not None:
                merged.add(m)
        accumulate_slice(self.pool1.writer, (vertex.x // g, vertex.y // g, slice_index), features, merged)

    def finish(self, last_window: int) -> List[Prediction]:
        self._advance_to((last_window + 1) * self.cfg.pool1_size)
        return self.predictions

    def _advance_to(self, slice_index: int) -> None:
        while self.pool1.writer.n < slice_index:
            self._close_pool1_slice(self.pool1.writer.n)
            feature_memory_step(self.pool1)

    def _close_pool1_slice(self, n: int) -> None:
        self.conv2.process(n)
        c3 = self.conv3.process(n)
        _pool_into(self.pool2, c3, config.POOL_SIZES[1])
        self.conv3.memory.mark_consumed(n)
        if n % config.POOL_SIZES[1] == config.POOL_SIZES[1] - 1:
            self._close_pool2_slice(n // config.POOL_SIZES[1])
            feature_memory_step(self.pool2)
        self.conv2.step()
        self.conv3.step()

    def _close_pool2_slice(self, n: int) -> None:
        self.conv4.process(n)
        c5 = self.conv5.process(n)
        cells = c5.populated()
        if cells:
            positions = np.array(cells, dtype=np.int64)
            features = np.stack([c5.cells[cell] for cell in cells])
            self.current_map = np.maximum(self.current_map,
                                          spatial_pool_out(positions, features, self.cfg.poolout_kernel, self.floor))
        self.conv5.memory.mark_consumed(n)
        self.conv4.step()
        self.conv5.step()
        if n % self.cfg.slices_per_quarter == self.cfg.slices_per_quarter - 1:
            self._emit(n // self.cfg.slices_per_quarter)

    def _emit(self, quarter: int) -> None:
        self.quarter_maps.append(self.current_map)
        self.current_map = self._empty_map()
        features = pool_out(list(self.quarter_maps), self.weights.convs[-1].out_dim, self.floor)
        scores, argmax = classify(self.weights.head, features)
        self.predictions.append(_prediction(self.cfg, quarter, self.first_quarter, scores, argmax))

    @property
    def violations(self) -> int:
        return sum(memory.violations for memory in self.memories)


def _prediction(cfg: ModelConfig, quarter: int, first_quarter: int, scores, argmax: int) -> Prediction:
    t_end = (quarter + 1) * cfg.time_window // config.PREDICTIONS_PER_WINDOW
    warmup = quarter - first_quarter < config.WARMUP_PREDICTIONS
    return Prediction(t_end, tuple(s.item() for s in scores), argmax, warmup, quarter)


def normalize_events(events: Sequence, cfg: ModelConfig, sensor: Optional[SensorConfig]) -> List[NormalizedEvent]:
    if events and isinstance(events[0], NormalizedEvent):
        return list(events)
    sensor = sensor or cfg.sensor()
    if sensor.beta != cfg.beta or sensor.time_window != cfg.time_window:
        raise ModelConfigError(
            f"sensor (beta={sensor.beta}, T={sensor.time_window}) disagrees with model "
            f"(beta={cfg.beta}, T={cfg.time_window})"
        )
    normalized, _ = normalize_stream(events, sensor)
    return normalized


def window_span(normalized: Sequence[NormalizedEvent]) -> Tuple[int, int]:
    if not normalized:
        return 0, 0
    return normalized[0].window, normalized[-1].window


def run_inference(events: Sequence[Union[Event, NormalizedEvent]], cfg: ModelConfig, weights: ModelWeights,
                  sensor: Optional[SensorConfig] = None, threaded: bool = False) -> List[Prediction]:
    """
    Streaming inference: one prediction per quarter window from the first
    event's window to the end of the last event's window.

    Args:
        events: raw events (normalised with sensor) or already normalised events
        cfg: model configuration
        weights: quantised weights matching cfg.variant
        sensor: sensor geometry; defaults to a beta x beta sensor
        threaded: run the front end on its own thread, feeding the synchronous
            part through a bounded queue
    """
    weights.check_variant(cfg.variant)
    normalized = normalize_events(events, cfg, sensor)
    first_window, last_window = window_span(normalized)
    front_end = FrontEnd(cfg, weights.convs[0])
    pipeline = StreamingPipeline(cfg, weights, first_window)

    if threaded:
        _run_threaded(normalized, front_end, pipeline)
    else:
        for ne in normalized:
            pipeline.push(*front_end.process(ne))
    predictions = pipeline.finish(last_window)

    logger.info(f"Streamed {len(normalized)} events through {cfg.name}: {len(predictions)} predictions, "
                f"{front_end.builder.edge_count} edges")
    if pipeline.violations:
        logger.warning(f"{pipeline.violations} feature-memory scheduling violations")
    return predictions


_END_OF_STREAM = object()


def _run_threaded(normalized: Sequence[NormalizedEvent], front_end: FrontEnd, pipeline: StreamingPipeline) -> None:
    fifo: "queue.Queue" = queue.Queue(maxsize=config.DEFAULT_FIFO_DEPTH)
    failure: List[BaseException] = []

    def produce():
        try:
            for ne in normalized:
                fifo.put(front_end.process(ne))
        except BaseException as e:
            failure.append(e)
        finally:
            fifo.put(_END_OF_STREAM)

    producer = threading.Thread(target=produce, name="evgraph-front-end", daemon=True)
    producer.start()
    try:
        while True:
            item = fifo.get()
            if item is _END_OF_STREAM:
                break
            pipeline.push(*item)
    finally:
        # keep draining so a blocked producer can reach the sentinel
        while producer.is_alive():
            try:
                fifo.get(timeout=0.1)
            except queue.Empty:
                pass
        producer.join()
    if failure:
        raise failure[0]


# ---------------------------------------------------------------------------
# Offline paths
# ---------------------------------------------------------------------------

ConvFn = Callable[[QuantizedLinear, FeatureGraph], np.ndarray]


def forward_graphs(graph: FeatureGraph, weights: ModelWeights, conv: ConvFn = graph_conv) -> Dict[str, FeatureGraph]:
    """
    Apply Conv1..Conv5 and both pools to a whole graph.

    Returns:
        Output graph of every conv layer, keyed 'conv1'..'conv5'
    """
    g1, g2 = config.POOL_SIZES
    conv1, conv2, conv3, conv4, conv5 = weights.convs
    out = {}
    out['conv1'] = graph.with_features(conv(conv1, graph))
    pooled = maxpool(out['conv1'], PoolSpec(g1))
    out['conv2'] = pooled.with_features(conv(conv2, pooled))
    out['conv3'] = pooled.with_features(conv(conv3, out['conv2']))
    pooled = maxpool(out['conv3'], PoolSpec(g2))
    out['conv4'] = pooled.with_features(conv(conv4, pooled))
    out['conv5'] = pooled.with_features(conv(conv5, out['conv4']))
    return out


def layer_graphs(normalized: Sequence[NormalizedEvent], cfg: ModelConfig) -> Dict[str, FeatureGraph]:
    """
    Input graph of every conv layer, structure only (features are polarity).

    Keys: 'conv1' (raw event graph), 'conv2'/'conv3' (after pool 1),
    'conv4'/'conv5' (after pool 2).
    """
    g1, g2 = config.POOL_SIZES
    graph = FeatureGraph.from_event_graph(build_graph(normalized, cfg.beta, cfg.radius))
    pooled1 = maxpool(graph, PoolSpec(g1))
    pooled2 = maxpool(pooled1, PoolSpec(g2))
    return {'conv1': graph, 'conv2': pooled1, 'conv3': pooled1, 'conv4': pooled2, 'conv5': pooled2}


def _quarter_predictions(final: FeatureGraph, cfg: ModelConfig, weights: ModelWeights, first_window: int,
                         last_window: int, head: Callable) -> List[Prediction]:
    floor = weights.convs[-1].activation_min
    dim = weights.convs[-1].out_dim
    quarters = final.positions[:, 2] // cfg.slices_per_quarter if final.num_vertices else np.zeros(0, dtype=np.int64)
    first_quarter = first_window * config.PREDICTIONS_PER_WINDOW
    maps: Dict[int, np.ndarray] = {}
    predictions = []
    for q in range(first_quarter, (last_window + 1) * config.PREDICTIONS_PER_WINDOW):
        members = quarters == q
        maps[q] = spatial_pool_out(final.positions[members], final.features[members], cfg.poolout_kernel, floor)
        recent = [maps[k] for k in range(q - config.PREDICTIONS_PER_WINDOW + 1, q + 1) if k in maps]
        scores, argmax = head(weights.head, pool_out(recent, dim, floor))
        predictions.append(_prediction(cfg, q, first_quarter, scores, argmax))
    return predictions


def run_inference_offline(events: Sequence[Union[Event, NormalizedEvent]], cfg: ModelConfig,
                          weights: ModelWeights, sensor: Optional[SensorConfig] = None) -> List[Prediction]:
    """Whole-graph reference: build the full graph, apply every layer globally, then slice time"""
    weights.check_variant(cfg.variant)
    normalized = normalize_events(events, cfg, sensor)
    first_window, last_window = window_span(normalized)
    graph = FeatureGraph.from_event_graph(build_graph(normalized, cfg.beta, cfg.radius))
    final = forward_graphs(graph, weights)['conv5']
    return _quarter_predictions(final, cfg, weights, first_window, last_window, classify)


def run_inference_float(events: Sequence[Union[Event, NormalizedEvent]], cfg: ModelConfig,
                        weights: ModelWeights, sensor: Optional[SensorConfig] = None, exact: bool = True,
                        counter: Optional[OpCounter] = None) -> List[Prediction]:
    """
    Float64 reference network.

    exact=True rounds at every requantisation and reproduces the integer path;
    exact=False keeps fractional activations.
    """
    weights.check_variant(cfg.variant)
    normalized = normalize_events(events, cfg, sensor)
    first_window, last_window = window_span(normalized)
    graph = FeatureGraph.from_event_graph(build_graph(normalized, cfg.beta, cfg.radius))

    def conv(layer, g):
        return graph_conv_float(layer, g, exact=exact, counter=counter)

    final = forward_graphs(graph.with_features(graph.features.astype(np.float64)), weights, conv)['conv5']
    return _quarter_predictions(final, cfg, weights, first_window, last_window, classify_float)
