"""
Network layers: quantised PointNetConv with a float reference, 3D/2D MaxPool,
PoolOut and the linear classifier head.

Integer paths run on int64 numpy arrays; activations are unsigned 8-bit values
with a per-layer zero point, and ReLU is the activation_min floor applied after
max aggregation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

import config
from error_handler import DimensionMismatchError, ModelConfigError, PoolingError
from graph_builder import EventGraph
from logger import get_logger

logger = get_logger(__name__)

Offset = Tuple[int, int, int]


@dataclass
class QuantizedLinear:
    """
    int8 linear map with int32 bias and multiply/shift requantisation.

    BatchNorm is expected to be folded into weights and bias already.
    """
    weights: np.ndarray
    bias: np.ndarray
    requant_multiplier: int = 1
    requant_shift: int = 0
    zero_point: int = 0
    activation_min: int = config.ACTIVATION_MIN_VALUE
    name: str = ""

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.int64)
        self.bias = np.asarray(self.bias, dtype=np.int64)
        if self.weights.ndim != 2:
            raise DimensionMismatchError(f"{self.name or 'layer'}: weights must be 2-D, got {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise DimensionMismatchError(
                f"{self.name or 'layer'}: bias shape {self.bias.shape} does not match {self.weights.shape[0]} outputs"
            )
        if self.weights.size and (self.weights.min() < config.WEIGHT_MIN_VALUE
                                  or self.weights.max() > config.WEIGHT_MAX_VALUE):
            raise ModelConfigError(f"{self.name or 'layer'}: weights outside int8 range")
        if self.bias.size and (self.bias.min() < config.BIAS_MIN_VALUE or self.bias.max() > config.BIAS_MAX_VALUE):
            raise ModelConfigError(f"{self.name or 'layer'}: bias outside int32 range")
        if not 0 <= self.requant_multiplier < config.REQUANT_MULTIPLIER_LIMIT:
            raise ModelConfigError(f"{self.name or 'layer'}: requant multiplier {self.requant_multiplier} "
                                   f"outside [0, 2**31)")
        if not 0 <= self.requant_shift <= config.MAX_REQUANT_SHIFT:
            raise ModelConfigError(f"{self.name or 'layer'}: requant shift {self.requant_shift} out of range")
        if not config.ACTIVATION_MIN_VALUE <= self.zero_point <= config.ACTIVATION_MAX_VALUE:
            raise ModelConfigError(f"{self.name or 'layer'}: zero point {self.zero_point} out of range")

    @property
    def in_dim(self) -> int:
        return int(self.weights.shape[1])

    @property
    def out_dim(self) -> int:
        return int(self.weights.shape[0])

    @property
    def parameter_count(self) -> int:
        return int(self.weights.size + self.bias.size)


@dataclass(frozen=True)
class PoolSpec:
    """Cluster edge length g; dims=2 leaves time unpooled"""
    g: int
    position_mode: str = "divide"
    dims: int = 3

    def __post_init__(self):
        if self.g < 1:
            raise PoolingError(f"pool size must be positive, got {self.g}")
        if self.position_mode not in ("divide", "average"):
            raise PoolingError(f"unknown position mode '{self.position_mode}'")
        if self.dims not in (2, 3):
            raise PoolingError(f"pooling must be 2-D or 3-D, got {self.dims}")

    @property
    def hardware_supported(self) -> bool:
        return self.dims == 3 and self.position_mode == "divide"


@dataclass
class FeatureGraph:
    """
    Graph with per-vertex features in array form.

    positions: (N, 3) (x, y, t); integers except after average-mode pooling
    features: (N, d)
    edges: (E, 2) (src, dst), src being the newer vertex
    size: spatial grid extent
    """
    positions: np.ndarray
    features: np.ndarray
    edges: np.ndarray
    size: int

    @classmethod
    def from_event_graph(cls, graph: EventGraph) -> "FeatureGraph":
        """Layer-0 graph: the single attribute is polarity mapped to +1/-1"""
        signed = 2 * graph.polarities().reshape(-1, 1) - 1
        return cls(graph.positions(), signed.astype(np.int64), graph.edge_index(), graph.size)

    @property
    def num_vertices(self) -> int:
        return int(self.positions.shape[0])

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def average_degree(self) -> Fraction:
        return Fraction(self.num_edges, self.num_vertices) if self.num_vertices else Fraction(0)

    def edge_offsets(self) -> np.ndarray:
        """P_src - P_dst per edge"""
        return self.positions[self.edges[:, 0]] - self.positions[self.edges[:, 1]]

    def with_features(self, features: np.ndarray) -> "FeatureGraph":
        return FeatureGraph(self.positions, features, self.edges, self.size)


@dataclass
class OpCounter:
    """
    Arithmetic tally of the float reference convolutions, per layer.

    Products, adds, requantisations and max comparisons are counted where the
    counted convolution performs them. Only neighbour messages are tallied; the
    self-loop message is kept apart in 'self_messages'.
    """
    layers: Dict[str, Dict[str, int]] = field(default_factory=dict)

    def entry(self, name: str) -> Dict[str, int]:
        return self.layers.setdefault(name, {'vertices': 0, 'neighbours': 0, 'self_messages': 0,
                                             'mults': 0, 'adds': 0, 'requants': 0, 'comparisons': 0})

    def layer_flops(self, name: str) -> Dict[str, Fraction]:
        """
        MLP, aggregation and update counts of one layer.

        The aggregation term charges every max comparison with the average
        neighbour count seen by the aggregation loop.
        """
        entry = self.layers[name]
        k = Fraction(entry['neighbours'], entry['vertices']) if entry['vertices'] else Fraction(0)
        mlp = Fraction(entry['mults'] + entry['adds'])
        aggr = entry['comparisons'] * k
        updt = Fraction(entry['requants'])
        return {'mlp': mlp, 'aggr': aggr, 'updt': updt, 'tot': mlp + aggr + updt}

    def total(self) -> Fraction:
        return sum((self.layer_flops(name)['tot'] for name in self.layers), Fraction(0))


# ---------------------------------------------------------------------------
# Requantisation
# ---------------------------------------------------------------------------

def rounding_shift(values: np.ndarray, shift: int) -> np.ndarray:
    """Arithmetic right shift of int64 values, rounding half away from zero"""
    values = np.asarray(values, dtype=np.int64)
    if shift == 0:
        return values
    magnitude = (np.abs(values) + (1 << (shift - 1))) >> shift
    return np.where(values < 0, -magnitude, magnitude)


def requantize_array(acc: np.ndarray, multiplier, shift: int, zero_point) -> np.ndarray:
    """
    clamp(round((acc * multiplier) >> shift) + zero_point, 0, 255) on int64.

    |acc| and |multiplier| must stay below 2**31 so the product fits 63 bits.
    """
    product = np.asarray(acc, dtype=np.int64) * np.asarray(multiplier, dtype=np.int64)
    scaled = rounding_shift(product, shift) + np.asarray(zero_point, dtype=np.int64)
    return np.clip(scaled, config.ACTIVATION_MIN_VALUE, config.ACTIVATION_MAX_VALUE)


def requantize(acc: int, layer: QuantizedLinear) -> int:
    """Scalar requantisation of one accumulator (pure integer arithmetic)"""
    return int(requantize_array(np.int64(acc), layer.requant_multiplier, layer.requant_shift, layer.zero_point))


def _requantize_float(acc: np.ndarray, layer: QuantizedLinear, exact: bool) -> np.ndarray:
    scaled = acc * float(layer.requant_multiplier) / float(2 ** layer.requant_shift)
    if exact:
        scaled = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
    return np.clip(scaled + layer.zero_point, config.ACTIVATION_MIN_VALUE, config.ACTIVATION_MAX_VALUE)


# ---------------------------------------------------------------------------
# PointNetConv
# ---------------------------------------------------------------------------

def position_lut(relative: np.ndarray) -> np.ndarray:
    """
    Quantised position input for relative offsets.

    Integer offsets map to themselves; fractional ones (average-mode pooling)
    round half away from zero.
    """
    relative = np.asarray(relative)
    if np.issubdtype(relative.dtype, np.integer):
        return relative.astype(np.int64)
    return (np.sign(relative) * np.floor(np.abs(relative) + 0.5)).astype(np.int64)


def _check_input(layer: QuantizedLinear, attr: np.ndarray) -> None:
    expected = layer.in_dim - config.POSITION_DIM
    if attr.shape[-1] != expected:
        raise DimensionMismatchError(
            f"{layer.name or 'layer'} expects {expected} input features, got {attr.shape[-1]}"
        )


def conv_message(layer: QuantizedLinear, neighbour_attr, offset: Offset) -> np.ndarray:
    """
    Accumulator W . concat(X_j, P_j - P_i) + bias for one neighbour.

    offset is the relative position P_j - P_i as it enters the MLP.
    """
    attr = np.asarray(neighbour_attr, dtype=np.int64)
    _check_input(layer, attr)
    inputs = np.concatenate([attr, position_lut(np.asarray(offset))])
    return layer.weights @ inputs + layer.bias


def conv_vertex(layer: QuantizedLinear, self_attr,
                neighbours: Sequence[Tuple[np.ndarray, Offset]]) -> np.ndarray:
    """
    New 8-bit feature vector of one vertex.

    neighbours carry edge offsets (P_i - P_j), negated before the message.
    Output is the element-wise max of the requantised self-loop and neighbour
    messages, floored at activation_min.
    """
    best = requantize_array(conv_message(layer, self_attr, (0, 0, 0)),
                            layer.requant_multiplier, layer.requant_shift, layer.zero_point)
    for attr, (dx, dy, dt) in neighbours:
        message = conv_message(layer, attr, (-dx, -dy, -dt))
        best = np.maximum(best, requantize_array(message, layer.requant_multiplier,
                                                 layer.requant_shift, layer.zero_point))
    return np.maximum(best, layer.activation_min)


def _message_inputs(graph: FeatureGraph) -> Tuple[np.ndarray, np.ndarray]:
    n = graph.num_vertices
    self_inputs = np.concatenate([graph.features, np.zeros((n, config.POSITION_DIM), dtype=graph.features.dtype)],
                                 axis=1)
    src, dst = graph.edges[:, 0], graph.edges[:, 1]
    relative = position_lut(graph.positions[dst] - graph.positions[src])
    edge_inputs = np.concatenate([graph.features[dst], relative.astype(graph.features.dtype)], axis=1)
    return self_inputs, edge_inputs


def graph_conv(layer: QuantizedLinear, graph: FeatureGraph) -> np.ndarray:
    """
    Quantised PointNetConv over every vertex of a graph.

    Returns:
        (N, out_dim) int64 features in [activation_min, 255]
    """
    _check_input(layer, graph.features)
    if graph.num_vertices == 0:
        return np.zeros((0, layer.out_dim), dtype=np.int64)
    self_inputs, edge_inputs = _message_inputs(graph.with_features(graph.features.astype(np.int64)))

    def requant(inputs):
        return requantize_array(inputs @ layer.weights.T + layer.bias,
                                layer.requant_multiplier, layer.requant_shift, layer.zero_point)

    out = requant(self_inputs)
    if graph.num_edges:
        np.maximum.at(out, graph.edges[:, 0], requant(edge_inputs))
    return np.maximum(out, layer.activation_min)


def conv_vertex_float(layer: QuantizedLinear, self_attr, neighbours: Sequence[Tuple[np.ndarray, Offset]],
                      exact: bool = True) -> np.ndarray:
    """Float64 counterpart of conv_vertex; exact=True rounds at requantisation"""
    weights = layer.weights.astype(np.float64)
    bias = layer.bias.astype(np.float64)

    def message(attr, relative):
        inputs = np.concatenate([np.asarray(attr, dtype=np.float64), np.asarray(relative, dtype=np.float64)])
        return _requantize_float(weights @ inputs + bias, layer, exact)

    best = message(self_attr, (0.0, 0.0, 0.0))
    for attr, (dx, dy, dt) in neighbours:
        best = np.maximum(best, message(attr, position_lut(np.array([-dx, -dy, -dt]))))
    return np.maximum(best, float(layer.activation_min))


def graph_conv_float(layer: QuantizedLinear, graph: FeatureGraph, exact: bool = True,
                     counter: Optional[OpCounter] = None) -> np.ndarray:
    """Float64 PointNetConv over a graph, optionally tallying arithmetic into counter"""
    _check_input(layer, graph.features)
    features = graph.features.astype(np.float64)
    if graph.num_vertices == 0:
        return np.zeros((0, layer.out_dim), dtype=np.float64)
    self_inputs, edge_inputs = _message_inputs(graph.with_features(features))
    weights = layer.weights.astype(np.float64)
    bias = layer.bias.astype(np.float64)
    if counter is not None:
        return _graph_conv_counted(layer, graph, self_inputs, edge_inputs, weights, bias, exact, counter)

    out = _requantize_float(self_inputs @ weights.T + bias, layer, exact)
    if graph.num_edges:
        np.maximum.at(out, graph.edges[:, 0], _requantize_float(edge_inputs @ weights.T + bias, layer, exact))
    return np.maximum(out, float(layer.activation_min))


def _graph_conv_counted(layer: QuantizedLinear, graph: FeatureGraph, self_inputs: np.ndarray,
                        edge_inputs: np.ndarray, weights: np.ndarray, bias: np.ndarray, exact: bool,
                        counter: OpCounter) -> np.ndarray:
    """Per-vertex message and max loop of graph_conv_float, tallying every operation"""
    entry = counter.entry(layer.name)
    order = np.argsort(graph.edges[:, 0], kind="stable")
    bounds = np.searchsorted(graph.edges[order, 0], np.arange(graph.num_vertices + 1))
    out = np.empty((graph.num_vertices, layer.out_dim), dtype=np.float64)

    for v in range(graph.num_vertices):
        best = _requantize_float(weights @ self_inputs[v] + bias, layer, exact)
        entry['self_messages'] += 1
        incoming = order[bounds[v]:bounds[v + 1]]
        for e in incoming:
            products = weights * edge_inputs[e]
            entry['mults'] += products.size
            # in_dim - 1 sums per output plus the bias add
            acc = products.sum(axis=1) + bias
            entry['adds'] += products.size
            message = _requantize_float(acc, layer, exact)
            entry['requants'] += message.size
            best = np.maximum(best, message)
            entry['comparisons'] += message.size
        entry['neighbours'] += len(incoming)
        out[v] = best
    entry['vertices'] += graph.num_vertices
    return np.maximum(out, float(layer.activation_min))


# ---------------------------------------------------------------------------
# Pooling
# ---------------------------------------------------------------------------

def _floor_div(values: np.ndarray, g: int) -> np.ndarray:
    if np.issubdtype(values.dtype, np.integer):
        return values // g
    return np.floor(values / g).astype(np.int64)


def maxpool(graph: FeatureGraph, spec: PoolSpec) -> FeatureGraph:
    """
    Cluster vertices on a g-grid, keeping the element-wise max feature per cluster.

    Divide mode places each output vertex at its cluster index; average mode at
    the members' mean position scaled by 1/g. In 2-D mode time is not pooled and
    a divide-mode vertex keeps its newest member's timestamp. Edges between
    clusters are merged; edges inside a cluster are dropped.

    Raises:
        PoolingError: g does not divide the grid size
    """
    if graph.size % spec.g:
        raise PoolingError(f"pool size {spec.g} does not divide grid size {graph.size}")
    if graph.num_vertices == 0:
        return FeatureGraph(graph.positions.copy(), graph.features.copy(), graph.edges.copy(), graph.size // spec.g)

    spatial = _floor_div(graph.positions[:, :2], spec.g)
    if spec.dims == 3:
        keys = np.concatenate([spatial, _floor_div(graph.positions[:, 2:], spec.g)], axis=1)
    else:
        keys = spatial
    clusters, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    count = clusters.shape[0]

    features = graph.features
    floor = np.iinfo(features.dtype).min if np.issubdtype(features.dtype, np.integer) else -np.inf
    pooled = np.full((count, features.shape[1]), floor, dtype=features.dtype)
    np.maximum.at(pooled, inverse, features)

    if spec.position_mode == "divide":
        if spec.dims == 3:
            positions = clusters.astype(np.int64)
        else:
            newest = np.full(count, np.iinfo(np.int64).min, dtype=np.int64)
            np.maximum.at(newest, inverse, graph.positions[:, 2].astype(np.int64))
            positions = np.concatenate([clusters.astype(np.int64), newest.reshape(-1, 1)], axis=1)
    else:
        sums = np.zeros((count, 3), dtype=np.float64)
        np.add.at(sums, inverse, graph.positions.astype(np.float64))
        positions = sums / np.bincount(inverse, minlength=count).reshape(-1, 1)
        scale = np.array([spec.g, spec.g, spec.g if spec.dims == 3 else 1], dtype=np.float64)
        positions = positions / scale

    if graph.num_edges:
        merged = inverse[graph.edges]
        merged = merged[merged[:, 0] != merged[:, 1]]
        edges = np.unique(merged, axis=0) if len(merged) else np.zeros((0, 2), dtype=np.int64)
    else:
        edges = np.zeros((0, 2), dtype=np.int64)

    logger.debug(f"MaxPool g={spec.g} {spec.dims}D/{spec.position_mode}: "
                 f"{graph.num_vertices} -> {count} vertices, {graph.num_edges} -> {len(edges)} edges")
    return FeatureGraph(positions, pooled, edges.astype(np.int64), graph.size // spec.g)


def merged_edge_offset(src_position: Offset, offset: Offset, g: int) -> Optional[Offset]:
    """
    Offset of an edge after divide-mode pooling with cluster size g.

    Returns None for an intra-cluster edge, which pooling drops.
    """
    sx, sy, st = src_position
    dx, dy, dt = offset
    merged = (sx // g - (sx - dx) // g, sy // g - (sy - dy) // g, st // g - (st - dt) // g)
    return None if merged == (0, 0, 0) else merged


def pooled_candidate_offsets() -> List[Offset]:
    """
    Neighbour offsets possible after a radius-3 graph is pooled with g >= 4:
    8 in the same slice and 9 in the previous one.
    """
    box = [(dx, dy, dt) for dt in (0, 1) for dy in (-1, 0, 1) for dx in (-1, 0, 1)]
    return [offset for offset in box if offset != (0, 0, 0)]


def max_multiplications(candidates: int) -> int:
    """Message products per vertex: one per candidate neighbour plus the self-loop"""
    return candidates + 1


# ---------------------------------------------------------------------------
# PoolOut and head
# ---------------------------------------------------------------------------

def spatial_pool_out(positions: np.ndarray, features: np.ndarray, kernel: int, floor: int,
                     grid: int = config.POOLOUT_GRID) -> np.ndarray:
    """
    Max-pool vertices onto a grid x grid map with a kernel x kernel window.

    Returns:
        (grid, grid, dim) array indexed [y, x]; empty cells hold floor
    """
    dim = features.shape[1]
    out = np.full((grid, grid, dim), floor, dtype=features.dtype)
    if len(positions):
        cx = np.asarray(positions[:, 0], dtype=np.int64) // kernel
        cy = np.asarray(positions[:, 1], dtype=np.int64) // kernel
        if cx.max() >= grid or cy.max() >= grid:
            raise PoolingError(f"PoolOut kernel {kernel} leaves a grid larger than {grid}x{grid}")
        np.maximum.at(out, (cy, cx), features)
    return out


def pool_out(quarter_maps: Sequence[np.ndarray], dim: int, floor: int,
             grid: int = config.POOLOUT_GRID) -> np.ndarray:
    """
    Flattened PoolOut features: element-wise max over the given temporal maps.

    quarter_maps are the (grid, grid, dim) maps of the most recent slices (at
    most four); missing slices count as floor. The result concatenates the
    per-cell vectors in row-major (y, x) order.
    """
    out = np.full((grid, grid, dim), floor, dtype=np.int64)
    for grid_map in quarter_maps[-config.PREDICTIONS_PER_WINDOW:]:
        out = np.maximum(out, grid_map)
    return out.reshape(-1)


def classify(head: QuantizedLinear, features) -> Tuple[np.ndarray, int]:
    """
    Integer affine scores and argmax (lowest index wins ties).

    Raises:
        DimensionMismatchError: feature length differs from the head's in_dim
    """
    features = np.asarray(features, dtype=np.int64).reshape(-1)
    if features.shape[0] != head.in_dim:
        raise DimensionMismatchError(f"head expects {head.in_dim} features, got {features.shape[0]}")
    scores = head.weights @ features + head.bias
    return scores, int(np.argmax(scores))


def classify_float(head: QuantizedLinear, features) -> Tuple[np.ndarray, int]:
    features = np.asarray(features, dtype=np.float64).reshape(-1)
    if features.shape[0] != head.in_dim:
        raise DimensionMismatchError(f"head expects {head.in_dim} features, got {features.shape[0]}")
    scores = head.weights.astype(np.float64) @ features + head.bias.astype(np.float64)
    return scores, int(np.argmax(scores))
