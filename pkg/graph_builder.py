"""
Directed event-graph construction with a fixed-size neighbourhood matrix.

Every event becomes a vertex. On arrival it is linked to the most recent event
stored at each candidate pixel of a disc of radius R, provided the spatio-temporal
distance is within R; edges always point from the newer event to the older one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, List, Optional, TextIO, Tuple, Union

import numpy as np

import config
from error_handler import ModelConfigError, TimestampRegressionError
from events_io import NormalizedEvent, SensorConfig
from logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class Vertex:
    """Graph vertex; t is the window-extended timestamp and id the insertion order"""
    id: int
    x: int
    y: int
    t: int
    p: int


@dataclass(frozen=True)
class Edge:
    """Directed edge src (newer) -> dst (older), offset = P_src - P_dst"""
    src: int
    dst: int
    dx: int
    dy: int
    dt: int
    dst_polarity: int

    @property
    def offset(self) -> Tuple[int, int, int]:
        return (self.dx, self.dy, self.dt)


@dataclass
class EventGraph:
    vertices: List[Vertex] = field(default_factory=list)
    edges: List[Edge] = field(default_factory=list)
    radius: int = config.DEFAULT_RADIUS
    size: int = config.DEFAULT_BETA

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def positions(self) -> np.ndarray:
        """(N, 3) int64 array of (x, y, t)"""
        if not self.vertices:
            return np.zeros((0, 3), dtype=np.int64)
        return np.array([(v.x, v.y, v.t) for v in self.vertices], dtype=np.int64)

    def polarities(self) -> np.ndarray:
        return np.array([v.p for v in self.vertices], dtype=np.int64)

    def edge_index(self) -> np.ndarray:
        """(E, 2) int64 array of (src, dst)"""
        if not self.edges:
            return np.zeros((0, 2), dtype=np.int64)
        return np.array([(e.src, e.dst) for e in self.edges], dtype=np.int64)


@lru_cache(maxsize=None)
def _candidate_array(radius: int) -> np.ndarray:
    span = np.arange(-radius, radius + 1)
    dy, dx = np.meshgrid(span, span, indexing='ij')
    inside = dx * dx + dy * dy <= radius * radius
    return np.stack([dx[inside], dy[inside]], axis=1).astype(np.int64)


def candidate_offsets(radius: int) -> List[Tuple[int, int]]:
    """
    Pixel offsets (dx, dy) with dx^2 + dy^2 <= R^2, row-major (dy outer, dx inner).

    R=3 gives the 29 cells the hardware front end reads per event.
    """
    if radius < 0:
        raise ModelConfigError(f"radius must be non-negative, got {radius}")
    return [(int(dx), int(dy)) for dx, dy in _candidate_array(radius)]


class NeighbourhoodMatrix:
    """
    beta x beta store of the last event per normalised pixel.

    Arrays are indexed [y, x]. Single writer: insert_event must be called in
    event order from one thread.
    """

    def __init__(self, beta: int):
        self.beta = beta
        self.timestamp = np.zeros((beta, beta), dtype=np.int64)
        self.polarity = np.zeros((beta, beta), dtype=np.uint8)
        self.is_empty = np.ones((beta, beta), dtype=bool)
        self.vertex_id = np.full((beta, beta), -1, dtype=np.int64)
        self.insert_count = 0
        self.last_t: Optional[int] = None

    def cell(self, x: int, y: int) -> Optional[Tuple[int, int, int]]:
        """(timestamp, polarity, vertex id) stored at (x, y), None when empty"""
        if self.is_empty[y, x]:
            return None
        return int(self.timestamp[y, x]), int(self.polarity[y, x]), int(self.vertex_id[y, x])

    def reset(self) -> None:
        self.is_empty.fill(True)
        self.vertex_id.fill(-1)
        self.insert_count = 0
        self.last_t = None


def insert_event(nm: NeighbourhoodMatrix, ne: NormalizedEvent,
                 radius: int = config.DEFAULT_RADIUS) -> Tuple[Vertex, List[Edge]]:
    """
    Link a new event to its stored neighbours, then overwrite its own cell.

    Only the candidate cells of radius R are read. Edges are emitted in
    candidate order and carry the neighbour's polarity.

    Raises:
        TimestampRegressionError: ne is older than the previously inserted event
    """
    if nm.last_t is not None and ne.t_ext < nm.last_t:
        raise TimestampRegressionError(
            f"normalised timestamp {ne.t_ext} precedes {nm.last_t}", record_index=nm.insert_count
        )

    vertex = Vertex(nm.insert_count, ne.x, ne.y, ne.t_ext, ne.p)
    offsets = _candidate_array(radius)
    nx = ne.x + offsets[:, 0]
    ny = ne.y + offsets[:, 1]
    in_grid = (nx >= 0) & (nx < nm.beta) & (ny >= 0) & (ny < nm.beta)
    nx, ny, offsets = nx[in_grid], ny[in_grid], offsets[in_grid]

    occupied = ~nm.is_empty[ny, nx]
    nx, ny, offsets = nx[occupied], ny[occupied], offsets[occupied]
    dt = ne.t_ext - nm.timestamp[ny, nx]
    close = (dt >= 0) & (offsets[:, 0] ** 2 + offsets[:, 1] ** 2 + dt ** 2 <= radius * radius)

    edges = [
        Edge(vertex.id, int(dst), int(-ox), int(-oy), int(d), int(p))
        for dst, (ox, oy), d, p in zip(
            nm.vertex_id[ny[close], nx[close]], offsets[close], dt[close], nm.polarity[ny[close], nx[close]]
        )
    ]

    nm.timestamp[ne.y, ne.x] = ne.t_ext
    nm.polarity[ne.y, ne.x] = ne.p
    nm.is_empty[ne.y, ne.x] = False
    nm.vertex_id[ne.y, ne.x] = vertex.id
    nm.insert_count += 1
    nm.last_t = ne.t_ext
    return vertex, edges


class GraphBuilder:
    """Incremental front end: owns one NeighbourhoodMatrix and counts work done"""

    def __init__(self, beta: int = config.DEFAULT_BETA, radius: int = config.DEFAULT_RADIUS):
        if radius < 1:
            raise ModelConfigError(f"graph radius must be >= 1, got {radius}")
        self.nm = NeighbourhoodMatrix(beta)
        self.radius = radius
        self.edge_count = 0

    def insert(self, ne: NormalizedEvent) -> Tuple[Vertex, List[Edge]]:
        vertex, edges = insert_event(self.nm, ne, self.radius)
        self.edge_count += len(edges)
        return vertex, edges

    @property
    def vertex_count(self) -> int:
        return self.nm.insert_count

    @property
    def cycles(self) -> int:
        return front_end_cycles(self.vertex_count)


def build_graph(events: Iterable[NormalizedEvent], cfg: Union[SensorConfig, int],
                radius: int = config.DEFAULT_RADIUS) -> EventGraph:
    """
    Fold insert_event over a time-ordered stream.

    Args:
        events: normalised events
        cfg: sensor configuration (or beta directly)
        radius: edge search radius R
    """
    beta = cfg if isinstance(cfg, int) else cfg.beta
    builder = GraphBuilder(beta, radius)
    graph = EventGraph(radius=radius, size=beta)
    for ne in events:
        vertex, edges = builder.insert(ne)
        graph.vertices.append(vertex)
        graph.edges.extend(edges)
    logger.debug(f"Built graph: {graph.num_vertices} vertices, {graph.num_edges} edges (R={radius})")
    return graph


def front_end_cycles(event_count: int) -> int:
    """Clock cycles the neighbourhood-matrix stage spends on event_count events"""
    return config.FRONT_END_CYCLES_PER_EVENT * event_count


def sustained_throughput_meps(clock_hz: int = config.DEFAULT_CLOCK_HZ) -> float:
    """Service rate of the front end in million events per second"""
    return clock_hz / config.FRONT_END_CYCLES_PER_EVENT / 1e6


def dump_graph(graph: EventGraph, sink: Union[str, Path, TextIO]) -> int:
    """
    Write the debug dump: `V id x y t p` lines, then `E src dst dx dy dt` lines.

    Returns:
        Number of lines written
    """
    lines = [f"V {v.id} {v.x} {v.y} {v.t} {v.p}" for v in graph.vertices]
    lines += [f"E {e.src} {e.dst} {e.dx} {e.dy} {e.dt}" for e in graph.edges]
    text = "".join(line + "\n" for line in lines)
    if isinstance(sink, (str, Path)):
        Path(sink).write_text(text)
    else:
        sink.write(text)
    return len(lines)
