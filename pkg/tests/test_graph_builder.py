"""
Unit tests for event-graph construction (graph_builder.py)
Tests candidate enumeration, neighbourhood-matrix insertion and the graph dump
"""

import io
import unittest

import numpy as np

from error_handler import TimestampRegressionError
from events_io import NormalizedEvent
from graph_builder import (GraphBuilder, NeighbourhoodMatrix, build_graph, candidate_offsets, dump_graph,
                           front_end_cycles, insert_event, sustained_throughput_meps)


def _ne(x, y, t, p=1):
    return NormalizedEvent(x=x, y=y, t=t, p=p, window=0, t_ext=t)


def brute_force_edges(events, radius):
    """Replay the last-event-per-pixel semantics with a plain dict"""
    last = {}
    edges = set()
    for vid, ev in enumerate(events):
        for (px, py), (dst, t_old) in last.items():
            dx, dy, dt = ev.x - px, ev.y - py, ev.t_ext - t_old
            if dx * dx + dy * dy <= radius * radius and dt >= 0 and dx * dx + dy * dy + dt * dt <= radius * radius:
                edges.add((vid, dst, dx, dy, dt))
        last[(ev.x, ev.y)] = (vid, ev.t_ext)
    return edges


def random_stream(rng, count, beta=128, box=8, corner=False):
    x0 = 0 if corner else int(rng.integers(0, beta - box))
    y0 = 0 if corner else int(rng.integers(0, beta - box))
    t = np.cumsum(rng.integers(0, 2, size=count))
    return [_ne(x0 + int(rng.integers(0, box)), y0 + int(rng.integers(0, box)), int(t[i]), int(rng.integers(0, 2)))
            for i in range(count)]


class TestCandidateOffsets(unittest.TestCase):
    """Test cases for the candidate disc"""

    def test_counts(self):
        """R=3 reads 29 cells, R=1 five, R=0 one"""
        self.assertEqual(len(candidate_offsets(3)), 29)
        self.assertEqual(len(candidate_offsets(1)), 5)
        self.assertEqual(candidate_offsets(0), [(0, 0)])

    def test_radius_one_members(self):
        """R=1 is the plus shape"""
        self.assertEqual(set(candidate_offsets(1)), {(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)})

    def test_row_major_order(self):
        """dy is the outer loop"""
        offsets = candidate_offsets(3)
        self.assertEqual(offsets[0], (0, -3))
        self.assertEqual([dy for _, dy in offsets], sorted(dy for _, dy in offsets))


class TestInsertEvent(unittest.TestCase):
    """Test cases for single insertions"""

    def setUp(self):
        """Set up test fixtures"""
        self.nm = NeighbourhoodMatrix(128)

    def test_first_event_has_no_edges(self):
        """An empty matrix yields an isolated vertex"""
        vertex, edges = insert_event(self.nm, _ne(5, 5, 0))
        self.assertEqual(vertex.id, 0)
        self.assertEqual(edges, [])
        self.assertEqual(self.nm.cell(5, 5), (0, 1, 0))

    def test_same_pixel(self):
        """Same pixel two steps later links with offset (0, 0, 2)"""
        insert_event(self.nm, _ne(10, 10, 0, p=0))
        _, edges = insert_event(self.nm, _ne(10, 10, 2))
        self.assertEqual(len(edges), 1)
        self.assertEqual(edges[0].offset, (0, 0, 2))
        self.assertEqual((edges[0].src, edges[0].dst), (1, 0))
        self.assertEqual(edges[0].dst_polarity, 0)

    def test_distance_just_outside(self):
        """3^2 + 0^2 + 1^2 = 10 > 9 gives no edge"""
        insert_event(self.nm, _ne(10, 10, 0))
        _, edges = insert_event(self.nm, _ne(13, 10, 1))
        self.assertEqual(edges, [])

    def test_distance_on_the_sphere(self):
        """3^2 at dt=0 is inside"""
        insert_event(self.nm, _ne(10, 10, 4))
        _, edges = insert_event(self.nm, _ne(13, 10, 4))
        self.assertEqual([e.offset for e in edges], [(3, 0, 0)])

    def test_overwrite_keeps_latest(self):
        """A pixel only remembers its newest event"""
        insert_event(self.nm, _ne(10, 10, 0))
        insert_event(self.nm, _ne(10, 10, 1))
        _, edges = insert_event(self.nm, _ne(10, 11, 1))
        self.assertEqual([(e.dst, e.offset) for e in edges], [(1, (0, 1, 0))])

    def test_grid_border(self):
        """Candidates outside the grid are skipped"""
        insert_event(self.nm, _ne(0, 0, 0))
        _, edges = insert_event(self.nm, _ne(1, 0, 0))
        self.assertEqual(len(edges), 1)
        _, edges = insert_event(self.nm, _ne(127, 127, 0))
        self.assertEqual(edges, [])

    def test_regression_rejected(self):
        """Normalised time may not go backwards"""
        insert_event(self.nm, _ne(1, 1, 5))
        with self.assertRaises(TimestampRegressionError):
            insert_event(self.nm, _ne(1, 1, 4))

    def test_reset(self):
        """Reset forgets every pixel"""
        insert_event(self.nm, _ne(1, 1, 5))
        self.nm.reset()
        self.assertIsNone(self.nm.cell(1, 1))
        _, edges = insert_event(self.nm, _ne(1, 1, 0))
        self.assertEqual(edges, [])


class TestBuildGraph(unittest.TestCase):
    """Test cases for whole-stream graph construction"""

    def test_empty(self):
        """No events, no graph"""
        graph = build_graph([], 128)
        self.assertEqual((graph.num_vertices, graph.num_edges), (0, 0))

    def test_matches_brute_force(self):
        """Edge sets agree with the dict oracle on random streams"""
        rng = np.random.default_rng(2024)
        for trial in range(1000):
            events = random_stream(rng, int(rng.integers(1, 40)), corner=trial % 5 == 0)
            graph = build_graph(events, 128, radius=3)
            got = {(e.src, e.dst, e.dx, e.dy, e.dt) for e in graph.edges}
            self.assertEqual(got, brute_force_edges(events, 3))

    def test_other_radii(self):
        """The oracle also agrees for R=1 and R=2"""
        rng = np.random.default_rng(7)
        for radius in (1, 2):
            for _ in range(100):
                events = random_stream(rng, 30)
                graph = build_graph(events, 128, radius=radius)
                got = {(e.src, e.dst, e.dx, e.dy, e.dt) for e in graph.edges}
                self.assertEqual(got, brute_force_edges(events, radius))

    def test_edge_properties(self):
        """Edges point newer to older, within R, at most 29 per vertex"""
        rng = np.random.default_rng(1)
        events = random_stream(rng, 1000, box=6)
        graph = build_graph(events, 128)
        out_degree = np.bincount(graph.edge_index()[:, 0], minlength=graph.num_vertices)
        self.assertLessEqual(out_degree.max(), 29)
        for e in graph.edges:
            self.assertGreater(e.src, e.dst)
            self.assertGreaterEqual(e.dt, 0)
            self.assertLessEqual(e.dx ** 2 + e.dy ** 2 + e.dt ** 2, 9)

    def test_builder_counters(self):
        """The builder counts vertices, edges and front-end cycles"""
        builder = GraphBuilder(128, 3)
        for ev in [_ne(1, 1, 0), _ne(1, 2, 0), _ne(2, 2, 1)]:
            builder.insert(ev)
        self.assertEqual(builder.vertex_count, 3)
        self.assertEqual(builder.edge_count, 3)
        self.assertEqual(builder.cycles, 45)


class TestFrontEndCost(unittest.TestCase):
    """Test cases for front-end cycle accounting"""

    def test_cycles(self):
        """15 cycles per event"""
        self.assertEqual(front_end_cycles(1), 15)
        self.assertEqual(front_end_cycles(0), 0)

    def test_throughput(self):
        """200 MHz / 15 cycles is 13.33 MEPS"""
        self.assertAlmostEqual(sustained_throughput_meps(200_000_000), 13.333, places=3)


class TestGraphDump(unittest.TestCase):
    """Test cases for the debug dump"""

    def test_dump_lines(self):
        """The dump lists vertices then edges"""
        graph = build_graph([_ne(1, 1, 0, p=0), _ne(2, 1, 1)], 128)
        buffer = io.StringIO()
        count = dump_graph(graph, buffer)
        lines = buffer.getvalue().splitlines()
        self.assertEqual(count, 3)
        self.assertEqual(lines, ["V 0 1 1 0 0", "V 1 2 1 1 1", "E 1 0 1 0 1"])


if __name__ == '__main__':
    unittest.main()
