"""
FLOPs accounting and graph-reduction statistics.

Per conv layer with input graph (N vertices, E edges, K = E/N):
    FLOPS_MLP  = 2 * F_in * F_out * E
    FLOPS_Aggr = F_out * K * E
    FLOPS_Updt = F_out * E
F_in counts the three position inputs.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd
import plotly.graph_objects as go
from plotly.subplots import make_subplots

import config
from error_handler import InputError
from events_io import Event, NormalizedEvent, SensorConfig
from layers import FeatureGraph, OpCounter, PoolSpec, maxpool
from logger import get_logger
from model import ModelConfig, layer_graphs, normalize_events, run_inference_float
from weights import ModelWeights, layer_shapes

logger = get_logger(__name__)

Number = Union[int, Fraction]


@dataclass(frozen=True)
class LayerGraphStats:
    stage: str
    N: int
    E: int

    @property
    def K(self) -> Fraction:
        return Fraction(self.E, self.N) if self.N else Fraction(0)


@dataclass
class GraphStats:
    """Vertex/edge counts per pooling stage and reduction relative to the first stage"""
    stages: List[LayerGraphStats]

    def vertex_reduction(self) -> Dict[str, float]:
        base = self.stages[0].N
        return {s.stage: (base / s.N if s.N else 1.0) for s in self.stages}

    def edge_reduction(self) -> Dict[str, float]:
        base = self.stages[0].E
        return {s.stage: (base / s.E if s.E else 1.0) for s in self.stages}


@dataclass
class FlopsReport:
    rows: List[Dict[str, object]] = field(default_factory=list)
    event_count: int = 0

    @property
    def total(self) -> Fraction:
        return sum((row['flops_tot'] for row in self.rows), Fraction(0))

    def mflops_per_event(self) -> float:
        return flops_per_event(self, self.event_count)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.rows, columns=config.STATS_CSV_COLUMNS)
        for column in ('K', 'flops_aggr', 'flops_tot'):
            frame[column] = frame[column].astype(float)
        return frame


def flops_components(E: int, F_in: int, F_out: int, K: Number) -> Dict[str, Number]:
    """MLP, aggregation and update terms of one conv layer"""
    return {
        'mlp': 2 * F_in * F_out * E,
        'aggr': F_out * K * E,
        'updt': F_out * E,
    }


def flops_total(E: int, F_in: int, F_out: int, K: Number) -> Number:
    """E * F_out * (2 * F_in + K + 1)"""
    return E * F_out * (2 * F_in + K + 1)


def flops_per_event(report: FlopsReport, event_count: int) -> float:
    """MFLOPs per input event"""
    if event_count <= 0:
        raise InputError("FLOPs per event needs at least one event")
    return float(report.total / event_count) / 1e6


def reduction_stats(stages: Sequence[Tuple[str, FeatureGraph]]) -> GraphStats:
    """Counts per stage; the first stage is the reference for the reduction ratios"""
    return GraphStats([LayerGraphStats(name, g.num_vertices, g.num_edges) for name, g in stages])


def flops_report(events: Sequence[Union[Event, NormalizedEvent]], cfg: ModelConfig,
                 num_classes: int = config.DEFAULT_NUM_CLASSES,
                 sensor: Optional[SensorConfig] = None) -> Tuple[FlopsReport, GraphStats]:
    """
    Per-layer FLOPs of the conv stack on one stream, from the actual layer graphs.

    Returns:
        (FLOPs report, pooling reduction statistics)
    """
    normalized = normalize_events(events, cfg, sensor)
    graphs = layer_graphs(normalized, cfg)
    shapes = {name: (in_dim, out_dim) for name, in_dim, out_dim in layer_shapes(cfg.variant, num_classes)}
    report = FlopsReport(event_count=len(normalized))
    for name, graph in graphs.items():
        in_dim, out_dim = shapes[name]
        E, N = graph.num_edges, graph.num_vertices
        K = graph.average_degree
        parts = flops_components(E, in_dim, out_dim, K)
        report.rows.append({
            'layer': name, 'N': N, 'E': E, 'K': K,
            'flops_mlp': parts['mlp'], 'flops_aggr': parts['aggr'], 'flops_updt': parts['updt'],
            'flops_tot': flops_total(E, in_dim, out_dim, K),
        })
    stats = reduction_stats([('input', graphs['conv1']), ('pool1', graphs['conv2']), ('pool2', graphs['conv4'])])
    logger.info(f"{cfg.name}: {float(report.total):.0f} FLOPs over {report.event_count} events")
    return report, stats


def instrumented_flops(events: Sequence[Union[Event, NormalizedEvent]], cfg: ModelConfig,
                       weights: ModelWeights, sensor: Optional[SensorConfig] = None) -> OpCounter:
    """Run the float reference network with an operation counter attached"""
    counter = OpCounter()
    run_inference_float(events, cfg, weights, sensor=sensor, exact=False, counter=counter)
    return counter


def verify_flops(report: FlopsReport, counter: OpCounter) -> List[str]:
    """Layers whose formula total differs from the counted one (empty when all agree)"""
    mismatched = []
    for row in report.rows:
        counted = counter.layer_flops(row['layer'])['tot'] if row['layer'] in counter.layers else Fraction(0)
        if counted != row['flops_tot']:
            logger.warning(f"{row['layer']}: formula {row['flops_tot']} != counted {counted}")
            mismatched.append(row['layer'])
    return mismatched


def pool_ablation(graph: FeatureGraph) -> pd.DataFrame:
    """
    Vertex and edge counts after both pools for every pooling variant.

    Rows: no pooling, then 2-D/3-D crossed with average/divide positions;
    'hardware' marks the variant the streaming pipeline implements.
    """
    g1, g2 = config.POOL_SIZES
    rows = [{'pooling': 'none', 'hardware': False, 'N_pool1': graph.num_vertices, 'E_pool1': graph.num_edges,
             'N_pool2': graph.num_vertices, 'E_pool2': graph.num_edges}]
    for dims in (2, 3):
        for mode in ('average', 'divide'):
            spec = PoolSpec(g1, mode, dims)
            first = maxpool(graph, spec)
            second = maxpool(first, PoolSpec(g2, mode, dims))
            rows.append({'pooling': f"{dims}D-{mode}", 'hardware': spec.hardware_supported,
                         'N_pool1': first.num_vertices, 'E_pool1': first.num_edges,
                         'N_pool2': second.num_vertices, 'E_pool2': second.num_edges})
    return pd.DataFrame(rows)


def reduction_figure(stats: GraphStats, report: FlopsReport) -> go.Figure:
    """Reduction to input per pooling stage, next to FLOPs per conv layer"""
    fig = make_subplots(rows=1, cols=2, subplot_titles=('Reduction to input', 'FLOPs per layer'))
    vertex = stats.vertex_reduction()
    edge = stats.edge_reduction()
    fig.add_trace(go.Bar(x=list(vertex), y=list(vertex.values()), name='Vertices'), row=1, col=1)
    fig.add_trace(go.Bar(x=list(edge), y=list(edge.values()), name='Edges'), row=1, col=1)
    frame = report.to_frame()
    for column, label in (('flops_mlp', 'MLP'), ('flops_aggr', 'Aggregation'), ('flops_updt', 'Update')):
        fig.add_trace(go.Bar(x=frame['layer'], y=frame[column].astype(float), name=label), row=1, col=2)
    fig.update_layout(
        title=f"Graph reduction and FLOPs ({report.mflops_per_event():.4f} MFLOPs/event)"
        if report.event_count else "Graph reduction and FLOPs",
        barmode='group',
        height=450
    )
    return fig
