import json
from datetime import datetime
from pathlib import Path
from typing import Dict, Sequence, TextIO, Union

import pandas as pd

import config
from analysis import FlopsReport, GraphStats
from hwsim import SimReport, plan_table
from model import Prediction


def _format_score(score) -> str:
    if isinstance(score, float):
        return f"{score:.6g}"
    return str(score)


def export_prediction_lines(predictions: Sequence[Prediction]) -> str:
    """One line per prediction: t_end_us,argmax,score_0,...,score_{cls-1}"""
    lines = [
        ",".join([str(p.t_end_us), str(p.argmax)] + [_format_score(s) for s in p.scores])
        for p in predictions
    ]
    return "".join(line + "\n" for line in lines)


def export_sim_report_human(report: SimReport) -> str:
    """Plan table followed by the headline figures"""
    table = plan_table(report.plans)
    text = f"Multiplier plan ({config.VARIANT_NAMES[report.variant]}, beta={report.beta}, " \
           f"T={report.time_window_us} us, {report.clock_hz / 1e6:g} MHz)\n"
    text += table.to_string(index=False) + "\n\n"

    rows = [
        ('Throughput', f"{report.throughput_meps:.2f} MEPS"),
        ('Per-event latency', f"{report.per_event_latency_us:.2f} us"),
        ('PL latency (analytic)', f"{report.analytic_pl_latency_ms:.3f} ms"),
        ('PL latency (simulated)', 'n/a' if report.pl_latency_ms is None else f"{report.pl_latency_ms:.3f} ms"),
        ('PL+PS latency', 'n/a' if report.pl_ps_latency_ms is None else f"{report.pl_ps_latency_ms:.3f} ms"),
        ('Events in / processed', f"{report.events_in} / {report.events_processed}"),
        ('FIFO peak / depth', f"{report.fifo_peak} / {report.fifo_depth}"),
        ('FIFO overflows', str(report.fifo_overflows)),
        ('Scheduling violations', str(report.violations)),
        ('Predictions', str(report.quarters)),
    ]
    width = max(len(label) for label, _ in rows)
    text += "".join(f"{label.ljust(width)}  {value}\n" for label, value in rows)
    return text


def export_sim_report_kv(report: SimReport) -> str:
    """key=value lines, plans flattened as <layer>.<field>"""
    values: Dict[str, object] = report.summary()
    for plan in report.plans:
        values[f"{plan.layer}.size"] = plan.size
        values[f"{plan.layer}.delta_t_us"] = float(plan.delta_t_us)
        values[f"{plan.layer}.m"] = plan.m
        values[f"{plan.layer}.cc_vertex"] = plan.cc_vertex
        values[f"{plan.layer}.cc_channel"] = plan.cc_channel
        values[f"{plan.layer}.duration_us"] = float(plan.duration_us)
    return "".join(f"{key}={'' if value is None else value}\n" for key, value in values.items())


def export_sim_report_json(report: SimReport) -> str:
    """Export a simulation report to JSON format"""
    export_data = {
        'summary': report.summary(),
        'plans': plan_table(report.plans).to_dict(orient='records'),
        'export_timestamp': datetime.now().isoformat()
    }
    return json.dumps(export_data, indent=2)


def export_sim_report(report: SimReport, fmt: str = "human") -> str:
    if fmt == "kv":
        return export_sim_report_kv(report)
    if fmt == "json":
        return export_sim_report_json(report)
    return export_sim_report_human(report)


def export_flops_csv(report: FlopsReport) -> str:
    """Per-layer CSV: layer,N,E,K,flops_mlp,flops_aggr,flops_updt,flops_tot"""
    return report.to_frame().to_csv(index=False)


def export_reduction_csv(stats: GraphStats) -> str:
    vertex = stats.vertex_reduction()
    edge = stats.edge_reduction()
    df = pd.DataFrame([{
        'stage': s.stage,
        'N': s.N,
        'E': s.E,
        'K': float(s.K),
        'vertex_reduction': vertex[s.stage],
        'edge_reduction': edge[s.stage],
    } for s in stats.stages])
    return df.to_csv(index=False)


def write_text(text: str, sink: Union[str, Path, TextIO, None]) -> None:
    """Write to a path, an open stream, or nowhere (None)"""
    if sink is None:
        return
    if isinstance(sink, (str, Path)):
        Path(sink).write_text(text)
    else:
        sink.write(text)
