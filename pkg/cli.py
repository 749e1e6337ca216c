#!/usr/bin/env python
"""
Command-line front end for evgraph.

    evgraph convert in.csv out.evt --width 120 --height 100
    evgraph gen-weights --variant B --seed 1 --output base.yaml
    evgraph infer stream.evt --weights base.yaml --oracle-check
    evgraph simulate --rate 20 --format kv
    evgraph flops stream.evt --verify --plot flops.html
    evgraph graph stream.evt --output stream.graph

The model configuration comes from --config, else $EVGRAPH_CONFIG, else the
built-in Base / beta=128 / 100 ms defaults.
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import config
from analysis import flops_report, instrumented_flops, pool_ablation, reduction_figure, verify_flops
from error_handler import EvGraphError, InputError, exit_code_for, handle_cli_errors
from events_io import (Event, SensorConfig, read_events, read_sensor_config, rebase_timestamps, synth_at_rate,
                       synth_events, write_events)
from export_utils import (export_flops_csv, export_prediction_lines, export_reduction_csv, export_sim_report,
                          write_text)
from graph_builder import build_graph, dump_graph
from layers import FeatureGraph
from hwsim import ClockConfig, simulate
from logger import get_logger, set_level
from model import ModelConfig, load_model_config, normalize_events, run_inference, run_inference_offline
from weights import generate_weights, load_weights, parameter_count, save_weights

logger = get_logger(__name__)


def _event_format(path: str, explicit: Optional[str]) -> str:
    if explicit:
        return explicit
    return "csv" if Path(path).suffix.lower() == ".csv" else "evt"


def _sensor_for(args, cfg: ModelConfig, path: Optional[str] = None, fmt: str = "csv") -> SensorConfig:
    """Sensor geometry: --profile, then the .evt header, then --width/--height, then beta x beta"""
    if getattr(args, 'profile', None):
        profile = SensorConfig.from_profile(args.profile)
        return SensorConfig(profile.width, profile.height, cfg.time_window, cfg.beta)
    if path and fmt == "evt":
        header = read_sensor_config(path, cfg.beta)
        if header.time_window != cfg.time_window:
            logger.warning(f"{path} records T={header.time_window} us, model uses {cfg.time_window} us")
        return SensorConfig(header.width, header.height, cfg.time_window, cfg.beta)
    width = getattr(args, 'width', None) or cfg.beta
    height = getattr(args, 'height', None) or cfg.beta
    return SensorConfig(width, height, cfg.time_window, cfg.beta)


def _load_stream(args, cfg: ModelConfig) -> Tuple[List[Event], SensorConfig]:
    fmt = _event_format(args.events, getattr(args, 'input_format', None))
    events = read_events(args.events, fmt)
    if getattr(args, 'rebase', False):
        events = rebase_timestamps(events)
    return events, _sensor_for(args, cfg, args.events, fmt)


@handle_cli_errors("convert events")
def cmd_convert(args, cfg: ModelConfig) -> int:
    in_fmt = _event_format(args.input, args.input_format)
    out_fmt = _event_format(args.output, args.output_format)
    events = read_events(args.input, in_fmt)
    sensor = None
    if out_fmt == "evt":
        if in_fmt == "evt":
            header = read_sensor_config(args.input, cfg.beta)
            sensor = SensorConfig(header.width, header.height, header.time_window, cfg.beta)
        elif args.width and args.height:
            sensor = SensorConfig(args.width, args.height, args.time_window or cfg.time_window, cfg.beta)
    write_events(events, args.output, out_fmt, sensor)
    return config.EXIT_OK


@handle_cli_errors("generate weights")
def cmd_gen_weights(args, cfg: ModelConfig) -> int:
    variant = args.variant or cfg.variant
    weights = generate_weights(variant, args.classes, args.seed)
    save_weights(weights, args.output)
    print(f"{config.VARIANT_NAMES[variant]}: {parameter_count(variant, args.classes)} parameters -> {args.output}")
    return config.EXIT_OK


@handle_cli_errors("run inference")
def cmd_infer(args, cfg: ModelConfig) -> int:
    events, sensor = _load_stream(args, cfg)
    weights = load_weights(args.weights, cfg.variant)
    predictions = run_inference(events, cfg, weights, sensor=sensor, threaded=args.threaded)
    if args.oracle_check:
        offline = run_inference_offline(events, cfg, weights, sensor=sensor)
        if offline != predictions:
            raise EvGraphError("streaming predictions differ from the offline whole-graph oracle")
        logger.info(f"Oracle check passed on {len(predictions)} predictions")
    _emit(export_prediction_lines(predictions), args.output)
    return config.EXIT_OK


@handle_cli_errors("simulate pipeline")
def cmd_simulate(args, cfg: ModelConfig) -> int:
    if args.events:
        events, sensor = _load_stream(args, cfg)
    elif args.rate is not None:
        sensor = _sensor_for(args, cfg)
        duration = args.duration_us or cfg.time_window
        events = synth_at_rate(args.pattern, sensor, args.rate, duration, args.seed)
    else:
        raise InputError("simulate needs an event file or --rate")
    clock = ClockConfig(int(round(args.clock_mhz * 1e6)))
    report = simulate(events, cfg, clock, sensor=sensor, fifo_depth=args.fifo_depth,
                      ps_latency_us=args.ps_latency_us)
    _emit(export_sim_report(report, args.format), args.output)
    return config.EXIT_OK


@handle_cli_errors("count FLOPs")
def cmd_flops(args, cfg: ModelConfig) -> int:
    events, sensor = _load_stream(args, cfg)
    report, stats = flops_report(events, cfg, args.classes, sensor)
    if args.verify:
        weights = load_weights(args.weights, cfg.variant) if args.weights else \
            generate_weights(cfg.variant, args.classes, args.seed)
        mismatched = verify_flops(report, instrumented_flops(events, cfg, weights, sensor))
        if mismatched:
            raise EvGraphError(f"FLOPs formula disagrees with the counted operations on {', '.join(mismatched)}")
        logger.info("FLOPs formula matches the instrumented counter on every layer")
    text = export_flops_csv(report)
    if args.reduction:
        text += "\n" + export_reduction_csv(stats)
    if args.ablation:
        graph = build_graph(normalize_events(events, cfg, sensor), cfg.beta, cfg.radius)
        text += "\n" + pool_ablation(FeatureGraph.from_event_graph(graph)).to_csv(index=False)
    _emit(text, args.output)
    if args.plot:
        reduction_figure(stats, report).write_html(args.plot)
        logger.info(f"Wrote figure to {args.plot}")
    if report.event_count:
        logger.info(f"{report.mflops_per_event():.4f} MFLOPs per event")
    return config.EXIT_OK


@handle_cli_errors("dump graph")
def cmd_graph(args, cfg: ModelConfig) -> int:
    events, sensor = _load_stream(args, cfg)
    graph = build_graph(normalize_events(events, cfg, sensor), cfg.beta, cfg.radius)
    if args.output:
        dump_graph(graph, args.output)
    else:
        dump_graph(graph, sys.stdout)
    return config.EXIT_OK


@handle_cli_errors("synthesise events")
def cmd_synth(args, cfg: ModelConfig) -> int:
    sensor = _sensor_for(args, cfg)
    if args.rate is not None:
        events = synth_at_rate(args.pattern, sensor, args.rate, args.duration_us or cfg.time_window, args.seed)
    else:
        events = synth_events(args.pattern, sensor, args.count, args.seed, args.duration_us)
    write_events(events, args.output, _event_format(args.output, args.output_format), sensor)
    return config.EXIT_OK


def _emit(text: str, output: Optional[str]) -> None:
    if output and output != "-":
        write_text(text, output)
    else:
        sys.stdout.write(text)


def _add_stream_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('events', help='event file (.evt or .csv)')
    parser.add_argument('--input-format', choices=('evt', 'csv'), help='override format detection')
    parser.add_argument('--width', type=int, help='sensor width for CSV input')
    parser.add_argument('--height', type=int, help='sensor height for CSV input')
    parser.add_argument('--profile', choices=sorted(config.DATASET_PROFILES), help='dataset sensor profile')
    parser.add_argument('--rebase', action='store_true', help='shift timestamps so the first event is at t=0')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='evgraph', description='Event-graph GCN engine and pipeline cost model')
    parser.add_argument('--config', help=f'model config YAML (default: ${config.CONFIG_ENV_VAR})')
    parser.add_argument('--log-level', choices=('DEBUG', 'INFO', 'WARNING', 'ERROR'), help='logging level')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('convert', help='convert between .evt and CSV')
    p.add_argument('input')
    p.add_argument('output')
    p.add_argument('--input-format', choices=('evt', 'csv'))
    p.add_argument('--output-format', choices=('evt', 'csv'))
    p.add_argument('--width', type=int, help='sensor width written to the .evt header')
    p.add_argument('--height', type=int, help='sensor height written to the .evt header')
    p.add_argument('--time-window', type=int, help='time window (us) written to the .evt header')
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser('gen-weights', help='write random quantised weights')
    p.add_argument('--variant', choices=sorted(config.MODEL_VARIANTS), help='defaults to the model config')
    p.add_argument('--classes', type=int, default=config.DEFAULT_NUM_CLASSES)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--output', required=True, help='manifest path; the blob goes next to it')
    p.set_defaults(func=cmd_gen_weights)

    p = sub.add_parser('infer', help='streaming inference, one prediction per quarter window')
    _add_stream_args(p)
    p.add_argument('--weights', required=True, help='weight manifest')
    p.add_argument('--output', help='prediction file (default: stdout)')
    p.add_argument('--oracle-check', action='store_true', help='compare against the offline whole-graph run')
    p.add_argument('--threaded', action='store_true', help='run the front end on its own thread')
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser('simulate', help='cycle-level pipeline simulation')
    p.add_argument('events', nargs='?', help='event file; omit to use --rate')
    p.add_argument('--input-format', choices=('evt', 'csv'))
    p.add_argument('--width', type=int)
    p.add_argument('--height', type=int)
    p.add_argument('--profile', choices=sorted(config.DATASET_PROFILES))
    p.add_argument('--rebase', action='store_true')
    p.add_argument('--rate', type=float, help='synthetic input rate in MEPS')
    p.add_argument('--duration-us', type=int, help='synthetic stream length (default: one time window)')
    p.add_argument('--pattern', choices=config.SYNTH_PATTERNS, default='random-uniform')
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--clock-mhz', type=float, default=config.DEFAULT_CLOCK_HZ / 1e6)
    p.add_argument('--fifo-depth', type=int, default=config.DEFAULT_FIFO_DEPTH)
    p.add_argument('--ps-latency-us', type=float, default=config.PS_HEAD_LATENCY_US)
    p.add_argument('--format', choices=config.REPORT_FORMATS, default='human')
    p.add_argument('--output', help='report file (default: stdout)')
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser('flops', help='per-layer FLOPs CSV')
    _add_stream_args(p)
    p.add_argument('--classes', type=int, default=config.DEFAULT_NUM_CLASSES)
    p.add_argument('--verify', action='store_true', help='check against the instrumented float network')
    p.add_argument('--weights', help='weights for --verify (default: generated from --seed)')
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--reduction', action='store_true', help='append vertex/edge reduction per pool')
    p.add_argument('--ablation', action='store_true', help='append the pooling-variant comparison')
    p.add_argument('--plot', help='write the reduction/FLOPs figure as HTML')
    p.add_argument('--output', help='CSV file (default: stdout)')
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser('graph', help='dump the event graph (V/E lines)')
    _add_stream_args(p)
    p.add_argument('--output', help='dump file (default: stdout)')
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser('synth', help='write a synthetic event stream')
    p.add_argument('output')
    p.add_argument('--output-format', choices=('evt', 'csv'))
    p.add_argument('--pattern', choices=config.SYNTH_PATTERNS, default='moving-edge')
    p.add_argument('--count', type=int, default=1000)
    p.add_argument('--rate', type=float, help='MEPS; overrides --count')
    p.add_argument('--duration-us', type=int)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--width', type=int)
    p.add_argument('--height', type=int)
    p.add_argument('--profile', choices=sorted(config.DATASET_PROFILES))
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.log_level:
        set_level(args.log_level)

    try:
        cfg = load_model_config(args.config)
    except EvGraphError as e:
        logger.error(f"Failed to load model config: {e}")
        return exit_code_for(e)
    return args.func(args, cfg)


if __name__ == '__main__':
    sys.exit(main())
