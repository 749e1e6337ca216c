"""
End-to-end tests for the command-line front end (cli.py)
"""

import json

import pytest
import yaml

import config
from cli import main
from events_io import Event, SensorConfig, read_events, synth_events, write_events


@pytest.fixture
def stream(tmp_path):
    """A one-window burst stream on a beta x beta sensor"""
    path = tmp_path / "stream.evt"
    assert main(['synth', str(path), '--pattern', 'burst', '--count', '400', '--seed', '3']) == config.EXIT_OK
    return path


@pytest.fixture
def base_weights(tmp_path):
    path = tmp_path / "base.yaml"
    assert main(['gen-weights', '--seed', '1', '--output', str(path)]) == config.EXIT_OK
    return path


def test_convert_round_trip(tmp_path):
    """csv -> evt -> csv is lossless"""
    events = synth_events('moving-edge', SensorConfig(120, 100), 300, seed=1)
    source = tmp_path / "in.csv"
    write_events(events, source, 'csv')
    binary = tmp_path / "mid.evt"
    back = tmp_path / "back.csv"
    assert main(['convert', str(source), str(binary), '--width', '120', '--height', '100']) == config.EXIT_OK
    assert main(['convert', str(binary), str(back)]) == config.EXIT_OK
    assert back.read_bytes() == source.read_bytes()
    assert read_events(binary, 'evt') == events


def test_convert_empty(tmp_path):
    """An empty CSV converts to an empty CSV"""
    source = tmp_path / "empty.csv"
    source.write_bytes(b"")
    target = tmp_path / "out.csv"
    assert main(['convert', str(source), str(target)]) == config.EXIT_OK
    assert target.read_bytes() == b""


def test_convert_bad_record(tmp_path):
    """A malformed record exits 2"""
    source = tmp_path / "bad.csv"
    source.write_bytes(b"1,2,3,1\n4,5,x,0\n")
    assert main(['convert', str(source), str(tmp_path / "out.evt")]) == config.EXIT_INPUT_ERROR


def test_convert_coordinate_too_wide(tmp_path):
    """A coordinate beyond the u16 field exits 2"""
    source = tmp_path / "wide.csv"
    source.write_bytes(b"70000,1,5,1\n")
    assert main(['convert', str(source), str(tmp_path / "out.evt")]) == config.EXIT_INPUT_ERROR


def test_missing_input(tmp_path):
    """A missing file is an input error"""
    assert main(['graph', str(tmp_path / "absent.evt")]) == config.EXIT_INPUT_ERROR


def test_gen_weights(base_weights):
    """The manifest and its blob are written"""
    assert base_weights.exists()
    assert base_weights.with_suffix('.bin').exists()


def test_invalid_variant(tmp_path):
    """argparse rejects unknown variants with exit 2"""
    assert main(['gen-weights', '--variant', 'X', '--output', str(tmp_path / "w.yaml")]) == 2


def test_infer_with_oracle(stream, base_weights, tmp_path):
    """One window gives four prediction lines and the oracle agrees"""
    out = tmp_path / "predictions.txt"
    code = main(['infer', str(stream), '--weights', str(base_weights), '--oracle-check', '--output', str(out)])
    assert code == config.EXIT_OK
    lines = out.read_text().splitlines()
    assert [int(line.split(',')[0]) for line in lines] == [25_000, 50_000, 75_000, 100_000]
    assert all(len(line.split(',')) == 2 + 2 for line in lines)


def test_infer_threaded(stream, base_weights, tmp_path):
    """The threaded front end prints the same predictions"""
    first, second = tmp_path / "a.txt", tmp_path / "b.txt"
    assert main(['infer', str(stream), '--weights', str(base_weights), '--output', str(first)]) == config.EXIT_OK
    assert main(['infer', str(stream), '--weights', str(base_weights), '--threaded',
                 '--output', str(second)]) == config.EXIT_OK
    assert first.read_text() == second.read_text()


def test_infer_wrong_variant(stream, tmp_path):
    """Small weights under the Base config exit 3"""
    weights = tmp_path / "small.yaml"
    assert main(['gen-weights', '--variant', 'S', '--output', str(weights)]) == config.EXIT_OK
    assert main(['infer', str(stream), '--weights', str(weights)]) == config.EXIT_MODEL_ERROR


def test_simulate_kv(tmp_path):
    """The kv report carries the service rate"""
    out = tmp_path / "report.txt"
    code = main(['simulate', '--rate', '1', '--duration-us', '1000', '--format', 'kv', '--output', str(out)])
    assert code == config.EXIT_OK
    values = dict(line.split('=', 1) for line in out.read_text().splitlines())
    assert values['throughput_meps'].startswith('13.33')
    assert values['multipliers'] == '1,1,1,1'
    assert values['conv2.m'] == '1'


def test_simulate_json(stream, tmp_path):
    """The JSON report has summary and plan sections"""
    out = tmp_path / "report.json"
    assert main(['simulate', str(stream), '--format', 'json', '--output', str(out)]) == config.EXIT_OK
    report = json.loads(out.read_text())
    assert report['summary']['events_in'] == 400
    assert len(report['plans']) == 4


def test_simulate_infeasible(tmp_path):
    """An unplannable custom window exits 4"""
    cfg = tmp_path / "tight.yaml"
    cfg.write_text(yaml.safe_dump({'variant': 'B', 'beta': 256, 'time_window_us': 1000,
                                   'allow_custom_window': True}))
    assert main(['--config', str(cfg), 'simulate', '--rate', '1', '--duration-us', '500']) == \
        config.EXIT_PLANNING_ERROR


def test_bad_config(tmp_path):
    """An unknown config key exits 3"""
    cfg = tmp_path / "odd.yaml"
    cfg.write_text("variant: B\nflavour: mint\n")
    assert main(['--config', str(cfg), 'simulate', '--rate', '1']) == config.EXIT_MODEL_ERROR


def test_flops_verify(stream, tmp_path):
    """--verify passes and the CSV has one row per conv layer"""
    out = tmp_path / "flops.csv"
    plot = tmp_path / "flops.html"
    code = main(['flops', str(stream), '--verify', '--reduction', '--ablation', '--plot', str(plot),
                 '--output', str(out)])
    assert code == config.EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == ','.join(config.STATS_CSV_COLUMNS)
    assert [line.split(',')[0] for line in lines[1:6]] == ['conv1', 'conv2', 'conv3', 'conv4', 'conv5']
    assert plot.exists()


def test_graph_dump(tmp_path):
    """The dump lists every event as a vertex"""
    source = tmp_path / "two.evt"
    write_events([Event(1, 1, 0, 1), Event(2, 1, 800, 0)], source, 'evt', SensorConfig(128, 128))
    out = tmp_path / "graph.txt"
    assert main(['graph', str(source), '--output', str(out)]) == config.EXIT_OK
    assert out.read_text().splitlines() == ["V 0 1 1 0 1", "V 1 2 1 1 0", "E 1 0 1 0 1"]
