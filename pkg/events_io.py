"""
Event stream ingestion for the evgraph engine.
Bit-exact .evt and CSV formats, synthetic stimulus, and coordinate normalisation.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

import config
from error_handler import EventBoundsError, EventFormatError, ModelConfigError, TimestampRegressionError
from logger import get_logger

logger = get_logger(__name__)

# Little-endian, unpadded: itemsize must stay EVT_RECORD_SIZE
EVT_RECORD_DTYPE = np.dtype([('x', '<u2'), ('y', '<u2'), ('t', '<u4'), ('p', 'u1')])

Source = Union[str, Path, bytes, BinaryIO]


@dataclass(frozen=True)
class Event:
    """Raw DVS event; p is the polarity bit (0 stands for a negative change)"""
    x: int
    y: int
    t: int
    p: int


@dataclass(frozen=True)
class SensorConfig:
    """Sensor resolution, time window (us) and normalisation range beta"""
    width: int
    height: int
    time_window: int = config.DEFAULT_TIME_WINDOW_US
    beta: int = config.DEFAULT_BETA

    def __post_init__(self):
        if self.beta not in config.SUPPORTED_BETAS:
            raise ModelConfigError(f"beta must be one of {config.SUPPORTED_BETAS}, got {self.beta}")
        if self.width <= 0 or self.height <= 0 or self.time_window <= 0:
            raise ModelConfigError(
                f"sensor dimensions and time window must be positive "
                f"(W={self.width}, H={self.height}, T={self.time_window})"
            )

    @classmethod
    def from_profile(cls, name: str) -> "SensorConfig":
        """Sensor setup of one of the dataset profiles in config.DATASET_PROFILES"""
        try:
            profile = config.DATASET_PROFILES[name]
        except KeyError:
            raise ModelConfigError(
                f"unknown dataset profile '{name}' (known: {', '.join(config.DATASET_PROFILES)})"
            ) from None
        return cls(profile['width'], profile['height'], profile['time_window_us'], profile['beta'])


@dataclass(frozen=True)
class NormalizedEvent:
    """
    Event mapped onto the beta grid.

    t is window-relative; t_ext = window * beta + t is the continuous integer time
    used for graph construction across window boundaries.
    """
    x: int
    y: int
    t: int
    p: int
    window: int
    t_ext: int


def normalize(ev: Event, cfg: SensorConfig) -> NormalizedEvent:
    """
    Map an event onto the beta grid with floor scaling.

    x* = floor(beta*x/W), y* = floor(beta*y/H), t* = floor(beta*(t mod T)/T),
    window = floor(t/T). Integer arithmetic only.

    Raises:
        EventBoundsError: coordinate outside the sensor resolution
    """
    if not (0 <= ev.x < cfg.width and 0 <= ev.y < cfg.height) or ev.t < 0:
        raise EventBoundsError(
            f"event ({ev.x}, {ev.y}, t={ev.t}) outside {cfg.width}x{cfg.height} sensor"
        )
    window, t_rel = divmod(ev.t, cfg.time_window)
    t_star = (cfg.beta * t_rel) // cfg.time_window
    return NormalizedEvent(
        x=(cfg.beta * ev.x) // cfg.width,
        y=(cfg.beta * ev.y) // cfg.height,
        t=t_star,
        p=ev.p,
        window=window,
        t_ext=window * cfg.beta + t_star,
    )


def normalize_stream(events: Iterable[Event], cfg: SensorConfig) -> Tuple[List[NormalizedEvent], int]:
    """
    Normalise a stream, dropping out-of-bounds events.

    Returns:
        (normalised events in stream order, number of rejected events)
    """
    normalized = []
    rejected = 0
    for ev in events:
        try:
            normalized.append(normalize(ev, cfg))
        except EventBoundsError as e:
            rejected += 1
            logger.debug(f"Rejected event: {e}")
    if rejected:
        logger.warning(f"Dropped {rejected} out-of-bounds events")
    return normalized, rejected


def rebase_timestamps(events: Sequence[Event]) -> List[Event]:
    """Shift a sample so that its first event sits at t=0"""
    if not events:
        return []
    t0 = events[0].t
    return [Event(ev.x, ev.y, ev.t - t0, ev.p) for ev in events]


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

def _read_bytes(source: Source) -> bytes:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source)
    if isinstance(source, (str, Path)):
        return Path(source).read_bytes()
    return source.read()


def _check_monotonic(t: np.ndarray) -> None:
    if len(t) > 1:
        regressions = np.flatnonzero(np.diff(t.astype(np.int64)) < 0)
        if len(regressions):
            index = int(regressions[0]) + 1
            raise TimestampRegressionError(
                f"timestamp {int(t[index])} precedes {int(t[index - 1])}", record_index=index
            )


def read_evt_header(data: bytes) -> Tuple[int, int, int, int]:
    """
    Parse the 16-byte .evt header.

    Returns:
        (width, height, time_window_us, record_count)
    """
    if len(data) < config.EVT_HEADER_SIZE:
        raise EventFormatError(f"truncated header ({len(data)} bytes)", byte_offset=0)
    magic, width, height, time_window, count = struct.unpack_from(config.EVT_HEADER_FORMAT, data, 0)
    if magic != config.EVT_MAGIC:
        raise EventFormatError(f"bad magic {magic!r}, expected {config.EVT_MAGIC!r}", byte_offset=0)
    return width, height, time_window, count


def _decode_evt(data: bytes) -> List[Event]:
    if not data:
        return []
    _, _, _, count = read_evt_header(data)
    body = len(data) - config.EVT_HEADER_SIZE
    complete = body // config.EVT_RECORD_SIZE
    if complete < count:
        offset = config.EVT_HEADER_SIZE + complete * config.EVT_RECORD_SIZE
        raise EventFormatError(f"truncated record {complete} of {count}", byte_offset=offset)
    if body != count * config.EVT_RECORD_SIZE:
        offset = config.EVT_HEADER_SIZE + count * config.EVT_RECORD_SIZE
        raise EventFormatError(f"{body - count * config.EVT_RECORD_SIZE} trailing bytes after "
                               f"{count} records", byte_offset=offset)

    records = np.frombuffer(data, dtype=EVT_RECORD_DTYPE, count=count, offset=config.EVT_HEADER_SIZE)
    bad_polarity = np.flatnonzero(records['p'] > 1)
    if len(bad_polarity):
        index = int(bad_polarity[0])
        offset = config.EVT_HEADER_SIZE + index * config.EVT_RECORD_SIZE + 8
        raise EventFormatError(f"polarity {int(records['p'][index])} is not a bit", byte_offset=offset)
    _check_monotonic(records['t'])

    return [Event(int(x), int(y), int(t), int(p))
            for x, y, t, p in zip(records['x'], records['y'], records['t'], records['p'])]


def _locate_bad_csv_line(data: bytes) -> Tuple[int, str]:
    """Byte offset and reason of the first line that is not four non-negative integers"""
    offset = 0
    for line in data.splitlines(keepends=True):
        fields = line.strip().split(b',')
        if len(fields) != 4:
            return offset, f"expected 4 fields, got {len(fields)}"
        if not all(f.strip().isdigit() for f in fields):
            return offset, f"non-integer field in {line.strip()!r}"
        if int(fields[3]) > 1:
            return offset, f"polarity {int(fields[3])} is not a bit"
        offset += len(line)
    return offset, "unparseable record"


def _decode_csv(data: bytes) -> List[Event]:
    if not data.strip():
        return []
    try:
        frame = pd.read_csv(io.BytesIO(data), header=None, names=['x', 'y', 't', 'p'],
                            dtype='int64', skip_blank_lines=True)
    except (ValueError, pd.errors.ParserError):
        offset, reason = _locate_bad_csv_line(data)
        raise EventFormatError(f"malformed CSV record: {reason}", byte_offset=offset) from None

    values = frame.to_numpy()
    if frame.isna().any().any() or (values < 0).any() or (values[:, 3] > 1).any():
        offset, reason = _locate_bad_csv_line(data)
        raise EventFormatError(f"malformed CSV record: {reason}", byte_offset=offset)
    _check_monotonic(values[:, 2])
    return [Event(int(x), int(y), int(t), int(p)) for x, y, t, p in values]


def read_events(source: Source, fmt: str = "evt") -> List[Event]:
    """
    Read an event stream.

    Args:
        source: path, raw bytes or binary file object
        fmt: "evt" (binary) or "csv"

    Returns:
        Events in file order

    Raises:
        EventFormatError: malformed record (with byte offset)
        TimestampRegressionError: timestamps not non-decreasing (with record index)
    """
    data = _read_bytes(source)
    if fmt == "evt":
        events = _decode_evt(data)
    elif fmt == "csv":
        events = _decode_csv(data)
    else:
        raise EventFormatError(f"unknown event format '{fmt}'")
    logger.info(f"Read {len(events)} events ({fmt})")
    return events


def read_sensor_config(source: Source, beta: int = config.DEFAULT_BETA) -> SensorConfig:
    """Sensor configuration stored in an .evt header"""
    width, height, time_window, _ = read_evt_header(_read_bytes(source))
    return SensorConfig(width, height, time_window, beta)


def _check_evt_fields(events: Sequence[Event], width: int, height: int, time_window: int) -> None:
    """Every value must fit its unsigned .evt field"""
    for label, value, limit in (('width', width, config.EVT_U16_MAX), ('height', height, config.EVT_U16_MAX),
                                ('time window', time_window, config.EVT_U32_MAX)):
        if not 0 <= value <= limit:
            raise EventFormatError(f"{label} {value} does not fit the .evt header")
    for i, ev in enumerate(events):
        for label, value, limit in (('x', ev.x, config.EVT_U16_MAX), ('y', ev.y, config.EVT_U16_MAX),
                                    ('t', ev.t, config.EVT_U32_MAX), ('p', ev.p, 1)):
            if not 0 <= value <= limit:
                raise EventFormatError(f"record {i}: {label}={value} does not fit the .evt record",
                                       config.EVT_HEADER_SIZE + i * config.EVT_RECORD_SIZE)


def encode_events(events: Sequence[Event], fmt: str = "evt", sensor: Optional[SensorConfig] = None) -> bytes:
    """
    Serialise events to bytes.

    The .evt header takes W, H, T from sensor; without one, the smallest
    resolution covering the events and the default time window are used.
    """
    if fmt == "csv":
        if not events:
            return b""
        frame = pd.DataFrame([(ev.x, ev.y, ev.t, ev.p) for ev in events], columns=['x', 'y', 't', 'p'])
        return frame.to_csv(header=False, index=False, lineterminator="\n").encode('ascii')
    if fmt != "evt":
        raise EventFormatError(f"unknown event format '{fmt}'")

    if sensor is not None:
        width, height, time_window = sensor.width, sensor.height, sensor.time_window
    else:
        width = max((ev.x for ev in events), default=0) + 1
        height = max((ev.y for ev in events), default=0) + 1
        time_window = config.DEFAULT_TIME_WINDOW_US

    _check_evt_fields(events, width, height, time_window)
    header = struct.pack(config.EVT_HEADER_FORMAT, config.EVT_MAGIC, width, height, time_window, len(events))
    records = np.array([(ev.x, ev.y, ev.t, ev.p) for ev in events], dtype=EVT_RECORD_DTYPE)
    return header + records.tobytes()


def write_events(events: Sequence[Event], sink: Union[str, Path, BinaryIO], fmt: str = "evt",
                 sensor: Optional[SensorConfig] = None) -> int:
    """
    Write events; read_events(write_events(x)) == x.

    Returns:
        Number of bytes written
    """
    payload = encode_events(events, fmt, sensor)
    if isinstance(sink, (str, Path)):
        Path(sink).write_bytes(payload)
    else:
        sink.write(payload)
    logger.info(f"Wrote {len(events)} events ({fmt}, {len(payload)} bytes)")
    return len(payload)


# ---------------------------------------------------------------------------
# Synthetic stimulus
# ---------------------------------------------------------------------------

def _timestamps(rng: np.random.Generator, count: int, duration_us: int) -> np.ndarray:
    return np.sort(rng.integers(0, max(duration_us, 1), size=count))


def synth_events(pattern: str, cfg: SensorConfig, count: int, seed: int = 0,
                 duration_us: Optional[int] = None) -> List[Event]:
    """
    Generate a deterministic synthetic event stream.

    Args:
        pattern: "moving-edge" (vertical edge sweeping left to right once per
            duration), "random-uniform", or "burst" (a few short, spatially
            compact bursts)
        cfg: sensor configuration
        count: number of events
        seed: RNG seed; output is a pure function of the arguments
        duration_us: stream span, defaults to one time window

    Returns:
        Events with non-decreasing timestamps
    """
    if pattern not in config.SYNTH_PATTERNS:
        raise ModelConfigError(f"unknown pattern '{pattern}' (known: {', '.join(config.SYNTH_PATTERNS)})")
    if count <= 0:
        return []
    duration_us = duration_us or cfg.time_window
    rng = np.random.default_rng(seed)

    if pattern == "random-uniform":
        t = _timestamps(rng, count, duration_us)
        x = rng.integers(0, cfg.width, size=count)
        y = rng.integers(0, cfg.height, size=count)
        p = rng.integers(0, 2, size=count)
    elif pattern == "moving-edge":
        t = _timestamps(rng, count, duration_us)
        edge = (t * cfg.width) // duration_us
        jitter = rng.integers(-config.SYNTH_EDGE_JITTER_PX, config.SYNTH_EDGE_JITTER_PX + 1, size=count)
        x = np.clip(edge + jitter, 0, cfg.width - 1)
        y = rng.integers(0, cfg.height, size=count)
        # leading side brightens, trailing side darkens
        p = (jitter >= 0).astype(np.int64)
    else:
        bursts = config.SYNTH_BURST_COUNT
        burst_of = np.sort(rng.integers(0, bursts, size=count))
        starts = np.sort(rng.integers(0, duration_us, size=bursts))
        burst_len = max(duration_us // (bursts * 20), 1)
        t = np.minimum(starts[burst_of] + rng.integers(0, burst_len, size=count), duration_us - 1)
        cx = rng.integers(0, cfg.width, size=bursts)[burst_of]
        cy = rng.integers(0, cfg.height, size=bursts)[burst_of]
        spread = config.SYNTH_BURST_SPREAD_PX
        x = np.clip(cx + rng.integers(-spread, spread + 1, size=count), 0, cfg.width - 1)
        y = np.clip(cy + rng.integers(-spread, spread + 1, size=count), 0, cfg.height - 1)
        p = rng.integers(0, 2, size=count)
        order = np.argsort(t, kind='stable')
        t, x, y, p = t[order], x[order], y[order], p[order]

    return [Event(int(a), int(b), int(c), int(d)) for a, b, c, d in zip(x, y, t, p)]


def synth_at_rate(pattern: str, cfg: SensorConfig, rate_meps: float, duration_us: int,
                  seed: int = 0) -> List[Event]:
    """Synthetic stream with round(rate * duration) events, e.g. 0.59 MEPS over 100 ms -> 59000"""
    count = int(round(rate_meps * duration_us))
    return synth_events(pattern, cfg, count, seed, duration_us=duration_us)
