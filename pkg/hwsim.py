"""
Clock-cycle cost model of the accelerator pipeline.

Time unit inside the discrete-event simulation is one clock cycle. Slice
durations and planned channel times are kept as exact Fractions; only the
simpy clock itself runs on floats.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from fractions import Fraction
from itertools import groupby
from typing import Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd
import simpy

import config
from error_handler import ModelConfigError, PlanningError
from events_io import Event, NormalizedEvent, SensorConfig
from graph_builder import front_end_cycles, sustained_throughput_meps
from logger import get_logger
from model import ModelConfig, normalize_events, window_span

logger = get_logger(__name__)


@dataclass(frozen=True)
class ClockConfig:
    frequency_hz: int = config.DEFAULT_CLOCK_HZ

    def __post_init__(self):
        if self.frequency_hz <= 0:
            raise ModelConfigError(f"clock frequency must be positive, got {self.frequency_hz}")

    @property
    def cycle_ns(self) -> Fraction:
        return Fraction(10 ** 9, self.frequency_hz)

    @property
    def cycles_per_us(self) -> Fraction:
        return Fraction(self.frequency_hz, 10 ** 6)

    def to_us(self, cycles) -> Fraction:
        return Fraction(cycles) / self.cycles_per_us


@dataclass(frozen=True)
class LayerPlan:
    layer: str
    size: int
    delta_t_us: Fraction
    delta_t_cycles: Fraction
    dim: int
    m: int
    cc_vertex: int
    cc_channel: int
    duration_us: Fraction

    @property
    def feasible(self) -> bool:
        return self.cc_channel <= self.delta_t_cycles

    @property
    def utilisation(self) -> float:
        return float(Fraction(self.cc_channel) / self.delta_t_cycles) if self.delta_t_cycles else 0.0


@dataclass
class SimReport:
    variant: str
    beta: int
    time_window_us: int
    clock_hz: int
    plans: List[LayerPlan]
    throughput_meps: float
    per_event_latency_us: float
    analytic_pl_latency_ms: float
    pl_latency_ms: Optional[float] = None
    pl_ps_latency_ms: Optional[float] = None
    fifo_depth: int = config.DEFAULT_FIFO_DEPTH
    fifo_peak: int = 0
    fifo_overflows: int = 0
    events_in: int = 0
    events_processed: int = 0
    violations: int = 0
    quarters: int = 0
    occupancy: List[Tuple[float, int]] = field(default_factory=list)

    def summary(self) -> Dict[str, object]:
        """Flat key/value view (no per-layer plans, no occupancy trace)"""
        values = asdict(self)
        values.pop('plans')
        values.pop('occupancy')
        values['multipliers'] = ",".join(str(plan.m) for plan in self.plans)
        return values


def delta_t(time_window_us: int, size: int) -> Fraction:
    """Slice duration TIME_WINDOW / size in microseconds, exact"""
    if size <= 0:
        raise PlanningError(f"grid size must be positive, got {size}")
    return Fraction(time_window_us, size)


def cc_vertex(dim: int, m: int) -> int:
    """Cycles for one vertex: 9 iterations per group of m output elements"""
    if m <= 0 or dim % m:
        raise PlanningError(f"m={m} does not divide output dim {dim}")
    return config.SYNC_CONV_CYCLES_PER_ITERATION * dim // m


def cc_channel(dim: int, m: int, size: int) -> int:
    """Cycles for a full size x size temporal channel"""
    return cc_vertex(dim, m) * size * size


def _power_of_two_divisors(dim: int) -> List[int]:
    candidates = []
    m = 1
    while m <= dim:
        if dim % m == 0:
            candidates.append(m)
        m *= 2
    return candidates


def plan_layer(layer: str, size: int, dim: int, time_window_us: int, clock: ClockConfig) -> LayerPlan:
    """
    Smallest power-of-two m with 9 * dim/m * size^2 <= delta-T in cycles.

    Raises:
        PlanningError: even m = dim misses the slice deadline
    """
    dt_us = delta_t(time_window_us, size)
    dt_cycles = dt_us * clock.cycles_per_us
    for m in _power_of_two_divisors(dim):
        cycles = cc_channel(dim, m, size)
        if cycles <= dt_cycles:
            return LayerPlan(layer, size, dt_us, dt_cycles, dim, m, cc_vertex(dim, m), cycles, clock.to_us(cycles))
    raise PlanningError(
        f"{layer}: no multiplier count meets delta-T = {float(dt_us)} us "
        f"(size {size}, dim {dim}, best {cc_channel(dim, dim, size)} cycles > {float(dt_cycles)})"
    )


def select_multipliers(cfg: ModelConfig, clock: ClockConfig = ClockConfig()) -> List[LayerPlan]:
    """Plans for Conv2..Conv5, e.g. m = (8, 8, 2, 2) for the Base variant at beta=256 / 50 ms"""
    plans = [plan_layer(name, size, dim, cfg.time_window, clock) for name, size, dim in cfg.sync_layers()]
    logger.info(f"{cfg.name} beta={cfg.beta}: multipliers {tuple(plan.m for plan in plans)}")
    return plans


def plan_table(plans: Sequence[LayerPlan]) -> pd.DataFrame:
    return pd.DataFrame([{
        'layer': plan.layer,
        'SIZE': plan.size,
        'delta_t_us': float(plan.delta_t_us),
        'dim': plan.dim,
        'm': plan.m,
        'cc_vertex': plan.cc_vertex,
        'cc_channel': plan.cc_channel,
        'duration_us': float(plan.duration_us),
    } for plan in plans])


def per_event_latency_us(plans: Sequence[LayerPlan], clock: ClockConfig = ClockConfig()) -> float:
    """
    Stage-sum latency of one event: graph generation, async conv, one vertex
    through every synchronous layer, plus the fixed register/requant overhead.
    """
    cycles = (config.FRONT_END_CYCLES_PER_EVENT + config.ASYNC_CONV_CYCLES_PER_EVENT
              + sum(plan.cc_vertex for plan in plans) + config.PIPELINE_OVERHEAD_CYCLES)
    return float(clock.to_us(cycles))


def analytic_pl_latency_ms(plans: Sequence[LayerPlan]) -> float:
    """Sum of planned channel durations: the delay from a closed slice to its final feature map"""
    return float(sum((plan.duration_us for plan in plans), Fraction(0)) / 1000)


# ---------------------------------------------------------------------------
# Discrete-event simulation
# ---------------------------------------------------------------------------

class _PipelineSim:
    def __init__(self, env: simpy.Environment, normalized: Sequence[NormalizedEvent], cfg: ModelConfig,
                 clock: ClockConfig, plans: Sequence[LayerPlan], fifo_depth: int):
        self.env = env
        self.cfg = cfg
        self.clock = clock
        self.plans = list(plans)
        self.fifo_depth = fifo_depth
        self.normalized = normalized
        self.g1, self.g2 = config.POOL_SIZES

        first_window, last_window = window_span(normalized)
        self.first_slice = first_window * cfg.pool1_size
        self.end_slice = (last_window + 1) * cfg.pool1_size
        self.slice_cycles = delta_t(cfg.time_window, cfg.pool1_size) * clock.cycles_per_us

        self.fifo = simpy.Store(env)
        self.register = simpy.Store(env, capacity=1)
        self.inboxes = [simpy.Store(env) for _ in self.plans]
        self.done = [self.first_slice - 1] * 2 + [self.first_slice // self.g2 - 1] * 2
        self.violations = 0

        self.pending: Dict[int, int] = {}
        for ne in normalized:
            n = ne.t_ext // self.g1
            self.pending[n] = self.pending.get(n, 0) + 1
        self.slice_ready = {n: env.event() for n in self.pending}
        self.last_arrival: Dict[int, float] = {}

        self.fifo_peak = 0
        self.overflows = 0
        self.processed = 0
        self.occupancy: List[Tuple[float, int]] = []
        self.quarter_ready: Dict[int, float] = {}

    def _arrival_cycles(self, t_us: int) -> float:
        return float(t_us * self.clock.cycles_per_us)

    def _complete(self, slice_index: int) -> None:
        self.pending[slice_index] -= 1
        if self.pending[slice_index] == 0:
            self.slice_ready[slice_index].succeed()

    def source(self, arrivals: Sequence[Tuple[int, NormalizedEvent]]):
        for t_us, group in groupby(arrivals, key=lambda item: item[0]):
            at = self._arrival_cycles(t_us)
            if at > self.env.now:
                yield self.env.timeout(at - self.env.now)
            for _, ne in group:
                quarter = ne.t_ext // (self.cfg.beta // config.PREDICTIONS_PER_WINDOW)
                self.last_arrival[quarter] = self.env.now
                if len(self.fifo.items) >= self.fifo_depth:
                    self.overflows += 1
                    self._complete(ne.t_ext // self.g1)
                    continue
                self.fifo.put(ne)
            self.fifo_peak = max(self.fifo_peak, len(self.fifo.items))
            self.occupancy.append((float(self.clock.to_us(Fraction(self.env.now))), len(self.fifo.items)))

    def graph_generation(self):
        while True:
            ne = yield self.fifo.get()
            yield self.env.timeout(config.FRONT_END_CYCLES_PER_EVENT)
            yield self.register.put(ne)

    def async_conv(self):
        while True:
            ne = yield self.register.get()
            yield self.env.timeout(config.ASYNC_CONV_CYCLES_PER_EVENT)
            self.processed += 1
            self._complete(ne.t_ext // self.g1)

    def slice_closer(self):
        for n in range(self.first_slice, self.end_slice):
            boundary = float((n + 1) * self.slice_cycles)
            if boundary > self.env.now:
                yield self.env.timeout(boundary - self.env.now)
            if n in self.slice_ready and not self.slice_ready[n].triggered:
                yield self.slice_ready[n]
            self._hand_over(0, n)

    def _hand_over(self, layer: int, n: int) -> None:
        # the producer is about to overwrite the buffer the consumer's backlog still reads
        if self.done[layer] < n - 1:
            self.violations += 1
            logger.warning(f"{self.plans[layer].layer} still on slice {self.done[layer] + 1} "
                           f"when slice {n} closes")
        self.inboxes[layer].put(n)

    def sync_layer(self, index: int):
        plan = self.plans[index]
        while True:
            n = yield self.inboxes[index].get()
            yield self.env.timeout(plan.cc_channel)
            self.done[index] = n
            if index == 1:
                if n % self.g2 == self.g2 - 1:
                    self._hand_over(2, n // self.g2)
            elif index + 1 < len(self.plans):
                self._hand_over(index + 1, n)
            elif n % self.cfg.slices_per_quarter == self.cfg.slices_per_quarter - 1:
                self.quarter_ready[n // self.cfg.slices_per_quarter] = self.env.now


def simulate(events: Sequence[Union[Event, NormalizedEvent]], cfg: ModelConfig,
             clock: ClockConfig = ClockConfig(), sensor: Optional[SensorConfig] = None,
             fifo_depth: int = config.DEFAULT_FIFO_DEPTH, plans: Optional[Sequence[LayerPlan]] = None,
             ps_latency_us: float = config.PS_HEAD_LATENCY_US) -> SimReport:
    """
    Transaction-level simulation of the pipeline on an event stream.

    Args:
        events: raw events (with sensor) or normalised events; raw timestamps
            set arrival times, normalised ones fall back to t_ext slice units
        cfg: model configuration; only the hardware radius is accepted
        clock: clock configuration
        fifo_depth: input FIFO capacity; arrivals beyond it are dropped and counted
        plans: multiplier plans overriding select_multipliers
        ps_latency_us: constant added for the classifier head on the processor

    Raises:
        PlanningError: no feasible multiplier plan
    """
    if cfg.radius != config.HW_RADIUS:
        raise ModelConfigError(f"the hardware pipeline implements R={config.HW_RADIUS} only, got R={cfg.radius}")
    plans = list(plans) if plans is not None else select_multipliers(cfg, clock)

    if events and isinstance(events[0], NormalizedEvent):
        normalized = list(events)
        arrivals = [(ne.t_ext * cfg.time_window // cfg.beta, ne) for ne in normalized]
    else:
        sensor = sensor or cfg.sensor()
        kept = [ev for ev in events if 0 <= ev.x < sensor.width and 0 <= ev.y < sensor.height]
        normalized = normalize_events(kept, cfg, sensor)
        arrivals = [(ev.t, ne) for ev, ne in zip(kept, normalized)]

    env = simpy.Environment()
    sim = _PipelineSim(env, normalized, cfg, clock, plans, fifo_depth)
    env.process(sim.source(arrivals))
    env.process(sim.graph_generation())
    env.process(sim.async_conv())
    env.process(sim.slice_closer())
    for index in range(len(plans)):
        env.process(sim.sync_layer(index))
    env.run()

    latencies = [ready - sim.last_arrival[q] for q, ready in sim.quarter_ready.items() if q in sim.last_arrival]
    pl_latency = float(clock.to_us(Fraction(max(latencies))) / 1000) if latencies else None
    report = SimReport(
        variant=cfg.variant,
        beta=cfg.beta,
        time_window_us=cfg.time_window,
        clock_hz=clock.frequency_hz,
        plans=plans,
        throughput_meps=sustained_throughput_meps(clock.frequency_hz),
        per_event_latency_us=per_event_latency_us(plans, clock),
        analytic_pl_latency_ms=analytic_pl_latency_ms(plans),
        pl_latency_ms=pl_latency,
        pl_ps_latency_ms=None if pl_latency is None else pl_latency + ps_latency_us / 1000,
        fifo_depth=fifo_depth,
        fifo_peak=sim.fifo_peak,
        fifo_overflows=sim.overflows,
        events_in=len(arrivals),
        events_processed=sim.processed,
        violations=sim.violations,
        quarters=len(sim.quarter_ready),
        occupancy=sim.occupancy,
    )
    if report.fifo_overflows:
        logger.warning(f"FIFO overflow: {report.fifo_overflows} of {report.events_in} events dropped")
    logger.info(f"Simulated {report.events_in} events: {report.throughput_meps:.2f} MEPS service rate, "
                f"front end busy {front_end_cycles(report.events_processed)} cycles, "
                f"{report.violations} violations")
    return report
