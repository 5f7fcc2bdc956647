"""Slot-by-slot simulation loop and multi-layout experiments.

A layout fixes the UE drop, LOS flags, shadowing, angular supports and the
association graph. Within a layout, slots run strictly in order because the
queues and rate memories carry over; layouts are independent and may run in
separate processes.

Random streams are keyed by ``(seed, layout, phase, slot)`` so that a
layout's start-up and the per-slot channel draws are identical across
policies and across worker counts.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .association import AssociationGraph, assign_pilots, estimate_blocks, form_clusters
from .channel import LargeScaleState, draw_blocks, draw_large_scale, support_masks
from .config import SimConfig
from .geometry import NetworkTopology, make_topology
from .ratealloc import RateMemory, realize_service, startup_phase
from .receiver import combine, sinr_and_mi
from .scheduler import SchedulerState

log = logging.getLogger(__name__)

PHASE_LAYOUT, PHASE_STARTUP, PHASE_MAIN = 0, 1, 2


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


@dataclass(frozen=True)
class Layout:
    index: int
    topology: NetworkTopology
    large_scale: LargeScaleState
    supports: np.ndarray  # (L, K, M) bool
    graph: AssociationGraph

    @property
    def eligible(self) -> np.ndarray:
        return self.graph.covered


@dataclass
class SlotResult:
    slot: int
    scheduled: np.ndarray
    allocated: np.ndarray
    mi: np.ndarray
    service: np.ndarray
    queues: np.ndarray


@dataclass
class LayoutResult:
    index: int
    throughput: np.ndarray
    covered: np.ndarray
    n_slots: int
    steady_slot: int | None
    a_max: float
    memory: RateMemory
    queue_trace: np.ndarray | None = None
    service_total: float = 0.0


@dataclass
class ExperimentResult:
    config: SimConfig
    layouts: list[LayoutResult] = field(default_factory=list)

    @property
    def throughput_table(self) -> np.ndarray:
        return np.vstack([r.throughput for r in self.layouts])


def build_layout(config: SimConfig, index: int) -> Layout:
    rng = stream(config.seed, index, PHASE_LAYOUT)
    topo = make_topology(config.grid_rows, config.grid_cols, config.k_tot, config.area_side, rng)
    large = draw_large_scale(topo, config.n_antennas, rng, shadowing=config.shadowing)
    supports = support_masks(topo.azimuths(), config.n_antennas, config.delta)
    graph = form_clusters(large, config.eta, config.q_max, config.n_antennas)
    return Layout(index=index, topology=topo, large_scale=large, supports=supports, graph=graph)


def link_slot(layout: Layout, config: SimConfig, active: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Pilots, channel draw, estimation, combining and MI for the active UEs.

    ``active`` holds sorted UE indices; the return value is aligned with it.
    """
    if active.size == 0:
        return np.zeros(0)
    beta = layout.large_scale.beta
    snr = layout.large_scale.snr
    graph = layout.graph.restrict(np.isin(np.arange(config.k_tot), active))
    pilots = assign_pilots(graph, layout.supports, active, config.tau_p, beta).pilot_of[active]
    supports = layout.supports[:, active, :]
    edges = graph.adjacency[:, active]
    H = draw_blocks(beta[:, active], supports, rng)
    H_hat = estimate_blocks(H, pilots, edges, supports, snr, config.tau_p, rng)
    rx = combine(H_hat, edges, snr)
    _, mi = sinr_and_mi(rx.aggregate, H, snr)
    return mi


def run_startup(layout: Layout, config: SimConfig) -> RateMemory:
    memory = RateMemory(config.k_tot, config.memory_size)

    def observe(active, slot):
        return link_slot(layout, config, active, stream(config.seed, layout.index, PHASE_STARTUP, slot))

    return startup_phase(observe, memory, config.n_init, config.k_act, layout.eligible,
                         stream(config.seed, layout.index, PHASE_STARTUP))


def default_a_max(memory: RateMemory, config: SimConfig) -> float:
    best = float(memory.allocated_rate.max(initial=0.0))
    return config.pilot_efficiency * best if best > 0 else 1.0


def run_slot(layout: Layout, state: SchedulerState, memory: RateMemory, config: SimConfig, slot: int) -> SlotResult:
    """One main-loop slot: arrivals, selection, link, service, queue and memory update."""
    state.solve_arrivals()
    x = state.select(memory.expected_service, config.k_act, stream(config.seed, layout.index, PHASE_MAIN, slot, 0))
    active = np.flatnonzero(x)
    allocated = memory.allocated_rate.copy()
    mi_active = link_slot(layout, config, active, stream(config.seed, layout.index, PHASE_MAIN, slot, 1))
    mi = np.zeros(config.k_tot)
    mi[active] = mi_active
    service = realize_service(allocated, mi, x, config.tau_p, config.t_dim)
    queues = state.update(service)
    memory.record(active, mi_active)
    return SlotResult(slot=slot, scheduled=x, allocated=allocated, mi=mi, service=service, queues=queues.copy())


def detect_steady_state(history, window: int = 500, tol: float = 0.05) -> bool:
    """True when no UE's mean queue moved by ``tol * (1 + mean)`` between the last two windows."""
    h = np.asarray(history, dtype=float)
    if h.ndim == 1:
        h = h[:, None]
    if h.shape[0] < 2 * window:
        raise ValueError("history shorter than two windows")
    last = h[-window:].mean(axis=0)
    prev = h[-2 * window:-window].mean(axis=0)
    return bool(np.all(np.abs(last - prev) < tol * (1.0 + last)))


class SteadyStateMonitor:
    """Incremental form of :func:`detect_steady_state` using running sums."""

    def __init__(self, n_ue: int, window: int, tol: float, capacity: int):
        self.window = window
        self.tol = tol
        self.csum = np.zeros((capacity + 1, n_ue))
        self.t = 0

    def push(self, queues) -> bool:
        self.csum[self.t + 1] = self.csum[self.t] + queues
        self.t += 1
        w = self.window
        if self.t < 2 * w:
            return False
        c = self.csum
        last = (c[self.t] - c[self.t - w]) / w
        prev = (c[self.t - w] - c[self.t - 2 * w]) / w
        return bool(np.all(np.abs(last - prev) < self.tol * (1.0 + last)))


def run_layout(config: SimConfig, index: int, trace: bool = False, layout: Layout | None = None) -> LayoutResult:
    """Start-up followed by the main loop on one layout; returns time-averaged service."""
    layout = layout or build_layout(config, index)
    memory = run_startup(layout, config)
    a_max = config.a_max if config.a_max is not None else default_a_max(memory, config)
    state = SchedulerState.fresh(config.policy, layout.eligible, config.v_param, a_max)

    until_steady = config.policy.uses_queues and config.stop_at_steady_state
    horizon = config.max_slots if until_steady else config.n_slots
    monitor = SteadyStateMonitor(config.k_tot, config.steady_window, config.steady_tol, horizon) if until_steady else None
    trace_rows = [] if trace else None
    total = np.zeros(config.k_tot)
    steady = None
    slot = 0
    while slot < horizon:
        res = run_slot(layout, state, memory, config, slot)
        total += res.service
        if trace_rows is not None:
            trace_rows.append(res.queues)
        slot += 1
        if monitor is not None and monitor.push(res.queues):
            steady = slot
            break
    if until_steady and steady is None:
        log.warning("layout %d: queues not steady after %d slots", index, horizon)
    return LayoutResult(
        index=index,
        throughput=total / slot,
        covered=layout.eligible.copy(),
        n_slots=slot,
        steady_slot=steady,
        a_max=a_max,
        memory=memory,
        queue_trace=np.array(trace_rows) if trace else None,
        service_total=float(total.sum()),
    )


def _layout_job(args):
    config, index, trace = args
    return run_layout(config, index, trace)


def run_experiment(config: SimConfig, workers: int = 1, trace: bool = False) -> ExperimentResult:
    """Run ``config.n_layouts`` independent layouts, optionally in worker processes."""
    config.validate()
    jobs = [(config, i, trace) for i in range(config.n_layouts)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            layouts = list(pool.map(_layout_job, jobs))
    else:
        layouts = [_layout_job(j) for j in jobs]
    return ExperimentResult(config=config, layouts=layouts)
