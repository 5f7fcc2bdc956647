"""Outage-rate allocation from a sliding window of mutual-information samples."""

from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)


class NoHistoryError(ValueError):
    """Raised when a rate is requested for a UE without any MI samples."""


def allocate_rate(samples) -> tuple[float, float]:
    """Rate maximizing ``rate * P(MI >= rate)`` over the empirical distribution.

    Candidates are the observed sample values. Returns ``(rate, probability)``;
    ties go to the smaller rate.

    >>> allocate_rate([1.0, 2.0, 3.0])
    (2.0, 0.6666666666666666)
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise NoHistoryError("no CSI history")
    r, p = _allocate_rows(x[None, :])
    return float(r[0]), float(p[0])


def _allocate_rows(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`allocate_rate` over rows; NaN marks empty slots."""
    n, width = rows.shape
    valid = (~np.isnan(rows)).sum(axis=1)
    x = np.sort(np.where(np.isnan(rows), -np.inf, rows), axis=1)
    # after sorting, position i has exactly (width - i) entries >= x[i]
    # whenever x[i] is the first occurrence of its value
    tail = (width - np.arange(width))[None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        prob = tail / valid[:, None]
        obj = np.where(np.isfinite(x), x * prob, -np.inf)
    best = np.argmax(obj, axis=1)
    rows_idx = np.arange(n)
    rate = np.where(valid > 0, x[rows_idx, best], 0.0)
    p = np.where(valid > 0, prob[rows_idx, best], 0.0)
    return rate, p


def realize_service(rate, mi, scheduled, tau_p: int, t_dim: int):
    """Delivered rate after pilot overhead; zero when unscheduled or in outage.

    Outage includes ``rate == mi``: decoding needs the rate strictly below
    the mutual information.
    """
    if not t_dim > tau_p:
        raise ValueError("coherence block must be longer than the pilot")
    ok = np.logical_and(scheduled, np.less(rate, mi))
    out = np.where(ok, (1.0 - tau_p / t_dim) * np.asarray(rate, dtype=float), 0.0)
    return float(out) if out.ndim == 0 else out


class RateMemory:
    """Per-UE ring buffers of the last ``capacity`` MI samples.

    ``allocated_rate``, ``success_prob`` and ``expected_service`` are kept in
    sync with the buffers; UEs without samples sit at zero.
    """

    def __init__(self, k_tot: int, capacity: int = 100):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.samples = np.full((k_tot, capacity), np.nan)
        self.count = np.zeros(k_tot, dtype=int)
        self.allocated_rate = np.zeros(k_tot)
        self.success_prob = np.zeros(k_tot)

    @property
    def k_tot(self) -> int:
        return len(self.count)

    @property
    def expected_service(self) -> np.ndarray:
        return self.allocated_rate * self.success_prob

    def size(self, k: int) -> int:
        return min(int(self.count[k]), self.capacity)

    def window(self, k: int) -> np.ndarray:
        """Stored samples of UE ``k``, oldest first."""
        n = self.size(k)
        start = self.count[k] % self.capacity if n == self.capacity else 0
        return np.roll(self.samples[k], -start)[:n]

    def record(self, ues, mi) -> None:
        """Insert one sample per listed UE (evicting its oldest) and re-allocate."""
        ues = np.asarray(ues, dtype=int)
        if ues.size == 0:
            return
        if np.unique(ues).size != ues.size:
            raise ValueError("a UE can record at most one sample per call")
        self.samples[ues, self.count[ues] % self.capacity] = mi
        self.count[ues] += 1
        self.refresh(ues)

    def refresh(self, ues=None) -> None:
        ues = np.arange(self.k_tot) if ues is None else np.asarray(ues, dtype=int)
        rate, p = _allocate_rows(self.samples[ues])
        self.allocated_rate[ues] = rate
        self.success_prob[ues] = p

    def copy(self) -> "RateMemory":
        new = RateMemory.__new__(RateMemory)
        new.capacity = self.capacity
        new.samples = self.samples.copy()
        new.count = self.count.copy()
        new.allocated_rate = self.allocated_rate.copy()
        new.success_prob = self.success_prob.copy()
        return new

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["ue", "allocated_rate", "success_prob", "expected_service", "samples"])
            for k in range(self.k_tot):
                writer.writerow([k, repr(float(self.allocated_rate[k])), repr(float(self.success_prob[k])),
                                 repr(float(self.expected_service[k])), int(self.count[k])])


def update_memory(memory: RateMemory, ue: int, mi: float) -> RateMemory:
    memory.record([ue], [mi])
    return memory


def startup_phase(observe: Callable[[np.ndarray, int], np.ndarray], memory: RateMemory, n_init: int,
                  k_act: int, eligible, rng) -> RateMemory:
    """Fill ``memory`` by activating ``k_act`` random eligible UEs per slot.

    ``observe(active_indices, slot)`` runs one slot of the link pipeline and
    returns the MI of each listed UE. Eligible UEs never drawn keep rate 0.
    """
    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    rng = np.random.default_rng(rng)
    eligible = np.flatnonzero(np.asarray(eligible, dtype=bool))
    k = min(k_act, eligible.size)
    for slot in range(n_init):
        active = np.sort(rng.choice(eligible, size=k, replace=False))
        memory.record(active, observe(active, slot))
    missing = eligible[memory.count[eligible] == 0]
    if missing.size:
        log.warning("%d UE(s) never sampled during start-up, rate left at 0", missing.size)
    return memory
