"""Virtual-queue fairness scheduling and baseline user selection.

Fairness policies solve a per-slot arrival problem ``max V*g(a) - Q.a`` over
the box ``0 <= a <= A_max`` and then activate the ``K_act`` UEs with the
largest ``Q_k * E[R_k]``:

* PFS, ``g = sum(log a)``: ``a_k = min(V / Q_k, A_max)``
* HFS, ``g = min(a)``: every ``a_k = A_max`` if ``V > sum(Q)``, else 0
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class Policy(str, enum.Enum):
    HFS = "hfs"
    PFS = "pfs"
    RANDOM = "random"
    ROUND_ROBIN = "round_robin"
    MAX_SUM_RATE = "max_sum_rate"

    @property
    def uses_queues(self) -> bool:
        return self in (Policy.HFS, Policy.PFS)

    @classmethod
    def parse(cls, text: str) -> "Policy":
        key = text.strip().lower().replace("-", "_")
        aliases = {"rr": "round_robin", "roundrobin": "round_robin", "msr": "max_sum_rate",
                   "maxsumrate": "max_sum_rate", "max_rate": "max_sum_rate"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown policy {text!r}") from None


@dataclass
class SchedulerState:
    policy: Policy
    queues: np.ndarray
    eligible: np.ndarray
    v_param: float = 1000.0
    a_max: float = 1.0
    arrivals: np.ndarray = field(default=None)
    rr_cursor: int = 0

    def __post_init__(self):
        self.policy = Policy(self.policy)
        self.queues = np.asarray(self.queues, dtype=float)
        self.eligible = np.asarray(self.eligible, dtype=bool)
        if self.arrivals is None:
            self.arrivals = np.zeros_like(self.queues)

    @classmethod
    def fresh(cls, policy, eligible, v_param: float = 1000.0, a_max: float = 1.0) -> "SchedulerState":
        eligible = np.asarray(eligible, dtype=bool)
        return cls(policy=policy, queues=np.zeros(eligible.size), eligible=eligible,
                   v_param=v_param, a_max=a_max)

    def solve_arrivals(self) -> np.ndarray:
        """Set and return this slot's arrivals (zero for baselines and ineligible UEs)."""
        if self.policy is Policy.PFS:
            a = arrivals_pfs(self.queues, self.v_param, self.a_max)
        elif self.policy is Policy.HFS:
            a = arrivals_hfs(self.queues, self.v_param, self.a_max)
        else:
            a = np.zeros_like(self.queues)
        self.arrivals = np.where(self.eligible, a, 0.0)
        return self.arrivals

    def select(self, expected_service, k_act: int, rng=None) -> np.ndarray:
        if self.policy.uses_queues:
            return select_topk(self.queues, expected_service, k_act, self.eligible)
        return baseline_select(self.policy, self, expected_service, k_act, self.queues.size, rng)

    def update(self, service) -> np.ndarray:
        self.queues = update_queues(self.queues, service, self.arrivals)
        return self.queues


def arrivals_pfs(queues, v: float, a_max: float) -> np.ndarray:
    if v <= 0 or a_max <= 0:
        raise ValueError("V and A_max must be positive")
    q = np.asarray(queues, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        ratio = np.where(q > 0, v / np.where(q > 0, q, 1.0), np.inf)
    return np.minimum(ratio, a_max)


def arrivals_hfs(queues, v: float, a_max: float) -> np.ndarray:
    if v <= 0 or a_max <= 0:
        raise ValueError("V and A_max must be positive")
    q = np.asarray(queues, dtype=float)
    return np.full(q.shape, a_max if v > q.sum() else 0.0)


def _top(scores: np.ndarray, k: int, eligible) -> np.ndarray:
    """Mask of the ``k`` largest eligible scores, ties to the lower index."""
    n = scores.size
    idx = np.arange(n) if eligible is None else np.flatnonzero(eligible)
    chosen = idx[np.argsort(-scores[idx], kind="stable")][:k]
    x = np.zeros(n, dtype=bool)
    x[chosen] = True
    return x


def select_topk(queues, expected_service, k_act: int, eligible=None) -> np.ndarray:
    """Max-weight activation: the ``k_act`` eligible UEs with largest ``Q_k * E[R_k]``."""
    if k_act < 1:
        raise ValueError("k_act must be >= 1")
    weights = np.asarray(queues, dtype=float) * np.asarray(expected_service, dtype=float)
    return _top(weights, k_act, eligible)


def baseline_select(policy, state: SchedulerState, expected_service, k_act: int, k_tot: int, rng=None) -> np.ndarray:
    """Activity vector for the queue-free baselines.

    Round-robin walks the eligible UEs in index order, wrapping around, and
    advances ``state.rr_cursor``.
    """
    policy = Policy(policy)
    eligible = np.ones(k_tot, dtype=bool) if state is None else state.eligible
    pool = np.flatnonzero(eligible)
    k = min(k_act, pool.size)
    x = np.zeros(k_tot, dtype=bool)
    if policy is Policy.RANDOM:
        x[np.random.default_rng(rng).choice(pool, size=k, replace=False)] = True
    elif policy is Policy.ROUND_ROBIN:
        x[pool[(state.rr_cursor + np.arange(k)) % pool.size]] = True
        state.rr_cursor = (state.rr_cursor + k) % pool.size
    elif policy is Policy.MAX_SUM_RATE:
        x = _top(np.asarray(expected_service, dtype=float), k, eligible)
    else:
        raise ValueError(f"{policy.value} is not a baseline policy")
    return x


def update_queues(queues, service, arrivals) -> np.ndarray:
    q = np.asarray(queues, dtype=float)
    return np.maximum(q - np.asarray(service, dtype=float), 0.0) + np.asarray(arrivals, dtype=float)
