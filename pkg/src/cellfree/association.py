"""User-centric cluster formation, pilot assignment and channel estimation."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import ChannelRealization, LargeScaleState, dft_matrix

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AssociationGraph:
    """Bipartite UE-RU graph held as an ``(L, K)`` boolean adjacency matrix.

    ``clusters``, ``served`` and ``edges`` are derived views kept for callers
    that want sets rather than masks.
    """

    adjacency: np.ndarray

    @property
    def clusters(self) -> list[tuple[int, ...]]:
        return [tuple(int(l) for l in np.flatnonzero(col)) for col in self.adjacency.T]

    @property
    def served(self) -> list[tuple[int, ...]]:
        return [tuple(int(k) for k in np.flatnonzero(row)) for row in self.adjacency]

    @property
    def edges(self) -> frozenset[tuple[int, int]]:
        return frozenset((int(l), int(k)) for l, k in zip(*np.nonzero(self.adjacency)))

    @property
    def covered(self) -> np.ndarray:
        return self.adjacency.any(axis=0)

    @property
    def uncovered(self) -> np.ndarray:
        return ~self.covered

    def restrict(self, active_mask) -> "AssociationGraph":
        """Subgraph induced by the active UEs (inactive columns emptied)."""
        return AssociationGraph(self.adjacency & np.asarray(active_mask, dtype=bool)[None, :])

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["ru", "ue"])
            writer.writerows(sorted(self.edges))


@dataclass
class PilotAssignment:
    """Pilot index per UE; ``-1`` marks UEs without a pilot (inactive)."""

    pilot_of: np.ndarray
    tau_p: int
    fallbacks: list[tuple[int, int, float]] = field(default_factory=list)


def association_threshold(snr: float, eta: float, m: int) -> float:
    return eta / (m * snr)


def form_clusters(large_scale: LargeScaleState, eta: float = 1.0, q_max: int = 10, m: int = 8) -> AssociationGraph:
    """Keep RU-UE pairs with ``beta >= eta / (m * snr)``, at most ``q_max`` per UE.

    Within a UE the strongest RUs win; equal gains go to the lower RU index.
    UEs left without any RU are uncovered.
    """
    if eta <= 0 or q_max < 1:
        raise ValueError("eta must be positive and q_max >= 1")
    beta = large_scale.beta
    L, K = beta.shape
    passing = beta >= association_threshold(large_scale.snr, eta, m)
    if q_max < L:
        # per-UE rank by descending beta, ties to the lower RU index
        order = np.lexsort((np.broadcast_to(np.arange(L)[:, None], (L, K)), -beta), axis=0)
        rank = np.empty_like(order)
        np.put_along_axis(rank, order, np.arange(L)[:, None].repeat(K, axis=1), axis=0)
        passing &= rank < q_max
    n_uncovered = int((~passing.any(axis=0)).sum())
    if n_uncovered:
        log.info("%d UE(s) uncovered by the association threshold", n_uncovered)
    return AssociationGraph(passing)


def assign_pilots(graph: AssociationGraph, supports: np.ndarray, active, tau_p: int,
                  beta: np.ndarray) -> PilotAssignment:
    """Greedy subspace-aware pilot assignment for the active UEs.

    UEs are visited by decreasing strongest gain. Each takes the lowest unused
    pilot while any remain; after that, the lowest pilot whose holders have
    disjoint supports from it at every shared serving RU. If no pilot is
    clean, the one with the least support-overlap-weighted contamination is
    taken and recorded in ``fallbacks``.
    """
    if tau_p < 1:
        raise ValueError("tau_p must be >= 1")
    L, K, M = supports.shape
    active_idx = _as_indices(active, K)
    pilot_of = np.full(K, -1, dtype=int)
    occupancy = np.zeros((tau_p, L, M))
    used = np.zeros(tau_p, dtype=bool)
    fallbacks = []

    strength = beta[:, active_idx].max(axis=0) if active_idx.size else np.empty(0)
    order = active_idx[np.argsort(-strength, kind="stable")]
    for k in order:
        cl = np.flatnonzero(graph.adjacency[:, k])
        sk = supports[cl, k, :]
        if not used.all():
            p = int(np.argmin(used))
        else:
            overlap = occupancy[:, cl, :] * sk
            clean = ~(overlap > 0).any(axis=(1, 2))
            if clean.any():
                p = int(np.argmax(clean))
            else:
                score = (overlap.sum(axis=2) / sk.sum(axis=1)).sum(axis=1)
                p = int(np.argmin(score))
                fallbacks.append((int(k), p, float(score[p])))
        pilot_of[k] = p
        used[p] = True
        occupancy[p, cl, :] += beta[cl, k, None] * sk
    if fallbacks:
        log.debug("pilot fallback used for %d UE(s)", len(fallbacks))
    return PilotAssignment(pilot_of=pilot_of, tau_p=tau_p, fallbacks=fallbacks)


def pilot_conflicts(assignment: PilotAssignment, graph: AssociationGraph, supports: np.ndarray):
    """Co-pilot UE pairs that share a serving RU with overlapping supports."""
    bad = []
    holders = np.flatnonzero(assignment.pilot_of >= 0)
    for i, a in enumerate(holders):
        for b in holders[i + 1:]:
            if assignment.pilot_of[a] != assignment.pilot_of[b]:
                continue
            common = np.flatnonzero(graph.adjacency[:, a] & graph.adjacency[:, b])
            for l in common:
                if np.any(supports[l, a] & supports[l, b]):
                    bad.append((int(a), int(b), int(l)))
    return bad


def estimate_blocks(blocks, pilots, edges, supports, snr: float, tau_p: int, rng) -> np.ndarray:
    """Subspace-projection estimates for a set of transmitting UEs.

    Parameters
    ----------
    blocks : (L, M, n) complex
        True channels of the UEs that sent pilots.
    pilots : (n,) int
        Pilot index of each of those UEs.
    edges : (L, n) bool
        Which RUs estimate which UE. Non-edges come back as zero.
    supports : (L, n, M) bool
    """
    L, M, n = blocks.shape
    onehot = np.zeros((n, tau_p))
    onehot[np.arange(n), pilots] = 1.0
    received = blocks @ onehot
    if np.isfinite(snr):
        std = np.sqrt(1.0 / (tau_p * snr) / 2)
        noise = rng.standard_normal((L, M, tau_p)) + 1j * rng.standard_normal((L, M, tau_p))
        received = received + std * noise
    y = received[:, :, pilots]
    F = dft_matrix(M)
    coeff = (F.conj().T @ y) * np.swapaxes(supports, 1, 2)
    return (F @ coeff) * edges[:, None, :]


def estimate_channels(realization: ChannelRealization, assignment: PilotAssignment, graph: AssociationGraph,
                      supports: np.ndarray, snr: float, tau_p: int, rng=None) -> np.ndarray:
    """Estimates for every edge of the active UEs, full ``(L, M, K)`` layout."""
    rng = np.random.default_rng(rng)
    idx = np.flatnonzero(realization.active_mask & (assignment.pilot_of >= 0))
    out = np.zeros_like(realization.blocks)
    if idx.size:
        out[:, :, idx] = estimate_blocks(
            realization.blocks[:, :, idx], assignment.pilot_of[idx], graph.adjacency[:, idx],
            supports[:, idx, :], snr, tau_p, rng,
        )
    return out


def _as_indices(active, n: int) -> np.ndarray:
    active = np.asarray(active)
    if active.dtype == bool:
        return np.flatnonzero(active)
    return np.sort(active.astype(int))
