"""Two-stage uplink combining and instantaneous SINR / mutual information.

Each RU builds a unit-norm local MMSE vector for every active UE it serves
from its own channel estimates. The UE's cluster then mixes the per-RU
outputs with complex weights chosen to maximize the SINR it can predict
from the estimates. The resulting LM-dimensional receiver has unit norm.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReceiverState:
    local_vectors: np.ndarray  # (L, M, n) unit-norm v_{l,k}, zero off-cluster
    weights: np.ndarray        # (n, L) w_{l,k}, zero off-cluster
    aggregate: np.ndarray      # (L, M, n) unit-norm receivers

    @property
    def matrix(self) -> np.ndarray:
        L, M, n = self.aggregate.shape
        return self.aggregate.reshape(L * M, n)


def _unit_columns(x: np.ndarray, axis: int = -2) -> np.ndarray:
    norm = np.linalg.norm(x, axis=axis, keepdims=True)
    return np.divide(x, norm, out=np.zeros_like(x), where=norm > 0)


def local_mmse(estimates: np.ndarray, snr: float) -> np.ndarray:
    """Unit-norm MMSE vectors at one RU (``(M, n)``) or at all RUs (``(L, M, n)``).

    Columns of ``estimates`` are the channel estimates of the active UEs the
    RU serves; zero columns (UEs it does not serve) yield zero vectors and
    do not enter the covariance.
    """
    M = estimates.shape[-2]
    cov = estimates @ np.swapaxes(estimates.conj(), -1, -2) + np.eye(M) / snr
    return _unit_columns(np.linalg.solve(cov, estimates))


def cluster_weights(desired: np.ndarray, interferers: np.ndarray, snr: float) -> np.ndarray:
    """SINR-maximizing unit-norm weights for one cluster.

    ``desired`` is the ``(c,)`` vector of effective gains of the UE itself at
    its ``c`` cluster RUs, ``interferers`` the ``(c, J)`` gains of the other
    UEs. The maximizer of ``|w^H g|^2 / w^H B w`` is ``B^-1 g``.
    """
    desired = np.asarray(desired, dtype=complex)
    c = desired.shape[0]
    if not np.any(desired):
        log.warning("zero desired gain in cluster, using equal weights")
        return np.full(c, 1 / np.sqrt(c), dtype=complex)
    interferers = np.asarray(interferers, dtype=complex).reshape(c, -1)
    B = interferers @ interferers.conj().T + np.eye(c) / snr
    w = np.linalg.solve(B, desired)
    w = w / np.linalg.norm(w)
    # pin the phase so that w^H g is real positive
    return w * np.exp(1j * np.angle(np.vdot(w, desired)))


def combine(estimates: np.ndarray, edges: np.ndarray, snr: float) -> ReceiverState:
    """Local MMSE plus cluster weighting for all transmitting UEs.

    Parameters
    ----------
    estimates : (L, M, n) complex
        Channel estimates, zero for RU-UE pairs that are not associated.
    edges : (L, n) bool
        Association between RUs and the ``n`` transmitting UEs.
    snr : float
        Normalized SNR; must be finite.
    """
    L, M, n = estimates.shape
    v = local_mmse(estimates, snr)
    # gains[l, k, j] = v_{l,k}^H hhat_{l,j}
    gains = np.swapaxes(v.conj(), 1, 2) @ estimates
    per_ue = np.transpose(gains, (1, 0, 2))  # (n, L, n)
    g = per_ue[np.arange(n), :, np.arange(n)]  # (n, L)
    B = per_ue @ np.swapaxes(per_ue.conj(), 1, 2) - g[:, :, None] * g.conj()[:, None, :]
    B = B + np.eye(L) / snr
    # off-cluster rows are decoupled; a unit diagonal keeps them well posed
    B = B + np.eye(L) * (~edges.T)[:, :, None]
    w = np.linalg.solve(B, g[:, :, None])[:, :, 0]
    dead = ~np.any(g, axis=1)
    if np.any(dead):
        log.warning("%d UE(s) with zero desired gain, using equal weights", int(dead.sum()))
        eq = edges.T[dead].astype(complex)
        w[dead] = eq / np.sqrt(np.maximum(eq.sum(axis=1, keepdims=True).real, 1))
    w = w * edges.T
    agg = v * w.T[:, None, :]
    flat = agg.reshape(L * M, n)
    norm = np.linalg.norm(flat, axis=0)
    scale = np.divide(1.0, norm, out=np.zeros_like(norm), where=norm > 0)
    return ReceiverState(local_vectors=v, weights=w * scale[:, None], aggregate=agg * scale)


def sinr_and_mi(receivers: np.ndarray, channels: np.ndarray, snr: float, active=None):
    """SINR and mutual information (bit/s/Hz) from the true channel.

    ``receivers`` and ``channels`` are ``(LM, n)`` (or ``(L, M, n)``) with
    matching columns. Interference is summed over every other column;
    inactive columns must be zero. Outputs for UEs outside ``active`` are 0.
    """
    n = receivers.shape[-1]
    R = receivers.reshape(-1, n)
    H = channels.reshape(-1, n)
    S = np.abs(R.conj().T @ H) ** 2
    signal = np.diag(S).copy()
    np.fill_diagonal(S, 0.0)
    interference = S.sum(axis=1)
    sinr = signal / (1.0 / snr + interference)
    if active is not None:
        sinr = np.where(np.asarray(active, dtype=bool), sinr, 0.0)
    return sinr, np.log2(1.0 + sinr)
