"""Large-scale fading, angular supports and block-fading channel draws.

Each RU-UE channel is a single-ring local scattering vector living in the
span of a few DFT columns::

    h = sqrt(beta * M / |S|) * F[:, S] @ nu,    nu ~ CN(0, I)

Pathloss follows a dual-slope LOS/NLOS model with log-normal shadowing.
All gains are linear power ratios.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import NetworkTopology, reference_distance

LOS_INTERCEPT_DB = 30.5
LOS_SLOPE_DB = 20.0
NLOS_INTERCEPT_DB = 36.7
NLOS_SLOPE_DB = 30.0
LOS_SHADOW_DB = 4.0
NLOS_SHADOW_DB = 8.0
# SNR normalisation point, in units of the reference distance d_L
NORMALIZATION_RANGE = 3.0


@dataclass(frozen=True)
class LargeScaleState:
    beta: np.ndarray        # (L, K) linear LSFCs
    los_flags: np.ndarray   # (L, K) bool
    snr: float              # P_ue / N0, linear


@dataclass(frozen=True)
class ChannelRealization:
    """One slot of the uplink channel.

    ``blocks[l, :, k]`` is the M-vector from UE ``k`` to RU ``l``. Columns of
    inactive UEs are zero.
    """

    blocks: np.ndarray       # (L, M, K) complex
    active_mask: np.ndarray  # (K,) bool

    @property
    def matrix(self) -> np.ndarray:
        """The stacked ``(L*M, K)`` channel matrix."""
        L, M, K = self.blocks.shape
        return self.blocks.reshape(L * M, K)


def dft_matrix(m: int) -> np.ndarray:
    if m < 1:
        raise ValueError("m must be >= 1")
    idx = np.arange(m)
    return np.exp(-2j * np.pi * np.outer(idx, idx) / m) / np.sqrt(m)


def support_masks(azimuths, m: int, delta: float) -> np.ndarray:
    """Boolean angular-support masks with a trailing axis of length ``m``.

    Quantized angle ``2*pi*n/m`` belongs to the support when it lies strictly
    inside the window of width ``delta`` centred on the azimuth. An empty
    window falls back to the nearest quantized angle, so every mask has at
    least one entry set.
    """
    if not 0 < delta <= 2 * np.pi:
        raise ValueError("delta must lie in (0, 2*pi]")
    az = np.asarray(azimuths, dtype=float)[..., None]
    grid = 2 * np.pi * np.arange(m) / m
    gap = np.abs(np.mod(grid - az + np.pi, 2 * np.pi) - np.pi)
    mask = gap < delta / 2 - 1e-12
    if delta >= 2 * np.pi:
        mask[...] = True
    nearest = np.mod(np.rint(az[..., 0] * m / (2 * np.pi)).astype(int), m)
    empty = ~mask.any(axis=-1)
    if np.any(empty):
        onehot = np.arange(m) == nearest[..., None]
        mask = np.where(empty[..., None], onehot, mask)
    return mask


def angular_support(azimuth: float, m: int, delta: float) -> frozenset[int]:
    return frozenset(int(i) for i in np.flatnonzero(support_masks(azimuth, m, delta)))


def los_probability(distance):
    d = np.maximum(np.asarray(distance, dtype=float), 1.0)
    decay = np.exp(-d / 36.0)
    return np.minimum(18.0 / d, 1.0) * (1.0 - decay) + decay


def pathloss(distance, los):
    """Shadowing-free linear gain. Distances below 1 m are clamped to 1 m."""
    d = np.maximum(np.asarray(distance, dtype=float), 1.0)
    pl_db = np.where(
        los,
        LOS_INTERCEPT_DB + LOS_SLOPE_DB * np.log10(d),
        NLOS_INTERCEPT_DB + NLOS_SLOPE_DB * np.log10(d),
    )
    gain = 10.0 ** (-pl_db / 10.0)
    return float(gain) if gain.ndim == 0 else gain


def expected_pathloss(distance):
    """LOS-probability mixture of the LOS and NLOS gains."""
    p = los_probability(distance)
    return p * pathloss(distance, True) + (1 - p) * pathloss(distance, False)


def normalization_distance(area: float, l: int) -> float:
    return NORMALIZATION_RANGE * reference_distance(area, l)


def normalize_snr(topology: NetworkTopology, l: int | None = None, m: int = 8) -> float:
    """SNR such that ``beta_bar * m * snr == 1`` at three reference distances."""
    l = topology.n_ru if l is None else l
    beta_bar = float(expected_pathloss(normalization_distance(topology.area, l)))
    return 1.0 / (beta_bar * m)


def transmit_power_dbm(snr: float, bandwidth_hz: float, n0_dbm_hz: float) -> float:
    """Physical UE transmit power ``P_ue * W`` implied by a normalized SNR."""
    return 10 * np.log10(snr) + n0_dbm_hz + 10 * np.log10(bandwidth_hz)


def draw_large_scale(topology: NetworkTopology, m: int, rng, shadowing: bool = True) -> LargeScaleState:
    """LOS flags, shadowed LSFCs and the normalized SNR for one layout."""
    rng = np.random.default_rng(rng)
    d = topology.distances()
    los = rng.random(d.shape) < los_probability(d)
    beta = pathloss(d, los)
    if shadowing:
        sigma = np.where(los, LOS_SHADOW_DB, NLOS_SHADOW_DB)
        beta = beta * 10.0 ** (sigma * rng.standard_normal(d.shape) / 10.0)
    return LargeScaleState(beta=np.asarray(beta), los_flags=los, snr=normalize_snr(topology, m=m))


def realize_channel(large_scale: LargeScaleState, supports: np.ndarray, active_mask, rng) -> ChannelRealization:
    """Fresh i.i.d. small-scale draw for the active UEs.

    ``supports`` is the ``(L, K, M)`` boolean mask array.
    """
    rng = np.random.default_rng(rng)
    active_mask = np.asarray(active_mask, dtype=bool)
    L, K, M = supports.shape
    blocks = np.zeros((L, M, K), dtype=complex)
    idx = np.flatnonzero(active_mask)
    if idx.size:
        blocks[:, :, idx] = draw_blocks(large_scale.beta[:, idx], supports[:, idx, :], rng)
    return ChannelRealization(blocks=blocks, active_mask=active_mask)


def draw_blocks(beta: np.ndarray, supports: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Channel blocks for the given columns only, shape ``(L, M, n)``."""
    L, n, M = supports.shape
    scale = np.sqrt(beta * M / supports.sum(axis=-1))
    nu = (rng.standard_normal((L, n, M)) + 1j * rng.standard_normal((L, n, M))) / np.sqrt(2)
    nu = nu * supports * scale[..., None]
    # h = F @ nu  for every (l, k), with rows of nu outside the support zeroed
    return np.swapaxes(nu @ dft_matrix(M).T, 1, 2)


def write_lsfc_csv(large_scale: LargeScaleState, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ru", "ue", "beta", "los"])
        L, K = large_scale.beta.shape
        for l in range(L):
            for k in range(K):
                writer.writerow([l, k, repr(float(large_scale.beta[l, k])), int(large_scale.los_flags[l, k])])
