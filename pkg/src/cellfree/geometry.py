"""Network layout on a square torus: RU grid, random UE drops, wrap-around distances."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class NetworkTopology:
    """RU and UE positions on a ``area_side`` x ``area_side`` torus.

    Positions are stored as ``(n, 2)`` float arrays. Distances and angles
    always use the minimum-image displacement, so there is no boundary.
    """

    area_side: float
    ru_positions: np.ndarray
    ue_positions: np.ndarray
    wrap: bool = True

    @property
    def n_ru(self) -> int:
        return len(self.ru_positions)

    @property
    def n_ue(self) -> int:
        return len(self.ue_positions)

    @property
    def area(self) -> float:
        return self.area_side ** 2

    def displacements(self) -> np.ndarray:
        """Minimum-image vectors from every RU to every UE, shape ``(L, K, 2)``."""
        delta = self.ue_positions[None, :, :] - self.ru_positions[:, None, :]
        return min_image(delta, self.area_side)

    def distances(self) -> np.ndarray:
        """Torus distances, shape ``(L, K)``."""
        return np.hypot(*np.moveaxis(self.displacements(), -1, 0))

    def azimuths(self) -> np.ndarray:
        """Direction of each UE as seen from each RU, radians in ``[0, 2*pi)``."""
        d = self.displacements()
        return np.mod(np.arctan2(d[..., 1], d[..., 0]), 2 * np.pi)

    def records(self) -> list[tuple[str, int, float, float]]:
        rows = [("ru", i, float(x), float(y)) for i, (x, y) in enumerate(self.ru_positions)]
        rows += [("ue", i, float(x), float(y)) for i, (x, y) in enumerate(self.ue_positions)]
        return rows

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["entity", "index", "x", "y"])
            for ent, idx, x, y in self.records():
                writer.writerow([ent, idx, repr(x), repr(y)])


def min_image(delta, area_side: float):
    """Wrap coordinate differences into ``[-area_side/2, area_side/2]``."""
    delta = np.asarray(delta, dtype=float)
    return delta - area_side * np.round(delta / area_side)


def place_rus(rows: int, cols: int, area_side: float) -> np.ndarray:
    """RUs at the cell centres of a uniform ``rows`` x ``cols`` grid.

    Returns an ``(rows*cols, 2)`` array ordered row by row.
    """
    if rows < 1 or cols < 1:
        raise ValueError("grid needs at least one row and one column")
    xs = (np.arange(cols) + 0.5) * area_side / cols
    ys = (np.arange(rows) + 0.5) * area_side / rows
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def drop_ues(k_tot: int, area_side: float, rng_seed) -> np.ndarray:
    """``k_tot`` i.i.d. uniform points in ``[0, area_side)^2``.

    ``rng_seed`` may be an integer seed or a ``numpy.random.Generator``.
    """
    if k_tot < 1:
        raise ValueError("k_tot must be >= 1")
    rng = np.random.default_rng(rng_seed)
    return rng.uniform(0.0, area_side, size=(k_tot, 2))


def torus_distance(p, q, area_side: float) -> float:
    d = min_image(np.subtract(q, p), area_side)
    return float(np.hypot(d[0], d[1]))


def reference_distance(area: float, l: int) -> float:
    """Radius of a disk whose area equals ``area / l``."""
    if area <= 0 or l < 1:
        raise ValueError("area must be positive and l >= 1")
    return math.sqrt(area / (math.pi * l))


def make_topology(rows: int, cols: int, k_tot: int, area_side: float, rng_seed) -> NetworkTopology:
    return NetworkTopology(
        area_side=float(area_side),
        ru_positions=place_rus(rows, cols, area_side),
        ue_positions=drop_ues(k_tot, area_side, rng_seed),
    )
