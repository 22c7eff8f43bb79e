"""Circular microphone-array geometry and source-distance spread."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ArrayGeometry:
    """N microphones evenly spaced on a circle of radius ``radius_m``.

    Mic k (1-based) sits at angle ``rotation_rad + 2*pi*(k-1)/N``; the source
    lies on the positive x axis.
    """

    n_mics: int = 6
    radius_m: float = 0.05
    rotation_rad: float = 0.0

    def __post_init__(self):
        if self.n_mics < 1:
            raise ValueError("n_mics must be >= 1")
        if self.radius_m <= 0:
            raise ValueError("radius_m must be positive")

    @property
    def mic_angles(self) -> np.ndarray:
        return self.rotation_rad + 2.0 * np.pi * np.arange(self.n_mics) / self.n_mics

    @property
    def mic_positions(self) -> np.ndarray:
        ang = self.mic_angles
        return self.radius_m * np.stack([np.cos(ang), np.sin(ang)], axis=1)

    def facing(self, mic: int) -> "ArrayGeometry":
        """Same array rotated so that mic ``mic`` (1-based) points at the source."""
        rot = -2.0 * np.pi * (mic - 1) / self.n_mics
        return ArrayGeometry(self.n_mics, self.radius_m, rot)


def mic_distances(geom: ArrayGeometry, source_distance_m: float) -> np.ndarray:
    """Source-to-mic path lengths for a source at (L, 0)."""
    L = float(source_distance_m)
    if L <= 0:
        raise ValueError("source distance must be positive")
    q = L / geom.radius_m
    return geom.radius_m * np.sqrt(1.0 + q * q - 2.0 * q * np.cos(geom.mic_angles))


def sigma_d(geom: ArrayGeometry, source_distance_m: float) -> float:
    """Sample standard deviation (ddof=1) of the mic distances."""
    if geom.n_mics < 2:
        raise ValueError("sigma_d needs at least two microphones")
    return float(np.std(mic_distances(geom, source_distance_m), ddof=1))


@dataclass
class SweepSummary:
    n_mics: int
    mean: float
    min: float
    max: float

    @property
    def range(self) -> float:
        return self.max - self.min


@dataclass
class SigmaSweep:
    # columns: n_mics, L_m, theta_deg, sigma_d_m
    rows: np.ndarray
    summaries: dict[int, SweepSummary]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["N", "L_m", "theta_deg", "sigma_d_m"])
            for n, L, th, s in self.rows:
                w.writerow([int(n), repr(float(L)), repr(float(th)), repr(float(s))])

    def format_table(self) -> str:
        lines = [f"{'N':>3} {'min_m':>12} {'mean_m':>12} {'max_m':>12} {'range_m':>12}"]
        for n, s in self.summaries.items():
            lines.append(f"{n:>3} {s.min:12.6f} {s.mean:12.6f} {s.max:12.6f} {s.range:12.3e}")
        return "\n".join(lines)


def sigma_sweep(n_list, radius_m=0.05, L_range=(1.0, 3.0), theta_range_deg=(0.0, 90.0),
                steps=50) -> SigmaSweep:
    """Evaluate sigma_d on a ``steps`` x ``steps`` grid of (L, theta) for each N."""
    n_list = list(n_list)
    if not n_list or steps < 1:
        raise ValueError("empty sweep")
    Ls = np.linspace(L_range[0], L_range[1], steps)
    thetas = np.linspace(theta_range_deg[0], theta_range_deg[1], steps)
    L_grid, th_grid = np.meshgrid(Ls, thetas, indexing="ij")
    L_flat, th_flat = L_grid.ravel(), th_grid.ravel()

    rows, summaries = [], {}
    for n in n_list:
        if n < 2:
            raise ValueError("sigma_d needs at least two microphones")
        ang = np.deg2rad(th_flat)[:, None] + 2.0 * np.pi * np.arange(n)[None, :] / n
        q = L_flat[:, None] / radius_m
        d = radius_m * np.sqrt(1.0 + q * q - 2.0 * q * np.cos(ang))
        s = np.std(d, axis=1, ddof=1)
        rows.append(np.column_stack([np.full_like(s, n), L_flat, th_flat, s]))
        summaries[n] = SweepSummary(n, float(s.mean()), float(s.min()), float(s.max()))
    return SigmaSweep(np.vstack(rows), summaries)
