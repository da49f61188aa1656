"""Spatio-temporal flow maps.

Every grid cell keeps one FreMEn model per discrete orientation. A FreMEn
model is the mean of a series plus its few strongest periodic components
picked from a fixed candidate set of frequencies.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .cliff_map import VelocitySample
from .core import TWO_PI, NoDynamicsData, Trajectory, Velocity, cells_near, wrap_angle

__all__ = [
    "BinHistograms",
    "FreMEnModel",
    "STeFCell",
    "STeFMap",
    "accumulate_bin_histograms",
    "build_stef_map",
    "daily_harmonics",
    "fit_fremen",
    "heading_to_bin",
    "load_stef_map",
    "predict_bin_probs",
    "sample_velocity_from_stef",
    "save_stef_map",
]


def daily_harmonics(n: int = 24) -> np.ndarray:
    """Angular frequencies ``2*pi*i/86400`` for ``i = 1..n`` (rad/s)."""
    return TWO_PI * np.arange(1, n + 1) / 86400.0


@dataclass(frozen=True)
class FreMEnModel:
    mean: float
    components: tuple[tuple[float, float, float], ...] = ()  # (omega, amplitude, phase)

    def predict(self, t):
        t = np.asarray(t, dtype=float)
        out = np.full(t.shape, self.mean)
        for omega, amp, phase in self.components:
            out = out + amp * np.cos(omega * t - phase)
        return out


@dataclass(frozen=True)
class STeFCell:
    bin_models: tuple[FreMEnModel, ...]

    @property
    def k(self) -> int:
        return len(self.bin_models)


@dataclass(frozen=True, eq=False)
class STeFMap:
    resolution: float
    cells: dict[tuple[int, int], STeFCell]
    k: int = 8
    t_interval: float = 600.0
    m: int = 2
    candidate_freqs: tuple[float, ...] = field(default_factory=lambda: tuple(daily_harmonics()))
    training_span: tuple[float, float] | None = None

    def __post_init__(self):
        for cell in self.cells.values():
            if cell.k != self.k:
                raise ValueError(f"cell has {cell.k} bins, map expects {self.k}")
        object.__setattr__(self, "cells", dict(sorted(self.cells.items())))
        object.__setattr__(self, "candidate_freqs", tuple(float(f) for f in self.candidate_freqs))

    def __len__(self) -> int:
        return len(self.cells)

    def __eq__(self, other):
        if not isinstance(other, STeFMap):
            return NotImplemented
        return (
            self.resolution == other.resolution
            and self.k == other.k
            and self.t_interval == other.t_interval
            and self.m == other.m
            and self.candidate_freqs == other.candidate_freqs
            and self.training_span == other.training_span
            and self.cells == other.cells
        )

    @property
    def bounds(self) -> tuple[float, float, float, float] | None:
        if not self.cells:
            return None
        ii = [c[0] for c in self.cells]
        jj = [c[1] for c in self.cells]
        r = self.resolution
        return ((min(ii) - 0.5) * r, (min(jj) - 0.5) * r, (max(ii) + 0.5) * r, (max(jj) + 0.5) * r)

    def bin_heading(self, i: int) -> float:
        return wrap_angle(i * TWO_PI / self.k)


def heading_to_bin(heading, k: int):
    """Nearest orientation bin; an exact midpoint goes to the lower bin (round half down)."""
    v = np.mod(np.asarray(heading, dtype=float), TWO_PI) / (TWO_PI / k)
    idx = np.ceil(v - 0.5).astype(int) % k
    return int(idx) if np.ndim(idx) == 0 else idx


@dataclass
class BinHistograms:
    """Normalised per-cell orientation histograms over a timeline.

    ``times`` holds the midpoints of the histogram intervals that saw at
    least one detection anywhere in the data; ``cells`` maps a grid cell to
    an array of shape ``(len(times), k)``.
    """

    times: np.ndarray
    cells: dict[tuple[int, int], np.ndarray]
    k: int
    t_interval: float
    span: tuple[float, float] | None


def accumulate_bin_histograms(
    trajectories: Iterable[Trajectory], resolution: float = 1.0, k: int = 8, t_interval: float = 600.0
) -> BinHistograms:
    if k < 2:
        raise ValueError("k must be >= 2")
    cols = [np.column_stack([tr.t, tr.x, tr.y, tr.heading]) for tr in trajectories if len(tr)]
    if not cols:
        return BinHistograms(np.empty(0), {}, k, t_interval, None)
    s = np.concatenate(cols)
    t, x, y, h = s.T
    t_start = math.floor(t.min() / t_interval) * t_interval
    slot = np.floor((t - t_start) / t_interval).astype(np.int64)
    # intervals with no detection anywhere are treated as unobserved
    observed, slot = np.unique(slot, return_inverse=True)
    times = t_start + (observed + 0.5) * t_interval
    ci = np.floor(x / resolution + 0.5).astype(np.int64)
    cj = np.floor(y / resolution + 0.5).astype(np.int64)
    b = heading_to_bin(h, k)

    cells: dict[tuple[int, int], np.ndarray] = {}
    order = np.lexsort((cj, ci))
    keys = np.column_stack([ci, cj])[order]
    splits = np.flatnonzero(np.any(np.diff(keys, axis=0) != 0, axis=1)) + 1
    for grp in np.split(order, splits):
        counts = np.zeros((len(observed), k))
        np.add.at(counts, (slot[grp], b[grp]), 1.0)
        tot = counts.sum(axis=1, keepdims=True)
        counts = np.divide(counts, tot, out=np.zeros_like(counts), where=tot > 0)
        cells[(int(ci[grp[0]]), int(cj[grp[0]]))] = counts
    return BinHistograms(times, cells, k, t_interval, (float(t.min()), float(t.max())))


def fit_fremen(times: Sequence[float], values: Sequence[float], candidate_freqs: Sequence[float], m: int = 2) -> FreMEnModel:
    """Keep the ``m`` strongest candidate frequencies of a series.

    For each candidate ``w`` the coefficient is ``c = mean((v - vbar) * exp(-i w t))``;
    amplitude is ``2|c|`` and phase is ``-arg(c)`` so that
    ``vbar + amp * cos(w t - phase)`` reconstructs the component. Series
    shorter than ``2m + 1`` give a mean-only model.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape:
        raise ValueError("times and values must have the same length")
    if len(v) == 0:
        raise ValueError("empty series")
    mean = float(math.fsum(v) / len(v))
    freqs = np.asarray(candidate_freqs, dtype=float)
    if len(v) < 2 * m + 1 or len(freqs) == 0 or m == 0:
        return FreMEnModel(mean)
    resid = v - mean
    coeffs = np.exp(-1j * np.outer(freqs, t)) @ resid / len(v)
    mag = np.abs(coeffs)
    top = np.argsort(-mag, kind="stable")[: min(m, len(freqs))]
    comps = tuple(
        (float(freqs[i]), float(2.0 * mag[i]), wrap_angle(-math.atan2(coeffs[i].imag, coeffs[i].real))) for i in top
    )
    return FreMEnModel(mean, comps)


def predict_bin_probs(cell: STeFCell, t: float) -> np.ndarray:
    """Per-bin likelihoods at time ``t``, clipped to [0, 1] and not renormalised."""
    return np.clip(np.array([float(mdl.predict(t)) for mdl in cell.bin_models]), 0.0, 1.0)


def build_stef_map(
    trajectories: Iterable[Trajectory],
    resolution: float = 1.0,
    k: int = 8,
    t_interval: float = 600.0,
    m: int = 2,
    candidate_freqs: Sequence[float] | None = None,
) -> STeFMap:
    freqs = daily_harmonics() if candidate_freqs is None else np.asarray(candidate_freqs, dtype=float)
    hist = accumulate_bin_histograms(trajectories, resolution, k, t_interval)
    cells = {
        cell: STeFCell(tuple(fit_fremen(hist.times, series[:, i], freqs, m) for i in range(k)))
        for cell, series in hist.cells.items()
    }
    return STeFMap(resolution, cells, k, t_interval, m, tuple(freqs), hist.span)


def sample_velocity_from_stef(
    x: float,
    y: float,
    smap: STeFMap,
    t: float,
    prev_speed: float,
    rng: np.random.Generator,
    r_s: float = 1.0,
) -> VelocitySample:
    """Draw an orientation bin from the nearest cell; speed is passed through.

    Raises
    ------
    NoDynamicsData
        No cell centre within ``r_s``, or every bin predicts zero.
    """
    if prev_speed < 0:
        raise ValueError("prev_speed must be >= 0")
    near = cells_near(x, y, r_s, smap.resolution, smap.cells)
    if not near:
        raise NoDynamicsData(f"no STeF cell within {r_s} m of ({x:.3f}, {y:.3f})")
    _, cell = min(near)
    p = predict_bin_probs(smap.cells[cell], t)
    cum = np.cumsum(p)
    total = cum[-1]
    if not total > 0:
        raise NoDynamicsData(f"all orientation bins are zero in cell {cell} at t={t}")
    i = min(int(np.searchsorted(cum, rng.random() * total, side="right")), smap.k - 1)
    return VelocitySample(Velocity(prev_speed, smap.bin_heading(i)), float(p[i] / total))


_COLUMNS = ("x_m", "y_m", "bin", "comp_index", "freq_rad_s", "amplitude", "phase_rad")


def save_stef_map(smap: STeFMap, directory: str | os.PathLike, extra: dict | None = None) -> None:
    """Write ``stef_map.csv`` and ``manifest.json`` into ``directory``.

    Component index 0 is the mean (frequency 0, amplitude = mean, phase 0).
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    lines = [",".join(_COLUMNS)]
    for (i, j), cell in smap.cells.items():
        cx, cy = i * smap.resolution, j * smap.resolution
        for b, mdl in enumerate(cell.bin_models):
            rows = [(0.0, mdl.mean, 0.0)] + list(mdl.components)
            for ci, (f, a, ph) in enumerate(rows):
                lines.append(f"{cx!r},{cy!r},{b},{ci},{float(f)!r},{float(a)!r},{float(ph)!r}")
    (d / "stef_map.csv").write_text("\n".join(lines) + "\n")
    manifest = {
        "kind": "stef",
        "resolution": smap.resolution,
        "k": smap.k,
        "t_interval": smap.t_interval,
        "m": smap.m,
        "candidate_freqs": list(smap.candidate_freqs),
        "training_span": list(smap.training_span) if smap.training_span else None,
        "bounds": list(smap.bounds) if smap.bounds else None,
    }
    if extra:
        manifest.update(extra)
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_stef_map(directory: str | os.PathLike) -> STeFMap:
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    res = float(manifest["resolution"])
    k = int(manifest["k"])
    raw: dict[tuple[int, int], dict[int, list]] = {}
    lines = (d / "stef_map.csv").read_text().splitlines()
    if tuple(lines[0].split(",")) != _COLUMNS:
        raise ValueError(f"{d}: unexpected header {lines[0]!r}")
    for line in lines[1:]:
        if not line.strip():
            continue
        f = line.split(",")
        cell = (round(float(f[0]) / res), round(float(f[1]) / res))
        raw.setdefault(cell, {}).setdefault(int(f[2]), []).append((int(f[3]), float(f[4]), float(f[5]), float(f[6])))
    cells = {}
    for cell, bins in raw.items():
        models = []
        for b in range(k):
            rows = sorted(bins[b])
            mean = rows[0][2]
            models.append(FreMEnModel(mean, tuple((f, a, ph) for _, f, a, ph in rows[1:])))
        cells[cell] = STeFCell(tuple(models))
    span = manifest.get("training_span")
    return STeFMap(
        res,
        cells,
        k,
        float(manifest["t_interval"]),
        int(manifest["m"]),
        tuple(manifest["candidate_freqs"]),
        tuple(span) if span else None,
    )
