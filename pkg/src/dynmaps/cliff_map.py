"""Circular-linear flow field maps.

Each map location holds a semi-wrapped Gaussian mixture over
``(heading, speed)``: the heading axis is wrapped modulo 2*pi, the speed
axis is an ordinary real line. Wrapping is truncated to the three nearest
copies (k in {-1, 0, 1}), which is exact to ~1e-8 for heading spreads
below pi/2.
"""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.cluster.vq import ClusterError, kmeans2

from .core import (
    TWO_PI,
    NoDynamicsData,
    Trajectory,
    Velocity,
    cells_near,
    circular_weighted_mean,
    grid_cell,
    wrap_angle,
)

log = logging.getLogger(__name__)

WRAPS = np.array([-1.0, 0.0, 1.0]) * TWO_PI
SECONDS_PER_DAY = 86400.0
_TINY = np.finfo(float).tiny

__all__ = [
    "CLiFFMap",
    "EMConfig",
    "EMResult",
    "InsufficientDataError",
    "SWGMM",
    "SWGMMComponent",
    "TCCLiFFMap",
    "VelocitySample",
    "build_cliff_map",
    "build_tc_cliff_map",
    "em_swgmm",
    "fit_swgmm",
    "load_cliff_map",
    "load_tc_cliff_map",
    "sample_velocity_from_cliff",
    "save_cliff_map",
    "save_tc_cliff_map",
    "swgmm_pdf",
]


class InsufficientDataError(ValueError):
    """Too few observations to fit a mixture at a location."""


@dataclass(frozen=True)
class EMConfig:
    max_components: int = 5
    min_observations: int = 10
    cov_floor: float = 1e-4
    tol: float = 1e-6
    max_iter: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.max_components < 1:
            raise ValueError("max_components must be >= 1")
        if self.min_observations < 1:
            raise ValueError("min_observations must be >= 1")
        if self.cov_floor <= 0:
            raise ValueError("cov_floor must be positive")


@dataclass(frozen=True)
class VelocitySample:
    velocity: Velocity
    fitness: float

    def __post_init__(self):
        if not (math.isfinite(self.fitness) and self.fitness > 0):
            raise ValueError(f"fitness must be finite and > 0, got {self.fitness}")


@dataclass(frozen=True, eq=False)
class SWGMMComponent:
    weight: float
    mean: tuple[float, float]  # (heading, speed)
    cov: np.ndarray  # 2x2 over (heading, speed)

    def __post_init__(self):
        cov = np.array(self.cov, dtype=float).reshape(2, 2)
        if not 0.0 < self.weight <= 1.0:
            raise ValueError(f"component weight must be in (0, 1], got {self.weight}")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        if np.linalg.eigvalsh(cov).min() <= 1e-10:
            raise ValueError("covariance must be positive definite")
        cov.setflags(write=False)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "mean", (float(self.mean[0]), float(self.mean[1])))

    def __eq__(self, other):
        if not isinstance(other, SWGMMComponent):
            return NotImplemented
        return (
            self.weight == other.weight
            and self.mean == other.mean
            and np.array_equal(self.cov, other.cov)
        )


@dataclass(frozen=True, eq=True)
class SWGMM:
    components: tuple[SWGMMComponent, ...]
    motion_intensity: float = 1.0
    observation_count: int = 1

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("an SWGMM needs at least one component")
        if abs(math.fsum(c.weight for c in comps) - 1.0) > 1e-9:
            raise ValueError("component weights must sum to 1")
        if not 0.0 <= self.motion_intensity <= 1.0:
            raise ValueError("motion_intensity must be in [0, 1]")
        if self.observation_count < 1:
            raise ValueError("observation_count must be >= 1")
        object.__setattr__(self, "components", comps)
        w = np.array([c.weight for c in comps])
        mu = np.array([c.mean for c in comps])
        cov = np.array([c.cov for c in comps])
        object.__setattr__(self, "_w", w)
        object.__setattr__(self, "_mu", mu)
        object.__setattr__(self, "_cov", cov)
        object.__setattr__(self, "_chol", np.linalg.cholesky(cov))
        object.__setattr__(self, "_cumw", np.cumsum(w))

    @property
    def n_components(self) -> int:
        return len(self.components)

    def pdf(self, theta, rho) -> np.ndarray:
        """Vectorised density at arrays of headings and speeds."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        logp = _component_wrap_logpdf(theta, rho, self._w, self._mu, self._cov)
        return np.exp(_logsumexp_rows(logp.reshape(len(theta), -1)))

    def sample(self, rng: np.random.Generator) -> tuple[float, float]:
        """One raw draw ``(heading, speed)``: wrapped heading, speed unclamped."""
        j = int(np.searchsorted(self._cumw, rng.random() * self._cumw[-1], side="right"))
        j = min(j, len(self._w) - 1)
        z = self._mu[j] + self._chol[j] @ rng.standard_normal(2)
        return wrap_angle(float(z[0])), float(z[1])


def _component_wrap_logpdf(theta, rho, w, mu, cov):
    """log(w_j N((theta + 2 pi k, rho); mu_j, cov_j)), shape (n, K, 3)."""
    a = cov[:, 0, 0]
    b = cov[:, 0, 1]
    c = cov[:, 1, 1]
    det = a * c - b * b
    dth = theta[:, None, None] + WRAPS[None, None, :] - mu[None, :, 0, None]
    drh = (rho[:, None] - mu[None, :, 1])[:, :, None]
    maha = (c[None, :, None] * dth**2 - 2 * b[None, :, None] * dth * drh + a[None, :, None] * drh**2) / det[
        None, :, None
    ]
    lognorm = np.log(w) - math.log(TWO_PI) - 0.5 * np.log(det)
    return lognorm[None, :, None] - 0.5 * maha


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=1)
    m = np.where(np.isfinite(m), m, 0.0)
    return m + np.log(np.exp(a - m[:, None]).sum(axis=1))


def swgmm_pdf(model: SWGMM, v: Velocity) -> float:
    """Density of a velocity under a semi-wrapped mixture."""
    return float(model.pdf(v.heading, v.speed)[0])


# -- fitting ---------------------------------------------------------------


@dataclass
class EMResult:
    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    loglik: float
    trace: list[float] = field(default_factory=list)
    n_iter: int = 0

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def bic(self, n: int) -> float:
        k = self.n_components
        return -2.0 * self.loglik + (6 * k - 1) * math.log(n)


def _floor_cov(cov: np.ndarray, floor: float) -> np.ndarray:
    vals, vecs = np.linalg.eigh(cov)
    vals = np.maximum(vals, floor)
    out = (vecs * vals) @ vecs.T
    return 0.5 * (out + out.T)


def _floor_covs(c_tt, c_tr, c_rr, floor):
    """Stack of 2x2 covariances with eigenvalues clipped at ``floor``."""
    half_tr = 0.5 * (c_tt + c_rr)
    rad = np.sqrt((0.5 * (c_tt - c_rr)) ** 2 + c_tr**2)
    cov = np.empty((len(c_tt), 2, 2))
    cov[:, 0, 0], cov[:, 0, 1], cov[:, 1, 0], cov[:, 1, 1] = c_tt, c_tr, c_tr, c_rr
    for j in np.flatnonzero(half_tr - rad < floor):
        cov[j] = _floor_cov(cov[j], floor)
    return cov


def _init_from_labels(theta, rho, labels, k, floor):
    weights, means, covs = [], [], []
    for j in range(k):
        sel = labels == j
        if not np.any(sel):
            return None
        th, rh = theta[sel], rho[sel]
        try:
            mth = circular_weighted_mean(th, np.ones(len(th)))
        except ValueError:
            mth = float(th[0])
        mrh = float(rh.mean())
        d = np.stack([wrap_angle(th - mth), rh - mrh])
        cov = d @ d.T / len(th)
        weights.append(len(th) / len(theta))
        means.append((mth, mrh))
        covs.append(_floor_cov(cov, floor))
    return np.array(weights), np.array(means), np.array(covs)


def em_swgmm(
    theta: np.ndarray,
    rho: np.ndarray,
    n_components: int,
    config: EMConfig = EMConfig(),
    rng: np.random.Generator | None = None,
) -> EMResult | None:
    """Expectation-maximisation for a semi-wrapped mixture with a fixed size.

    The latent variables are the component index and the wrap index; the
    M-step works on the unwrapped heading copies, so the training
    log-likelihood is non-decreasing as long as the covariance floor is
    inactive. Means are wrapped back to [-pi, pi) once, after convergence.

    Returns ``None`` when k-means++ seeding leaves a component empty.
    """
    rng = np.random.default_rng(config.seed) if rng is None else rng
    theta = np.asarray(theta, dtype=float)
    rho = np.asarray(rho, dtype=float)
    n = len(theta)
    rho_scale = float(rho.std()) or 1.0
    emb = np.column_stack([np.cos(theta), np.sin(theta), rho / rho_scale])
    if n_components == 1:
        labels = np.zeros(n, dtype=int)
    else:
        try:
            _, labels = kmeans2(emb, n_components, minit="++", seed=rng, missing="raise")
        except ClusterError:
            return None
    init = _init_from_labels(theta, rho, labels, n_components, config.cov_floor)
    if init is None:
        return None
    w, mu, cov = init

    trace: list[float] = []
    prev = -np.inf
    it = 0
    th_unw = theta[None, :] + WRAPS[:, None]  # (3, n)
    for it in range(1, config.max_iter + 1):
        a, b, c = cov[:, 0, 0], cov[:, 0, 1], cov[:, 1, 1]
        det = a * c - b * b
        dth = th_unw[None, :, :] - mu[:, 0, None, None]  # (K, 3, n)
        drh = (rho[None, :] - mu[:, 1, None])[:, None, :]  # (K, 1, n)
        maha = (c[:, None, None] * dth * dth - 2 * b[:, None, None] * dth * drh + a[:, None, None] * drh * drh) / det[
            :, None, None
        ]
        logp = (np.log(w) - math.log(TWO_PI) - 0.5 * np.log(det))[:, None, None] - 0.5 * maha
        top = logp.max(axis=(0, 1))
        e = np.exp(logp - top)
        tot = e.sum(axis=(0, 1))
        ll = float(math.fsum(top + np.log(tot)))
        trace.append(ll)
        # tolerance is on the mean per-observation log-likelihood
        if abs(ll - prev) < config.tol * n:
            break
        prev = ll
        r = e / tot
        nk = np.maximum(r.sum(axis=(1, 2)), 1e-300)
        w = nk / n
        m_th = (r * th_unw).sum(axis=(1, 2)) / nk
        m_rh = (r.sum(axis=1) @ rho) / nk
        dth = th_unw[None, :, :] - m_th[:, None, None]
        drh = (rho[None, :] - m_rh[:, None])[:, None, :]
        rd = r * dth
        c_tt = (rd * dth).sum(axis=(1, 2)) / nk
        c_tr = (rd * drh).sum(axis=(1, 2)) / nk
        c_rr = (r * (drh * drh)).sum(axis=(1, 2)) / nk
        mu = np.column_stack([m_th, m_rh])
        cov = _floor_covs(c_tt, c_tr, c_rr, config.cov_floor)
    mu = mu.copy()
    mu[:, 0] = wrap_angle(mu[:, 0])
    return EMResult(w, mu, cov, trace[-1], trace, it)


def fit_swgmm(
    observations: Sequence[Velocity] | np.ndarray,
    config: EMConfig = EMConfig(),
    rng: np.random.Generator | None = None,
    motion_intensity: float = 1.0,
) -> SWGMM:
    """Fit a semi-wrapped mixture, choosing the component count by BIC.

    ``observations`` is a sequence of ``Velocity`` or an ``(n, 2)`` array of
    ``(heading, speed)`` rows.
    """
    if isinstance(observations, np.ndarray):
        data = np.asarray(observations, dtype=float).reshape(-1, 2)
    else:
        data = np.array([(v.heading, v.speed) for v in observations], dtype=float).reshape(-1, 2)
    n = len(data)
    if n < config.min_observations:
        raise InsufficientDataError(f"{n} observations, need at least {config.min_observations}")
    theta = wrap_angle(data[:, 0])
    rho = data[:, 1]
    rng = np.random.default_rng(config.seed) if rng is None else rng
    n_distinct = len(np.unique(data, axis=0))

    best: EMResult | None = None
    best_bic = np.inf
    misses = 0
    for k in range(1, min(config.max_components, n_distinct, n) + 1):
        res = em_swgmm(theta, rho, k, config, rng)
        if res is None:
            continue
        bic = res.bic(n)
        if bic < best_bic:
            best, best_bic = res, bic
            misses = 0
        else:
            misses += 1
            # two larger sizes in a row did not help
            if misses == 2:
                break
    assert best is not None  # k = 1 always succeeds

    order = np.argsort(-best.weights, kind="stable")
    w = best.weights[order]
    w = w / math.fsum(w)
    comps = tuple(
        SWGMMComponent(float(w[i]), (float(best.means[j, 0]), float(best.means[j, 1])), best.covs[j])
        for i, j in enumerate(order)
    )
    return SWGMM(comps, motion_intensity=motion_intensity, observation_count=n)


# -- maps ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CLiFFMap:
    """Grid of SWGMMs keyed by integer cell index ``(i, j)``.

    Cell ``(i, j)`` is centred at ``(i * resolution, j * resolution)``.
    """

    resolution: float
    locations: dict[tuple[int, int], SWGMM]
    bounds: tuple[float, float, float, float] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        object.__setattr__(self, "locations", dict(sorted(self.locations.items())))

    def __len__(self) -> int:
        return len(self.locations)

    def __eq__(self, other):
        if not isinstance(other, CLiFFMap):
            return NotImplemented
        return (
            self.resolution == other.resolution
            and self.bounds == other.bounds
            and self.locations == other.locations
        )

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return grid_cell(x, y, self.resolution)

    def center(self, cell: tuple[int, int]) -> tuple[float, float]:
        return (cell[0] * self.resolution, cell[1] * self.resolution)

    def near(self, x: float, y: float, radius: float) -> list[tuple[float, tuple[int, int]]]:
        """Stored cells whose centre lies within ``radius`` of ``(x, y)``, as ``(distance, cell)``."""
        return cells_near(x, y, radius, self.resolution, self.locations)

    def in_bounds(self, x: float, y: float) -> bool:
        if self.bounds is None:
            return False
        x0, y0, x1, y1 = self.bounds
        return x0 <= x <= x1 and y0 <= y <= y1


@dataclass(frozen=True, eq=False)
class TCCLiFFMap:
    """One CLiFF map per time-of-day interval.

    ``utc_offset`` (seconds) shifts epoch timestamps to local time of day.
    """

    interval_length: float = 3600.0
    interval_maps: dict[int, CLiFFMap] = field(default_factory=dict)
    resolution: float = 1.0
    utc_offset: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.interval_length <= 0:
            raise ValueError("interval_length must be positive")
        n = self.n_intervals
        for idx in self.interval_maps:
            if not 0 <= idx < n:
                raise ValueError(f"interval index {idx} outside [0, {n})")
        object.__setattr__(self, "interval_maps", dict(sorted(self.interval_maps.items())))

    @property
    def n_intervals(self) -> int:
        return math.ceil(SECONDS_PER_DAY / self.interval_length)

    def interval_of(self, t: float) -> int:
        return interval_index(t, self.interval_length, self.utc_offset)

    def map_at(self, t: float) -> CLiFFMap:
        try:
            return self.interval_maps[self.interval_of(t)]
        except KeyError:
            raise NoDynamicsData(f"no map for time-of-day interval {self.interval_of(t)}") from None

    def __eq__(self, other):
        if not isinstance(other, TCCLiFFMap):
            return NotImplemented
        return (
            self.interval_length == other.interval_length
            and self.utc_offset == other.utc_offset
            and self.interval_maps == other.interval_maps
        )


def interval_index(t, interval_length: float, utc_offset: float = 0.0):
    tod = np.mod(np.asarray(t, dtype=float) + utc_offset, SECONDS_PER_DAY)
    idx = np.floor(tod / interval_length).astype(int)
    return int(idx) if np.ndim(idx) == 0 else idx


def _stack(trajectories: Iterable[Trajectory]) -> np.ndarray:
    cols = [np.column_stack([tr.t, tr.x, tr.y, tr.heading, tr.speed]) for tr in trajectories if len(tr)]
    if not cols:
        return np.empty((0, 5))
    return np.concatenate(cols)


def _fit_cell(args):
    cell, data, occupied, config = args
    rng = np.random.default_rng([config.seed, cell[0] % 2**32, cell[1] % 2**32])
    try:
        return cell, fit_swgmm(data, config, rng, motion_intensity=occupied)
    except InsufficientDataError:
        return cell, None


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get("DYNMAPS_WORKERS", "1")))
    except ValueError:
        return 1


def _build_from_samples(samples: np.ndarray, resolution: float, config: EMConfig, time_bin: float, workers: int | None):
    if len(samples) == 0:
        return CLiFFMap(resolution, {}, None, config.seed)
    t, x, y = samples[:, 0], samples[:, 1], samples[:, 2]
    ci = np.floor(x / resolution + 0.5).astype(np.int64)
    cj = np.floor(y / resolution + 0.5).astype(np.int64)
    bounds = (
        float((ci.min() - 0.5) * resolution),
        float((cj.min() - 0.5) * resolution),
        float((ci.max() + 0.5) * resolution),
        float((cj.max() + 0.5) * resolution),
    )
    t0 = t.min()
    tbin = np.floor((t - t0) / time_bin).astype(np.int64)
    total_bins = int(tbin.max()) + 1

    order = np.lexsort((cj, ci))
    keys = np.column_stack([ci, cj])[order]
    splits = np.flatnonzero(np.any(np.diff(keys, axis=0) != 0, axis=1)) + 1
    jobs = []
    for grp in np.split(order, splits):
        if len(grp) < config.min_observations:
            continue
        cell = (int(ci[grp[0]]), int(cj[grp[0]]))
        occupied = len(np.unique(tbin[grp])) / total_bins
        jobs.append((cell, samples[grp][:, 3:5], occupied, config))

    workers = _default_workers() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_fit_cell, jobs, chunksize=8))
    else:
        results = [_fit_cell(j) for j in jobs]
    locations = {cell: m for cell, m in results if m is not None}
    return CLiFFMap(resolution, locations, bounds, config.seed)


def build_cliff_map(
    trajectories: Iterable[Trajectory],
    resolution: float = 1.0,
    config: EMConfig = EMConfig(),
    time_bin: float = 1.0,
    workers: int | None = None,
) -> CLiFFMap:
    """Fit an SWGMM in every grid cell holding enough velocity observations.

    Motion intensity of a cell is the fraction of ``time_bin``-wide bins,
    over the whole span of the training data, in which at least one
    observation fell into the cell. Per-cell RNG streams are derived from
    ``config.seed`` and the cell index, so the result does not depend on
    ``workers``.
    """
    return _build_from_samples(_stack(trajectories), resolution, config, time_bin, workers)


def build_tc_cliff_map(
    trajectories: Iterable[Trajectory],
    resolution: float = 1.0,
    interval_length: float = 3600.0,
    config: EMConfig = EMConfig(),
    utc_offset: float = 0.0,
    time_bin: float = 1.0,
    workers: int | None = None,
) -> TCCLiFFMap:
    """Build one CLiFF map per time-of-day interval.

    Every sample goes to the interval of its own timestamp, so a track that
    crosses a boundary is split between maps.
    """
    samples = _stack(trajectories)
    maps: dict[int, CLiFFMap] = {}
    if len(samples):
        idx = interval_index(samples[:, 0], interval_length, utc_offset)
        for k in np.unique(idx):
            m = _build_from_samples(samples[idx == k], resolution, config, time_bin, workers)
            if len(m):
                maps[int(k)] = m
    return TCCLiFFMap(interval_length, maps, resolution, utc_offset, config.seed)


def sample_velocity_from_cliff(
    x: float, y: float, cmap: CLiFFMap, r_s: float, rng: np.random.Generator
) -> VelocitySample:
    """Draw a velocity from the most active SWGMM within ``r_s`` of ``(x, y)``.

    Candidates are ranked by motion intensity, then distance, then cell
    index. Negative speed draws are clamped to 0.

    Raises
    ------
    NoDynamicsData
        If no stored location lies within ``r_s``.
    """
    near = cmap.near(x, y, r_s)
    if not near:
        raise NoDynamicsData(f"no SWGMM within {r_s} m of ({x:.3f}, {y:.3f})")
    _, cell = min(near, key=lambda dc: (-cmap.locations[dc[1]].motion_intensity, dc[0], dc[1]))
    model = cmap.locations[cell]
    theta, rho = model.sample(rng)
    v = Velocity(max(rho, 0.0), theta)
    fitness = max(float(model.pdf(v.heading, v.speed)[0]), _TINY)
    return VelocitySample(v, fitness)


# -- file format -----------------------------------------------------------

_COLUMNS = (
    "x_m",
    "y_m",
    "motion_intensity",
    "component_weight",
    "mean_theta_rad",
    "mean_rho_mps",
    "cov_tt_rad2",
    "cov_tr_rad_mps",
    "cov_rr_mps2",
    "observation_count",
)


def save_cliff_map(cmap: CLiFFMap, path: str | os.PathLike) -> None:
    """Write one row per (location, component); floats use shortest round-trip repr."""
    path = Path(path)
    lines = [
        "# dynmaps cliff-map v1",
        f"# resolution_m: {cmap.resolution!r}",
        f"# bounds_m: {json.dumps(list(cmap.bounds) if cmap.bounds else None)}",
        f"# em_seed: {cmap.seed}",
        ",".join(_COLUMNS),
    ]
    for cell, m in cmap.locations.items():
        cx, cy = cmap.center(cell)
        for c in m.components:
            row = (cx, cy, m.motion_intensity, c.weight, c.mean[0], c.mean[1], c.cov[0, 0], c.cov[0, 1], c.cov[1, 1])
            lines.append(",".join(repr(float(v)) for v in row) + f",{m.observation_count}")
    path.write_text("\n".join(lines) + "\n")


def load_cliff_map(path: str | os.PathLike) -> CLiFFMap:
    meta: dict[str, str] = {}
    rows: dict[tuple[int, int], list] = {}
    header_seen = False
    resolution = None
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            if ":" in line:
                k, v = line[1:].split(":", 1)
                meta[k.strip()] = v.strip()
            continue
        if not header_seen:
            if tuple(s.strip() for s in line.split(",")) != _COLUMNS:
                raise ValueError(f"{path}: unexpected header {line!r}")
            header_seen = True
            resolution = float(meta["resolution_m"])
            continue
        f = line.split(",")
        x, y = float(f[0]), float(f[1])
        cell = (round(x / resolution), round(y / resolution))
        rows.setdefault(cell, []).append(f)
    if resolution is None:
        resolution = float(meta["resolution_m"])
    bounds = json.loads(meta.get("bounds_m", "null"))
    locations = {}
    for cell, fs in rows.items():
        comps = tuple(
            SWGMMComponent(
                float(f[3]),
                (float(f[4]), float(f[5])),
                np.array([[float(f[6]), float(f[7])], [float(f[7]), float(f[8])]]),
            )
            for f in fs
        )
        locations[cell] = SWGMM(comps, float(fs[0][2]), int(fs[0][9]))
    return CLiFFMap(resolution, locations, tuple(bounds) if bounds else None, int(meta.get("em_seed", 0)))


def save_tc_cliff_map(tc: TCCLiFFMap, directory: str | os.PathLike, extra: dict | None = None) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = {}
    for idx, m in tc.interval_maps.items():
        name = f"interval_{idx:03d}.csv"
        save_cliff_map(m, d / name)
        files[str(idx)] = name
    bounds = [m.bounds for m in tc.interval_maps.values() if m.bounds]
    union = (
        [min(b[0] for b in bounds), min(b[1] for b in bounds), max(b[2] for b in bounds), max(b[3] for b in bounds)]
        if bounds
        else None
    )
    manifest = {
        "kind": "tc_cliff",
        "interval_length": tc.interval_length,
        "resolution": tc.resolution,
        "utc_offset": tc.utc_offset,
        "bounds": union,
        "em_seed": tc.seed,
        "intervals": files,
    }
    if extra:
        manifest.update(extra)
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_tc_cliff_map(directory: str | os.PathLike) -> TCCLiFFMap:
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    maps = {int(k): load_cliff_map(d / v) for k, v in manifest["intervals"].items()}
    return TCCLiFFMap(
        float(manifest["interval_length"]),
        maps,
        float(manifest["resolution"]),
        float(manifest.get("utc_offset", 0.0)),
        int(manifest.get("em_seed", 0)),
    )
