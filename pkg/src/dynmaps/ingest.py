"""Trajectory datasets: parsing, resampling, filtering, splitting, synthesis.

All adapters produce ``Trajectory`` objects in meters and epoch seconds.
The canonical interchange format is the generic CSV::

    timestamp_s,person_id,x_m,y_m
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
import os
import re
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from shapely.geometry import Point, Polygon

from .core import Trajectory

log = logging.getLogger(__name__)

__all__ = [
    "DatasetConfig",
    "ParseError",
    "ParseResult",
    "RegionConfigError",
    "TooShortError",
    "filter_edinburgh",
    "generate_synthetic",
    "load_regions",
    "parse",
    "resample",
    "split_by_day",
    "write_generic",
]

FORMATS = ("atc", "edinburgh", "generic_csv")
SCENARIOS = ("corridor", "bend", "bimodal", "time_varying")
GENERIC_HEADER = ("timestamp_s", "person_id", "x_m", "y_m")
# 2024-01-01 00:00:00 UTC
SYNTH_EPOCH = 1704067200.0


class ParseError(ValueError):
    pass


class RegionConfigError(ValueError):
    pass


class TooShortError(ValueError):
    pass


@dataclass
class DatasetConfig:
    """How to read one dataset.

    ``regions`` maps a label (``marginal``, ``lift``) to polygons given as
    vertex lists in meters. ``frame_rate`` and ``time_origin`` only apply to
    the Edinburgh adapter, whose tracks carry frame numbers.
    """

    format: str = "generic_csv"
    unit_scale: float = 1.0
    target_rate: float = 1.0
    regions: dict[str, list[list[tuple[float, float]]]] = field(default_factory=dict)
    min_points: int = 30
    utc_offset: float = 0.0
    frame_rate: float = 9.0
    time_origin: float = 0.0

    def __post_init__(self):
        if self.format not in FORMATS:
            raise ValueError(f"unknown format {self.format!r}; expected one of {FORMATS}")
        if not self.unit_scale > 0:
            raise ValueError("unit_scale must be > 0")
        if not self.target_rate > 0:
            raise ValueError("target_rate must be > 0")


@dataclass
class ParseResult:
    trajectories: list[Trajectory]
    n_rows: int
    n_skipped: int


def _group(rows: Iterable[tuple[float, str, float, float]]) -> tuple[list[Trajectory], int]:
    by_id: dict[str, list] = defaultdict(list)
    for r in rows:
        by_id[r[1]].append(r)
    trajs, dupes = [], 0
    for pid in sorted(by_id):
        pts = sorted(by_id[pid], key=lambda r: r[0])
        t = np.array([p[0] for p in pts])
        keep = np.concatenate([[True], np.diff(t) > 0])
        dupes += int((~keep).sum())
        pts = [p for p, k in zip(pts, keep) if k]
        trajs.append(Trajectory(pid, [p[0] for p in pts], [p[2] for p in pts], [p[3] for p in pts]))
    return trajs, dupes


def _rows_delimited(lines: Iterable[str], cols: tuple[int, int, int, int], scale: float):
    good, bad = [], 0
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        f = [s.strip() for s in re.split(r"[,;\s]+", line)]
        try:
            t, x, y = float(f[cols[0]]), float(f[cols[2]]), float(f[cols[3]])
            pid = f[cols[1]]
        except (ValueError, IndexError):
            bad += 1
            continue
        if not all(math.isfinite(v) for v in (t, x, y)) or not pid:
            bad += 1
            continue
        good.append((t, pid, x * scale, y * scale))
    return good, bad


_TRACK = re.compile(r"TRACK\.(R\d+)\s*=\s*\[(.*)\]\s*;?")


def _rows_edinburgh(lines: Iterable[str], cfg: DatasetConfig):
    good, bad = [], 0
    for line in lines:
        m = _TRACK.match(line.strip())
        if not m:
            continue
        pid = m.group(1)
        for chunk in m.group(2).split(";"):
            nums = chunk.strip().strip("[]").split()
            try:
                x, y, frame = float(nums[0]), float(nums[1]), float(nums[2])
            except (ValueError, IndexError):
                bad += 1
                continue
            good.append((cfg.time_origin + frame / cfg.frame_rate, pid, x * cfg.unit_scale, y * cfg.unit_scale))
    return good, bad


def parse(path: str | os.PathLike, config: DatasetConfig = DatasetConfig()) -> ParseResult:
    """Read a dataset file into time-ordered trajectories.

    ATC rows: ``time, person_id, x, y, ...`` (further columns ignored).
    Generic rows: ``timestamp_s, person_id, x_m, y_m`` with an optional
    header. Edinburgh: ``TRACK.R<n>=[[x y frame];...];`` lines.
    Malformed rows are skipped and counted; duplicated timestamps of one
    person keep the first row and count as skipped.
    """
    try:
        text = Path(path).read_text()
    except (OSError, UnicodeDecodeError) as e:
        raise ParseError(f"cannot read {path}: {e}") from e
    lines = text.splitlines()
    if config.format == "edinburgh":
        rows, bad = _rows_edinburgh(lines, config)
    else:
        if config.format == "generic_csv" and lines and lines[0].replace(" ", "").startswith("timestamp_s"):
            lines = lines[1:]
        rows, bad = _rows_delimited(lines, (0, 1, 2, 3), config.unit_scale)
    if not rows:
        raise ParseError(f"{path}: no valid rows ({bad} malformed)")
    trajs, dupes = _group(rows)
    if bad or dupes:
        log.warning("%s: skipped %d malformed and %d duplicate rows", path, bad, dupes)
    return ParseResult(trajs, len(rows) + bad, bad + dupes)


def write_generic(trajectories: Iterable[Trajectory], path: str | os.PathLike) -> None:
    """Write the generic CSV; floats use shortest round-trip repr."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(GENERIC_HEADER)
        for tr in trajectories:
            for t, x, y in zip(tr.t, tr.x, tr.y):
                w.writerow([repr(float(t)), tr.person_id, repr(float(x)), repr(float(y))])


def resample(traj: Trajectory, target_rate: float = 1.0) -> Trajectory:
    """Linear interpolation onto a uniform grid starting at the first sample.

    Raises
    ------
    TooShortError
        Fewer than two samples, or the track spans less than one period.
    """
    period = 1.0 / target_rate
    if len(traj) < 2 or traj.t[-1] - traj.t[0] < period - 1e-9:
        raise TooShortError(f"{traj.person_id}: too short to resample at {target_rate} Hz")
    n = int(math.floor((traj.t[-1] - traj.t[0]) / period + 1e-9)) + 1
    t = traj.t[0] + np.arange(n) * period
    return Trajectory(traj.person_id, t, np.interp(t, traj.t, traj.x), np.interp(t, traj.t, traj.y))


def resample_all(trajs: Iterable[Trajectory], target_rate: float = 1.0) -> list[Trajectory]:
    out = []
    for tr in trajs:
        try:
            out.append(resample(tr, target_rate))
        except TooShortError as e:
            log.info("dropped: %s", e)
    return out


def load_regions(path: str | os.PathLike) -> dict[str, list[list[tuple[float, float]]]]:
    """Read labelled polygons, one per line: ``label: x1 y1, x2 y2, x3 y3, ...``.

    A label may appear on several lines; its region is the union.
    """
    regions: dict[str, list] = defaultdict(list)
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise RegionConfigError(f"{path}:{n}: expected 'label: x y, x y, ...'")
        label, verts = line.split(":", 1)
        try:
            pts = [tuple(float(v) for v in p.split()) for p in verts.split(",") if p.strip()]
        except ValueError as e:
            raise RegionConfigError(f"{path}:{n}: {e}") from e
        if len(pts) < 3 or any(len(p) != 2 for p in pts):
            raise RegionConfigError(f"{path}:{n}: a polygon needs >= 3 'x y' vertices")
        regions[label.strip()].append(pts)
    return dict(regions)


def _inside(polys: list[Polygon], x: float, y: float) -> bool:
    p = Point(x, y)
    return any(poly.covers(p) for poly in polys)


def filter_edinburgh(trajs: Sequence[Trajectory], config: DatasetConfig) -> tuple[list[Trajectory], dict[str, int]]:
    """Drop bad Edinburgh tracks.

    A track is removed if it starts or ends outside the ``marginal``
    region, has fewer than ``min_points`` samples, or both starts and ends
    inside the ``lift`` region. Each removal is counted under the first
    rule that fires.
    """
    if "marginal" not in config.regions or "lift" not in config.regions:
        raise RegionConfigError("edinburgh filtering needs 'marginal' and 'lift' regions")
    marginal = [Polygon(p) for p in config.regions["marginal"]]
    lift = [Polygon(p) for p in config.regions["lift"]]
    counts = {"outside_marginal": 0, "too_short": 0, "lift": 0}
    kept = []
    for tr in trajs:
        if len(tr) == 0:
            counts["too_short"] += 1
            continue
        xs, ys, xe, ye = tr.x[0], tr.y[0], tr.x[-1], tr.y[-1]
        if not (_inside(marginal, xs, ys) and _inside(marginal, xe, ye)):
            counts["outside_marginal"] += 1
        elif len(tr) < config.min_points:
            counts["too_short"] += 1
        elif _inside(lift, xs, ys) and _inside(lift, xe, ye):
            counts["lift"] += 1
        else:
            kept.append(tr)
    return kept, counts


def _as_date(d) -> dt.date:
    if isinstance(d, dt.datetime):
        return d.date()
    if isinstance(d, dt.date):
        return d
    return dt.date.fromisoformat(str(d))


def day_of(t: float, utc_offset: float = 0.0) -> dt.date:
    return dt.datetime.fromtimestamp(t + utc_offset, tz=dt.timezone.utc).date()


def split_by_day(
    trajs: Sequence[Trajectory],
    train_days: Iterable,
    test_days: Iterable | None = None,
    utc_offset: float = 0.0,
) -> tuple[list[Trajectory], list[Trajectory]]:
    """Partition by the calendar day of each track's first sample.

    ``test_days=None`` puts every non-training day into the test set.
    Tracks on days in neither list are left out.
    """
    train_set = {_as_date(d) for d in train_days}
    test_set = None if test_days is None else {_as_date(d) for d in test_days}
    if test_set is not None and train_set & test_set:
        raise ValueError("a day cannot be both train and test")
    present = {day_of(tr.t[0], utc_offset) for tr in trajs if len(tr)}
    for d in sorted(train_set | (test_set or set())):
        if d not in present:
            warnings.warn(f"requested day {d} not present in data", stacklevel=2)
    train, test = [], []
    for tr in trajs:
        if not len(tr):
            continue
        d = day_of(tr.t[0], utc_offset)
        if d in train_set:
            train.append(tr)
        elif test_set is None or d in test_set:
            test.append(tr)
    if not test:
        warnings.warn("test partition is empty", stacklevel=2)
    return train, test


# -- synthetic scenarios ---------------------------------------------------


def _arc(cx, cy, r, a0, a1, step):
    n = max(2, int(abs(a1 - a0) * r / step) + 1)
    a = np.linspace(a0, a1, n)
    return np.column_stack([cx + r * np.cos(a), cy + r * np.sin(a)])


def _line(p0, p1, step):
    n = max(2, int(math.dist(p0, p1) / step) + 1)
    return np.column_stack([np.linspace(p0[0], p1[0], n), np.linspace(p0[1], p1[1], n)])


def _join(*parts):
    out = [parts[0]]
    for p in parts[1:]:
        out.append(p[1:])
    return np.concatenate(out)


def _turn_path(length_in: float, length_out: float, radius: float, turn: float, step: float = 0.02):
    """Centreline heading east to the origin, then turning by ``turn`` radians."""
    if turn == 0:
        return _line((-length_in, 0.0), (length_out, 0.0), step)
    s = 1.0 if turn > 0 else -1.0
    # tangent arc of given radius, centred on the left (turn > 0) or right side
    d = radius * math.tan(abs(turn) / 2)
    start = (-d, 0.0)
    cx, cy = -d, s * radius
    a0 = -s * math.pi / 2
    arc = _arc(cx, cy, radius, a0, a0 + turn, step)
    end_dir = (math.cos(turn), math.sin(turn))
    exit_pt = tuple(arc[-1])
    out_end = (exit_pt[0] + end_dir[0] * length_out, exit_pt[1] + end_dir[1] * length_out)
    return _join(_line((-length_in, 0.0), start, step), arc, _line(exit_pt, out_end, step))


def _rotate(path: np.ndarray, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return path @ np.array([[c, s], [-s, c]])


def _walk(path: np.ndarray, speed: float, offset: np.ndarray | float, dt_s: float, jitter) -> tuple[np.ndarray, np.ndarray]:
    seg = np.diff(path, axis=0)
    seglen = np.hypot(seg[:, 0], seg[:, 1])
    s_cum = np.concatenate([[0.0], np.cumsum(seglen)])
    n = int(s_cum[-1] / (speed * dt_s)) + 1
    s = np.arange(n) * speed * dt_s
    px = np.interp(s, s_cum, path[:, 0])
    py = np.interp(s, s_cum, path[:, 1])
    idx = np.clip(np.searchsorted(s_cum, s, side="right") - 1, 0, len(seg) - 1)
    tx, ty = seg[idx, 0] / seglen[idx], seg[idx, 1] / seglen[idx]
    lat = offset + jitter(n)
    return px - ty * lat, py + tx * lat


_DEFAULTS = {
    "n": 100,
    "speed_mean": 1.2,
    "speed_std": 0.1,
    "lateral_std": 0.5,
    "noise": 0.05,
    "noise_corr": 0.9,
    "dt": 1.0,
    "start_epoch": SYNTH_EPOCH,
    "days": 1,
    "hour_start": 6.0,
    "hour_end": 18.0,
    "length_in": 15.0,
    "length_out": 30.0,
    "radius": 4.0,
    "length": 40.0,
    "split": 0.8,
    "branch_angle": math.pi / 3,
    "period": 43200.0,
    "phase_offset": 21600.0,
}


def generate_synthetic(scenario: str, params: dict | None = None, seed: int = 0) -> list[Trajectory]:
    """Deterministic synthetic pedestrian tracks.

    Scenarios
    ---------
    corridor
        Straight eastbound corridor from ``x = 0`` to ``length``.
    bend
        Eastbound for ``length_in`` m, a 90 degree left turn, then north for
        ``length_out`` m.
    bimodal
        Eastbound trunk that forks: a ``split`` share turns left by
        ``branch_angle``, the rest turns right by the same angle.
    time_varying
        Northbound trunk that turns east or west depending on time of day:
        east while ``(tod - phase_offset) mod period < period / 2``, west
        otherwise. Defaults give east 06-12 and 18-24, west 00-06 and 12-18.

    All tracks are sampled every ``dt`` seconds at a per-track constant speed,
    with a per-track lateral lane offset plus AR(1) lateral jitter whose
    stationary std is ``noise``. Start times are uniform in
    ``[hour_start, hour_end)`` of one of ``days`` consecutive days from
    ``start_epoch``.
    """
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")
    p = dict(_DEFAULTS)
    unknown = set(params or {}) - set(p)
    if unknown:
        raise ValueError(f"unknown synthetic parameters: {sorted(unknown)}")
    p.update(params or {})
    rng = np.random.default_rng(seed)
    rho = float(p["noise_corr"])
    innov = float(p["noise"]) * math.sqrt(1.0 - rho * rho)

    def jitter(n):
        e = np.empty(n)
        e[0] = rng.normal(0.0, p["noise"])
        z = rng.normal(0.0, innov, n)
        for i in range(1, n):
            e[i] = rho * e[i - 1] + z[i]
        return e

    L_in, L_out, R = p["length_in"], p["length_out"], p["radius"]
    straight = _line((0.0, 0.0), (p["length"], 0.0), 0.02)
    bend = _turn_path(L_in, L_out, R, math.pi / 2)
    left = _turn_path(L_in, L_out, R, p["branch_angle"])
    right = _turn_path(L_in, L_out, R, -p["branch_angle"])
    # northbound trunk: rotate the east-heading turn paths by +90 degrees
    north_east = _rotate(_turn_path(L_in, L_out, R, -math.pi / 2), math.pi / 2)
    north_west = _rotate(_turn_path(L_in, L_out, R, math.pi / 2), math.pi / 2)

    out = []
    for i in range(int(p["n"])):
        day = int(rng.integers(0, int(p["days"])))
        tod = rng.uniform(p["hour_start"] * 3600.0, p["hour_end"] * 3600.0)
        t0 = p["start_epoch"] + day * 86400.0 + round(tod, 3)
        speed = max(0.3, rng.normal(p["speed_mean"], p["speed_std"]))
        offset = rng.normal(0.0, p["lateral_std"])
        if scenario == "corridor":
            path = straight
        elif scenario == "bend":
            path = bend
        elif scenario == "bimodal":
            path = left if rng.random() < p["split"] else right
        else:
            east = ((tod - p["phase_offset"]) % p["period"]) < p["period"] / 2
            path = north_east if east else north_west
        x, y = _walk(path, speed, offset, p["dt"], jitter)
        t = t0 + np.arange(len(x)) * p["dt"]
        out.append(Trajectory(f"{scenario}-{i:04d}", t, x, y))
    return out
