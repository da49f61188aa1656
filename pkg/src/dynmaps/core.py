"""Shared state types and circular helpers.

Angles are radians on the half-open interval [-pi, pi); a value sitting
exactly on the seam is mapped to -pi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

__all__ = [
    "DegenerateMeanError",
    "NoDynamicsData",
    "State",
    "Trajectory",
    "Velocity",
    "angle_diff",
    "cells_near",
    "grid_cell",
    "circular_weighted_mean",
    "estimate_observed_velocity",
    "gaussian_recency_weights",
    "kinematics_from_positions",
    "propagate",
    "wrap_angle",
]


class DegenerateMeanError(ValueError):
    """Raised when a circular mean has no defined direction."""


class NoDynamicsData(LookupError):
    """A map has no motion model near the queried position (or time)."""


def _check_finite(*values):
    for v in values:
        if not np.all(np.isfinite(v)):
            raise ValueError(f"non-finite angle/value: {v!r}")


def wrap_angle(a):
    """Wrap angle(s) to [-pi, pi).

    Works on scalars and numpy arrays. Raises ``ValueError`` on non-finite
    input.
    """
    _check_finite(a)
    if np.ndim(a) == 0:
        r = math.fmod(float(a) + math.pi, TWO_PI)
        if r < 0.0:
            r += TWO_PI
        r -= math.pi
        # rounding can land exactly on +pi
        if r >= math.pi:
            r -= TWO_PI
        return r
    a = np.asarray(a, dtype=float)
    r = np.mod(a + math.pi, TWO_PI) - math.pi
    r[r >= math.pi] -= TWO_PI
    return r


def angle_diff(a, b):
    """Shortest signed arc from ``b`` to ``a``, in [-pi, pi)."""
    _check_finite(a, b)
    return wrap_angle(np.subtract(a, b) if np.ndim(a) or np.ndim(b) else float(a) - float(b))


def circular_weighted_mean(angles: Sequence[float], weights: Sequence[float]) -> float:
    """Weighted circular mean via the resultant vector.

    Raises
    ------
    DegenerateMeanError
        If all weights are zero or the resultant vanishes.
    """
    angles = np.asarray(angles, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if angles.shape != weights.shape:
        raise ValueError("angles and weights must have the same length")
    if angles.size == 0 or not np.any(weights > 0):
        raise DegenerateMeanError("no positive weight")
    if np.any(weights < 0):
        raise ValueError("weights must be non-negative")
    s = math.fsum(weights * np.sin(angles))
    c = math.fsum(weights * np.cos(angles))
    if math.hypot(s, c) < 1e-12:
        raise DegenerateMeanError("resultant vector has zero length")
    return wrap_angle(math.atan2(s, c))


@dataclass(frozen=True, slots=True)
class Velocity:
    speed: float
    heading: float

    def __post_init__(self):
        if not self.speed >= 0.0:
            raise ValueError(f"speed must be >= 0, got {self.speed}")
        object.__setattr__(self, "heading", wrap_angle(self.heading))


@dataclass(frozen=True, slots=True)
class State:
    """Pedestrian state ``(x, y, speed, heading)`` in meters, m/s and radians."""

    x: float
    y: float
    speed: float
    heading: float

    def __post_init__(self):
        _check_finite(self.x, self.y)
        if not self.speed >= 0.0:
            raise ValueError(f"speed must be >= 0, got {self.speed}")
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    @property
    def velocity(self) -> Velocity:
        return Velocity(self.speed, self.heading)


def kinematics_from_positions(t, x, y, moving_eps: float = 1e-9):
    """Speed and heading per sample from consecutive position differences.

    Sample ``i > 0`` gets the velocity of the segment ``i-1 -> i``; the first
    sample copies the first segment. Stationary segments keep the previous
    heading (0 if nothing moved yet).
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(t)
    speed = np.zeros(n)
    heading = np.zeros(n)
    if n < 2:
        return speed, heading
    dx, dy, dt = np.diff(x), np.diff(y), np.diff(t)
    seg_speed = np.hypot(dx, dy) / dt
    last = 0.0
    for i in range(n - 1):
        if seg_speed[i] > moving_eps:
            last = wrap_angle(math.atan2(dy[i], dx[i]))
        speed[i + 1] = seg_speed[i]
        heading[i + 1] = last
    speed[0] = speed[1]
    heading[0] = heading[1]
    return speed, heading


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A time-ordered track of one person.

    Samples are stored column-wise; ``states()`` materialises ``State``
    objects when needed.
    """

    person_id: str
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    speed: np.ndarray = field(default=None)
    heading: np.ndarray = field(default=None)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if not (len(t) == len(x) == len(y)):
            raise ValueError("t, x, y must have equal length")
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise ValueError(f"timestamps of {self.person_id!r} are not strictly increasing")
        if self.speed is None or self.heading is None:
            speed, heading = kinematics_from_positions(t, x, y)
        else:
            speed = np.asarray(self.speed, dtype=float)
            heading = wrap_angle(np.asarray(self.heading, dtype=float))
        for name, arr in (("t", t), ("x", x), ("y", y), ("speed", speed), ("heading", heading)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.t)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        return self.person_id == other.person_id and all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("t", "x", "y", "speed", "heading")
        )

    def state(self, i: int) -> State:
        return State(float(self.x[i]), float(self.y[i]), float(self.speed[i]), float(self.heading[i]))

    def states(self) -> list[State]:
        return [self.state(i) for i in range(len(self))]

    def slice(self, start: int, stop: int | None = None) -> "Trajectory":
        s = slice(start, stop)
        return Trajectory(self.person_id, self.t[s], self.x[s], self.y[s], self.speed[s], self.heading[s])


def gaussian_recency_weights(n: int, sigma: float = 1.5) -> np.ndarray:
    """Kernel ``g(t)`` for ``t = 1..n`` (index 0 is the most recent step)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    t = np.arange(1, n + 1, dtype=float)
    return np.exp(-0.5 * (t / sigma) ** 2) / (sigma * math.sqrt(2.0 * math.pi))


def estimate_observed_velocity(
    history: Iterable, sigma: float = 1.5, normalize: bool = True
) -> Velocity:
    """Recency-weighted velocity of an observed track.

    Parameters
    ----------
    history : sequence of State (or anything with ``speed``/``heading``)
        Ordered oldest to newest.
    sigma : float
        Width of the Gaussian recency kernel, in steps.
    normalize : bool
        Divide the weighted speed sum by the kernel mass. Turning this off
        reproduces the raw kernel sum. The heading is a circular mean and
        does not depend on the kernel scale.
    """
    history = list(history)
    if not history:
        raise ValueError("empty observation history")
    newest_first = history[::-1]
    g = gaussian_recency_weights(len(newest_first), sigma)
    speeds = np.array([s.speed for s in newest_first], dtype=float)
    headings = np.array([s.heading for s in newest_first], dtype=float)
    speed = math.fsum(speeds * g)
    if normalize:
        speed /= math.fsum(g)
    try:
        heading = circular_weighted_mean(headings, g)
    except DegenerateMeanError:
        heading = float(headings[0])
    return Velocity(max(speed, 0.0), heading)


def propagate(s: State, dt: float) -> tuple[float, float]:
    """Position after moving with the state's velocity for ``dt`` seconds."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    return (s.x + s.speed * math.cos(s.heading) * dt, s.y + s.speed * math.sin(s.heading) * dt)


def grid_cell(x: float, y: float, resolution: float) -> tuple[int, int]:
    """Index of the grid cell whose centre ``(i*res, j*res)`` is nearest."""
    return (math.floor(x / resolution + 0.5), math.floor(y / resolution + 0.5))


def cells_near(x: float, y: float, radius: float, resolution: float, present) -> list[tuple[float, tuple[int, int]]]:
    """Cells in ``present`` whose centre lies within ``radius`` of ``(x, y)``.

    Returns ``(distance, cell)`` pairs. The boundary is inclusive.
    """
    out = []
    for i in range(math.ceil((x - radius) / resolution), math.floor((x + radius) / resolution) + 1):
        for j in range(math.ceil((y - radius) / resolution), math.floor((y + radius) / resolution) + 1):
            if (i, j) in present:
                d = math.hypot(i * resolution - x, j * resolution - y)
                if d <= radius + 1e-12:
                    out.append((d, (i, j)))
    return out
