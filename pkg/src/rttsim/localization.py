"""Positions from per-anchor ranges, and measurement budgets."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .estimation import required_samples
from .rf_channel import LinkBudget, friis_distance

DEFAULT_RSSI_SIGMA_M = 1.5


class DegenerateGeometry(ValueError):
    pass


class NonConvergence(RuntimeError):
    pass


@dataclass(frozen=True)
class Anchor:
    id: int
    position: tuple

    def __post_init__(self):
        if len(self.position) not in (2, 3):
            raise ValueError("anchor position must be 2-D or 3-D")
        object.__setattr__(self, "position", tuple(float(c) for c in self.position))


@dataclass(frozen=True)
class RangeObservation:
    anchor_id: int
    distance: float
    sigma: float
    n_samples: int = 1

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.distance < 0:
            raise ValueError("distance must be >= 0")


def _anchor_map(anchors) -> dict:
    if isinstance(anchors, Mapping):
        return dict(anchors)
    return {a.id: a for a in anchors}


def check_geometry(positions: np.ndarray) -> None:
    """Raise unless the anchors span the space (not collinear in 2-D, not coplanar in 3-D)."""
    dim = positions.shape[1]
    if positions.shape[0] < dim + 1:
        raise DegenerateGeometry(f"{dim}-D needs at least {dim + 1} anchors")
    centered = positions - positions.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    if s[0] == 0 or s[dim - 1] / s[0] < 1e-9:
        raise DegenerateGeometry("anchors are collinear" if dim == 2 else "anchors are coplanar")


def trilaterate(observations: Iterable[RangeObservation], anchors, initial=None,
                max_iter: int = 100, tol: float = 1e-6):
    """Weighted least-squares position from ranges.

    Minimises sum((|x - a_i| - d_i)^2 / sigma_i^2) with damped Gauss-Newton
    steps from the anchor centroid. Several observations of one anchor (e.g.
    a ToF and an RSSI range) simply add rows. Returns ``(position, covariance)``.
    """
    amap = _anchor_map(anchors)
    obs = list(observations)
    try:
        A = np.array([amap[o.anchor_id].position for o in obs], dtype=float)
    except KeyError as exc:
        raise ValueError(f"observation for unknown anchor {exc.args[0]}") from None
    d = np.array([o.distance for o in obs])
    w = np.array([1.0 / o.sigma ** 2 for o in obs])
    used = np.unique(A, axis=0)
    check_geometry(used)

    x = used.mean(axis=0) if initial is None else np.asarray(initial, dtype=float)

    def residuals(p):
        diff = p - A
        dist = np.linalg.norm(diff, axis=1)
        return diff, dist, dist - d

    diff, dist, r = residuals(x)
    cost = float(w @ r ** 2)
    lam = 1e-3
    for _ in range(max_iter):
        safe = np.where(dist > 1e-12, dist, 1e-12)
        J = diff / safe[:, None]
        H = J.T @ (w[:, None] * J)
        g = J.T @ (w * r)
        step = np.linalg.solve(H + lam * np.diag(np.diag(H)), -g)
        trial = x + step
        t_diff, t_dist, t_r = residuals(trial)
        t_cost = float(w @ t_r ** 2)
        if t_cost <= cost:
            x, diff, dist, r, cost = trial, t_diff, t_dist, t_r, t_cost
            lam = max(lam / 10.0, 1e-15)
            if np.linalg.norm(step) < tol:
                break
        else:
            lam *= 10.0
            if lam > 1e12:
                break
    else:
        raise NonConvergence(f"no convergence in {max_iter} iterations")

    safe = np.where(dist > 1e-12, dist, 1e-12)
    J = diff / safe[:, None]
    cov = np.linalg.inv(J.T @ (w[:, None] * J))
    return x, cov


def gdop(anchor_positions, point) -> float:
    """Geometric dilution of precision for unit range errors at ``point``."""
    A = np.asarray(anchor_positions, dtype=float)
    diff = np.asarray(point, dtype=float) - A
    H = diff / np.linalg.norm(diff, axis=1)[:, None]
    return math.sqrt(float(np.trace(np.linalg.inv(H.T @ H))))


class Budget(NamedTuple):
    n_per_anchor: int
    total_ms: float


def plan_budget(sigma_1: float, sigma_target: float, single_duration_ms: float,
                n_anchors: int) -> Budget:
    """Samples per anchor for the target spread, and the total time when anchors run one after another."""
    if single_duration_ms <= 0 or n_anchors < 1:
        raise ValueError("duration and anchor count must be positive")
    n = required_samples(sigma_1, sigma_target)
    return Budget(n, n_anchors * n * single_duration_ms)


def rssi_range(rx_power: float, budget: LinkBudget, anchor_id: int = 0,
               sigma: float = DEFAULT_RSSI_SIGMA_M) -> RangeObservation:
    return RangeObservation(anchor_id, friis_distance(rx_power, budget), sigma)
