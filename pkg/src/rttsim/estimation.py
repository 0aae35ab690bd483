"""Statistical pipeline from raw captures to distances.

Spike cleaning, batch statistics with the small-sample sigma correction,
sample-size planning, offset calibration against a reference distance, the
exponential attenuation-offset fit, and the cycles <-> meters conversion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .node_sim import ATTENUATION_WINDOW_DB, ClockModel
from .rf_channel import Medium


class EmptyAfterCleaning(ValueError):
    pass


class FitDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class CleaningPolicy:
    rtt_min: int = 0
    rtt_max: int = 42000
    rssi_warmup_discard: int = 60
    rssi_band: float = 3.0  # dB, roughly 4 sigma of the RSSI jitter
    round_size: int = 1000

    def __post_init__(self):
        if self.rtt_min >= self.rtt_max:
            raise ValueError("rtt_min must be below rtt_max")
        if not 0 <= self.rssi_warmup_discard < self.round_size:
            raise ValueError("warm-up discard must be shorter than a round")
        if self.rssi_band <= 0:
            raise ValueError("rssi_band must be positive")


class Cleaned(NamedTuple):
    values: np.ndarray
    rejected: int


def clean_rtt(records, policy: CleaningPolicy = CleaningPolicy()) -> Cleaned:
    """Keep corrected RTTs in ``(rtt_min, rtt_max]``; negatives and spikes go."""
    x = np.asarray(records)
    keep = (x > policy.rtt_min) & (x <= policy.rtt_max)
    if not keep.any():
        raise EmptyAfterCleaning(f"all {x.size} RTT records rejected")
    return Cleaned(x[keep], int(x.size - keep.sum()))


def clean_rssi(rounds: Sequence[Sequence[float]], policy: CleaningPolicy = CleaningPolicy()) -> Cleaned:
    """Per round: drop the warm-up readings, then anything beyond +-band of the round mean.

    The mean is taken once over the post-warm-up readings (single pass).
    """
    kept = []
    rejected = 0
    for rnd in rounds:
        r = np.asarray(rnd, dtype=float)
        if r.size <= policy.rssi_warmup_discard:
            raise ValueError(f"round of {r.size} readings is shorter than the warm-up")
        body = r[policy.rssi_warmup_discard:]
        ok = np.abs(body - body.mean()) <= policy.rssi_band
        kept.append(body[ok])
        rejected += r.size - int(ok.sum())
    values = np.concatenate(kept) if kept else np.empty(0)
    if values.size == 0:
        raise EmptyAfterCleaning("no RSSI readings survived cleaning")
    return Cleaned(values, rejected)


def sigma_correction(n: int) -> float:
    """Bias correction for the sample standard deviation of ``n`` Gaussian draws.

    Multiply the ddof=1 estimate by this factor to make it unbiased; evaluated
    through log-gamma so it stays finite for large ``n``.
    """
    if n < 2:
        raise ValueError("sigma correction needs n >= 2")
    return math.sqrt((n - 1) / 2.0) * math.exp(math.lgamma((n - 1) / 2.0) - math.lgamma(n / 2.0))


def corrected_std(values) -> float:
    x = np.asarray(values, dtype=float)
    return sigma_correction(x.size) * float(x.std(ddof=1))


@dataclass(frozen=True)
class BatchStats:
    n: int
    mean: float
    std_dev: float
    std_of_means: float
    batch_size: int
    n_batches: int
    rejected: int = 0

    @property
    def predicted_std_of_means(self) -> float:
        return self.std_dev / math.sqrt(self.batch_size)

    def scaled(self, factor: float) -> "BatchStats":
        """Same statistics in another unit (e.g. cycles -> meters)."""
        return BatchStats(self.n, self.mean * factor, self.std_dev * abs(factor),
                          self.std_of_means * abs(factor), self.batch_size, self.n_batches,
                          self.rejected)


def batch_means(values, batch_size: int) -> np.ndarray:
    x = np.asarray(values, dtype=float)
    n_batches = x.size // batch_size
    return x[: n_batches * batch_size].reshape(n_batches, batch_size).mean(axis=1)


def batch_stats(values, batch_size: int, rejected: int = 0) -> BatchStats:
    """Population sigma and the spread of means over consecutive batches of ``batch_size``.

    Both spreads carry the small-sample correction. With a single batch the
    spread of means is undefined and reported as NaN.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    x = np.asarray(values, dtype=float)
    if x.size < max(batch_size, 2):
        raise ValueError(f"need at least {max(batch_size, 2)} values, got {x.size}")
    means = batch_means(x, batch_size)
    std_of_means = corrected_std(means) if means.size >= 2 else math.nan
    return BatchStats(int(x.size), float(x.mean()), corrected_std(x), std_of_means,
                      batch_size, int(means.size), rejected)


def required_samples(sigma_1: float, sigma_target: float) -> int:
    """Smallest batch size whose mean has spread <= ``sigma_target``."""
    if sigma_1 <= 0 or sigma_target <= 0:
        raise ValueError("sigmas must be positive")
    ratio = (sigma_1 / sigma_target) ** 2
    # guard against 148.99999999 style float noise before the ceiling
    return max(1, math.ceil(round(ratio, 9)))


def meters_per_cycle(medium: Medium, clock: ClockModel = ClockModel()) -> float:
    """One-way distance per cycle of round-trip time."""
    return medium.velocity / clock.effective_hz() / 2.0


def cycles_to_distance(t_signal, medium: Medium, clock: ClockModel = ClockModel()):
    """``d = v * t / 2`` with ``t`` in counter cycles; negative input gives negative distance."""
    if isinstance(t_signal, (list, tuple)):
        t_signal = np.asarray(t_signal, dtype=float)
    return t_signal * meters_per_cycle(medium, clock)


def distance_to_cycles(distance, medium: Medium, clock: ClockModel = ClockModel()):
    if isinstance(distance, (list, tuple)):
        distance = np.asarray(distance, dtype=float)
    return distance / meters_per_cycle(medium, clock)


@dataclass(frozen=True)
class ExpFit:
    """``offset(A) = a + b * exp(k * (A - ref))`` with the fit's residual RMS."""

    a: float
    b: float
    k: float
    ref: float = ATTENUATION_WINDOW_DB[0]
    rms: float = 0.0
    iterations: int = 0

    def __call__(self, attenuation):
        return self.a + self.b * np.exp(self.k * (np.asarray(attenuation, dtype=float) - self.ref))

    @property
    def params(self) -> tuple[float, float, float]:
        return self.a, self.b, self.k


def _linear_ab(x, y, k):
    e = np.exp(k * x)
    design = np.column_stack([np.ones_like(x), e])
    (a, b), *_ = np.linalg.lstsq(design, y, rcond=None)
    r = design @ (a, b) - y
    return a, b, float(r @ r)


def fit_attenuation_offset(attenuation, offset=None, ref: float = ATTENUATION_WINDOW_DB[0],
                           max_iter: int = 200, tol: float = 1e-12) -> ExpFit:
    """Least-squares fit of the exponential attenuation offset.

    Accepts either two arrays or one sequence of ``(attenuation, offset)``
    pairs. The rate ``k`` is seeded from a grid search with (a, b) solved
    linearly for each candidate, then all three are refined by Gauss-Newton
    steps with Levenberg-Marquardt damping.
    """
    if offset is None:
        pts = np.asarray(attenuation, dtype=float)
        attenuation, offset = pts[:, 0], pts[:, 1]
    A = np.asarray(attenuation, dtype=float)
    y = np.asarray(offset, dtype=float)
    if A.size < 4 or A.size != y.size:
        raise ValueError("need at least 4 (attenuation, offset) points")
    if np.ptp(A) < 20.0:
        raise ValueError("points must span at least 20 dB")
    x = A - ref

    scale = max(np.abs(y).max(), 1e-300)
    if np.ptp(y) <= 1e-12 * scale:
        return ExpFit(float(y.mean()), 0.0, 0.0, ref, 0.0, 0)

    span = np.abs(x).max()
    grid = np.linspace(-5.0, 5.0, 401) / span
    best = min((_linear_ab(x, y, k) + (k,) for k in grid), key=lambda t: t[2])
    p = np.array([best[0], best[1], best[3]])

    def residual(q):
        return q[0] + q[1] * np.exp(q[2] * x) - y

    r = residual(p)
    sse = float(r @ r)
    lam = 1e-3
    for it in range(1, max_iter + 1):
        e = np.exp(p[2] * x)
        J = np.column_stack([np.ones_like(x), e, p[1] * x * e])
        JtJ = J.T @ J
        g = J.T @ r
        damping = lam * np.diag(np.diag(JtJ) + 1e-300)
        try:
            step = np.linalg.solve(JtJ + damping, -g)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        trial = p + step
        r_trial = residual(trial)
        sse_trial = float(r_trial @ r_trial)
        if sse_trial <= sse:
            small_step = np.all(np.abs(step) <= 1e-10 * (np.abs(p) + 1e-10))
            small_gain = sse - sse_trial <= tol * max(sse, 1e-300)
            p, r, sse = trial, r_trial, sse_trial
            lam = max(lam / 10.0, 1e-12)
            if small_step or small_gain:
                return ExpFit(float(p[0]), float(p[1]), float(p[2]), ref,
                              math.sqrt(sse / x.size), it)
        else:
            lam *= 10.0
            if lam > 1e16:
                # no downhill direction left: at a minimum to machine precision
                return ExpFit(float(p[0]), float(p[1]), float(p[2]), ref,
                              math.sqrt(sse / x.size), it)
    raise FitDiverged(f"no convergence after {max_iter} iterations")


@dataclass(frozen=True)
class OffsetModel:
    """Constant analog offset (cycles) measured at a reference distance.

    With ``atten_fit`` set, the offset is shifted along the fitted
    attenuation curve for links whose attenuation differs from calibration.
    """

    reference_offset: float
    calibration_distance: float
    medium: Medium
    clock: ClockModel = ClockModel()
    calibration_attenuation: float | None = None
    atten_fit: ExpFit | None = None

    def offset_at(self, attenuation: float | None = None) -> float:
        if attenuation is None or self.atten_fit is None or self.calibration_attenuation is None:
            return self.reference_offset
        return self.reference_offset + float(self.atten_fit(attenuation) - self.atten_fit(self.calibration_attenuation))

    def signal_cycles(self, corrected_rtt, attenuation: float | None = None):
        return np.asarray(corrected_rtt, dtype=float) - self.offset_at(attenuation)

    def distance(self, corrected_rtt, attenuation: float | None = None):
        d = cycles_to_distance(self.signal_cycles(corrected_rtt, attenuation), self.medium, self.clock)
        return float(d) if np.ndim(d) == 0 else d

    def with_fit(self, fit: ExpFit) -> "OffsetModel":
        return OffsetModel(self.reference_offset, self.calibration_distance, self.medium,
                           self.clock, self.calibration_attenuation, fit)


def calibrate_offset(reference_records, reference_distance: float, medium: Medium,
                     clock: ClockModel = ClockModel(), attenuation: float | None = None) -> OffsetModel:
    """Offset = mean corrected RTT minus the round-trip propagation of the reference length."""
    x = np.asarray(reference_records, dtype=float)
    if x.size == 0:
        raise EmptyAfterCleaning("no reference records")
    offset = float(x.mean()) - float(distance_to_cycles(reference_distance, medium, clock))
    return OffsetModel(offset, reference_distance, medium, clock, attenuation)
