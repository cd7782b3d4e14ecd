"""Confidence sets for the Gaussian mean and their size theory.

Four set constructions: the classical likelihood-ratio sphere, the split
likelihood-ratio sphere, the cross-fit set (pointwise membership), and the
subsampling set (pointwise membership over many splits) together with its
spherical large-B limit.  All test statistics live in the log domain end to
end; membership and rejection compare log statistics against ``ln(1/alpha)``,
which keeps every operation finite even when the raw likelihood ratio
overflows by thousands of orders of magnitude.

The closed-form size theory lives here too: the optimal split proportion, the
expected squared radius at any split proportion, the expected split-to-
classical squared-radius ratio with its bounds, and the probability bounds
for that ratio staying under 4.  Bound expressions are also exposed in terms
of ``ln(1/alpha)`` directly, since they remain meaningful for alpha far below
the smallest positive double.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from . import specfun
from ._kernels import log_mean_exp, sq_norm
from .data import SampleSet, SplitPair
from .errors import DomainError

_LN2 = math.log(2.0)
_LOG_5_HALVES = math.log(2.5)

#: squared-radius ratio of the limiting subsampling sphere to the classical
#: sphere as the dimension grows, (5/3) * ln(5/2).
LIMITING_VS_CLASSICAL_HIGH_DIM = (5.0 / 3.0) * _LOG_5_HALVES


def _check_alpha(alpha: float) -> float:
    if not (0.0 < alpha < 1.0) or not math.isfinite(alpha):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    return float(alpha)


def log_threshold(alpha: float) -> float:
    """Rejection threshold ln(1/alpha) used by every universal statistic."""
    return -math.log(_check_alpha(alpha))


@dataclass(frozen=True)
class SphericalRegion:
    """A sphere ``{theta : ||theta - center||^2 <= sq_radius}``.

    The classical set is closed (``<=``); the split and limiting subsampling
    sets are open (``<``), matching the defining inequalities.  The
    distinction only matters on a measure-zero shell.
    """

    center: np.ndarray
    sq_radius: float
    alpha: float
    kind: str

    _CLOSED = frozenset({"classical"})
    KINDS = ("classical", "split", "limiting_subsampling")

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise DomainError(f"unknown region kind {self.kind!r}")
        if not (self.sq_radius >= 0.0):
            raise DomainError(f"sq_radius must be >= 0, got {self.sq_radius}")

    @property
    def d(self) -> int:
        return self.center.shape[0]

    def contains(self, theta) -> bool:
        dist = sq_norm(np.asarray(theta, dtype=np.float64) - self.center)
        if self.kind in self._CLOSED:
            return bool(dist <= self.sq_radius)
        return bool(dist < self.sq_radius)

    def contains_batch(self, thetas: np.ndarray) -> np.ndarray:
        dist = sq_norm(np.asarray(thetas, dtype=np.float64) - self.center, axis=-1)
        if self.kind in self._CLOSED:
            return dist <= self.sq_radius
        return dist < self.sq_radius


@dataclass(frozen=True)
class LogStatistic:
    """A log-domain test statistic with its sample-size context.

    Rejection (equivalently exclusion of ``theta`` from the confidence set)
    means ``log_value >= ln(1/alpha)``.
    """

    log_value: float
    kind: str
    n: int
    alpha: float | None = None

    KINDS = ("split", "crossfit", "subsampling")

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise DomainError(f"unknown statistic kind {self.kind!r}")

    def rejects(self, alpha: float | None = None) -> bool:
        level = alpha if alpha is not None else self.alpha
        if level is None:
            raise DomainError("no alpha supplied for rejection decision")
        return self.log_value >= log_threshold(level)


def _as_theta(theta, d: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    if theta.shape != (d,):
        raise DomainError(f"theta must have dimension {d}, got {theta.shape}")
    return theta


def _check_pair(pair: SplitPair, n: int) -> None:
    if pair.m0 + pair.m1 != n:
        raise DomainError(f"pair covers {pair.m0 + pair.m1} observations, expected n={n}")


# ---------------------------------------------------------------------------
# regions and statistics
# ---------------------------------------------------------------------------


def classical_region(sample: SampleSet, alpha: float) -> SphericalRegion:
    """Classical likelihood-ratio sphere: center at the sample mean,
    squared radius ``c_{alpha,d} / n``."""
    alpha = _check_alpha(alpha)
    quantile = specfun.chi2_upper_quantile(alpha, sample.d)
    return SphericalRegion(sample.mean, quantile / sample.n, alpha, "classical")


def split_log_statistic(theta, pair: SplitPair, n: int, alpha: float | None = None) -> LogStatistic:
    """Log split likelihood-ratio statistic at ``theta``.

    Equals ``(m0/2) (||mean0 - theta||^2 - ||mean0 - mean1||^2)`` where
    ``m0`` is the realized likelihood-part size (``n * p0`` when integral).
    """
    _check_pair(pair, n)
    theta = _as_theta(theta, pair.mean0.shape[0])
    gap = sq_norm(pair.mean0 - theta) - sq_norm(pair.mean0 - pair.mean1)
    return LogStatistic(0.5 * pair.m0 * gap, "split", n, alpha)


def split_region(pair: SplitPair, n: int, alpha: float) -> SphericalRegion:
    """Split likelihood-ratio sphere: center ``mean0``, squared radius
    ``(2/m0) ln(1/alpha) + ||mean0 - mean1||^2``."""
    _check_pair(pair, n)
    alpha = _check_alpha(alpha)
    sq_radius = (2.0 / pair.m0) * log_threshold(alpha) + sq_norm(pair.mean0 - pair.mean1)
    return SphericalRegion(pair.mean0, float(sq_radius), alpha, "split")


def crossfit_log_statistic(theta, pair: SplitPair, n: int, alpha: float | None = None) -> LogStatistic:
    """Log cross-fit statistic: the average of the split statistic and its
    role-swapped counterpart, combined by log-sum-exp."""
    _check_pair(pair, n)
    theta = _as_theta(theta, pair.mean0.shape[0])
    delta = sq_norm(pair.mean0 - pair.mean1)
    forward = 0.5 * pair.m0 * (sq_norm(pair.mean0 - theta) - delta)
    swapped = 0.5 * pair.m1 * (sq_norm(pair.mean1 - theta) - delta)
    return LogStatistic(float(np.logaddexp(forward, swapped) - _LN2), "crossfit", n, alpha)


def subsampling_log_statistic(
    theta, splits: list[SplitPair], n: int, alpha: float | None = None
) -> LogStatistic:
    """Log of the average split statistic over ``B`` partitions."""
    if not splits:
        raise DomainError("need at least one split")
    for pair in splits:
        _check_pair(pair, n)
    theta = _as_theta(theta, splits[0].mean0.shape[0])
    mean0 = np.stack([p.mean0 for p in splits])
    mean1 = np.stack([p.mean1 for p in splits])
    m0 = np.array([p.m0 for p in splits], dtype=np.float64)
    logs = 0.5 * m0 * (sq_norm(mean0 - theta, axis=1) - sq_norm(mean0 - mean1, axis=1))
    return LogStatistic(float(log_mean_exp(logs)), "subsampling", n, alpha)


def subsampling_log_values(
    thetas: np.ndarray, mean0: np.ndarray, mean1: np.ndarray, m0: int
) -> np.ndarray:
    """Batch form of the subsampling statistic over a grid of thetas.

    ``mean0``/``mean1`` are ``(B, d)`` split means sharing part size ``m0``;
    ``thetas`` is ``(G, d)``.  Returns ``(G,)`` log statistics.
    """
    thetas = np.asarray(thetas, dtype=np.float64)
    delta = sq_norm(mean0 - mean1, axis=1)
    dist = sq_norm(thetas[:, None, :] - mean0[None, :, :], axis=2)
    return log_mean_exp(0.5 * m0 * (dist - delta[None, :]), axis=1)


def limiting_subsampling_region(sample: SampleSet, alpha: float) -> SphericalRegion:
    """Large-B limit of the subsampling set: center at the sample mean,
    squared radius ``(10 / 3n) ln((5/2)^{d/2} / alpha)``."""
    alpha = _check_alpha(alpha)
    sq_radius = (10.0 / (3.0 * sample.n)) * (
        0.5 * sample.d * _LOG_5_HALVES + log_threshold(alpha)
    )
    return SphericalRegion(sample.mean, sq_radius, alpha, "limiting_subsampling")


# ---------------------------------------------------------------------------
# split-proportion and radius theory
# ---------------------------------------------------------------------------


def optimal_split_proportion(alpha: float, d: int) -> float:
    """Split proportion minimizing the expected squared split radius.

    Closed form ``1 - (sqrt(4 d^2 + 8 d L) - 2 d) / (4 L)`` with
    ``L = ln(1/alpha)``, evaluated in the rationalized form
    ``1 - 2 d / (sqrt(4 d^2 + 8 d L) + 2 d)`` which is stable as L -> 0.
    Always lies in (1/2, 1).
    """
    L = log_threshold(alpha)
    if d < 1:
        raise DomainError(f"d must be >= 1, got {d}")
    return 1.0 - 2.0 * d / (math.sqrt(4.0 * d * d + 8.0 * d * L) + 2.0 * d)


def expected_sq_radius_split(alpha: float, d: int, n: int, p0: float) -> float:
    """Expected squared radius of the split sphere at proportion ``p0``:
    ``(2/(n p0)) L + (1/(n p0) + 1/(n (1 - p0))) d``."""
    L = log_threshold(alpha)
    if not (0.0 < p0 < 1.0):
        raise DomainError(f"p0 must lie strictly in (0, 1), got {p0}")
    if n < 2 or d < 1:
        raise DomainError(f"need n >= 2 and d >= 1, got n={n}, d={d}")
    return (2.0 / (n * p0)) * L + (1.0 / (n * p0) + 1.0 / (n * (1.0 - p0))) * d


def ratio_expected_split_vs_classical(alpha: float, d: int) -> float:
    """Expected split squared radius over the classical squared radius:
    ``(4 L + 4 d) / c_{alpha,d}``."""
    L = log_threshold(alpha)
    quantile = specfun.chi2_upper_quantile(alpha, d)
    return (4.0 * L + 4.0 * d) / quantile


class RatioBounds(NamedTuple):
    lower: float
    upper: float
    domain_ok: bool


def ratio_bounds_log(log_inv_alpha: float, d: int) -> RatioBounds:
    """Bounds for the expected split-to-classical squared-radius ratio,
    parameterized by ``L = ln(1/alpha)`` so extreme levels stay reachable.

    The lower bound holds for every ``d >= 1`` and level; the upper bound
    requires ``d >= 2`` with ``alpha <= 0.17``, or ``d = 1`` with
    ``alpha <= exp(-5 (1 + sqrt 5) / 4)``, and is NaN outside that domain.
    """
    L = float(log_inv_alpha)
    if not math.isfinite(L) or L <= 0.0:
        raise DomainError(f"ln(1/alpha) must be positive and finite, got {L}")
    if d < 1:
        raise DomainError(f"d must be >= 1, got {d}")
    numerator = 4.0 * L + 4.0 * d
    lower = numerator / (2.0 * L + d + 2.0 * math.sqrt(d * L))
    if d >= 2:
        domain_ok = L >= -math.log(0.17)
        upper = numerator / (2.0 * L + d - 2.5) if domain_ok else math.nan
    else:
        domain_ok = L >= 5.0 * (1.0 + math.sqrt(5.0)) / 4.0
        upper = (
            numerator / (2.0 * L + 9.0 - 4.0 * math.sqrt(5.0 + 2.0 * L))
            if domain_ok
            else math.nan
        )
    return RatioBounds(lower, upper, domain_ok)


def ratio_bounds(alpha: float, d: int) -> RatioBounds:
    """:func:`ratio_bounds_log` at ``L = ln(1/alpha)``."""
    return ratio_bounds_log(log_threshold(alpha), d)


class ProbRatioBounds(NamedTuple):
    lower: float
    upper: float
    condition_ok: bool


def prob_ratio_leq4_bounds(alpha: float, d: int) -> ProbRatioBounds:
    """Bounds on P(split sq radius / classical sq radius <= 4).

    ``lower = 1 - alpha - L f_d(c - L)`` and ``upper = 1 - alpha - L f_d(c)``
    with ``c = c_{alpha,d}`` and ``L = ln(1/alpha)``; they are meaningful when
    ``c - L > d - 2`` (the density is decreasing across the interval), which
    ``condition_ok`` reports.
    """
    alpha = _check_alpha(alpha)
    L = log_threshold(alpha)
    quantile = specfun.chi2_upper_quantile(alpha, d)
    condition_ok = quantile - L > d - 2
    inner = max(quantile - L, 0.0)
    lower = 1.0 - alpha - L * specfun.chi2_pdf(inner, d)
    upper = 1.0 - alpha - L * specfun.chi2_pdf(quantile, d)
    return ProbRatioBounds(lower, upper, bool(condition_ok))


def limiting_vs_expected_split_ratio(alpha: float, d: int) -> float:
    """Squared-radius ratio of the limiting subsampling sphere to the
    expected split sphere: ``(5/6) ((d/2) ln(5/2) + L) / (d + L)``."""
    L = log_threshold(alpha)
    return (5.0 / 6.0) * (0.5 * d * _LOG_5_HALVES + L) / (d + L)


# ---------------------------------------------------------------------------
# 2-d boundary extraction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Boundary2D:
    """Closed polyline of membership-boundary points found by radial bisection.

    ``angles``/``points`` keep only the rays where a boundary was bracketed;
    ``failed_angles`` lists rays with no membership sign change within the
    search radius (reported, not fatal).
    """

    center: np.ndarray
    angles: np.ndarray
    points: np.ndarray
    failed_angles: np.ndarray
    alpha: float

    def polygon_area(self) -> float:
        """Shoelace area of the polygon through the boundary points."""
        x = self.points[:, 0]
        y = self.points[:, 1]
        return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))

    def radii(self) -> np.ndarray:
        return np.sqrt(sq_norm(self.points - self.center, axis=1))


def region_boundary_2d(
    evaluator: Callable[[np.ndarray], bool],
    alpha: float,
    center_hint,
    rays: int,
    tol: float,
    search_radius: float,
) -> Boundary2D:
    """Trace the boundary of a 2-d membership region along equally spaced rays.

    Assumes the region is star-shaped about ``center_hint`` (membership is
    monotone along each ray), which holds for spheres and is checked
    empirically for the cross-fit and subsampling sets.  ``center_hint`` must
    itself be a member.
    """
    alpha = _check_alpha(alpha)
    center = np.asarray(center_hint, dtype=np.float64).reshape(-1)
    if center.shape != (2,):
        raise DomainError("boundary extraction requires d = 2")
    if rays < 3:
        raise DomainError(f"need at least 3 rays, got {rays}")
    if not (tol > 0.0 and search_radius > tol):
        raise DomainError("need search_radius > tol > 0")
    if not evaluator(center):
        raise DomainError("center_hint is not a member of the region")

    angles = 2.0 * math.pi * np.arange(rays) / rays
    points = []
    kept = []
    failed = []
    for phi in angles:
        direction = np.array([math.cos(phi), math.sin(phi)])
        if evaluator(center + search_radius * direction):
            failed.append(phi)
            continue
        lo, hi = 0.0, search_radius
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if evaluator(center + mid * direction):
                lo = mid
            else:
                hi = mid
        radius = 0.5 * (lo + hi)
        kept.append(phi)
        points.append(center + radius * direction)
    return Boundary2D(
        center=center,
        angles=np.asarray(kept, dtype=np.float64),
        points=np.asarray(points, dtype=np.float64).reshape(-1, 2),
        failed_angles=np.asarray(failed, dtype=np.float64),
        alpha=alpha,
    )
