"""Tests of the annulus null ``r_in <= ||theta|| <= r_out`` (default [0.5, 1]).

Three valid approaches are implemented:

* intersection: reject when the classical sphere misses the annulus, checked
  through the Euclidean projection of the sample mean onto the annulus;
* subsampled split: average over ``B`` random half-splits of the split
  likelihood ratio against the annulus maximum-likelihood point;
* subsampled hybrid: per split, use the split ratio when the estimation-half
  mean is inside the inner disk, the constant 1 inside the annulus, and the
  boundary-projection (RIPR) ratio outside the outer sphere.

The exact power of the intersection test is available in closed form for the
default radii.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import specfun
from ._kernels import batch_fisher_yates, log_mean_exp, split_means, sq_norm
from .data import SampleSet, SplitPair, part_size
from .errors import (
    DegenerateDirectionError,
    DomainError,
    UnsupportedConfigurationError,
)
from .regions import log_threshold
from .rng import RngStream

logger = logging.getLogger(__name__)

DEFAULT_R_IN = 0.5
DEFAULT_R_OUT = 1.0


@dataclass(frozen=True)
class AnnulusNull:
    """The annulus ``{theta : r_in <= ||theta|| <= r_out}``."""

    r_in: float = DEFAULT_R_IN
    r_out: float = DEFAULT_R_OUT

    def __post_init__(self) -> None:
        if not (0.0 < self.r_in <= self.r_out) or not math.isfinite(self.r_out):
            raise DomainError(f"need 0 < r_in <= r_out, got [{self.r_in}, {self.r_out}]")

    @property
    def is_default(self) -> bool:
        return self.r_in == DEFAULT_R_IN and self.r_out == DEFAULT_R_OUT


class HybridCase(Enum):
    """Which statistic a hybrid subsample used, decided by ``||mean1||``."""

    SPLIT_CASE = "split_case"
    UNIT_CASE = "unit_case"
    RIPR_CASE = "ripr_case"


def project_to_annulus(y, null: AnnulusNull = AnnulusNull()) -> np.ndarray:
    """Euclidean projection of ``y`` onto the annulus.

    The zero vector has no closest-direction and raises
    :class:`DegenerateDirectionError`; the internal statistic paths
    substitute the first standard basis direction instead (see
    :func:`_project_total`).
    """
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    norm = math.sqrt(float(sq_norm(y)))
    if norm < null.r_in:
        if norm == 0.0:
            raise DegenerateDirectionError(
                "cannot project the zero vector onto an annulus with r_in > 0"
            )
        return y * (null.r_in / norm)
    if norm > null.r_out:
        return y * (null.r_out / norm)
    return y.copy()


def _project_total(y: np.ndarray, null: AnnulusNull) -> np.ndarray:
    """Projection made total: the zero vector projects along the first axis."""
    norm = math.sqrt(float(sq_norm(y)))
    if norm == 0.0 and null.r_in > 0.0:
        logger.warning("projected the zero vector along the first basis direction")
        out = np.zeros_like(y)
        out[0] = null.r_in
        return out
    return project_to_annulus(y, null)


def intersection_test(sample: SampleSet, null: AnnulusNull, alpha: float) -> bool:
    """Reject when the classical sphere does not meet the annulus."""
    quantile = specfun.chi2_upper_quantile(alpha, sample.d)
    norm = math.sqrt(float(sq_norm(sample.mean)))
    gap = max(null.r_in - norm, norm - null.r_out, 0.0)
    return gap * gap > quantile / sample.n


def intersection_power_exact(
    theta_norm: float, n: int, d: int, alpha: float, null: AnnulusNull = AnnulusNull()
) -> float:
    """Exact rejection probability of the intersection test.

    ``1 - F(n + 2 sqrt(n c) + c) + 1{n > 4c} F(n/4 - sqrt(n c) + c)`` with
    ``c = c_{alpha,d}`` and ``F`` the noncentral chi-squared CDF at
    noncentrality ``n theta_norm^2``.  Derived for the default radii only;
    at a null ``theta_norm`` the value is the type I error.
    """
    if not null.is_default:
        raise UnsupportedConfigurationError(
            "the exact intersection power is derived for the default annulus [0.5, 1.0]"
        )
    if theta_norm < 0.0:
        raise DomainError(f"theta_norm must be >= 0, got {theta_norm}")
    c = specfun.chi2_upper_quantile(alpha, d)
    lam = n * theta_norm * theta_norm
    value = 1.0 - specfun.noncentral_chi2_cdf(n + 2.0 * math.sqrt(n * c) + c, d, lam)
    if n > 4.0 * c:
        value += specfun.noncentral_chi2_cdf(n / 4.0 - math.sqrt(n * c) + c, d, lam)
    return min(max(value, 0.0), 1.0)


def _check_half_split(pair: SplitPair, n: int) -> None:
    if pair.m0 + pair.m1 != n:
        raise DomainError(f"pair covers {pair.m0 + pair.m1} observations, expected n={n}")
    if pair.m0 != pair.m1:
        raise DomainError("annulus tests are defined for half splits (p0 = 0.5, even n)")


def doughnut_split_log_statistic(pair: SplitPair, n: int, null: AnnulusNull) -> float:
    """Log split statistic against the annulus null MLE:
    ``(n/4) (||mean0 - proj(mean0)||^2 - ||mean0 - mean1||^2)``."""
    _check_half_split(pair, n)
    proj = _project_total(pair.mean0, null)
    return 0.25 * n * float(sq_norm(pair.mean0 - proj) - sq_norm(pair.mean0 - pair.mean1))


def doughnut_ripr_log_statistic(pair: SplitPair, n: int, null: AnnulusNull) -> float:
    """Log boundary-projection (RIPR) statistic, defined for ``||mean1|| > r_out``:
    ``(n/4) (||mean0 - r_out mean1 / ||mean1||||^2 - ||mean0 - mean1||^2)``."""
    _check_half_split(pair, n)
    norm1 = math.sqrt(float(sq_norm(pair.mean1)))
    if norm1 <= null.r_out:
        raise DomainError(
            f"RIPR statistic requires ||mean1|| > r_out = {null.r_out}, got {norm1}"
        )
    anchor = pair.mean1 * (null.r_out / norm1)
    return 0.25 * n * float(sq_norm(pair.mean0 - anchor) - sq_norm(pair.mean0 - pair.mean1))


def hybrid_log_statistic(
    pair: SplitPair, n: int, null: AnnulusNull
) -> tuple[float, HybridCase]:
    """Case-selected hybrid statistic and its case tag."""
    _check_half_split(pair, n)
    norm1 = math.sqrt(float(sq_norm(pair.mean1)))
    if norm1 < null.r_in:
        return doughnut_split_log_statistic(pair, n, null), HybridCase.SPLIT_CASE
    if norm1 > null.r_out:
        return doughnut_ripr_log_statistic(pair, n, null), HybridCase.RIPR_CASE
    return 0.0, HybridCase.UNIT_CASE


def _split_case_log_values(
    mean0: np.ndarray, mean1: np.ndarray, n: int, null: AnnulusNull
) -> np.ndarray:
    """Vectorized split statistics; the projection distance is radial, so the
    zero-mean degenerate case needs no direction."""
    norm0 = np.sqrt(sq_norm(mean0, axis=-1))
    proj_gap = norm0 - np.clip(norm0, null.r_in, null.r_out)
    delta = sq_norm(mean0 - mean1, axis=-1)
    return 0.25 * n * (proj_gap * proj_gap - delta)


def _hybrid_log_values(
    mean0: np.ndarray, mean1: np.ndarray, n: int, null: AnnulusNull
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized hybrid statistics and integer case codes (0 split, 1 unit,
    2 ripr) for stacks of split means."""
    norm1 = np.sqrt(sq_norm(mean1, axis=-1))
    values = np.zeros(norm1.shape)
    cases = np.ones(norm1.shape, dtype=np.int8)
    split_mask = norm1 < null.r_in
    ripr_mask = norm1 > null.r_out
    cases[split_mask] = 0
    cases[ripr_mask] = 2
    if np.any(split_mask):
        values[split_mask] = _split_case_log_values(
            mean0[split_mask], mean1[split_mask], n, null
        )
    if np.any(ripr_mask):
        m0 = mean0[ripr_mask]
        m1 = mean1[ripr_mask]
        anchor = m1 * (null.r_out / norm1[ripr_mask])[..., None]
        values[ripr_mask] = 0.25 * n * (
            sq_norm(m0 - anchor, axis=-1) - sq_norm(m0 - m1, axis=-1)
        )
    return values, cases


@dataclass(frozen=True)
class DoughnutTestResult:
    """Outcome of a subsampled annulus test.

    ``case_fractions`` is (split, unit, ripr) over the ``B`` subsamples; the
    split-only test reports (1, 0, 0) by convention.  ``log_values`` and
    ``cases`` keep the per-subsample diagnostics.
    """

    reject: bool
    case_fractions: tuple[float, float, float]
    log_values: np.ndarray
    cases: np.ndarray


def subsampled_doughnut_test(
    sample: SampleSet,
    null: AnnulusNull,
    alpha: float,
    B: int,
    kind: str,
    rng: RngStream,
) -> DoughnutTestResult:
    """Subsampled split or hybrid test of the annulus null.

    Rejects when the log of the average per-split statistic reaches
    ``ln(1/alpha)``.  Split ``b`` is drawn from ``rng.substream(b)``, the
    same convention as :func:`ulrt.data.subsample_splits`.
    """
    if kind not in ("split", "hybrid"):
        raise DomainError(f"kind must be 'split' or 'hybrid', got {kind!r}")
    if B < 1:
        raise DomainError(f"B must be >= 1, got {B}")
    n = sample.n
    if n % 2:
        raise DomainError("subsampled annulus tests require even n")
    k = part_size(n, 0.5)
    keys = rng.substream_keys(B)
    perms = batch_fisher_yates(keys, n, k)[None, :, :]
    mean0, mean1 = split_means(sample.values[None, :, :], perms, k)
    mean0, mean1 = mean0[0], mean1[0]
    if kind == "split":
        values = _split_case_log_values(mean0, mean1, n, null)
        cases = np.zeros(B, dtype=np.int8)
        fractions = (1.0, 0.0, 0.0)
    else:
        values, cases = _hybrid_log_values(mean0, mean1, n, null)
        fractions = tuple(float(np.mean(cases == c)) for c in (0, 1, 2))
    reject = bool(log_mean_exp(values) >= log_threshold(alpha))
    return DoughnutTestResult(reject, fractions, values, cases)


def write_doughnut_csv(rows: list[dict], path) -> None:
    """Annulus experiment CSV: method, grid cell, power, and case fractions."""
    columns = [
        "method", "d", "n", "alpha", "theta_norm", "B", "reps",
        "power", "stderr", "frac_split_case", "frac_unit_case", "frac_ripr_case",
    ]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c, "")) for c in columns])


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)
