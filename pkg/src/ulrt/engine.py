"""Deterministic, parallel Monte Carlo experiment runner.

An :class:`ExperimentSpec` names one of the preset experiments and a grid of
parameter cells; :func:`run` produces one or more aggregated
:class:`SummaryRow` per cell.  Replication ``r`` of cell ``c`` draws from the
stream chain ``root(master_seed) -> substream(1 + c) -> substream(r)``
(``substream(0)`` of the root is reserved for artifacts shared across cells,
such as a fixed dataset).  Within a replication, substream 0 generates the
dataset and substream 1 parents the per-split streams.

Replications are evaluated in fixed-size chunks (vectorized internally) and
reduced with a streaming count/mean/M2 accumulator merged in chunk order, so
results are a pure function of ``(spec, master_seed)`` no matter how many
worker threads execute the chunks.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import doughnut as dn
from . import power as pw
from . import regions as rg
from . import specfun
from ._kernels import batch_fisher_yates, log_mean_exp, split_means, sq_norm
from .data import SampleSet, part_size, sample_gaussian, split
from .errors import DomainError, NumericError
from .rng import RngStream

EXPERIMENT_IDS = (
    "regions_fig1",
    "approx_fig2",
    "split_p0_fig3",
    "ratio_bounds_fig4",
    "ratio_prob_fig5",
    "power_fig6",
    "doughnut_fig7",
    "crossfit_p0_figS2",
    "intersect_power_figS3",
    "hybrid_cases_figS4",
)

#: CLI figure ids to experiment ids.
FIGURE_ALIASES = {
    "1": "regions_fig1",
    "2": "approx_fig2",
    "3": "split_p0_fig3",
    "4": "ratio_bounds_fig4",
    "5": "ratio_prob_fig5",
    "6": "power_fig6",
    "7": "doughnut_fig7",
    "S2": "crossfit_p0_figS2",
    "S3": "intersect_power_figS3",
    "S4": "hybrid_cases_figS4",
}


@dataclass(frozen=True)
class ExperimentSpec:
    """A preset experiment, its parameter cells, and the master seed."""

    experiment_id: str
    grid: tuple
    master_seed: int

    def __post_init__(self) -> None:
        if self.experiment_id not in EXPERIMENT_IDS:
            raise DomainError(f"unknown experiment_id {self.experiment_id!r}")
        if not self.grid:
            raise DomainError("experiment grid is empty")


@dataclass
class SummaryRow:
    """One aggregated result: cell parameters plus estimate and precision."""

    experiment_id: str
    cell: dict
    estimate: float
    stderr: float
    reps_used: int
    status: str = "ok"


# ---------------------------------------------------------------------------
# streaming aggregation
# ---------------------------------------------------------------------------


class Accumulator:
    """Single-pass count/mean/M2, merged chunk-by-chunk in fixed order."""

    __slots__ = ("count", "mean", "m2")

    def __init__(self) -> None:
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def fold(self, values: np.ndarray) -> None:
        c = int(values.size)
        if c == 0:
            return
        m = float(values.mean())
        s = float(np.square(values - m).sum())
        if self.count == 0:
            self.count, self.mean, self.m2 = c, m, s
            return
        delta = m - self.mean
        total = self.count + c
        self.mean += delta * c / total
        self.m2 += s + delta * delta * self.count * c / total
        self.count = total

    def se_mean(self) -> float:
        if self.count < 2:
            return math.nan
        return math.sqrt(self.m2 / (self.count - 1) / self.count)

    def se_proportion(self) -> float:
        p = self.mean
        return math.sqrt(max(p * (1.0 - p), 0.0) / self.count)


def _chunk_reps(n: int, d: int, B: int) -> int:
    """Replications per chunk, bounded by a fixed memory budget.

    Depends only on the cell shape (never on worker count), so chunk
    boundaries and therefore aggregation order are deterministic.
    """
    per_rep = n * (8 * d + 12 * max(B, 1)) + 16 * max(B, 1) * d
    return int(np.clip(2**27 // max(per_rep, 1), 1, 512))


def _map_chunks(
    reps: int,
    chunk: int,
    fn: Callable[[int, int], dict],
    workers: int | None,
    dump: Callable[[str, int, np.ndarray], None] | None = None,
) -> dict[str, Accumulator]:
    """Run ``fn(lo, hi)`` over chunked replication ranges, in parallel when
    ``workers`` allows, and fold the returned arrays in chunk order."""
    bounds = [(lo, min(lo + chunk, reps)) for lo in range(0, reps, chunk)]
    acc: dict[str, Accumulator] = {}

    def fold(lo: int, out: dict) -> None:
        for name, values in out.items():
            acc.setdefault(name, Accumulator()).fold(np.asarray(values, dtype=np.float64))
            if dump is not None:
                dump(name, lo, np.asarray(values, dtype=np.float64))

    if workers is None or workers <= 1 or len(bounds) == 1:
        for lo, hi in bounds:
            fold(lo, fn(lo, hi))
        return acc
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, lo, hi) for lo, hi in bounds]
        for (lo, _), fut in zip(bounds, futures):
            fold(lo, fut.result())
    return acc


# ---------------------------------------------------------------------------
# shared simulation pieces
# ---------------------------------------------------------------------------


def _simulate_block(rep_streams, n: int, d: int, theta: np.ndarray) -> np.ndarray:
    block = np.empty((len(rep_streams), n, d))
    shift = theta.any()
    for i, rs in enumerate(rep_streams):
        rs.substream(0).normals(n * d, out=block[i].reshape(-1))
        if shift:
            block[i] += theta
    return block


def _split_keys_block(rep_streams, B: int) -> np.ndarray:
    keys = np.empty((len(rep_streams), B), dtype=np.uint64)
    for i, rs in enumerate(rep_streams):
        keys[i] = rs.substream(1).substream_keys(B)
    return keys


def _block_split_means(data: np.ndarray, keys: np.ndarray, k: int):
    c, n, _ = data.shape
    perms = batch_fisher_yates(keys.reshape(-1), n, k).reshape(c, keys.shape[1], n)
    return split_means(data, perms, k)


def _crossfit_member(pair, thresh: float) -> Callable[[np.ndarray], bool]:
    delta = float(sq_norm(pair.mean0 - pair.mean1))
    m0, m1 = pair.m0, pair.m1
    mu0, mu1 = pair.mean0, pair.mean1

    def member(theta: np.ndarray) -> bool:
        forward = 0.5 * m0 * (float(sq_norm(mu0 - theta)) - delta)
        swapped = 0.5 * m1 * (float(sq_norm(mu1 - theta)) - delta)
        return float(np.logaddexp(forward, swapped)) - math.log(2.0) < thresh

    return member


def _subsampling_member(mean0, mean1, k: int, thresh: float) -> Callable[[np.ndarray], bool]:
    delta = sq_norm(mean0 - mean1, axis=1)

    def member(theta: np.ndarray) -> bool:
        logs = 0.5 * k * (sq_norm(mean0 - theta, axis=1) - delta)
        return float(log_mean_exp(logs)) < thresh

    return member


# ---------------------------------------------------------------------------
# preset grids
# ---------------------------------------------------------------------------

_DEFAULTS: dict[str, dict] = {
    "regions_fig1": dict(n=1000, d=2, alpha=0.1, B=100, replicates=6, rays=180, tol=1e-5),
    "approx_fig2": dict(ds=(1, 20), ns=(1000, 10), B=20000, grid_points=21),
    "split_p0_fig3": dict(ds=(1, 10, 100), n=1000, alpha=0.1, reps=1000, p0s=None),
    "ratio_bounds_fig4": dict(ds=(10, 100000), xs=tuple(x / 2.0 for x in range(0, 17))),
    "ratio_prob_fig5": dict(ds=(2, 10, 100), n=1000, alpha=0.1, reps=10000),
    "power_fig6": dict(
        ds=(1, 2), n=1000, alpha=0.1, reps=1000, B=100,
        lambdas=(0.0, 2.0, 4.0, 8.0, 15.0, 25.0, 40.0, 60.0),
    ),
    "doughnut_fig7": dict(
        ds=(2, 10), n=1000, alpha=0.1, B=100, reps=500,
        theta_norms=(0.0, 0.25, 0.45, 0.5, 0.75, 1.0, 1.1, 1.25, 1.5),
    ),
    "crossfit_p0_figS2": dict(
        n=1000, d=2, alpha=0.1, p0s=(0.1, 0.3, 0.5, 0.7, 0.9), rays=180, tol=1e-5
    ),
    "intersect_power_figS3": dict(
        ds=(2, 10), n=1000, alpha=0.1, reps=1000,
        theta_norms=(0.0, 0.15, 0.3, 0.45, 1.05, 1.2, 1.35, 1.5),
    ),
    "hybrid_cases_figS4": dict(
        ds=(2, 10, 100), n=1000, alpha=0.1, B=100, reps=200,
        theta_norms=(0.0, 0.25, 0.45, 0.75, 1.1, 1.3, 1.5),
    ),
}


def build_spec(experiment_id: str, seed: int, **overrides) -> ExperimentSpec:
    """Build a preset grid, with keyword overrides for its documented axes."""
    if experiment_id not in EXPERIMENT_IDS:
        raise DomainError(
            f"unknown experiment_id {experiment_id!r}; known: {', '.join(EXPERIMENT_IDS)}"
        )
    params = dict(_DEFAULTS[experiment_id])
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in params:
            raise DomainError(
                f"{experiment_id} has no axis {key!r}; axes: {', '.join(params)}"
            )
        params[key] = value
    grid = _GRID_BUILDERS[experiment_id](params)
    return ExperimentSpec(experiment_id, tuple(grid), seed)


def _grid_fig1(p: dict) -> list[dict]:
    if p["d"] != 2:
        raise DomainError("regions_fig1 requires d = 2")
    base = {k: p[k] for k in ("n", "d", "alpha", "B", "rays", "tol")}
    return [dict(replicate=r, **base) for r in range(int(p["replicates"]))]


def _grid_fig2(p: dict) -> list[dict]:
    return [
        dict(d=d, n=n, B=int(p["B"]), grid_points=int(p["grid_points"]))
        for d in p["ds"]
        for n in p["ns"]
    ]


def _grid_fig3(p: dict) -> list[dict]:
    cells = []
    for d in p["ds"]:
        p0s = p["p0s"]
        if p0s is None:
            p0s = [0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, rg.optimal_split_proportion(p["alpha"], d)]
        for p0 in p0s:
            cells.append(dict(d=d, n=p["n"], alpha=p["alpha"], p0=float(p0), reps=int(p["reps"])))
    return cells


def _grid_fig4(p: dict) -> list[dict]:
    return [dict(d=d, x=float(x)) for d in p["ds"] for x in p["xs"]]


def _grid_fig5(p: dict) -> list[dict]:
    return [dict(d=d, n=p["n"], alpha=p["alpha"], reps=int(p["reps"])) for d in p["ds"]]


def _grid_fig6(p: dict) -> list[dict]:
    cells = []
    for d in p["ds"]:
        for lam in p["lambdas"]:
            for test, method in (
                ("classical", "exact"),
                ("classical", "approx"),
                ("subsampling_limit", "exact"),
                ("subsampling_limit", "approx"),
                ("split", "mc"),
                ("crossfit", "mc"),
            ):
                cells.append(
                    dict(
                        test=test, method=method, d=d, n=p["n"], alpha=p["alpha"],
                        n_theta_sq=float(lam), reps=int(p["reps"]), B=int(p["B"]),
                    )
                )
    return cells


def _grid_fig7(p: dict) -> list[dict]:
    methods = ("intersection", "intersection_exact", "subsampled_split", "subsampled_hybrid")
    return [
        dict(
            method=m, d=d, n=p["n"], alpha=p["alpha"], theta_norm=float(t),
            B=int(p["B"]), reps=int(p["reps"]),
        )
        for d in p["ds"]
        for t in p["theta_norms"]
        for m in methods
    ]


def _grid_figS2(p: dict) -> list[dict]:
    base = {k: p[k] for k in ("n", "d", "alpha", "rays", "tol")}
    return [dict(p0=float(p0), **base) for p0 in p["p0s"]]


def _grid_figS3(p: dict) -> list[dict]:
    return [
        dict(method=m, d=d, n=p["n"], alpha=p["alpha"], theta_norm=float(t), reps=int(p["reps"]))
        for d in p["ds"]
        for t in p["theta_norms"]
        for m in ("exact", "mc")
    ]


def _grid_figS4(p: dict) -> list[dict]:
    return [
        dict(d=d, n=p["n"], alpha=p["alpha"], theta_norm=float(t), B=int(p["B"]), reps=int(p["reps"]))
        for d in p["ds"]
        for t in p["theta_norms"]
    ]


_GRID_BUILDERS = {
    "regions_fig1": _grid_fig1,
    "approx_fig2": _grid_fig2,
    "split_p0_fig3": _grid_fig3,
    "ratio_bounds_fig4": _grid_fig4,
    "ratio_prob_fig5": _grid_fig5,
    "power_fig6": _grid_fig6,
    "doughnut_fig7": _grid_fig7,
    "crossfit_p0_figS2": _grid_figS2,
    "intersect_power_figS3": _grid_figS3,
    "hybrid_cases_figS4": _grid_figS4,
}


# ---------------------------------------------------------------------------
# executors
# ---------------------------------------------------------------------------


@dataclass
class _RunContext:
    spec: ExperimentSpec
    root: RngStream
    workers: int | None
    dump: Callable[[str, int, np.ndarray], None] | None = None
    shared_cache: dict = field(default_factory=dict)

    def cell_stream(self, cell_index: int) -> RngStream:
        return self.root.substream(1 + cell_index)

    def shared_sample(self, n: int, d: int) -> SampleSet:
        key = (n, d)
        if key not in self.shared_cache:
            self.shared_cache[key] = sample_gaussian(
                n, d, np.zeros(d), self.root.substream(0).substream(0)
            )
        return self.shared_cache[key]


def _exec_fig1(ctx: _RunContext, ci: int, cell: dict) -> list[SummaryRow]:
    n, d, alpha, B = cell["n"], cell["d"], cell["alpha"], cell["B"]
    sample = ctx.shared_sample(n, d)
    stream = ctx.cell_stream(ci)
    thresh = rg.log_threshold(alpha)
    pair = split(sample, 0.5, stream.substream(1))
    split_reg = rg.split_region(pair, n, alpha)
    classical = rg.classical_region(sample, alpha)
    search = 10.0 * math.sqrt(split_reg.sq_radius)

    keys = stream.substream(2).substream_keys(B)
    k = part_size(n, 0.5)
    mean0, mean1 = _block_split_means(sample.values[None], keys[None], k)
    sub_member = _subsampling_member(mean0[0], mean1[0], k, thresh)
    cf_member = _crossfit_member(pair, thresh)

    rows = []
    base = {k_: cell[k_] for k_ in ("replicate", "n", "d", "alpha", "B")}
    for kind, area in (
        ("classical", math.pi * classical.sq_radius),
        ("split", math.pi * split_reg.sq_radius),
        ("crossfit", rg.region_boundary_2d(cf_member, alpha, sample.mean, cell["rays"], cell["tol"], search).polygon_area()),
        ("subsampling", rg.region_boundary_2d(sub_member, alpha, sample.mean, cell["rays"], cell["tol"], search).polygon_area()),
    ):
        rows.append(SummaryRow(ctx.spec.experiment_id, dict(base, kind=kind), float(area), 0.0, 1))
    return rows


def _exec_fig2(ctx: _RunContext, ci: int, cell: dict) -> list[SummaryRow]:
    n, d, B, points = cell["n"], cell["d"], cell["B"], cell["grid_points"]
    stream = ctx.cell_stream(ci)
    sample = sample_gaussian(n, d, np.zeros(d), stream.substream(0))
    k = part_size(n, 0.5)
    cbar = float(sample.mean.mean())
    offsets = np.linspace(-1.0, 1.0, points) * 2.0 / math.sqrt(n * d)
    cs = cbar + offsets
    thetas = cs[:, None] * np.ones(d)[None, :]
    scaled_dist = np.sqrt(n * sq_norm(sample.mean[None, :] - thetas, axis=1))
    analytic = np.exp((0.3 * n) * sq_norm(sample.mean[None, :] - thetas, axis=1)) * 0.4 ** (d / 2.0)

    chunk = int(np.clip(2**27 // (16 * n), 256, 8192))
    parent = stream.substream(1)

    def run_chunk(lo: int, hi: int) -> dict:
        keys = parent.substream_keys(hi)[lo:hi]
        mean0, mean1 = _block_split_means(sample.values[None], keys[None], k)
        mean0, mean1 = mean0[0], mean1[0]
        delta = sq_norm(mean0 - mean1, axis=1)
        dist = sq_norm(thetas[:, None, :] - mean0[None, :, :], axis=2)
        stats = np.exp(0.5 * k * (dist - delta[None, :]))
        return {f"t{g}": stats[g] for g in range(points)}

    acc = _map_chunks(B, chunk, run_chunk, ctx.workers, ctx.dump)
    rows = []
    base = {k_: cell[k_] for k_ in ("d", "n", "B")}
    for g in range(points):
        a = acc[f"t{g}"]
        rows.append(
            SummaryRow(
                ctx.spec.experiment_id,
                dict(base, c=float(cs[g]), scaled_dist=float(scaled_dist[g]), analytic=float(analytic[g])),
                a.mean, a.se_mean(), a.count,
            )
        )
    return rows


def _exec_fig3(ctx: _RunContext, ci: int, cell: dict) -> list[SummaryRow]:
    n, d, alpha, p0, reps = cell["n"], cell["d"], cell["alpha"], cell["p0"], cell["reps"]
    stream = ctx.cell_stream(ci)
    k = part_size(n, p0)
    L = rg.log_threshold(alpha)
    theta = np.zeros(d)

    def run_chunk(lo: int, hi: int) -> dict:
        streams = [stream.substream(r) for r in range(lo, hi)]
        data = _simulate_block(streams, n, d, theta)
        keys = _split_keys_block(streams, 1)
        mean0, mean1 = _block_split_means(data, keys, k)
        delta = sq_norm(mean0[:, 0, :] - mean1[:, 0, :], axis=1)
        return {"sq_radius": (2.0 / k) * L + delta}

    acc = _map_chunks(reps, _chunk_reps(n, d, 1), run_chunk, ctx.workers, ctx.dump)
    a = acc["sq_radius"]
    analytic = rg.expected_sq_radius_split(alpha, d, n, k / n)
    return [
        SummaryRow(
            ctx.spec.experiment_id,
            dict(cell, m0=k, analytic=analytic),
            a.mean, a.se_mean(), a.count,
        )
    ]


def _exec_fig4(ctx: _RunContext, ci: int, cell: dict) -> list[SummaryRow]:
    d, x = cell["d"], cell["x"]
    L = 10.0**x
    bounds = rg.ratio_bounds_log(L, d)
    rows = [
        SummaryRow(ctx.spec.experiment_id, dict(cell, log_inv_alpha=L, quantity="lower"), bounds.lower, 0.0, 0),
        SummaryRow(ctx.spec.experiment_id, dict(cell, log_inv_alpha=L, quantity="upper"), bounds.upper, 0.0, 0),
    ]
    if L <= specfun.MAX_LOG_INV_ALPHA:
        expected = rg.ratio_expected_split_vs_classical(math.exp(-L), d)
        rows.append(
            SummaryRow(ctx.spec.experiment_id, dict(cell, log_inv_alpha=L, quantity="expected"), expected, 0.0, 0)
        )
    return rows


def _exec_fig5(ctx: _RunContext, ci: int, cell: dict) -> list[SummaryRow]:
    n, d, alpha, reps = cell["n"], cell["d"], cell["alpha"], cell["reps"]
    stream = ctx.cell_stream(ci)
    k = part_size(n, 0.5)
    L = rg.log_threshold(alpha)
    quantile = specfun.chi2_upper_quantile(alpha, d)
    theta = np.zeros(d)

    def run_chunk(lo: int, hi: int) -> dict:
        streams = [stream.substream(r) for r in range(lo, hi)]
        data = _simulate_block(streams, n, d, theta)
        keys = _split_keys_block(streams, 1)
        mean0, mean1 = _block_split_means(data, keys, k)
        delta = sq_norm(mean0[:, 0, :] - mean1[:, 0, :], axis=1)
        ratio = ((4.0 / n) * L + delta) / (quantile / n)
        return {"leq4": (ratio <= 4.0).astype(np.float64)}

    acc = _map_chunks(reps, _chunk_reps(n, d, 1), run_chunk, ctx.workers, ctx.dump)
    a = acc["leq4"]
    lower, upper, cond = rg.prob_ratio_leq4_bounds(alpha, d)
    return [
        SummaryRow(
            ctx.spec.experiment_id,
            dict(cell, lower=lower, upper=upper, condition_ok=cond),
            a.mean, a.se_proportion(), a.count,
        )
    ]


def _exec_fig6(ctx: _RunContext, ci: int, cell: dict) -> list[SummaryRow]:
    test, method, d, n, alpha = cell["test"], cell["method"], cell["d"], cell["n"], cell["alpha"]
    lam = cell["n_theta_sq"]
    theta_sq = lam / n
    base = dict(cell, theta_sq_norm=theta_sq)
    if method in ("exact", "approx"):
        fn = pw.power_classical if test == "classical" else pw.power_limiting_subsampling
        est = fn(theta_sq, n, d, alpha, method=method)
        return [SummaryRow(ctx.spec.experiment_id, base, est.value, est.stderr, 0)]
    theta = math.sqrt(theta_sq / d) * np.ones(d)
    est = pw.mc_power(
        test, theta, n, alpha, B=cell["B"], reps=cell["reps"],
        rng=ctx.cell_stream(ci), workers=ctx.workers,
    )
    return [SummaryRow(ctx.spec.experiment_id, base, est.value, est.stderr, cell["reps"])]


def _doughnut_chunk_fn(stream, method, theta, n, d, alpha, B, null):
    thresh = rg.log_threshold(alpha)
    quantile = specfun.chi2_upper_quantile(alpha, d)
    k = part_size(n, 0.5)

    def run_chunk(lo: int, hi: int) -> dict:
        streams = [stream.substream(r) for r in range(lo, hi)]
        data = _simulate_block(streams, n, d, theta)
        if method == "intersection":
            norms = np.sqrt(sq_norm(data.mean(axis=1), axis=1))
            gap = np.maximum(np.maximum(null.r_in - norms, norms - null.r_out), 0.0)
            return {"reject": (gap * gap > quantile / n).astype(np.float64)}
        keys = _split_keys_block(streams, B)
        mean0, mean1 = _block_split_means(data, keys, k)
        if method == "subsampled_split":
            values = dn._split_case_log_values(mean0, mean1, n, null)
            return {"reject": (log_mean_exp(values, axis=1) >= thresh).astype(np.float64)}
        values, cases = dn._hybrid_log_values(mean0, mean1, n, null)
        return {
            "reject": (log_mean_exp(values, axis=1) >= thresh).astype(np.float64),
            "frac_split_case": (cases == 0).mean(axis=1),
            "frac_unit_case": (cases == 1).mean(axis=1),
            "frac_ripr_case": (cases == 2).mean(axis=1),
        }

    return run_chunk


def _exec_fig7(ctx: _RunContext, ci: int, cell: dict) -> list[SummaryRow]:
    method, d, n, alpha = cell["method"], cell["d"], cell["n"], cell["alpha"]
    t, B, reps = cell["theta_norm"], cell["B"], cell["reps"]
    null = dn.AnnulusNull()
    if method == "intersection_exact":
        value = dn.intersection_power_exact(t, n, d, alpha, null)
        return [SummaryRow(ctx.spec.experiment_id, dict(cell), value, 0.0, 0)]
    theta = np.zeros(d)
    theta[0] = t
    fn = _doughnut_chunk_fn(ctx.cell_stream(ci), method, theta, n, d, alpha, B, null)
    acc = _map_chunks(reps, _chunk_reps(n, d, B if method != "intersection" else 1), fn, ctx.workers, ctx.dump)
    a = acc["reject"]
    extra = {}
    for name in ("frac_split_case", "frac_unit_case", "frac_ripr_case"):
        if name in acc:
            extra[name] = acc[name].mean
    return [
        SummaryRow(ctx.spec.experiment_id, dict(cell, **extra), a.mean, a.se_proportion(), a.count)
    ]


def _exec_figS2(ctx: _RunContext, ci: int, cell: dict) -> list[SummaryRow]:
    n, d, alpha, p0 = cell["n"], cell["d"], cell["alpha"], cell["p0"]
    sample = ctx.shared_sample(n, d)
    stream = ctx.cell_stream(ci)
    pair = split(sample, p0, stream.substream(1))
    thresh = rg.log_threshold(alpha)
    search = 10.0 * math.sqrt(rg.split_region(pair, n, alpha).sq_radius)
    boundary = rg.region_boundary_2d(
        _crossfit_member(pair, thresh), alpha, sample.mean, cell["rays"], cell["tol"], search
    )
    pts = boundary.points
    diameter = 0.0
    if pts.shape[0] >= 2:
        diffs = pts[:, None, :] - pts[None, :, :]
        diameter = float(np.sqrt(sq_norm(diffs, axis=2)).max())
    return [
        SummaryRow(ctx.spec.experiment_id, dict(cell, quantity="area"), boundary.polygon_area(), 0.0, 1),
        SummaryRow(ctx.spec.experiment_id, dict(cell, quantity="diameter"), diameter, 0.0, 1),
    ]


def _exec_figS3(ctx: _RunContext, ci: int, cell: dict) -> list[SummaryRow]:
    method, d, n, alpha, t = cell["method"], cell["d"], cell["n"], cell["alpha"], cell["theta_norm"]
    null = dn.AnnulusNull()
    if method == "exact":
        value = dn.intersection_power_exact(t, n, d, alpha, null)
        return [SummaryRow(ctx.spec.experiment_id, dict(cell), value, 0.0, 0)]
    theta = np.zeros(d)
    theta[0] = t
    fn = _doughnut_chunk_fn(ctx.cell_stream(ci), "intersection", theta, n, d, alpha, 1, null)
    acc = _map_chunks(cell["reps"], _chunk_reps(n, d, 1), fn, ctx.workers, ctx.dump)
    a = acc["reject"]
    return [SummaryRow(ctx.spec.experiment_id, dict(cell), a.mean, a.se_proportion(), a.count)]


def _exec_figS4(ctx: _RunContext, ci: int, cell: dict) -> list[SummaryRow]:
    d, n, alpha, t, B, reps = (
        cell["d"], cell["n"], cell["alpha"], cell["theta_norm"], cell["B"], cell["reps"]
    )
    null = dn.AnnulusNull()
    theta = np.zeros(d)
    theta[0] = t
    fn = _doughnut_chunk_fn(ctx.cell_stream(ci), "subsampled_hybrid", theta, n, d, alpha, B, null)
    acc = _map_chunks(reps, _chunk_reps(n, d, B), fn, ctx.workers, ctx.dump)
    rows = []
    for name in ("power", "frac_split_case", "frac_unit_case", "frac_ripr_case"):
        a = acc["reject"] if name == "power" else acc[name]
        se = a.se_proportion() if name == "power" else a.se_mean()
        rows.append(SummaryRow(ctx.spec.experiment_id, dict(cell, quantity=name), a.mean, se, a.count))
    return rows


_EXECUTORS = {
    "regions_fig1": _exec_fig1,
    "approx_fig2": _exec_fig2,
    "split_p0_fig3": _exec_fig3,
    "ratio_bounds_fig4": _exec_fig4,
    "ratio_prob_fig5": _exec_fig5,
    "power_fig6": _exec_fig6,
    "doughnut_fig7": _exec_fig7,
    "crossfit_p0_figS2": _exec_figS2,
    "intersect_power_figS3": _exec_figS3,
    "hybrid_cases_figS4": _exec_figS4,
}


def run(
    spec: ExperimentSpec,
    workers: int | None = None,
    dump: Callable[[str, int, np.ndarray], None] | None = None,
) -> list[SummaryRow]:
    """Execute every grid cell; a numeric failure inside one cell yields a
    diagnostic row for that cell instead of aborting the run."""
    ctx = _RunContext(spec, RngStream(spec.master_seed), workers, dump)
    executor = _EXECUTORS[spec.experiment_id]
    rows: list[SummaryRow] = []
    for ci, cell in enumerate(spec.grid):
        try:
            rows.extend(executor(ctx, ci, dict(cell)))
        except (NumericError, DomainError, KeyError, TypeError, ValueError) as exc:
            rows.append(
                SummaryRow(
                    spec.experiment_id, dict(cell), math.nan, math.nan, 0,
                    status=f"error:{type(exc).__name__}",
                )
            )
    return rows


def coverage_suite(
    d_list,
    n: int,
    alpha: float,
    reps: int,
    B: int,
    rng: RngStream,
    workers: int | None = None,
) -> list[SummaryRow]:
    """Empirical coverage of the true mean for all four set constructions.

    One row per (method, d); the universal sets must cover with probability
    at least ``1 - alpha`` while the classical sphere is exact.
    """
    thresh = rg.log_threshold(alpha)
    rows = []
    methods = ("classical", "split", "crossfit", "subsampling")
    for ci, (method, d) in enumerate((m, d) for d in d_list for m in methods):
        stream = rng.substream(ci)
        quantile = specfun.chi2_upper_quantile(alpha, d)
        k = part_size(n, 0.5)
        b_eff = B if method == "subsampling" else 1
        theta = np.zeros(d)

        def run_chunk(lo: int, hi: int, method=method, d=d, stream=stream, k=k, b_eff=b_eff, quantile=quantile, theta=theta) -> dict:
            streams = [stream.substream(r) for r in range(lo, hi)]
            data = _simulate_block(streams, n, d, theta)
            if method == "classical":
                covered = n * sq_norm(data.mean(axis=1), axis=1) <= quantile
                return {"covered": covered.astype(np.float64)}
            keys = _split_keys_block(streams, b_eff)
            mean0, mean1 = _block_split_means(data, keys, k)
            delta = sq_norm(mean0 - mean1, axis=2)
            logT = 0.5 * k * (sq_norm(mean0, axis=2) - delta)
            if method == "split":
                covered = logT[:, 0] < thresh
            elif method == "crossfit":
                swapped = 0.5 * (n - k) * (sq_norm(mean1, axis=2) - delta)
                covered = (np.logaddexp(logT[:, 0], swapped[:, 0]) - math.log(2.0)) < thresh
            else:
                covered = log_mean_exp(logT, axis=1) < thresh
            return {"covered": covered.astype(np.float64)}

        acc = _map_chunks(reps, _chunk_reps(n, d, b_eff), run_chunk, workers)
        a = acc["covered"]
        rows.append(
            SummaryRow(
                "coverage", dict(method=method, d=d, n=n, alpha=alpha, B=b_eff),
                a.mean, a.se_proportion(), a.count,
            )
        )
    return rows


# ---------------------------------------------------------------------------
# CSV and spec files
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, bool) or isinstance(value, np.bool_):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (np.floating,)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def rows_to_csv(rows: list[SummaryRow], path) -> None:
    """Write SummaryRows with a header; column order is first-seen cell keys
    followed by the estimate block, deterministic for a given spec."""
    if not rows:
        raise DomainError("no rows to write")
    cell_cols: list[str] = []
    for row in rows:
        for key in row.cell:
            if key not in cell_cols:
                cell_cols.append(key)
    columns = ["experiment"] + cell_cols + ["estimate", "stderr", "reps_used", "status"]
    lines = [",".join(columns)]
    for row in rows:
        rendered = [row.experiment_id]
        rendered += [_fmt(row.cell[c]) if c in row.cell else "" for c in cell_cols]
        rendered += [_fmt(row.estimate), _fmt(row.stderr), str(row.reps_used), row.status]
        lines.append(",".join(rendered))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def load_spec_file(path) -> tuple[ExperimentSpec, int | None]:
    """Read a JSON spec document: experiment_id, seed, optional workers and
    axis overrides, or an explicit grid."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DomainError(f"cannot read spec file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DomainError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise DomainError(f"{path}: expected a JSON object")
    try:
        experiment_id = doc["experiment_id"]
        seed = int(doc["seed"])
    except KeyError as exc:
        raise DomainError(f"{path}: missing required key {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise DomainError(f"{path}: seed must be an integer") from exc
    workers = doc.get("workers")
    if workers is not None:
        try:
            workers = int(workers)
        except (TypeError, ValueError) as exc:
            raise DomainError(f"{path}: workers must be an integer") from exc
    if "grid" in doc:
        grid = doc["grid"]
        if not isinstance(grid, list) or not all(isinstance(c, dict) for c in grid):
            raise DomainError(f"{path}: grid must be a list of objects")
        spec = ExperimentSpec(experiment_id, tuple(grid), seed)
    else:
        overrides = doc.get("overrides", {})
        if not isinstance(overrides, dict):
            raise DomainError(f"{path}: overrides must be an object")
        spec = build_spec(experiment_id, seed, **overrides)
    return spec, workers
