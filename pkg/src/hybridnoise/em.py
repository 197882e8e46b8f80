"""Expectation-maximization fitting of the truncated Gaussian mixture.

E-step responsibilities and log-likelihood are computed in log space; the
M-step uses the closed-form updates (mean and covariance stationary points,
Lagrange-constrained weights).  The fit loop records a per-iteration trace
and can drop SVG cluster snapshots along the way.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import numkit
from .errors import (
    DegeneratePointError,
    DimensionMismatchError,
    EmptyClusterError,
    InvalidParameterError,
    NotEstimableError,
    UnsupportedDimensionError,
)
from .noise_model import Dataset, TruncatedMixture

# Fixed work-partitioning granularity.  Chunk boundaries never depend on the
# thread count, so multithreaded runs are bitwise identical to serial ones.
CHUNK_ROWS = 4096


@dataclass(frozen=True)
class EmConfig:
    max_iters: int = 200
    ll_rel_tol: float = 1e-8
    cov_floor: float = 1e-6
    snapshot_every: int = 0
    snapshot_dir: Path | None = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise InvalidParameterError("max_iters must be >= 1")
        if not self.ll_rel_tol > 0:
            raise InvalidParameterError("ll_rel_tol must be positive")
        if self.cov_floor < 0:
            raise InvalidParameterError("cov_floor must be nonnegative")
        if self.snapshot_every < 0:
            raise InvalidParameterError("snapshot_every must be nonnegative")
        if self.snapshot_every > 0 and self.snapshot_dir is None:
            raise InvalidParameterError("snapshot_every > 0 requires snapshot_dir")


@dataclass(frozen=True)
class IterationRecord:
    mixture: TruncatedMixture
    log_likelihood: float
    effective_counts: np.ndarray


@dataclass(frozen=True)
class LambdaEstimate:
    """Photon-count estimate from fitted weights.

    ``from_w0`` inverts the zero-count mass (-ln w0); ``moment`` is the
    window-conditional mean shift index, reported as a secondary check.
    """

    from_w0: float
    moment: float


@dataclass(frozen=True)
class FitReport:
    iterations: list[IterationRecord]
    converged: bool
    iterations_run: int
    lambda_estimate: LambdaEstimate | None


def _chunked(n: int):
    for start in range(0, n, CHUNK_ROWS):
        yield start, min(start + CHUNK_ROWS, n)


def _weighted_log_densities(
    mixture: TruncatedMixture, data: Dataset, threads: int = 1
) -> np.ndarray:
    """(N, K) matrix of ln w_k + ln N(z_n; mu_k, Sigma_k)."""
    if data.dim != mixture.dim:
        raise DimensionMismatchError(
            f"data has dimension {data.dim}, mixture has {mixture.dim}"
        )
    out = np.empty((data.n, mixture.n_components))
    log_w = np.log(mixture.weights)

    def fill(bounds):
        start, stop = bounds
        block = data.rows[start:stop]
        for k in range(mixture.n_components):
            out[start:stop, k] = log_w[k] + numkit.mvn_logpdf_batch(
                block, mixture.means[k], mixture.covs[k]
            )

    bounds = list(_chunked(data.n))
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fill, bounds))
    else:
        for b in bounds:
            fill(b)
    return out


def _log_sum_exp_rows(logs: np.ndarray) -> np.ndarray:
    vmax = np.max(logs, axis=1)
    safe = np.where(np.isfinite(vmax), vmax, 0.0)
    out = safe + np.log(np.sum(np.exp(logs - safe[:, None]), axis=1))
    return np.where(np.isfinite(vmax), out, vmax)


def log_likelihood(mixture: TruncatedMixture, data: Dataset, threads: int = 1) -> float:
    """sum_n ln sum_k w_k N(z_n; mu_k, Sigma_k).

    Each inner sum uses log-sum-exp; the outer sum is a fixed-order pairwise
    reduction, so the result is independent of the thread count.
    """
    if mixture.n_components < 1:
        raise InvalidParameterError("mixture must have at least one component")
    per_point = _log_sum_exp_rows(_weighted_log_densities(mixture, data, threads))
    return float(np.sum(per_point))


def e_step(mixture: TruncatedMixture, data: Dataset, threads: int = 1) -> np.ndarray:
    """Posterior responsibilities, an (N, K) row-stochastic matrix."""
    logs = _weighted_log_densities(mixture, data, threads)
    denom = _log_sum_exp_rows(logs)
    bad = np.nonzero(~np.isfinite(denom))[0]
    if bad.size:
        raise DegeneratePointError(int(bad[0]))
    return np.exp(logs - denom[:, None])


def m_step(data: Dataset, gamma: np.ndarray, cfg: EmConfig, shift_indices=None) -> TruncatedMixture:
    """Closed-form parameter update from fixed responsibilities.

    Each covariance is taken around the freshly updated mean and gets
    cov_floor added to its diagonal; weights are N_k/N, renormalized to sum
    to 1 exactly.
    """
    gamma = np.asarray(gamma, dtype=float)
    if gamma.ndim != 2 or gamma.shape[0] != data.n:
        raise DimensionMismatchError("gamma must be (N, K) aligned with the data")
    n, k = gamma.shape
    counts = gamma.sum(axis=0)
    threshold = k * np.finfo(float).eps * n
    for j in range(k):
        if not counts[j] > threshold:
            raise EmptyClusterError(j, float(counts[j]))

    means = (gamma.T @ data.rows) / counts[:, None]
    covs = np.empty((k, data.dim, data.dim))
    for j in range(k):
        diff = data.rows - means[j]
        covs[j] = (gamma[:, j][:, None] * diff).T @ diff / counts[j]
        covs[j] = 0.5 * (covs[j] + covs[j].T)
        covs[j][np.diag_indices(data.dim)] += cfg.cov_floor

    weights = counts / n
    weights = weights / weights.sum()
    if shift_indices is None:
        shift_indices = np.arange(k)
    return TruncatedMixture(
        weights=weights,
        shift_indices=np.asarray(shift_indices, dtype=int),
        means=means,
        covs=covs,
        coverage=float(weights.sum()),
    )


def estimate_lambda(mixture: TruncatedMixture) -> LambdaEstimate:
    """Re-estimate the Poisson parameter from fitted weights.

    Primary rule: lambda = -ln(w0) where w0 is the weight of the component
    with shift index 0.  Weights are used as-is, without renormalization.
    """
    zero = np.nonzero(mixture.shift_indices == 0)[0]
    if zero.size == 0:
        raise NotEstimableError("mixture has no component with shift index 0")
    w0 = float(mixture.weights[zero[0]])
    if not (0.0 < w0 < 1.0):
        raise NotEstimableError(f"zero-shift weight {w0!r} is outside (0, 1)")
    moment = float(
        np.sum(mixture.shift_indices * mixture.weights) / np.sum(mixture.weights)
    )
    return LambdaEstimate(from_w0=-math.log(w0), moment=moment)


def fit(
    data: Dataset,
    init: TruncatedMixture,
    cfg: EmConfig = EmConfig(),
    threads: int = 1,
) -> FitReport:
    """Alternate E and M steps until the log-likelihood stalls.

    The trace starts with the initial mixture (its possibly sub-unit Poisson
    weights untouched) and appends one record per EM update.  Convergence is
    a relative log-likelihood change below cfg.ll_rel_tol.
    """
    if data.dim != init.dim:
        raise DimensionMismatchError(
            f"data has dimension {data.dim}, init mixture has {init.dim}"
        )
    current = init
    ll = log_likelihood(current, data, threads)
    gamma = e_step(current, data, threads)
    trace = [IterationRecord(current, ll, gamma.sum(axis=0))]
    _maybe_snapshot(cfg, 0, current, gamma, data)

    converged = False
    iterations_run = 0
    for it in range(1, cfg.max_iters + 1):
        try:
            current = m_step(data, gamma, cfg, shift_indices=init.shift_indices)
            gamma = e_step(current, data, threads)
        except (EmptyClusterError, DegeneratePointError) as exc:
            exc.args = (f"iteration {it}: {exc.args[0]}",) + exc.args[1:]
            raise
        new_ll = log_likelihood(current, data, threads)
        trace.append(IterationRecord(current, new_ll, gamma.sum(axis=0)))
        iterations_run = it
        _maybe_snapshot(cfg, it, current, gamma, data)
        if abs(new_ll - ll) <= cfg.ll_rel_tol * abs(ll):
            converged = True
            ll = new_ll
            break
        ll = new_ll

    try:
        lam_est = estimate_lambda(current)
    except NotEstimableError:
        lam_est = None
    return FitReport(
        iterations=trace,
        converged=converged,
        iterations_run=iterations_run,
        lambda_estimate=lam_est,
    )


def _maybe_snapshot(cfg: EmConfig, it: int, mixture, gamma, data) -> None:
    if cfg.snapshot_every > 0 and it % cfg.snapshot_every == 0:
        cfg.snapshot_dir.mkdir(parents=True, exist_ok=True)
        snapshot(mixture, gamma, data, Path(cfg.snapshot_dir) / f"iter_{it:04}.svg")


def report_to_json_dict(report: FitReport) -> dict:
    """JSON-serializable form of a FitReport (the handoff file schema)."""
    return {
        "iterations": [
            {
                "ll": rec.log_likelihood,
                "weights": rec.mixture.weights.tolist(),
                "means": rec.mixture.means.tolist(),
                "covs": rec.mixture.covs.tolist(),
                "Nk": np.asarray(rec.effective_counts).tolist(),
            }
            for rec in report.iterations
        ],
        "converged": report.converged,
        "iterations_run": report.iterations_run,
        "lambda_hat": None if report.lambda_estimate is None else report.lambda_estimate.from_w0,
        "lambda_hat_moment": None
        if report.lambda_estimate is None
        else report.lambda_estimate.moment,
    }


_PALETTE = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
]


def snapshot(mixture: TruncatedMixture, gamma: np.ndarray, data: Dataset, path) -> None:
    """Write a 2-D SVG scatter of the soft clustering.

    Points are colored by their argmax responsibility (lowest component
    ordinal wins ties); each component draws its Mahalanobis-radius-2
    covariance ellipse around the mean.
    """
    if data.dim != 2 or mixture.dim != 2:
        raise UnsupportedDimensionError("snapshots are only defined for 2-D data")
    gamma = np.asarray(gamma, dtype=float)
    labels = np.argmax(gamma, axis=1)

    width = height = 480.0
    margin = 30.0
    xs, ys = data.rows[:, 0], data.rows[:, 1]
    xmin, xmax = float(xs.min()), float(xs.max())
    ymin, ymax = float(ys.min()), float(ys.max())
    span = max(xmax - xmin, ymax - ymin, 1e-9)
    scale = (width - 2 * margin) / span

    def to_px(x, y):
        return margin + (x - xmin) * scale, height - margin - (y - ymin) * scale

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:g}" height="{height:g}" '
        f'viewBox="0 0 {width:g} {height:g}">',
        f'<rect width="{width:g}" height="{height:g}" fill="white"/>',
    ]
    for i in range(data.n):
        px, py = to_px(xs[i], ys[i])
        color = _PALETTE[labels[i] % len(_PALETTE)]
        parts.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="2" fill="{color}" fill-opacity="0.6"/>')
    for k in range(mixture.n_components):
        evals, evecs = np.linalg.eigh(mixture.covs[k])
        angle = math.degrees(math.atan2(evecs[1, 1], evecs[0, 1]))
        rx = 2.0 * math.sqrt(max(evals[1], 0.0)) * scale
        ry = 2.0 * math.sqrt(max(evals[0], 0.0)) * scale
        cx, cy = to_px(mixture.means[k][0], mixture.means[k][1])
        color = _PALETTE[k % len(_PALETTE)]
        parts.append(
            f'<ellipse cx="0" cy="0" rx="{rx:.2f}" ry="{ry:.2f}" fill="none" '
            f'stroke="{color}" stroke-width="2" '
            f'transform="translate({cx:.2f} {cy:.2f}) rotate({-angle:.2f})"/>'
        )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")
