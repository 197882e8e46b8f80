"""Channel capacity of the Gaussian channel under truncated mixture noise.

The capacity combines a weight-entropy term, the received-signal
differential-entropy term, and a mixture cross-term evaluated between every
pair of noise components.  All logs are base 2; results are bits per use.
Weights enter unnormalized (coverage < 1), exactly as the truncation leaves
them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import numkit
from .errors import (
    DimensionMismatchError,
    GridMismatchError,
    InvalidParameterError,
    ParseError,
)
from .noise_model import TruncatedMixture, TruncationSkeleton

LOG2_E = math.log2(math.e)
LOG2_2PI_E = math.log2(2.0 * math.pi * math.e)


@dataclass(frozen=True)
class ScalarChannelParams:
    """Scalar-channel inputs: noise skeleton plus signal/noise variances."""

    skeleton: TruncationSkeleton
    sigma2_x: float
    sigma2_z2: float

    def __post_init__(self):
        if not (np.isfinite(self.sigma2_x) and self.sigma2_x > 0):
            raise InvalidParameterError(f"sigma2_x must be positive, got {self.sigma2_x!r}")
        if not (np.isfinite(self.sigma2_z2) and self.sigma2_z2 > 0):
            raise InvalidParameterError(f"sigma2_z2 must be positive, got {self.sigma2_z2!r}")
        if len(self.skeleton) < 1:
            raise InvalidParameterError("skeleton must have at least one component")


@dataclass(frozen=True)
class VectorChannelParams:
    """Vector-channel inputs: noise mixture and received-signal covariances."""

    mixture: TruncatedMixture
    sigma_y_covs: np.ndarray  # (K, M, M)

    def __post_init__(self):
        covs = np.asarray(self.sigma_y_covs, dtype=float)
        k, m = self.mixture.n_components, self.mixture.dim
        if covs.shape != (k, m, m):
            raise DimensionMismatchError(
                f"sigma_y_covs must have shape {(k, m, m)}, got {covs.shape}"
            )
        for j in range(k):
            numkit.cholesky(covs[j])
        object.__setattr__(self, "sigma_y_covs", covs)


@dataclass(frozen=True)
class CapacityCurve:
    snr_db: np.ndarray
    capacity_bits: np.ndarray
    fingerprint: str = ""

    def __post_init__(self):
        snr = np.asarray(self.snr_db, dtype=float)
        cap = np.asarray(self.capacity_bits, dtype=float)
        if snr.ndim != 1 or snr.shape != cap.shape or snr.size < 1:
            raise InvalidParameterError("curve needs parallel nonempty 1-D arrays")
        if np.any(np.diff(snr) <= 0):
            raise InvalidParameterError("snr_db grid must be strictly increasing")
        object.__setattr__(self, "snr_db", snr)
        object.__setattr__(self, "capacity_bits", cap)


@dataclass(frozen=True)
class ComparisonReport:
    grid: np.ndarray
    delta: np.ndarray  # capacity_a - capacity_b, per grid point
    a_dominates_b: bool
    b_dominates_a: bool
    sign_summary: dict

    @property
    def verdict(self) -> str:
        if bool(np.all(self.delta == 0.0)):
            return "equal"
        if self.a_dominates_b:
            return "a_dominates_b"
        if self.b_dominates_a:
            return "b_dominates_a"
        return "mixed"


def capacity_scalar(params: ScalarChannelParams) -> float:
    """Scalar channel capacity in bits.

    C = sum_i w_i [ -log2 w_i + 1/2 log2(2 pi e (sx2 + sz2))
                    + log2 sum_j w_j N(i - j; 0, 2 sz2) ],
    with i, j ranging over the skeleton's shift indices (not ordinals) and
    the inner sum in log space.
    """
    w = params.skeleton.weights
    idx = params.skeleton.shift_indices.astype(float)
    sz2 = params.sigma2_z2
    received_entropy = 0.5 * math.log2(2.0 * math.pi * math.e * (params.sigma2_x + sz2))
    log_norm = -0.5 * math.log(4.0 * math.pi * sz2)

    total = 0.0
    log_w = np.log(w)
    for i in range(w.size):
        d = idx[i] - idx
        cross_ln = numkit.log_sum_exp(log_w + log_norm - d * d / (4.0 * sz2))
        total += w[i] * (-math.log2(w[i]) + received_entropy + cross_ln * LOG2_E)
    return total


def capacity_vector(params: VectorChannelParams) -> float:
    """Vector channel capacity in bits; reduces to capacity_scalar at M=1.

    C = sum_i w_i [ -log2 w_i + 1/2 log2((2 pi e)^M |Sigma_i^(y)|)
                    + log2 sum_j w_j N(mu_i; mu_j, Sigma_i + Sigma_j) ].
    """
    m = params.mixture
    log_w = np.log(m.weights)
    total = 0.0
    for i in range(m.n_components):
        lower = numkit.cholesky(params.sigma_y_covs[i])
        logdet_y = 2.0 * float(np.sum(np.log(np.diag(lower))))
        received_entropy = 0.5 * (m.dim * LOG2_2PI_E + logdet_y * LOG2_E)
        cross = [
            log_w[j] + numkit.mvn_logpdf(m.means[i], m.means[j], m.covs[i] + m.covs[j])
            for j in range(m.n_components)
        ]
        cross_ln = numkit.log_sum_exp(cross)
        total += m.weights[i] * (
            -math.log2(m.weights[i]) + received_entropy + cross_ln * LOG2_E
        )
    return total


def snr_db_to_linear(snr_db: float) -> float:
    return 10.0 ** (snr_db / 10.0)


def sweep(
    skeleton: TruncationSkeleton,
    sigma2_z2: float,
    snr_db_grid,
    fingerprint: str = "",
) -> CapacityCurve:
    """One capacity_scalar evaluation per SNR grid point.

    sigma2_z2 stays fixed; sigma2_x = SNR * sigma2_z2 with SNR = 10^(dB/10).
    """
    grid = np.asarray(snr_db_grid, dtype=float)
    if grid.size == 0:
        raise InvalidParameterError("SNR grid must be nonempty")
    if np.any(np.diff(grid) <= 0):
        raise InvalidParameterError("SNR grid must be strictly increasing")
    caps = np.array(
        [
            capacity_scalar(
                ScalarChannelParams(
                    skeleton=skeleton,
                    sigma2_x=snr_db_to_linear(db) * sigma2_z2,
                    sigma2_z2=sigma2_z2,
                )
            )
            for db in grid
        ]
    )
    return CapacityCurve(snr_db=grid, capacity_bits=caps, fingerprint=fingerprint)


def compare(curve_a: CapacityCurve, curve_b: CapacityCurve) -> ComparisonReport:
    """Per-point difference a - b with a pointwise-domination verdict."""
    if curve_a.snr_db.shape != curve_b.snr_db.shape or np.any(
        curve_a.snr_db != curve_b.snr_db
    ):
        raise GridMismatchError("curves are defined on different SNR grids")
    delta = curve_a.capacity_bits - curve_b.capacity_bits
    return ComparisonReport(
        grid=curve_a.snr_db.copy(),
        delta=delta,
        a_dominates_b=bool(np.all(delta > 0)),
        b_dominates_a=bool(np.all(delta < 0)),
        sign_summary={
            "positive": int(np.sum(delta > 0)),
            "negative": int(np.sum(delta < 0)),
            "zero": int(np.sum(delta == 0)),
        },
    )


def comparison_to_json_dict(report: ComparisonReport) -> dict:
    return {
        "grid": report.grid.tolist(),
        "delta": report.delta.tolist(),
        "a_dominates_b": report.a_dominates_b,
        "b_dominates_a": report.b_dominates_a,
        "sign_summary": report.sign_summary,
        "verdict": report.verdict,
    }


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_curve(curve: CapacityCurve, path) -> None:
    lines = ["snr_db,capacity_bits"]
    for db, cap in zip(curve.snr_db, curve.capacity_bits):
        lines.append(f"{_fmt(db)},{_fmt(cap)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_curve(path) -> CapacityCurve:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != "snr_db,capacity_bits":
        raise ParseError("expected header 'snr_db,capacity_bits'", line=1)
    snr, cap = [], []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        cells = line.split(",")
        if len(cells) != 2:
            raise ParseError(f"expected 2 columns, got {len(cells)}", line=lineno)
        try:
            snr.append(float(cells[0]))
            cap.append(float(cells[1]))
        except ValueError:
            raise ParseError(f"non-numeric cell in {line!r}", line=lineno) from None
    if not snr:
        raise ParseError("no rows")
    return CapacityCurve(snr_db=np.array(snr), capacity_bits=np.array(cap))
