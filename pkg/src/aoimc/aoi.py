"""
Closed-form age metrics for the three transmission schemes.
===========================================================

With Poisson generation (rate lambda), a zero-buffer non-preemptive LCFS
server and deterministic over-the-air time M, the delivered-update process
regenerates at every success and the average peak age (PAoI) and average
age (AoI) admit closed forms driven by the fading-averaged BLEP:

  no-retransmission over K combined links   ("nr"):  per-service error eps_K
  single link with ARQ retransmission       ("arq"): per-attempt error eps
  single link sending K back-to-back copies ("kr"):  per-burst error eps^K

The PAoI of the no-retransmission scheme is also characterized in
distribution: a point mass of zero below 2M and a shifted exponential with
rate lambda*(1 - eps_K) above it, which yields the violation probability
used as the tail-risk constraint by the connection-count optimizer.

Note: the shifted-exponential PAoI law ignores the service time burned by
failed cycles, so its mean 2M + 1/(lambda*(1-eps_K)) sits below the exact
average PAoI whenever eps_K > 0.  Both expressions are kept as printed;
the event simulator arbitrates (see tests).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DivergenceError
from .fbl import FblConfig, LinkBudget, avg_blep_mrc, avg_blep_single

__all__ = [
    "TrafficParams",
    "AoiMetrics",
    "metrics_nr",
    "metrics_arq",
    "metrics_kr",
    "paoi_limits_nr",
    "paoi_pdf",
    "paoi_cdf",
    "paoi_violation",
    "paoi_distribution_mean",
    "violation_bounds",
    "arq_nr_gap",
]

SCHEME_NR = "NR"
SCHEME_ARQ = "ARQ"
SCHEME_KR = "KR"


@dataclass(frozen=True)
class TrafficParams:
    """Arrival rate (packets/ms), service time M (ms), averaged BLEP and the
    scheme-dependent repetition/connection count."""

    arrival_rate: float
    service_time_ms: float
    avg_blep: float
    k: int = 1

    def __post_init__(self):
        if self.arrival_rate <= 0:
            raise ValueError(f"arrival_rate must be positive, got {self.arrival_rate}")
        if self.service_time_ms <= 0:
            raise ValueError(f"service_time_ms must be positive, got {self.service_time_ms}")
        if not 0.0 <= self.avg_blep <= 1.0:
            raise ValueError(f"avg_blep must be in [0, 1], got {self.avg_blep}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if 1.0 / self.arrival_rate < self.service_time_ms:
            # scheme comparisons assume 1/lambda >= M; metrics remain valid
            warnings.warn(
                "mean inter-arrival 1/lambda is below the service time; "
                "the ARQ-vs-NR ordering guarantee does not apply",
                stacklevel=2,
            )

    def replace_blep(self, eps: float) -> "TrafficParams":
        return TrafficParams(self.arrival_rate, self.service_time_ms, eps, self.k)


@dataclass(frozen=True)
class AoiMetrics:
    avg_aoi_ms: float
    avg_paoi_ms: float
    scheme: str


def _effective_success(eps: float, what: str) -> float:
    if eps >= 1.0:
        raise DivergenceError(f"{what}: average BLEP of 1 gives an infinite age")
    return 1.0 - eps


def _nr_closed_forms(lam: float, m: float, eps: float, what: str) -> tuple[float, float]:
    p = _effective_success(eps, what)
    paoi = (1.0 / lam + m) / p + m
    aoi = (1.0 + lam * m) * (1.0 + eps) / (2.0 * lam * p) + (
        1.0 + 2.0 * lam * m + 2.0 * lam**2 * m**2
    ) / (2.0 * lam + 2.0 * lam**2 * m)
    return aoi, paoi


def metrics_nr(tp: TrafficParams) -> AoiMetrics:
    """Average PAoI and AoI without retransmission (eps is the combined-link BLEP).

    PAoI:  (1/lambda + M)/(1 - eps) + M
    AoI:   (1+lam*M)(1+eps)/(2*lam*(1-eps)) + (1+2*lam*M+2*lam^2*M^2)/(2*lam+2*lam^2*M)
    """
    aoi, paoi = _nr_closed_forms(tp.arrival_rate, tp.service_time_ms, tp.avg_blep, "metrics_nr")
    return AoiMetrics(aoi, paoi, SCHEME_NR)


def metrics_arq(tp: TrafficParams) -> AoiMetrics:
    """Average PAoI and AoI with retransmit-until-success on a single link.

    Failed attempts restart immediately (no fresh waiting draw), so the
    service time is geometric with per-attempt error eps:
    PAoI = 2M/(1-eps) + 1/lambda.
    """
    lam, m, eps = tp.arrival_rate, tp.service_time_ms, tp.avg_blep
    p = _effective_success(eps, "metrics_arq")
    paoi = 2.0 * m / p + 1.0 / lam
    aoi = (2.0 * p + lam**2 * m**2 + 2.0 * lam * m * p) / (2.0 * lam * (p + lam * m)) + m * (
        1.0 + eps
    ) / p
    return AoiMetrics(aoi, paoi, SCHEME_ARQ)


def metrics_kr(tp: TrafficParams) -> AoiMetrics:
    """Average PAoI and AoI with K open-loop repetitions on a single link.

    The burst occupies K*M regardless of outcome and fails only if all K
    copies fail, so the formulas are the no-retransmission ones with
    M -> K*M and eps -> eps^K.
    """
    burst = tp.k * tp.service_time_ms
    eps_burst = tp.avg_blep**tp.k
    aoi, paoi = _nr_closed_forms(tp.arrival_rate, burst, eps_burst, "metrics_kr")
    return AoiMetrics(aoi, paoi, SCHEME_KR)


def paoi_limits_nr(
    tp: TrafficParams, cfg: FblConfig, budget: LinkBudget
) -> tuple[AoiMetrics, AoiMetrics]:
    """Extreme rows of the no-retransmission metrics over the connection count.

    Returns (metrics at K=1 with the single-link averaged BLEP,
    metrics in the K->infinity limit where the BLEP vanishes).  Average age
    metrics decrease monotonically between the two as K grows.
    """
    single = metrics_nr(tp.replace_blep(avg_blep_single(budget, cfg)))
    error_free = metrics_nr(tp.replace_blep(0.0))
    return single, error_free


def paoi_pdf(x, tp: TrafficParams):
    """Density of the no-retransmission PAoI: shifted exponential above 2M."""
    lam, m = tp.arrival_rate, tp.service_time_ms
    rate = lam * _effective_success(tp.avg_blep, "paoi_pdf")
    x_arr = np.asarray(x, dtype=float)
    out = np.where(x_arr > 2.0 * m, rate * np.exp(rate * (2.0 * m - x_arr)), 0.0)
    if np.ndim(x) == 0:
        return float(out)
    return out


def paoi_cdf(x, tp: TrafficParams):
    """CDF of the no-retransmission PAoI; 0 at or below 2M, -> 1 as x grows."""
    lam, m = tp.arrival_rate, tp.service_time_ms
    rate = lam * _effective_success(tp.avg_blep, "paoi_cdf")
    x_arr = np.asarray(x, dtype=float)
    out = np.where(x_arr > 2.0 * m, 1.0 - np.exp(rate * (2.0 * m - x_arr)), 0.0)
    if np.ndim(x) == 0:
        return float(out)
    return out


def paoi_violation(zeta_ms: float, tp: TrafficParams) -> float:
    """Probability that the PAoI exceeds the threshold: exp(lam*(1-eps)*(2M-zeta)).

    Stated for zeta > 2M; at or below that every peak violates, so the
    function warns and returns 1.
    """
    lam, m = tp.arrival_rate, tp.service_time_ms
    rate = lam * _effective_success(tp.avg_blep, "paoi_violation")
    if zeta_ms <= 2.0 * m:
        warnings.warn(
            f"PAoI threshold {zeta_ms} ms is at or below the 2M = {2 * m} ms floor; "
            "violation probability is 1",
            stacklevel=2,
        )
        return 1.0
    return math.exp(rate * (2.0 * m - zeta_ms))


def paoi_distribution_mean(tp: TrafficParams) -> float:
    """Mean of the shifted-exponential PAoI law, 2M + 1/(lam*(1-eps)).

    Differs from the exact average PAoI of :func:`metrics_nr` by the mean
    service time burned in failed cycles, M*eps/(1-eps).
    """
    lam, m = tp.arrival_rate, tp.service_time_ms
    rate = lam * _effective_success(tp.avg_blep, "paoi_distribution_mean")
    return 2.0 * m + 1.0 / rate


class ViolationBounds(NamedTuple):
    upper: float  # single connection, largest BLEP
    lower: float  # connection count -> infinity, error-free


def violation_bounds(
    tp: TrafficParams, cfg: FblConfig, budget: LinkBudget, zeta_ms: float | None = None
) -> ViolationBounds:
    """Range of the PAoI violation probability over the connection count.

    Lower bound substitutes a vanishing BLEP (K -> infinity); upper bound
    uses the single-link averaged BLEP.  ``zeta_ms`` defaults to nothing
    sensible, pass it explicitly.
    """
    if zeta_ms is None:
        raise ValueError("zeta_ms is required")
    lower = paoi_violation(zeta_ms, tp.replace_blep(0.0))
    upper = paoi_violation(zeta_ms, tp.replace_blep(avg_blep_single(budget, cfg)))
    return ViolationBounds(upper=upper, lower=lower)


def arq_nr_gap(tp: TrafficParams) -> float:
    """Average-PAoI gap (ARQ minus no-retransmission) at equal eps.

    (M - 1/lambda)/(1 - eps) + 1/lambda - M; non-positive whenever
    1/lambda >= M, i.e. retransmission never hurts the average peak age in
    the stable-arrival regime.
    """
    lam, m, eps = tp.arrival_rate, tp.service_time_ms, tp.avg_blep
    p = _effective_success(eps, "arq_nr_gap")
    return (m - 1.0 / lam) / p + 1.0 / lam - m


def avg_blep_for_connections(k: int, budget: LinkBudget, cfg: FblConfig) -> float:
    """Convenience: combined-link averaged BLEP at a given connection count."""
    return avg_blep_mrc(budget.with_connections(k), cfg)
