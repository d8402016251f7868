"""
Finite-blocklength block-error model over Rayleigh fading with MRC diversity.
=============================================================================

Short packets (L info bits in m channel uses) decode with a nonzero block
error probability (BLEP).  The conditional BLEP is modelled by the standard
piecewise-linear surrogate of the normal-approximation Q-function curve:

    eps(gamma) = 1                          for gamma <  w + 1/(2*phi)
               = phi*(gamma - w) + 1/2      for w + 1/(2*phi) <= gamma < w - 1/(2*phi)
               = 0                          for gamma >  w - 1/(2*phi)

with knee centre w = e^R - 1 and (negative) slope
phi = -sqrt(m / (2*pi*(e^(2R) - 1))), R = L/m.

K synchronous equal-power links with maximal-ratio combining give a received
SNR that is Erlang-K distributed with per-branch mean gamma_bar, so the
average BLEP is the Erlang-weighted integral of eps(gamma).  That integral
has an exact closed form in upper incomplete gamma functions; this module
provides the closed form, the single-link reduction, and an adaptive
quadrature oracle used to cross-check the closed form in tests.

Power quantities are carried in dBm; linear conversions are milliwatt
referenced (0 dBm = 1).  Only power ratios enter the physics, so the
reference cancels in the SNR.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate
from scipy.special import gammaincc

from .errors import NumericError

__all__ = [
    "FblConfig",
    "LinkBudget",
    "dbm_to_linear",
    "linear_to_dbm",
    "blep_instantaneous",
    "erlang_pdf",
    "upper_incomplete_gamma_int",
    "avg_blep_single",
    "avg_blep_mrc",
    "avg_blep_mrc_real",
    "avg_blep_quadrature",
]


def dbm_to_linear(p_dbm: float) -> float:
    """Convert dBm to linear milliwatts (0 dBm -> 1.0)."""
    return 10.0 ** (p_dbm / 10.0)


def linear_to_dbm(p_mw: float) -> float:
    """Convert linear milliwatts to dBm."""
    if p_mw <= 0:
        raise ValueError(f"power must be positive, got {p_mw}")
    return 10.0 * math.log10(p_mw)


@dataclass(frozen=True)
class FblConfig:
    """Packet and coding parameters of the short-packet link.

    Attributes
    ----------
    info_bits : payload size L in bits.
    blocklength : codeword length m in channel uses.
    symbol_duration_ms : duration of one channel use, ms.
    modulation_order : recorded for completeness; it does not enter any of
        the error-curve formulas.
    """

    info_bits: int
    blocklength: int
    symbol_duration_ms: float
    modulation_order: int = 2

    def __post_init__(self):
        if self.info_bits <= 0:
            raise ValueError(f"info_bits must be positive, got {self.info_bits}")
        if self.blocklength <= 0:
            raise ValueError(f"blocklength must be positive, got {self.blocklength}")
        if self.symbol_duration_ms <= 0:
            raise ValueError(
                f"symbol_duration_ms must be positive, got {self.symbol_duration_ms}"
            )

    @cached_property
    def coding_rate(self) -> float:
        """R = L/m in bits per channel use."""
        return self.info_bits / self.blocklength

    @cached_property
    def service_time_ms(self) -> float:
        """Deterministic over-the-air time of one codeword, M = m*Ts."""
        return self.blocklength * self.symbol_duration_ms

    @cached_property
    def knee_center(self) -> float:
        """Centre of the linear segment of the error curve, e^R - 1 (linear SNR)."""
        return math.exp(self.coding_rate) - 1.0

    @cached_property
    def knee_slope(self) -> float:
        """Slope of the linear segment, -sqrt(m / (2*pi*(e^(2R)-1))); negative."""
        return -math.sqrt(
            self.blocklength / (2.0 * math.pi * (math.exp(2.0 * self.coding_rate) - 1.0))
        )

    @cached_property
    def knee_lower(self) -> float:
        """SNR below which decoding always fails: knee_center + 1/(2*slope)."""
        return self.knee_center + 1.0 / (2.0 * self.knee_slope)

    @cached_property
    def knee_upper(self) -> float:
        """SNR above which decoding always succeeds: knee_center - 1/(2*slope)."""
        return self.knee_center - 1.0 / (2.0 * self.knee_slope)


@dataclass(frozen=True)
class LinkBudget:
    """Per-connection transmit power, noise level and connection count.

    Equal power per connection: the per-branch mean SNR is independent of K
    while the total radiated power scales linearly with K.
    """

    tx_power_dbm: float
    noise_dbm: float
    connections: int = 1

    def __post_init__(self):
        if not isinstance(self.connections, (int, np.integer)) or self.connections < 1:
            raise ValueError(f"connections must be an integer >= 1, got {self.connections}")

    @cached_property
    def mean_branch_snr(self) -> float:
        """Per-branch mean SNR, 10^((P_t - noise)/10), linear."""
        return 10.0 ** ((self.tx_power_dbm - self.noise_dbm) / 10.0)

    @cached_property
    def total_power_mw(self) -> float:
        """Total radiated power K * P_t in linear milliwatts."""
        return self.connections * dbm_to_linear(self.tx_power_dbm)

    def with_connections(self, k: int) -> "LinkBudget":
        return LinkBudget(self.tx_power_dbm, self.noise_dbm, k)


def blep_instantaneous(snr, cfg: FblConfig):
    """Conditional BLEP at received SNR, three-segment piecewise-linear curve.

    Accepts scalars or arrays; values are in [0, 1] and non-increasing in SNR.
    """
    snr_arr = np.asarray(snr, dtype=float)
    if np.any(snr_arr < 0):
        raise ValueError("snr must be non-negative")
    # clip kills the +-1 ulp dust the linear segment leaves at the knees
    mid = np.clip(cfg.knee_slope * (snr_arr - cfg.knee_center) + 0.5, 0.0, 1.0)
    out = np.where(snr_arr < cfg.knee_lower, 1.0, np.where(snr_arr > cfg.knee_upper, 0.0, mid))
    if np.ndim(snr) == 0:
        return float(out)
    return out


def erlang_pdf(snr, budget: LinkBudget):
    """Density of the MRC-combined SNR: Erlang with shape K, scale gamma_bar."""
    snr_arr = np.asarray(snr, dtype=float)
    if np.any(snr_arr < 0):
        raise ValueError("snr must be non-negative")
    k = budget.connections
    gb = budget.mean_branch_snr
    with np.errstate(divide="ignore", invalid="ignore"):
        logpdf = (
            (k - 1) * np.log(snr_arr)
            - snr_arr / gb
            - k * math.log(gb)
            - math.lgamma(k)
        )
        out = np.exp(logpdf)
    # the k=1 density is finite at the origin, higher shapes vanish there
    out = np.where(snr_arr == 0.0, (1.0 / gb if k == 1 else 0.0), out)
    if np.ndim(snr) == 0:
        return float(out)
    return out


def upper_incomplete_gamma_int(k: int, x: float) -> float:
    """Upper incomplete gamma of integer order via the exact finite series.

    Gamma(k, x) = (k-1)! * e^(-x) * sum_{j=0}^{k-1} x^j / j!,  k >= 1, x >= 0.
    """
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ValueError(f"order k must be an integer >= 1, got {k}")
    if x < 0:
        raise ValueError(f"x must be non-negative, got {x}")
    return math.factorial(k - 1) * _regularized_q_series(k, x)


def _regularized_q_series(k: int, x: float) -> float:
    """Regularized upper gamma Q(k, x) = e^(-x) * sum_{j<k} x^j/j!, integer k.

    The series identity holds for any real x (used internally); callers that
    need the x >= 0 contract enforce it themselves.
    """
    expnx = math.exp(-x)
    if expnx == 0.0:
        return 0.0
    term = 1.0
    total = 1.0
    for j in range(1, k):
        term *= x / j
        total += term
    return expnx * total


def _gamma_power_term(k: float, x: float) -> float:
    """x^k * e^(-x) / Gamma(k), evaluated in log space; 0 for x <= 0."""
    if x <= 0.0:
        return 0.0
    return math.exp(k * math.log(x) - x - math.lgamma(k))


def avg_blep_single(budget: LinkBudget, cfg: FblConfig, clamp: bool = True) -> float:
    """Fading-averaged BLEP of a single Rayleigh link.

    Closed form 1 + phi*gamma_bar*(w1 - w2), with w1/w2 the exponential CDF
    weights of the two knees.  The K >= 2 closed form reduces to this exactly
    at K = 1.  Clamped to [0, 1] unless ``clamp`` is False.
    """
    gb = budget.mean_branch_snr
    w1 = math.exp(-cfg.knee_lower / gb)
    w2 = math.exp(-cfg.knee_upper / gb)
    val = 1.0 + cfg.knee_slope * gb * (w1 - w2)
    return min(1.0, max(0.0, val)) if clamp else val


def _avg_blep_core(k: float, gb: float, cfg: FblConfig, q_upper) -> float:
    """Shared Erlang-averaged BLEP expression.

    Written with regularized upper gammas Q(k, .) and the normalized power
    term x^k e^(-x)/Gamma(k) rather than raw Gamma(k, .)/(k-1)!, so large k
    never materializes huge factorials.
    """
    phi = cfg.knee_slope
    x1 = cfg.knee_lower / gb
    x2 = cfg.knee_upper / gb
    q1 = q_upper(k, x1)
    q2 = q_upper(k, x2)
    return 1.0 - (
        q1
        + (0.5 - cfg.knee_center * phi + k * phi * gb) * (q2 - q1)
        + phi * gb * (_gamma_power_term(k, x2) - _gamma_power_term(k, x1))
    )


def avg_blep_mrc(budget: LinkBudget, cfg: FblConfig, clamp: bool = True) -> float:
    """Fading-averaged BLEP with K-branch MRC, exact closed form.

    Integrates the piecewise-linear error curve against the Erlang-K density
    of the combined SNR; incomplete gammas are evaluated with the exact
    integer-order series.  Clamped to [0, 1] unless ``clamp`` is False.
    """
    val = _avg_blep_core(budget.connections, budget.mean_branch_snr, cfg, _regularized_q_series)
    return min(1.0, max(0.0, val)) if clamp else val


def avg_blep_mrc_real(k: float, budget: LinkBudget, cfg: FblConfig) -> float:
    """Averaged BLEP with the connection count relaxed to a real k >= 1.

    Continuous extension used by the fractional-programming relaxation;
    coincides with :func:`avg_blep_mrc` at integer k.  Requires both knees
    to be positive (true whenever |phi| is moderate, e.g. the default
    coding setup).
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if cfg.knee_lower <= 0:
        raise ValueError("real-order form requires a positive lower knee")
    val = _avg_blep_core(
        float(k), budget.mean_branch_snr, cfg, lambda a, x: float(gammaincc(a, x))
    )
    return min(1.0, max(0.0, val))


def avg_blep_quadrature(budget: LinkBudget, cfg: FblConfig, abs_tol: float = 1e-8) -> float:
    """Quadrature oracle for the Erlang-averaged BLEP.

    Splits the integral exactly at the knees so each piece is a polynomial
    times the Erlang density: a saturated head [0, knee_lower] where the
    error curve is 1, and the linear midsection up to knee_upper.  Beyond
    the upper knee the integrand vanishes identically, so no tail term is
    needed.  Raises :class:`NumericError` if the combined quadrature error
    estimate exceeds ``abs_tol``.
    """
    val, err = _quadrature_with_error(budget, cfg)
    if err > abs_tol:
        raise NumericError(
            f"BLEP quadrature error estimate {err:.3e} exceeds {abs_tol:.1e} "
            f"(K={budget.connections}, mean_branch_snr={budget.mean_branch_snr:.6g})"
        )
    return min(1.0, max(0.0, val))


def _quadrature_with_error(budget: LinkBudget, cfg: FblConfig) -> tuple[float, float]:
    k = budget.connections
    gb = budget.mean_branch_snr
    phi = cfg.knee_slope
    center = cfg.knee_center
    lgk = math.lgamma(k)

    # integrate in x = gamma/gamma_bar so the density is the unit-scale
    # Gamma(k) law; breakpoints near its mass keep the adaptive rule honest
    # when the knees sit hundreds of scale lengths away
    def density(x):
        if x <= 0.0:
            return 0.0 if k > 1 else math.exp(-x)
        return math.exp((k - 1) * math.log(x) - x - lgk)

    def breakpoints(a, b):
        # doubling ladder from the bulk of the mass until the density dies;
        # everything past the last point truly is numerically zero
        pts = []
        x = max(0.5 * k, 1e-3)
        while x < b:
            if x > a:
                pts.append(x)
            if x > k and density(x) < 1e-22:
                break
            x *= 2.0
        return pts or None

    x_lo = max(cfg.knee_lower, 0.0) / gb
    x_hi = cfg.knee_upper / gb
    total, err_total = 0.0, 0.0
    if x_lo > 0.0:
        head, err = integrate.quad(
            density, 0.0, x_lo, points=breakpoints(0.0, x_lo),
            epsabs=1e-12, epsrel=1e-12, limit=400,
        )
        total += head
        err_total += err
    mid, err = integrate.quad(
        lambda x: density(x) * (phi * (gb * x - center) + 0.5),
        x_lo, x_hi, points=breakpoints(x_lo, x_hi),
        epsabs=1e-12, epsrel=1e-12, limit=400,
    )
    total += mid
    err_total += err
    return total, err_total
