"""
Event-driven Monte Carlo simulation of the age sawtooth.
========================================================

Ground-truth oracle for the closed-form age metrics and the PAoI
distribution.  Semantics:

* packets arrive as a Poisson process; all K diversity links act as one
  logical server (synchronous equal-power transmission);
* a packet arriving at an idle server enters service immediately; arrivals
  during service are discarded (zero buffer, non-preemptive LCFS collapses
  to blocking);
* an arrival landing exactly at a service-completion instant sees an idle
  server (completions are processed first; measure zero in continuous time
  but pinned down for determinism);
* scheme "nr-mrc": deterministic service M, then one decode attempt on the
  sum of K per-branch exponential SNR draws (maximal-ratio combining);
* scheme "arq": attempts of duration M on a single branch repeat until one
  decodes, feedback instantaneous, no fresh waiting draw between attempts;
* scheme "k-repetition": the burst occupies K*M and succeeds if at least
  one of K independently faded copies decodes on its own;
* on success the age resets to the packet's age (its service time); the
  peak immediately before the reset is recorded as a PAoI sample.

The time-averaged age is accumulated along two independent paths — the
per-cycle trapezoid decomposition sum(Y^2/2 + Y*S_prev) and a direct
piecewise-linear integration over every event boundary — which must agree
to float precision (checked in tests).

One seeded generator drives a run end to end, so equal (config, seed) is
bit-reproducible; parameter sweeps derive independent streams from
(master seed, run index) via :func:`run_seed`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError
from .fbl import FblConfig, LinkBudget, blep_instantaneous

__all__ = [
    "SCHEME_NR_MRC",
    "SCHEME_ARQ",
    "SCHEME_K_REPETITION",
    "SimConfig",
    "SimResult",
    "simulate",
    "run_seed",
    "EmpiricalCdf",
    "empirical_paoi_cdf",
    "ViolationEstimate",
    "empirical_violation",
]

SCHEME_NR_MRC = "nr-mrc"
SCHEME_ARQ = "arq"
SCHEME_K_REPETITION = "k-repetition"
_SCHEMES = (SCHEME_NR_MRC, SCHEME_ARQ, SCHEME_K_REPETITION)

_MAX_ARQ_ATTEMPTS = 1_000_000
_LOW_CONFIDENCE_SUCCESSES = 100


@dataclass(frozen=True)
class SimConfig:
    fbl: FblConfig
    link: LinkBudget
    arrival_rate: float
    scheme: str = SCHEME_NR_MRC
    n_packets: int = 100_000
    rng_seed: int = 0
    paoi_threshold_ms: float = 8.0
    forced_success_prob: float | None = None  # overrides channel sampling
    service_time_ms: float | None = None  # defaults to fbl.service_time_ms
    record_trace: bool = False

    def __post_init__(self):
        if self.scheme not in _SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}, expected one of {_SCHEMES}")
        if self.n_packets < 1:
            raise ValueError("n_packets must be >= 1")
        if self.arrival_rate <= 0:
            raise ValueError("arrival_rate must be positive")
        if self.forced_success_prob is not None and not 0.0 <= self.forced_success_prob <= 1.0:
            raise ValueError("forced_success_prob must be in [0, 1]")

    @property
    def service_time(self) -> float:
        return self.service_time_ms if self.service_time_ms is not None else self.fbl.service_time_ms


@dataclass
class SimResult:
    time_avg_aoi_ms: float
    time_avg_aoi_trace_ms: float  # same quantity, independent accounting path
    mean_paoi_ms: float
    paoi_samples: np.ndarray
    violation_freq: float
    arrivals: int
    drops: int
    successes: int
    failures: int
    sim_duration_ms: float
    seed: int
    low_confidence: bool
    trace: np.ndarray | None = field(default=None, repr=False)  # (t_start, t_end, aoi_start, aoi_end)


def run_seed(master_seed: int, run_index: int) -> int:
    """Independent, reproducible per-run seed for deterministic sweeps."""
    ss = np.random.SeedSequence((int(master_seed), int(run_index)))
    return int(ss.generate_state(1, np.uint64)[0])


def simulate(cfg: SimConfig) -> SimResult:
    rng = np.random.default_rng(cfg.rng_seed)
    lam = cfg.arrival_rate
    m_service = cfg.service_time
    k = cfg.link.connections
    gamma_bar = cfg.link.mean_branch_snr
    forced = cfg.forced_success_prob

    def decode_nr() -> bool:
        if forced is not None:
            return rng.random() < forced
        snr = rng.exponential(gamma_bar, size=k).sum()
        return rng.random() >= blep_instantaneous(snr, cfg.fbl)

    def decode_single() -> bool:
        if forced is not None:
            return rng.random() < forced
        snr = rng.exponential(gamma_bar)
        return rng.random() >= blep_instantaneous(snr, cfg.fbl)

    def serve(start: float) -> tuple[float, bool]:
        """Return (completion time, decoded?) for the packet entering at start."""
        if cfg.scheme == SCHEME_NR_MRC:
            return start + m_service, decode_nr()
        if cfg.scheme == SCHEME_ARQ:
            attempts = 1
            while not decode_single():
                attempts += 1
                if attempts > _MAX_ARQ_ATTEMPTS:
                    raise NumericError(
                        f"ARQ exceeded {_MAX_ARQ_ATTEMPTS} attempts for one packet; "
                        "per-attempt error probability is at or near 1"
                    )
            return start + attempts * m_service, True
        # k-repetition: burst of K copies, success if any copy decodes
        ok = False
        for _ in range(k):
            if decode_single():
                ok = True
        return start + k * m_service, ok

    arrivals = drops = successes = failures = 0
    # freshest delivered update: generation time and delivery time
    gen_latest = math.nan
    t_first_delivery = math.nan
    t_last_delivery = math.nan
    s_prev = math.nan  # service time of the previously delivered update
    area_cycles = 0.0  # path 1: per-cycle trapezoids Y^2/2 + Y*S_prev
    area_events = 0.0  # path 2: integration over every event boundary
    area_staged = 0.0  # path 2 area since the last delivery, committed on delivery
    integ_t = math.nan
    paoi: list[float] = []
    trace_rows: list[tuple[float, float, float, float]] = [] if cfg.record_trace else None

    def integrate_to(t: float):
        # both accounting windows close at the final delivery, so area past it
        # stays staged and is dropped when the run ends
        nonlocal area_staged, integ_t
        if not math.isnan(integ_t) and t > integ_t:
            a0 = integ_t - gen_latest
            a1 = t - gen_latest
            area_staged += 0.5 * (a0 + a1) * (t - integ_t)
            integ_t = t

    # pending service: (completion time, generation time, decoded?)
    pending: tuple[float, float, bool] | None = None
    next_arrival = rng.exponential(1.0 / lam)
    generated = 1

    while generated <= cfg.n_packets or pending is not None:
        take_completion = pending is not None and (
            generated > cfg.n_packets or pending[0] <= next_arrival
        )
        if take_completion:
            t_done, gen, ok = pending
            pending = None
            integrate_to(t_done)
            if ok:
                successes += 1
                area_events += area_staged
                area_staged = 0.0
                if math.isnan(t_last_delivery):
                    t_first_delivery = t_done
                else:
                    y = t_done - t_last_delivery
                    peak = t_done - gen_latest
                    assert abs(peak - (s_prev + y)) <= 1e-9 * max(1.0, peak)
                    paoi.append(peak)
                    area_cycles += 0.5 * y * y + y * s_prev
                    if trace_rows is not None:
                        trace_rows.append((t_last_delivery, t_done, s_prev, s_prev + y))
                gen_latest = gen
                t_last_delivery = t_done
                s_prev = t_done - gen
                integ_t = t_done
            else:
                failures += 1
        else:
            t_arr = next_arrival
            arrivals += 1
            integrate_to(t_arr)
            if pending is not None:  # server busy: zero buffer, discard
                drops += 1
            else:
                t_done, ok = serve(t_arr)
                pending = (t_done, t_arr, ok)
            generated += 1
            if generated <= cfg.n_packets:
                next_arrival = t_arr + rng.exponential(1.0 / lam)

    duration = t_last_delivery - t_first_delivery if successes >= 2 else math.nan
    paoi_arr = np.asarray(paoi, dtype=float)
    if successes >= 2 and duration > 0:
        aoi_cycles = area_cycles / duration
        aoi_events = area_events / duration
        mean_paoi = float(paoi_arr.mean())
        viol = float(np.count_nonzero(paoi_arr > cfg.paoi_threshold_ms) / paoi_arr.size)
    else:
        aoi_cycles = aoi_events = mean_paoi = viol = math.nan

    return SimResult(
        time_avg_aoi_ms=aoi_cycles,
        time_avg_aoi_trace_ms=aoi_events,
        mean_paoi_ms=mean_paoi,
        paoi_samples=paoi_arr,
        violation_freq=viol,
        arrivals=arrivals,
        drops=drops,
        successes=successes,
        failures=failures,
        sim_duration_ms=duration,
        seed=cfg.rng_seed,
        low_confidence=successes < _LOW_CONFIDENCE_SUCCESSES,
        trace=np.asarray(trace_rows, dtype=float) if trace_rows is not None else None,
    )


@dataclass(frozen=True)
class EmpiricalCdf:
    """Right-continuous empirical CDF over sorted samples."""

    xs: np.ndarray  # sorted
    n: int

    def __call__(self, x) -> np.ndarray | float:
        ranks = np.searchsorted(self.xs, np.asarray(x, dtype=float), side="right")
        out = ranks / self.n
        if np.ndim(x) == 0:
            return float(out)
        return out

    def ks_distance(self, cdf) -> float:
        """Kolmogorov-Smirnov distance to an analytic CDF callable."""
        f = np.asarray(cdf(self.xs), dtype=float)
        i = np.arange(1, self.n + 1)
        return float(np.max(np.maximum(i / self.n - f, f - (i - 1) / self.n)))


def empirical_paoi_cdf(result: SimResult) -> EmpiricalCdf:
    if result.paoi_samples.size == 0:
        raise ValueError("no PAoI samples recorded")
    return EmpiricalCdf(xs=np.sort(result.paoi_samples), n=int(result.paoi_samples.size))


class ViolationEstimate:
    """Empirical violation frequency with a Wilson 95% confidence interval."""

    __slots__ = ("frequency", "ci_low", "ci_high", "n")
    _Z = 1.959963984540054  # two-sided 95%

    def __init__(self, exceed: int, n: int):
        if n < 1:
            raise ValueError("need at least one sample")
        z2 = self._Z**2
        p = exceed / n
        center = (p + z2 / (2 * n)) / (1 + z2 / n)
        half = (self._Z / (1 + z2 / n)) * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n))
        self.frequency = p
        self.ci_low = max(0.0, center - half)
        self.ci_high = min(1.0, center + half)
        self.n = n

    def contains(self, p: float) -> bool:
        return self.ci_low <= p <= self.ci_high

    def __repr__(self):
        return (
            f"ViolationEstimate({self.frequency:.6g}, "
            f"ci=[{self.ci_low:.6g}, {self.ci_high:.6g}], n={self.n})"
        )


def empirical_violation(result: SimResult, zeta_ms: float) -> ViolationEstimate:
    """Fraction of recorded peaks strictly above the threshold, with CI."""
    if zeta_ms < 0:
        raise ValueError("zeta_ms must be non-negative")
    samples = result.paoi_samples
    if samples.size == 0:
        raise ValueError("no PAoI samples recorded")
    return ViolationEstimate(int(np.count_nonzero(samples > zeta_ms)), int(samples.size))
