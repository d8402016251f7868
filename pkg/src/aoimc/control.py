"""
LTI plant driven by stale state updates.
========================================

The controller never sees the current plant state directly: it receives
sensor packets whose age (in control steps) is dictated by the wireless
link, propagates the freshest delivered state forward through the open-loop
dynamics, adds the input history it applied itself, and closes the loop
with a one-step gain.  The resulting estimation error is exactly the
accumulated process noise over the staleness window,

    e_n = sum_{i=1..delta} A^(i-1) w_{n-i},

so the plant-state covariance grows with the age of the freshest update:

    Cov(x_n) = sum_{i=1..delta} A^i R_w A'^i + R_w.

That link between age and state risk is what lets a peak-age constraint
stand in for a state-safety constraint: the default "risky state" threshold
is calibrated as the 3.89-sigma level (two-sided 1e-4 Gaussian tail) of the
covariance evaluated at the peak-age threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PlantModel",
    "StateTrace",
    "control_gain_lsq",
    "covariance_from_aoi",
    "calibrate_state_threshold",
    "simulate_closed_loop",
    "aoi_trace_to_steps",
]

# z with P(|Z| > z) = 1e-4 for a standard Gaussian
_RISK_SIGMA = 3.8905918864131245


def control_gain_lsq(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, float]:
    """One-step gain G minimizing ||B G + A||_F, with the residual norm.

    Realizes the "-A/B" gain for non-square B through least squares:
    G = -(B'B)^(-1) B' A.  A zero residual means B G cancels A exactly and
    the closed loop reduces to x_{n+1} = A e_n + w_n.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if b.shape[0] != a.shape[0]:
        raise ValueError(f"A has {a.shape[0]} rows but B has {b.shape[0]}")
    if np.linalg.matrix_rank(b) < b.shape[1]:
        raise ValueError("B must have full column rank")
    gain, *_ = np.linalg.lstsq(b, a, rcond=None)
    gain = -gain
    residual = float(np.linalg.norm(b @ gain + a, ord="fro"))
    return gain, residual


@dataclass(frozen=True)
class PlantModel:
    """Discrete LTI plant x_{n+1} = A x_n + B u_n + w_n, w ~ N(0, R_w)."""

    a: np.ndarray
    b: np.ndarray
    noise_cov: np.ndarray
    timestep_ms: float
    gain: np.ndarray = None
    gain_residual: float = None
    state_threshold: float = None

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        b = np.atleast_2d(np.asarray(self.b, dtype=float))
        rw = np.atleast_2d(np.asarray(self.noise_cov, dtype=float))
        d = a.shape[0]
        if a.shape != (d, d):
            raise ValueError(f"A must be square, got {a.shape}")
        if b.shape[0] != d:
            raise ValueError(f"B must have {d} rows, got {b.shape}")
        if rw.shape != (d, d):
            raise ValueError(f"noise_cov must be {d}x{d}, got {rw.shape}")
        if not np.allclose(rw, rw.T, atol=1e-12):
            raise ValueError("noise_cov must be symmetric")
        if np.any(np.linalg.eigvalsh(rw) < -1e-12):
            raise ValueError("noise_cov must be positive semidefinite")
        if self.timestep_ms <= 0:
            raise ValueError("timestep_ms must be positive")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "noise_cov", rw)
        if self.gain is None:
            gain, residual = control_gain_lsq(a, b)
            object.__setattr__(self, "gain", gain)
            object.__setattr__(self, "gain_residual", residual)
        else:
            gain = np.atleast_2d(np.asarray(self.gain, dtype=float))
            object.__setattr__(self, "gain", gain)
            if self.gain_residual is None:
                object.__setattr__(
                    self, "gain_residual", float(np.linalg.norm(b @ gain + a, ord="fro"))
                )

    @property
    def dim(self) -> int:
        return self.a.shape[0]


def covariance_from_aoi(delta: int, plant: PlantModel) -> np.ndarray:
    """Plant-state covariance after running delta steps on a stale update.

    sum_{i=1..delta} A^i R_w A'^i + R_w; the empty sum at delta = 0 leaves
    the one-step noise floor.  The trace is non-decreasing in delta.
    """
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    a = plant.a
    total = plant.noise_cov.copy()
    term = plant.noise_cov
    for _ in range(int(delta)):
        term = a @ term @ a.T
        total += term
    return total


def estimation_error_cov(delta: int, plant: PlantModel) -> np.ndarray:
    """Covariance of the estimation error over a staleness window of delta
    steps: sum_{i=1..delta} A^(i-1) R_w A'^(i-1); zero at delta = 0."""
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    d = plant.dim
    total = np.zeros((d, d))
    term = plant.noise_cov.copy()
    for _ in range(int(delta)):
        total += term
        term = plant.a @ term @ plant.a.T
    return total


def calibrate_state_threshold(plant: PlantModel, paoi_threshold_ms: float) -> float:
    """Norm threshold marking a risky state: the 3.89-sigma level of the
    dominant mode of the state covariance at an age equal to the peak-age
    threshold (in control steps)."""
    delta = int(round(paoi_threshold_ms / plant.timestep_ms))
    cov = covariance_from_aoi(delta, plant)
    sigma_max = math.sqrt(float(np.linalg.eigvalsh(cov)[-1]))
    return _RISK_SIGMA * sigma_max


def _noise_factor(rw: np.ndarray) -> np.ndarray:
    """Factor F with F F' = R_w, tolerant of singular PSD matrices."""
    if not rw.any():
        return np.zeros_like(rw)
    try:
        return np.linalg.cholesky(rw)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(rw)
        return vecs @ np.diag(np.sqrt(np.clip(vals, 0.0, None)))


@dataclass
class StateTrace:
    states: np.ndarray  # (n_steps + 1, d)
    estimates: np.ndarray  # (n_steps, d)
    errors: np.ndarray  # (n_steps, d): state minus estimate
    inputs: np.ndarray  # (n_steps, q)
    aoi_steps: np.ndarray  # (n_steps,) staleness actually used (clamped to n)
    violations: np.ndarray  # (n_steps,) bool, ||x_n|| above the threshold
    threshold: float
    error_decomposition: np.ndarray | None = None  # noise-accumulation form of e_n

    @property
    def violation_freq(self) -> float:
        return float(np.count_nonzero(self.violations) / self.violations.size)


def simulate_closed_loop(
    plant: PlantModel,
    aoi_steps,
    noise_seed: int,
    n_steps: int,
    x0=None,
    track_error_decomposition: bool = False,
) -> StateTrace:
    """Run the estimator/controller loop against a given staleness sequence.

    At step n the controller knows the true state from delta_n steps ago
    (clamped to n so the horizon never outruns history) and its own applied
    inputs; the estimate propagates both forward:

        xhat_n = A^delta x_{n-delta} + sum_{j=1..delta} A^(j-1) B u_{n-j}

    The realized recursion x_{n+1} = A x_n + B u_n + w_n is simulated
    directly, so any least-squares residual in the gain feeds back through
    the estimate rather than being assumed away.

    With ``track_error_decomposition`` the noise-accumulation form of the
    estimation error is produced alongside (identical up to rounding).
    """
    aoi_steps = np.asarray(aoi_steps, dtype=np.int64)
    if aoi_steps.size < n_steps:
        raise ValueError(f"aoi_steps has {aoi_steps.size} entries, need {n_steps}")
    if np.any(aoi_steps < 0):
        raise ValueError("aoi_steps must be non-negative")
    d, q = plant.dim, plant.b.shape[1]
    rng = np.random.default_rng(noise_seed)
    noise = rng.standard_normal((n_steps, d)) @ _noise_factor(plant.noise_cov).T

    max_delta = int(min(aoi_steps[:n_steps].max(initial=0), n_steps))
    powers = [np.eye(d)]
    for _ in range(max_delta):
        powers.append(plant.a @ powers[-1])
    powers_b = [pw @ plant.b for pw in powers]  # A^j B, reused every step

    threshold = plant.state_threshold
    if threshold is None:
        raise ValueError(
            "plant.state_threshold is unset; calibrate it against the peak-age "
            "threshold with calibrate_state_threshold()"
        )

    states = np.zeros((n_steps + 1, d))
    if x0 is not None:
        states[0] = np.asarray(x0, dtype=float)
    estimates = np.zeros((n_steps, d))
    inputs = np.zeros((n_steps, q))
    errors = np.zeros((n_steps, d))
    decomp = np.zeros((n_steps, d)) if track_error_decomposition else None
    violations = np.zeros(n_steps, dtype=bool)

    a, b, gain = plant.a, plant.b, plant.gain
    clamped = np.minimum(aoi_steps[:n_steps], np.arange(n_steps))
    for n in range(n_steps):
        delta = int(clamped[n])
        xhat = powers[delta] @ states[n - delta]
        for j in range(1, delta + 1):
            xhat += powers_b[j - 1] @ inputs[n - j]
        u = gain @ xhat
        estimates[n] = xhat
        inputs[n] = u
        errors[n] = states[n] - xhat
        if decomp is not None:
            acc = np.zeros(d)
            for i in range(1, delta + 1):
                acc += powers[i - 1] @ noise[n - i]
            decomp[n] = acc
        violations[n] = float(np.linalg.norm(states[n])) > threshold
        states[n + 1] = a @ states[n] + b @ u + noise[n]

    return StateTrace(
        states=states,
        estimates=estimates,
        errors=errors,
        inputs=inputs,
        aoi_steps=clamped,
        violations=violations,
        threshold=threshold,
        error_decomposition=decomp,
    )


def aoi_trace_to_steps(trace: np.ndarray, timestep_ms: float, n_steps: int) -> np.ndarray:
    """Sample a continuous-time age trace into integer step counts.

    ``trace`` rows are (t_start, t_end, aoi_start, aoi_end) segments of the
    sawtooth; the age at t = n*timestep is floor-divided by the timestep.
    Sampling starts at the first segment boundary so the loop never sees
    the undefined pre-first-delivery age.
    """
    if timestep_ms <= 0:
        raise ValueError("timestep_ms must be positive")
    trace = np.asarray(trace, dtype=float)
    if trace.ndim != 2 or trace.shape[1] != 4:
        raise ValueError("trace must be (n, 4): t_start, t_end, aoi_start, aoi_end")
    t0 = trace[0, 0]
    times = t0 + np.arange(n_steps) * timestep_ms
    if times[-1] > trace[-1, 1] + 1e-9:
        raise ValueError(
            f"trace ends at {trace[-1, 1]:.6g} ms but {n_steps} steps need "
            f"{times[-1]:.6g} ms"
        )
    idx = np.clip(np.searchsorted(trace[:, 0], times, side="right") - 1, 0, len(trace) - 1)
    span = trace[idx, 1] - trace[idx, 0]
    frac = np.divide(times - trace[idx, 0], span, out=np.zeros_like(times), where=span > 0)
    ages = trace[idx, 2] + frac * (trace[idx, 3] - trace[idx, 2])
    return np.floor_divide(ages, timestep_ms).astype(np.int64)
