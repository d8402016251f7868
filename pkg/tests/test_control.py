"""Plant/estimator tests: covariance law, gain, closed-loop identities."""

import dataclasses
import math

import numpy as np
import pytest

from aoimc.control import (
    PlantModel,
    aoi_trace_to_steps,
    calibrate_state_threshold,
    control_gain_lsq,
    covariance_from_aoi,
    estimation_error_cov,
    simulate_closed_loop,
)
from aoimc.fbl import FblConfig, LinkBudget
from aoimc.sim import SimConfig, simulate

A_REF = np.array([[1.17, 0.67], [0.67, 0.37]])
B_REF = np.array([[0.67], [0.37]])
RW_REF = 1e-6 * np.eye(2)


def ref_plant(threshold=10.0):
    return PlantModel(a=A_REF, b=B_REF, noise_cov=RW_REF, timestep_ms=0.5,
                      state_threshold=threshold)


class TestCovarianceFromAoi:
    def test_zero_age_is_noise_floor(self):
        assert np.array_equal(covariance_from_aoi(0, ref_plant()), RW_REF)

    def test_one_step_reference_matrix(self):
        # 1e-6 * (A A' + I), entries exact in decimal
        expect = np.array([[2.8178e-6, 1.0318e-6], [1.0318e-6, 1.5858e-6]])
        got = covariance_from_aoi(1, ref_plant())
        assert np.allclose(got, expect, rtol=1e-12, atol=1e-18)
        # independent route: explicit einsum accumulation
        alt = A_REF @ RW_REF @ A_REF.T + RW_REF
        assert np.allclose(got, alt, rtol=1e-14)

    def test_trace_nondecreasing(self):
        traces = [np.trace(covariance_from_aoi(d, ref_plant())) for d in range(0, 17)]
        assert all(traces[i + 1] >= traces[i] for i in range(len(traces) - 1))

    def test_symmetric_psd_up_to_64(self):
        for d in (0, 1, 2, 8, 32, 64):
            cov = covariance_from_aoi(d, ref_plant())
            assert np.allclose(cov, cov.T, atol=1e-12 * max(1.0, np.abs(cov).max()))
            assert np.all(np.linalg.eigvalsh(cov) >= -1e-12)

    def test_negative_age_rejected(self):
        with pytest.raises(ValueError):
            covariance_from_aoi(-1, ref_plant())


class TestControlGain:
    def test_scalar_division(self):
        gain, residual = control_gain_lsq(np.array([[1.3]]), np.array([[0.5]]))
        assert gain[0, 0] == pytest.approx(-2.6, rel=1e-12)
        assert residual == pytest.approx(0.0, abs=1e-12)

    def test_reference_plant_gain(self):
        gain, residual = control_gain_lsq(A_REF, B_REF)
        # normal equations by hand: B'B = 0.5858, B'A = [1.0318, 0.5858]
        assert gain[0, 0] == pytest.approx(-1.0318 / 0.5858, rel=1e-10)
        assert gain[0, 1] == pytest.approx(-1.0, rel=1e-10)
        assert residual > 0

    def test_orthogonal_columns_give_zero_gain(self):
        a = np.array([[0.0, 1.0], [0.0, 2.0]])
        b = np.array([[1.0], [0.0]])
        gain, _ = control_gain_lsq(a[:, :1], b)
        assert np.allclose(gain, 0.0)

    def test_rank_deficient_rejected(self):
        with pytest.raises(ValueError):
            control_gain_lsq(A_REF, np.zeros((2, 1)))


class TestClosedLoop:
    def test_noiseless_equilibrium(self):
        plant = PlantModel(a=A_REF, b=B_REF, noise_cov=np.zeros((2, 2)),
                           timestep_ms=0.5, state_threshold=1.0)
        tr = simulate_closed_loop(plant, np.full(500, 3), noise_seed=1, n_steps=500)
        assert np.allclose(tr.states, 0.0)
        assert np.allclose(tr.estimates, 0.0)
        assert tr.violation_freq == 0.0

    def test_error_decomposition_identity_scalar(self):
        # scalar plant: gain residual is exactly zero, the two error routes
        # must agree to rounding
        plant = PlantModel(a=np.array([[0.9]]), b=np.array([[0.5]]),
                           noise_cov=np.array([[1e-4]]), timestep_ms=1.0,
                           state_threshold=10.0)
        tr = simulate_closed_loop(plant, np.full(4000, 3), noise_seed=5,
                                  n_steps=4000, track_error_decomposition=True)
        assert np.max(np.abs(tr.errors - tr.error_decomposition)) <= 1e-9

    def test_error_decomposition_reference_plant(self):
        # the identity is structural: it holds regardless of the gain
        # residual, which only bounds how far the realized loop sits from
        # the idealized A e + w recursion
        plant = ref_plant()
        tr = simulate_closed_loop(plant, np.full(3000, 4), noise_seed=6,
                                  n_steps=3000, track_error_decomposition=True)
        bound = plant.gain_residual * np.linalg.norm(tr.states, axis=1).max()
        assert np.max(np.abs(tr.errors - tr.error_decomposition)) <= max(1e-12, bound)

    @pytest.mark.parametrize("delta", [1, 2, 4, 8])
    def test_error_covariance_at_forced_age(self, delta):
        plant = ref_plant()
        n = 200_000
        tr = simulate_closed_loop(plant, np.full(n, delta), noise_seed=100 + delta,
                                  n_steps=n)
        emp = (tr.errors[delta:].T @ tr.errors[delta:]) / (n - delta)
        theory = estimation_error_cov(delta, plant)
        assert np.trace(emp) == pytest.approx(np.trace(theory), rel=0.05)

    def test_perfect_link_state_covariance(self):
        # age 0: the estimate equals the state and only the gain residual
        # recirculates, so Cov(x) sits within a few percent of the noise floor
        plant = ref_plant()
        n = 300_000
        tr = simulate_closed_loop(plant, np.zeros(n, dtype=int), noise_seed=42, n_steps=n)
        emp = (tr.states[1:n].T @ tr.states[1:n]) / (n - 1)
        assert np.trace(emp) == pytest.approx(np.trace(covariance_from_aoi(0, plant)), rel=0.05)

    def test_violation_flagging(self):
        plant = dataclasses.replace(ref_plant(), state_threshold=1e-9)
        tr = simulate_closed_loop(plant, np.full(200, 1), noise_seed=3, n_steps=200)
        assert tr.violation_freq > 0.9  # everything beyond the origin violates

    def test_aoi_clamped_to_history(self):
        plant = ref_plant()
        tr = simulate_closed_loop(plant, np.full(10, 50), noise_seed=1, n_steps=10)
        assert np.array_equal(tr.aoi_steps, np.arange(10))


class TestThresholdCalibration:
    def test_scales_with_tail_level(self):
        plant = ref_plant()
        thr = calibrate_state_threshold(plant, 8.0)
        cov = covariance_from_aoi(16, plant)
        assert thr == pytest.approx(3.8905918864131245 * math.sqrt(np.linalg.eigvalsh(cov)[-1]))

    def test_monotone_in_age_threshold(self):
        plant = ref_plant()
        assert calibrate_state_threshold(plant, 8.0) > calibrate_state_threshold(plant, 4.0)


class TestAoiTraceToSteps:
    def test_constant_age_trace(self):
        trace = np.array([[0.0, 100.0, 3.2, 3.2]])
        steps = aoi_trace_to_steps(trace, 0.5, 50)
        assert np.all(steps == 6)

    def test_sawtooth_pattern(self):
        # resets every 2 ms from age 0: at 1 ms sampling the age alternates 0, 1
        rows = [[2.0 * i, 2.0 * (i + 1), 0.0, 2.0] for i in range(10)]
        steps = aoi_trace_to_steps(np.array(rows), 1.0, 16)
        assert np.array_equal(steps[:4], [0, 1, 0, 1])

    def test_short_trace_rejected(self):
        trace = np.array([[0.0, 5.0, 0.5, 5.5]])
        with pytest.raises(ValueError):
            aoi_trace_to_steps(trace, 1.0, 10)

    def test_against_simulator_time_average(self):
        fbl = FblConfig(160, 100, 0.005)
        cfg = SimConfig(fbl=fbl, link=LinkBudget(35.0, 23.0, 4), arrival_rate=1.0,
                        n_packets=40_000, rng_seed=77, forced_success_prob=1.0,
                        record_trace=True)
        res = simulate(cfg)
        n = int(res.sim_duration_ms / 0.5) - 2
        steps = aoi_trace_to_steps(res.trace, 0.5, n)
        # sampled-and-floored mean tracks the continuous time average to
        # within one control step
        assert steps.mean() * 0.5 == pytest.approx(res.time_avg_aoi_ms, abs=0.5)


class TestPlantValidation:
    def test_asymmetric_noise_rejected(self):
        with pytest.raises(ValueError):
            PlantModel(a=A_REF, b=B_REF, noise_cov=np.array([[1.0, 0.5], [0.0, 1.0]]),
                       timestep_ms=0.5)

    def test_indefinite_noise_rejected(self):
        with pytest.raises(ValueError):
            PlantModel(a=A_REF, b=B_REF, noise_cov=np.array([[1.0, 0.0], [0.0, -0.1]]),
                       timestep_ms=0.5)

    def test_gain_autocomputed(self):
        plant = PlantModel(a=A_REF, b=B_REF, noise_cov=RW_REF, timestep_ms=0.5)
        assert plant.gain.shape == (1, 2)
        assert plant.gain_residual == pytest.approx(
            float(np.linalg.norm(B_REF @ plant.gain + A_REF)), rel=1e-12
        )
