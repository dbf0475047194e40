"""PID step, correction distribution, setpoint capture."""

import numpy as np
import pytest

from copbalance.control import (
    InsufficientData,
    JOINT_FACTORS,
    PidGains,
    PidState,
    Setpoints,
    capture_setpoint,
    distribute_correction,
    pid_step,
)
from copbalance.cop import RobotCop


class TestPidStep:
    def test_pure_proportional(self):
        out, _ = pid_step(PidState(), PidGains(kp=0.1), setpoint=0.0,
                          measurement=-0.5, dt=0.05)
        assert out == pytest.approx(0.05)

    def test_zero_error_fixed_point(self):
        state = PidState()
        for _ in range(100):
            out, state = pid_step(state, PidGains(kp=0.2, ki=0.1, kd=0.05),
                                  setpoint=0.3, measurement=0.3, dt=0.05)
            assert out == 0.0
        assert state.integral == 0.0

    def test_hand_evaluated_two_steps(self):
        gains = PidGains(kp=0.1, kd=0.005)
        state = PidState()
        out0, state = pid_step(state, gains, setpoint=0.2, measurement=0.0, dt=0.05)
        assert out0 == pytest.approx(0.1 * 0.2)  # first step: no derivative kick
        out1, state = pid_step(state, gains, setpoint=0.4, measurement=0.0, dt=0.05)
        assert out1 == pytest.approx(0.1 * 0.4 + 0.005 * (0.4 - 0.2) / 0.05)
        assert out1 == pytest.approx(0.06)

    def test_linear_map_when_pd_only(self):
        rng = np.random.default_rng(21)
        gains = PidGains(kp=0.37)
        for _ in range(200):
            sp, meas = rng.uniform(-2, 2, 2)
            out, _ = pid_step(PidState(), gains, sp, meas, dt=0.05)
            assert out == pytest.approx(0.37 * (sp - meas), rel=1e-12, abs=1e-15)

    def test_integral_clamp(self):
        gains = PidGains(ki=1.0)
        state = PidState()
        for _ in range(10_000):
            _, state = pid_step(state, gains, setpoint=1.0, measurement=0.0,
                                dt=0.05, integral_limit=10.0)
        assert state.integral == 10.0

    def test_first_step_after_reset_has_no_derivative(self):
        gains = PidGains(kd=5.0)
        out, _ = pid_step(PidState(), gains, setpoint=100.0, measurement=0.0, dt=0.01)
        assert out == 0.0  # kp = ki = 0, derivative suppressed

    def test_rejects_bad_dt(self):
        with pytest.raises(ValueError):
            pid_step(PidState(), PidGains(), 0.0, 0.0, dt=0.0)

    def test_rejects_negative_gains(self):
        with pytest.raises(ValueError):
            PidGains(kp=-0.1)


class TestDistributeCorrection:
    def test_published_factors(self):
        corr = distribute_correction(1.0, np.zeros(5))
        assert corr.torso_deg == pytest.approx(0.8)
        assert corr.hip_deg == pytest.approx(1.0)
        assert corr.ankle_deg == pytest.approx(0.4)
        assert corr.targets_deg == pytest.approx((0.8, 1.0, 1.0, 0.4, 0.4))

    def test_zero_correction(self):
        corr = distribute_correction(0.0, np.ones(5))
        assert corr.targets_deg == pytest.approx((1.0,) * 5)
        assert not corr.clamped

    def test_saturation(self):
        corr = distribute_correction(100.0, np.zeros(5), joint_limit_deg=30.0)
        assert corr.targets_deg == pytest.approx((30.0,) * 5)
        assert corr.clamped

    def test_ratio_preserved_before_clamp(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            theta = float(rng.uniform(-20, 20))
            if theta == 0.0:
                continue
            corr = distribute_correction(theta, np.zeros(5), joint_limit_deg=1e9)
            assert corr.torso_deg / theta == pytest.approx(0.8, rel=1e-12)
            assert corr.hip_deg / theta == pytest.approx(1.0, rel=1e-12)
            assert corr.ankle_deg / theta == pytest.approx(0.4, rel=1e-12)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            distribute_correction(float("nan"), np.zeros(5))

    def test_factor_vector_matches_joint_order(self):
        assert JOINT_FACTORS.tolist() == [0.8, 1.0, 1.0, 0.4, 0.4]


class TestCaptureSetpoint:
    def _cops(self, xs, ys):
        return [RobotCop(f_total_g=1000.0, x=x, y=y) for x, y in zip(xs, ys)]

    def test_constant_stream(self):
        sp = capture_setpoint(self._cops([0.09] * 25, [0.01] * 25))
        assert sp.cop_set_x == pytest.approx(0.09)
        assert sp.cop_set_y == pytest.approx(0.01)

    def test_zero_mean_noise_converges(self):
        rng = np.random.default_rng(33)
        xs = rng.normal(0.0, 0.05, size=5000)
        ys = rng.normal(0.0, 0.05, size=5000)
        sp = capture_setpoint(self._cops(xs, ys))
        assert abs(sp.cop_set_x) < 0.005
        assert abs(sp.cop_set_y) < 0.005

    def test_insufficient_data(self):
        with pytest.raises(InsufficientData):
            capture_setpoint(self._cops([0.0] * 10, [0.0] * 10))

    def test_setpoint_range_validation(self):
        with pytest.raises(ValueError):
            Setpoints(cop_set_x=2.5)
        with pytest.raises(ValueError):
            Setpoints(cop_set_y=1.5)
