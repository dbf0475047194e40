"""PID over CoP error and the fixed torso/hip/ankle correction split.

The correction angle is distributed to the five roll-compensation joints
with fixed factors: torso 0.8, each hip 1.0, each ankle 0.4.  The hip gets
the largest share because it moves the CoM laterally the most; the ankle
share is kept small to avoid peeling the foot off the ground.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import isfinite

import numpy as np

TORSO_FACTOR = 0.8
HIP_FACTOR = 1.0
ANKLE_FACTOR = 0.4

# Joint vector order used across the stack.
JOINT_NAMES = ("torso", "hip_l", "hip_r", "ankle_l", "ankle_r")
JOINT_FACTORS = np.array(
    [TORSO_FACTOR, HIP_FACTOR, HIP_FACTOR, ANKLE_FACTOR, ANKLE_FACTOR]
)

DEFAULT_INTEGRAL_LIMIT = 10.0
DEFAULT_JOINT_LIMIT_DEG = 30.0


class InsufficientData(Exception):
    """Setpoint capture window holds too few samples."""


@dataclass(frozen=True)
class PidGains:
    kp: float = 0.0
    ki: float = 0.0
    kd: float = 0.0

    def __post_init__(self) -> None:
        for name, g in (("kp", self.kp), ("ki", self.ki), ("kd", self.kd)):
            if not isfinite(g) or g < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {g}")


@dataclass(frozen=True)
class PidState:
    """Integrator and previous-error memory. ``initialized`` is False right
    after reset so the first step contributes no derivative kick."""

    integral: float = 0.0
    prev_error: float = 0.0
    initialized: bool = False


@dataclass(frozen=True)
class Setpoints:
    """Target CoP captured during stable double support."""

    cop_set_x: float = 0.0
    cop_set_y: float = 0.0

    def __post_init__(self) -> None:
        if not -2.0 <= self.cop_set_x <= 2.0:
            raise ValueError("cop_set_x outside robot frame [-2, 2]")
        if not -1.0 <= self.cop_set_y <= 1.0:
            raise ValueError("cop_set_y outside robot frame [-1, 1]")


def pid_step(
    state: PidState,
    gains: PidGains,
    setpoint: float,
    measurement: float,
    dt: float,
    integral_limit: float = DEFAULT_INTEGRAL_LIMIT,
) -> tuple[float, PidState]:
    """One discrete PID step: rectangular integration, backward difference.

    error = setpoint - measurement.  The integrator is clamped to
    +/-integral_limit (anti-windup); the first step after reset uses a zero
    derivative regardless of the error jump.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    error = setpoint - measurement
    integral = state.integral + error * dt
    integral = min(max(integral, -integral_limit), integral_limit)
    derivative = (error - state.prev_error) / dt if state.initialized else 0.0
    correction = gains.kp * error + gains.ki * integral + gains.kd * derivative
    return correction, PidState(integral=integral, prev_error=error, initialized=True)


@dataclass(frozen=True)
class JointCorrection:
    """Angle deltas applied to the five compensation joints, plus the
    clamped absolute targets that resulted."""

    theta_e_deg: float
    torso_deg: float
    hip_deg: float
    ankle_deg: float
    targets_deg: tuple[float, float, float, float, float]
    clamped: bool


def distribute_correction(
    theta_e_deg: float,
    current_deg,
    joint_limit_deg: float = DEFAULT_JOINT_LIMIT_DEG,
) -> JointCorrection:
    """Add the fixed-factor share of the correction to each joint.

    Both hips and both ankles receive the same-signed delta (frontal-plane
    lean).  Targets are clamped to +/-joint_limit_deg from neutral and any
    clamping is reported so trials can flag saturation.
    """
    if not isfinite(theta_e_deg):
        raise ValueError("correction must be finite")
    current = np.asarray(current_deg, dtype=float)
    if current.shape != (5,):
        raise ValueError("expected 5 joint angles (torso, hips, ankles)")
    raw_targets = current + JOINT_FACTORS * theta_e_deg
    targets = np.clip(raw_targets, -joint_limit_deg, joint_limit_deg)
    return JointCorrection(
        theta_e_deg=theta_e_deg,
        torso_deg=TORSO_FACTOR * theta_e_deg,
        hip_deg=HIP_FACTOR * theta_e_deg,
        ankle_deg=ANKLE_FACTOR * theta_e_deg,
        targets_deg=tuple(float(t) for t in targets),
        clamped=bool(np.any(targets != raw_targets)),
    )


def capture_setpoint(cop_samples, min_samples: int = 20) -> Setpoints:
    """Mean CoP over a stable double-support window."""
    xy = np.asarray([(s.x, s.y) for s in cop_samples], dtype=float)
    if xy.ndim != 2 or xy.shape[0] < min_samples:
        raise InsufficientData(
            f"need at least {min_samples} samples, got {0 if xy.ndim != 2 else xy.shape[0]}"
        )
    mean = xy.mean(axis=0)
    return Setpoints(cop_set_x=float(mean[0]), cop_set_y=float(mean[1]))
