"""Simulated single-support plant: frontal-plane inverted pendulum with
joint-driven CoM shift, 8-pad ground-reaction synthesis, keyframe motion
playback and the sustained-CoP-excursion fall criterion.

Conventions (robot frame, +X toward the robot's right):
  * positive surface tilt rolls the robot toward +X;
  * roll angle is measured from the surface normal, positive toward +X;
  * joint angles are servo-frame: a positive compensation angle leans the
    robot (and shifts its CoM) toward +X;
  * feet are adjacent: left foot spans [-2W, 0], right foot [0, +2W] in
    physical meters, so one normalized robot-frame unit equals the foot
    half width W and foot centers sit at -1/+1 exactly.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from copbalance import _kernels
from copbalance.control import JOINT_FACTORS, JOINT_NAMES
from copbalance.cop import LEFT, RIGHT

SUBSTEP_S = 0.005  # fixed physics substep

DOUBLE = "double"

SUPPORT_CODES = {DOUBLE: _kernels.SUPPORT_DOUBLE,
                 LEFT: _kernels.SUPPORT_LEFT,
                 RIGHT: _kernels.SUPPORT_RIGHT}


class MalformedScript(Exception):
    """Motion script is empty or structurally invalid."""


@dataclass(frozen=True)
class PlantParams:
    com_height_m: float = 0.30
    mass_kg: float = 3.0
    tilt_deg: float = 0.0
    foot_half_width_m: float = 0.03
    gravity: float = 9.81
    # lateral CoM shift per degree, per joint (torso, hip x2, ankle x2);
    # the hip dominates because it moves the CoM the most
    sensitivity_m_per_deg: tuple[float, float, float, float, float] = (
        0.0025, 0.004, 0.004, 0.0015, 0.0015,
    )
    # maps servo-frame angles (positive = lean toward +X) onto the restoring
    # CoM offset in the roll dynamics; see module docstring
    servo_direction: float = -1.0
    joint_slew_deg_s: float = 200.0
    fall_window_ms: float = 300.0
    roll_limit_rad: float = 0.5
    double_support_omega: float = 25.0
    double_support_zeta: float = 1.0

    def __post_init__(self) -> None:
        if self.com_height_m <= 0 or self.mass_kg <= 0:
            raise ValueError("com height and mass must be positive")
        if abs(self.tilt_deg) >= 15:
            raise ValueError("surface tilt limited to |deg| < 15")

    def as_vector(self) -> np.ndarray:
        vec = np.empty(15)
        vec[_kernels.COM_H] = self.com_height_m
        vec[_kernels.GRAV] = self.gravity
        vec[_kernels.TILT] = math.radians(self.tilt_deg)
        vec[_kernels.HALF_W] = self.foot_half_width_m
        vec[_kernels.SENS0:_kernels.SENS0 + 5] = self.sensitivity_m_per_deg
        vec[_kernels.SERVO_DIR] = self.servo_direction
        vec[_kernels.SLEW] = self.joint_slew_deg_s
        vec[_kernels.FALL_MS] = self.fall_window_ms
        vec[_kernels.ROLL_LIM] = self.roll_limit_rad
        vec[_kernels.DBL_W] = self.double_support_omega
        vec[_kernels.DBL_Z] = self.double_support_zeta
        return vec


@dataclass(frozen=True)
class PlantState:
    roll_angle_rad: float = 0.0
    roll_rate_rad_s: float = 0.0
    joint_angles_deg: tuple[float, float, float, float, float] = (0.0,) * 5
    support: str = DOUBLE
    fallen: bool = False
    t_ms: float = 0.0
    cop_excursion_timer_ms: float = 0.0

    def __post_init__(self) -> None:
        if self.support not in SUPPORT_CODES:
            raise ValueError(f"unknown support {self.support!r}")

    def as_vector(self) -> np.ndarray:
        vec = np.empty(9)
        vec[_kernels.ROLL] = self.roll_angle_rad
        vec[_kernels.RATE] = self.roll_rate_rad_s
        vec[_kernels.J0:_kernels.J0 + 5] = self.joint_angles_deg
        vec[_kernels.TIMER] = self.cop_excursion_timer_ms
        vec[_kernels.FALLEN] = 1.0 if self.fallen else 0.0
        return vec

    def _with_vector(self, vec: np.ndarray, t_ms: float) -> "PlantState":
        return PlantState(
            roll_angle_rad=float(vec[_kernels.ROLL]),
            roll_rate_rad_s=float(vec[_kernels.RATE]),
            joint_angles_deg=tuple(float(v) for v in vec[_kernels.J0:_kernels.J0 + 5]),
            support=self.support,
            fallen=bool(vec[_kernels.FALLEN] != 0.0) or self.fallen,
            t_ms=t_ms,
            cop_excursion_timer_ms=float(vec[_kernels.TIMER]),
        )


def com_offset_m(state: PlantState, params: PlantParams) -> float:
    """Restoring CoM offset entering the roll dynamics (the term subtracted
    in the pendulum acceleration)."""
    return float(_kernels.com_offset_m(state.as_vector(), params.as_vector()))


def x_com_m(state: PlantState, params: PlantParams) -> float:
    """Unclamped lateral CoM ground projection, robot frame, meters."""
    return float(
        _kernels.x_com_m(state.as_vector(), params.as_vector(),
                         SUPPORT_CODES[state.support])
    )


def support_polygon_m(support: str, params: PlantParams) -> tuple[float, float]:
    lo, hi = _kernels.polygon_m(SUPPORT_CODES[support], params.as_vector())
    return float(lo), float(hi)


def ground_truth_cop(state: PlantState, params: PlantParams) -> tuple[float, float]:
    """CoP implied by the state: CoM projection clamped into the support
    polygon, in normalized robot-frame units (x / half width, y fixed 0)."""
    lo, hi = support_polygon_m(state.support, params)
    x = min(max(x_com_m(state, params), lo), hi)
    return x / params.foot_half_width_m, 0.0


def advance(
    state: PlantState,
    params: PlantParams,
    joint_commands_deg,
    n_substeps: int,
    dt_s: float = SUBSTEP_S,
) -> PlantState:
    """Run n physics substeps toward the given servo-frame joint commands."""
    if dt_s <= 0:
        raise ValueError("substep must be positive")
    commands = np.asarray(joint_commands_deg, dtype=float)
    if commands.shape != (5,):
        raise ValueError("expected 5 joint commands")
    if not np.all(np.isfinite(commands)):
        raise ValueError("joint commands must be finite")
    vec = state.as_vector()
    _kernels.step_loop(
        vec, SUPPORT_CODES[state.support], commands, params.as_vector(),
        n_substeps, dt_s,
    )
    return state._with_vector(vec, state.t_ms + n_substeps * dt_s * 1000.0)


def plant_step(
    state: PlantState,
    params: PlantParams,
    joint_commands_deg,
    dt_s: float = SUBSTEP_S,
) -> PlantState:
    """One physics substep (5 ms by default)."""
    return advance(state, params, joint_commands_deg, 1, dt_s)


def fall_check(state: PlantState, params: PlantParams, dt_s: float = SUBSTEP_S
               ) -> PlantState:
    """Update the excursion timer / fallen latch without moving the plant.

    Uses the unclamped CoM projection; the CoP that sensors report is the
    clamped one, and the two must not be conflated.
    """
    vec = state.as_vector()
    _kernels.excursion_update(
        vec, params.as_vector(), SUPPORT_CODES[state.support], dt_s * 1000.0
    )
    return state._with_vector(vec, state.t_ms)


def set_support(state: PlantState, params: PlantParams, support: str) -> PlantState:
    """Switch contact configuration, re-basing the pendulum so the CoM
    ground projection and its lateral velocity stay continuous."""
    if support == state.support:
        return state
    if state.fallen:
        return replace(state, support=support)
    x_old = x_com_m(state, params)
    length = params.com_height_m
    tilt = math.radians(params.tilt_deg)
    pivot_new = float(_kernels.pivot_m(SUPPORT_CODES[support], params.as_vector()))
    offset = com_offset_m(state, params)
    sin_new = (x_old - pivot_new + offset) / length
    sin_new = min(max(sin_new, -1.0), 1.0)
    angle_new = math.asin(sin_new) - tilt
    cos_old = math.cos(state.roll_angle_rad + tilt)
    cos_new = math.cos(angle_new + tilt)
    rate_new = state.roll_rate_rad_s * (cos_old / cos_new) if cos_new != 0 else 0.0
    return replace(
        state,
        support=support,
        roll_angle_rad=angle_new,
        roll_rate_rad_s=rate_new,
        cop_excursion_timer_ms=0.0,
    )


# ---------------------------------------------------------------------------
# Ground reaction synthesis
# ---------------------------------------------------------------------------

# pad X coordinates in the foot-local frame, order: FL, FR, BL, BR
_PAD_X = np.array([-1.0, 1.0, -1.0, 1.0])
_PAD_Y = np.array([1.0, 1.0, -1.0, -1.0])


def _bilinear(force_g: float, x_local: float, y_local: float) -> np.ndarray:
    return force_g * (1.0 + _PAD_X * x_local) * (1.0 + _PAD_Y * y_local) / 4.0


def pad_forces(state: PlantState, params: PlantParams) -> np.ndarray:
    """Noise-free per-cell loads in grams (left cells 0-3, right 4-7).

    The robot's weight is split between the feet and spread bilinearly
    within each foot so the 8-cell weighted centroid lands exactly on the
    ground-truth (clamped) CoP.  A lifted foot reads zero; measurement
    noise belongs to the sensing chain, not here.
    """
    total_g = params.mass_kg * 1000.0
    w = params.foot_half_width_m
    lo, hi = support_polygon_m(state.support, params)
    x_star = min(max(x_com_m(state, params), lo), hi)
    out = np.zeros(8)
    if state.support == LEFT:
        out[:4] = _bilinear(total_g, (x_star + w) / w, 0.0)
    elif state.support == RIGHT:
        out[4:] = _bilinear(total_g, (x_star - w) / w, 0.0)
    else:
        share_r = min(max((x_star + w) / (2.0 * w), 0.0), 1.0)
        f_left = total_g * (1.0 - share_r)
        f_right = total_g * share_r
        # force split covers |x*| <= W; beyond that the loaded foot's own
        # CoP shifts to make up the remainder
        local_l = (x_star + w) / w if share_r == 0.0 else 0.0
        local_r = (x_star - w) / w if share_r == 1.0 else 0.0
        out[:4] = _bilinear(f_left, local_l, 0.0)
        out[4:] = _bilinear(f_right, local_r, 0.0)
    return out


# ---------------------------------------------------------------------------
# Motion scripts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MotionFrame:
    """Target pose reached over duration_ms, holding the given support."""

    joints_deg: tuple[float, float, float, float, float]
    duration_ms: float
    support: str = DOUBLE

    def __post_init__(self) -> None:
        if self.duration_ms <= 0:
            raise MalformedScript("frame duration must be > 0")
        if self.support not in SUPPORT_CODES:
            raise MalformedScript(f"unknown support {self.support!r}")


@dataclass(frozen=True)
class MotionScript:
    frames: tuple[MotionFrame, ...]

    def __post_init__(self) -> None:
        if not self.frames:
            raise MalformedScript("script has no frames")

    @property
    def duration_ms(self) -> float:
        return sum(f.duration_ms for f in self.frames)

    def to_json(self) -> str:
        return json.dumps(
            {
                "frames": [
                    {
                        "joints": dict(zip(JOINT_NAMES, f.joints_deg)),
                        "duration_ms": f.duration_ms,
                        "support": f.support,
                    }
                    for f in self.frames
                ]
            },
            indent=2,
        )

    @staticmethod
    def from_json(text: str) -> "MotionScript":
        try:
            doc = json.loads(text)
            frames = tuple(
                MotionFrame(
                    joints_deg=tuple(float(fr["joints"].get(n, 0.0)) for n in JOINT_NAMES),
                    duration_ms=float(fr["duration_ms"]),
                    support=fr.get("support", DOUBLE),
                )
                for fr in doc["frames"]
            )
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise MalformedScript(f"bad script JSON: {exc}") from exc
        return MotionScript(frames=frames)

    @staticmethod
    def load(path: str | os.PathLike) -> "MotionScript":
        with open(path, "r", encoding="utf-8") as fh:
            return MotionScript.from_json(fh.read())


def play_motion(script: MotionScript, t_ms: float) -> tuple[np.ndarray, str]:
    """Joint targets and support phase at time t.

    Within a frame, targets interpolate linearly from the previous frame's
    pose to the frame's pose; the first frame is its own starting pose.
    Past the end the final frame holds.
    """
    prev = np.asarray(script.frames[0].joints_deg, dtype=float)
    start = 0.0
    for frame in script.frames:
        end = start + frame.duration_ms
        target = np.asarray(frame.joints_deg, dtype=float)
        if t_ms < end:
            alpha = (t_ms - start) / frame.duration_ms
            return prev + alpha * (target - prev), frame.support
        prev = target
        start = end
    last = script.frames[-1]
    return np.asarray(last.joints_deg, dtype=float), last.support


def standard_trial_script(
    lift_foot: str = RIGHT,
    sway_deg: float = 1.4,
    stand_ms: float = 500.0,
    shift_ms: float = 500.0,
    presettle_ms: float = 1000.0,
    lift_ms: float = 500.0,
    hold_ms: float = 3000.0,
    lower_ms: float = 500.0,
    settle_ms: float = 500.0,
) -> MotionScript:
    """Foot-lift test motion: stand, shift weight over the support foot,
    hold the shifted stance (the setpoint-capture window), lift, hold,
    lower, settle.

    ``sway_deg`` is distributed with the usual torso/hip/ankle factors and
    signed toward the support foot.
    """
    if lift_foot not in (LEFT, RIGHT):
        raise MalformedScript(f"lift_foot must be '{LEFT}' or '{RIGHT}'")
    support = LEFT if lift_foot == RIGHT else RIGHT
    sway_sign = 1.0 if support == RIGHT else -1.0
    sway = tuple(float(v) for v in JOINT_FACTORS * sway_sign * sway_deg)
    neutral = (0.0,) * 5
    return MotionScript(
        frames=(
            MotionFrame(neutral, stand_ms, DOUBLE),
            MotionFrame(sway, shift_ms, DOUBLE),
            MotionFrame(sway, presettle_ms, DOUBLE),
            MotionFrame(sway, lift_ms, support),
            MotionFrame(sway, hold_ms, support),
            MotionFrame(sway, lower_ms, support),
            MotionFrame(sway, settle_ms, DOUBLE),
        )
    )
