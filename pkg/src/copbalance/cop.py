"""Center-of-pressure estimation from four calibrated pad forces per foot.

Per-foot CoP is the force-weighted centroid of the pad positions in a
foot-local frame with pads at the corners (+/-1, +/-1).  The robot-level
CoP fuses both feet by force-weighting each foot's CoP after shifting it
by the foot's offset on the robot X axis (left at -1, right at +1), which
yields the robot frame X in [-2, 2] and Y in [-1, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LEFT = "left"
RIGHT = "right"

# Pad order: front-left, front-right, back-left, back-right (y+ toward toes).
DEFAULT_PAD_POSITIONS = ((-1.0, 1.0), (1.0, 1.0), (-1.0, -1.0), (1.0, -1.0))

# Below this total force the foot (or robot) counts as lifted and CoP is (0,0).
DEFAULT_DEADBAND_G = 20.0

FOOT_OFFSET_X = {LEFT: -1.0, RIGHT: 1.0}


@dataclass(frozen=True)
class PadGeometry:
    """Pad coordinates in the foot-local normalized frame."""

    positions: tuple[tuple[float, float], ...] = DEFAULT_PAD_POSITIONS

    def __post_init__(self) -> None:
        if len(self.positions) != 4:
            raise ValueError("geometry needs exactly 4 pads")
        pts = {tuple(p) for p in self.positions}
        if len(pts) != 4:
            raise ValueError("pad positions must be distinct")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.positions, dtype=float)


@dataclass(frozen=True)
class FootCopSample:
    """Per-foot total force and CoP, the telemetry payload."""

    foot: str
    f_total_g: float
    x_cop: float
    y_cop: float
    per_cell_g: tuple[float, float, float, float]
    timestamp_ms: int = 0

    def __post_init__(self) -> None:
        if self.foot not in (LEFT, RIGHT):
            raise ValueError(f"foot must be '{LEFT}' or '{RIGHT}'")


@dataclass(frozen=True)
class RobotCop:
    """Fused robot-frame CoP: X in [-2, 2], Y in [-1, 1]."""

    f_total_g: float
    x: float
    y: float


def foot_cop(
    per_cell_masses_g,
    geometry: PadGeometry = PadGeometry(),
    foot: str = LEFT,
    timestamp_ms: int = 0,
    deadband_g: float = DEFAULT_DEADBAND_G,
) -> FootCopSample:
    """Force-weighted centroid of the pad positions.

    Negative masses (sensor noise) are clamped to 0 before use so the CoP
    stays inside the pad hull.  Below the deadband the CoP reads (0, 0)
    while f_total keeps the measured (clamped) sum.
    """
    masses = np.maximum(np.asarray(per_cell_masses_g, dtype=float), 0.0)
    if masses.shape != (4,):
        raise ValueError("expected 4 per-cell masses")
    # fsum: exactly rounded, so mirror-symmetric loads cancel exactly
    f_total = math.fsum(masses)
    if f_total < deadband_g:
        x, y = 0.0, 0.0
    else:
        pos = geometry.as_array()
        x = math.fsum(m * p for m, p in zip(masses, pos[:, 0])) / f_total
        y = math.fsum(m * p for m, p in zip(masses, pos[:, 1])) / f_total
    return FootCopSample(
        foot=foot,
        f_total_g=f_total,
        x_cop=x,
        y_cop=y,
        per_cell_g=tuple(float(m) for m in masses),
        timestamp_ms=timestamp_ms,
    )


def robot_cop(
    left: FootCopSample,
    right: FootCopSample,
    foot_offset_x: float = 1.0,
    deadband_g: float = DEFAULT_DEADBAND_G,
) -> RobotCop:
    """Fuse both feet: F = F_L + F_R and the force-weighted mean of the
    per-foot CoP terms, X terms mapped to the robot frame first.

    With the whole robot lifted (total below deadband) the CoP is (0, 0).
    """
    f_total = left.f_total_g + right.f_total_g
    if f_total < deadband_g:
        return RobotCop(f_total_g=f_total, x=0.0, y=0.0)
    x_l = left.x_cop - foot_offset_x
    x_r = right.x_cop + foot_offset_x
    x = (left.f_total_g * x_l + right.f_total_g * x_r) / f_total
    y = (left.f_total_g * left.y_cop + right.f_total_g * right.y_cop) / f_total
    return RobotCop(f_total_g=f_total, x=float(x), y=float(y))
