"""Desk-scale center-of-pressure balance stack.

Calibrated load-cell sensing, per-foot and robot-level CoP estimation, a
lossy telemetry link, a PID roll controller with fixed joint distribution
factors, and a simulated single-support plant wired together by an
experiment harness.
"""

from copbalance.calibration import (
    CalibrationCoefficients,
    CalibrationStore,
    RawSample,
    estimate_mass,
    fit_two_point,
    load_store,
    save_store,
)
from copbalance.cop import FootCopSample, PadGeometry, RobotCop, foot_cop, robot_cop
from copbalance.control import (
    JointCorrection,
    PidGains,
    PidState,
    capture_setpoint,
    distribute_correction,
    pid_step,
)
from copbalance.plant import MotionScript, PlantParams, PlantState, plant_step

__version__ = "0.1.0"
