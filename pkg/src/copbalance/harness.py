"""Experiment harness: wires foot units, channel, controller and plant into
seeded trials, runs gain sweeps and emits success/RMS reports.

One tick = 50 ms: the controller reads the freshest telemetry, produces a
roll correction, the plant integrates ten 5 ms substeps toward the
commanded joints, then both foot units sample the pads and transmit.
Batch trials and the live service share this loop; there is no second
code path.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from copbalance import calibration as cal
from copbalance import plant as plant_mod
from copbalance import telemetry as tel
from copbalance.control import (
    JOINT_FACTORS,
    InsufficientData,
    PidGains,
    PidState,
    Setpoints,
    capture_setpoint,
    distribute_correction,
    pid_step,
)
from copbalance.cop import LEFT, RIGHT, FootCopSample, RobotCop, foot_cop, robot_cop
from copbalance.plant import DOUBLE, MotionScript, PlantParams, PlantState

TICK_MS = 50.0
SUBSTEPS_PER_TICK = 10

ALTERNATE = "alternate"


class ConfigError(Exception):
    pass


class EmptySeries(Exception):
    pass


def rms_error(series, setpoint: float) -> float:
    """Root-mean-square deviation of a series from a setpoint."""
    arr = np.asarray(series, dtype=float)
    if arr.size == 0:
        raise EmptySeries("rms over an empty series")
    return float(np.sqrt(np.mean((arr - setpoint) ** 2)))


@dataclass(frozen=True)
class ControlConfig:
    """Controller-side knobs beyond the raw PID gains.

    ``output_scale_deg`` converts the dimensionless PID output (gains are
    quoted in the usual small table values) into servo degrees; the default
    comes out of the bring-up sweep.  ``mode`` selects how corrections meet
    the scripted pose: 'incremental' accumulates them tick over tick (the
    original controller's joint update, and the only variant that builds a
    lasting counter-offset on this plant), 'offset' treats each correction
    as an absolute deflection from the scripted pose.
    """

    output_scale_deg: float = 21.0
    integral_limit: float = 10.0
    joint_limit_deg: float = 30.0
    mode: str = "incremental"
    pitch_mapping: bool = False
    setpoint_window: int = 20

    def __post_init__(self) -> None:
        if self.mode not in ("offset", "incremental"):
            raise ConfigError(f"mode must be 'offset' or 'incremental', got {self.mode!r}")


# Trial plant calibrated by bring-up: the hardware rig's mass and CoM
# height are unreported, and the module default (0.30 m) pairs the 50 ms
# sampling with a pendulum too fast for table-magnitude gains.  A taller,
# wider-footed plant puts the standard gain grid in its workable range.
def trial_plant() -> PlantParams:
    return PlantParams(com_height_m=1.10, foot_half_width_m=0.04)


@dataclass(frozen=True)
class TrialConfig:
    gains: PidGains = PidGains()
    tilt_deg: float = 3.0
    foot: str = ALTERNATE  # which foot lifts: left, right, or alternate per trial
    trials: int = 6
    seed: int = 0
    control_enabled: bool = True
    channel: tel.ChannelModel = tel.ChannelModel()
    control: ControlConfig = ControlConfig()
    plant: PlantParams = field(default_factory=trial_plant)
    noise_sigma_g: float = 5.0
    sway_deg: float | None = None  # None: computed from the plant, see auto_sway_deg
    sway_fraction: float = 0.92  # deliberate undershoot of the weight shift
    staleness_timeout_ms: float = tel.DEFAULT_STALENESS_TIMEOUT_MS

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.foot not in (LEFT, RIGHT, ALTERNATE):
            raise ConfigError(f"foot must be left, right or {ALTERNATE}")

    def lift_foot_for(self, trial_index: int) -> str:
        if self.foot == ALTERNATE:
            return RIGHT if trial_index % 2 == 0 else LEFT
        return self.foot

    def tilt_for(self, lift_foot: str) -> float:
        # surface tips toward the support foot so the uncontrolled robot
        # drifts over the outer edge, as in the physical incline test
        sign = 1.0 if lift_foot == LEFT else -1.0
        return sign * abs(self.tilt_deg)


@dataclass
class TrialRecord:
    t_ms: np.ndarray
    cop_x: np.ndarray
    cop_y: np.ndarray
    theta_e: np.ndarray
    torso: np.ndarray
    hip: np.ndarray
    ankle: np.ndarray
    fallen: np.ndarray  # 0/1 per tick
    single_support: np.ndarray  # 0/1 per tick, the RMS window
    setpoint: Setpoints = field(default_factory=Setpoints)
    outcome: str = "NotFall"
    rms: float = 0.0

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrialRecord):
            return NotImplemented
        arrays = ("t_ms", "cop_x", "cop_y", "theta_e", "torso", "hip", "ankle", "fallen")
        return all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays)


@dataclass(frozen=True)
class SweepRow:
    gains: PidGains
    falls: int
    not_falls: int
    success_pct: float
    mean_rms: float

    def __post_init__(self) -> None:
        if self.falls + self.not_falls <= 0:
            raise ConfigError("empty row")


@dataclass
class SweepReport:
    rows: list[SweepRow]
    trials_per_row: int

    def validate(self) -> None:
        for row in self.rows:
            if row.falls + row.not_falls != self.trials_per_row:
                raise ConfigError("row accounting broken: falls + not_falls != trials")


# ---------------------------------------------------------------------------
# Sensing chain
# ---------------------------------------------------------------------------

class FootUnit:
    """One simulated foot: four cells, fitted coefficients, CoP + codec."""

    def __init__(
        self,
        foot: str,
        cells: list[cal.SimulatedLoadCell],
        coeffs: list[cal.CalibrationCoefficients],
        rng: np.random.Generator,
    ):
        self.foot = foot
        self.cells = cells
        self.coeffs = coeffs
        self.rng = rng
        self.seq = 0

    def sample(self, true_grams: np.ndarray, t_ms: float) -> FootCopSample:
        est = np.empty(4)
        for i in range(4):
            counts = self.cells[i].counts_for(float(true_grams[i]), self.rng)
            est[i] = cal.estimate_mass(float(counts), self.coeffs[i])
        return foot_cop(est, foot=self.foot, timestamp_ms=int(t_ms))

    def transmit(self, sample: FootCopSample) -> bytes:
        data = tel.encode(sample, self.seq)
        self.seq = (self.seq + 1) & 0xFFFF
        return data


def build_foot_units(
    config: TrialConfig, measurement_seed: int
) -> tuple[FootUnit, FootUnit]:
    """Cells and coefficients are robot properties seeded by the base seed;
    per-sample measurement noise varies per trial."""
    bank = cal.default_cell_bank(config.seed, noise_sigma_g=config.noise_sigma_g)
    coeffs = [cal.calibrate_cell(cell, cell_id=i % 4) for i, cell in enumerate(bank)]
    meas_rng = np.random.default_rng(measurement_seed)
    left = FootUnit(LEFT, bank[:4], coeffs[:4], meas_rng)
    right = FootUnit(RIGHT, bank[4:], coeffs[4:], meas_rng)
    return left, right


# ---------------------------------------------------------------------------
# Control loop (shared by batch trials and the live service)
# ---------------------------------------------------------------------------

def auto_sway_deg(
    params: PlantParams, lift_foot: str, tilt_deg: float, fraction: float = 0.92
) -> float:
    """Weight-shift magnitude that parks the CoM near the support foot's
    center before the lift, like a hand-tuned pre-lift sway in a real
    motion.  ``fraction`` < 1 leaves the CoM deliberately short of the
    pivot: the residual offset is what the controller has to fight, and
    what topples the uncontrolled robot.  Returned in the trial script's
    convention (the script signs the sway toward the support foot)."""
    pivot = -params.foot_half_width_m if lift_foot == RIGHT else params.foot_half_width_m
    needed_offset = params.com_height_m * math.sin(math.radians(tilt_deg)) - pivot
    factor_sum = float(np.dot(params.sensitivity_m_per_deg, JOINT_FACTORS))
    script_sway_sign = 1.0 if lift_foot == LEFT else -1.0
    return fraction * needed_offset / (
        params.servo_direction * script_sway_sign * factor_sum
    )


class BalanceLoop:
    """Stepped simulation of the full chain at the 50 ms control period."""

    def __init__(
        self,
        config: TrialConfig,
        lift_foot: str,
        trial_seed: int,
        script: MotionScript | None = None,
        transport=None,
    ):
        self.config = config
        tilt = config.tilt_for(lift_foot)
        self.params = replace(config.plant, tilt_deg=tilt)
        sway = config.sway_deg
        if sway is None:
            sway = auto_sway_deg(self.params, lift_foot, tilt, config.sway_fraction)
        self.script = script or plant_mod.standard_trial_script(
            lift_foot=lift_foot, sway_deg=sway
        )
        self.state = PlantState()
        self.left_unit, self.right_unit = build_foot_units(config, trial_seed)
        # the packet hop: seeded loss/latency emulation by default, or a live
        # UDP transport injected by the service
        self.channel = transport or tel.Channel(
            replace(config.channel, seed=trial_seed + 31337)
        )
        self.receiver = tel.Receiver(staleness_timeout_ms=config.staleness_timeout_ms)
        self.pid_roll = PidState()
        self.pid_pitch = PidState()
        self.setpoint: Setpoints | None = None
        self.capture_buf: list[RobotCop] = []
        self.theta_e_deg = 0.0
        self.pitch_theta_e_deg = 0.0
        self.commands = np.zeros(5)
        self.pitch_commands = np.zeros(5)
        self.incremental_offsets = np.zeros(5)
        self.was_stale = False
        self.clamp_flag = False
        self.rows: list[dict] = []

    # -- controller -----------------------------------------------------

    def _controller(self, script_targets: np.ndarray, t_ms: float) -> np.ndarray:
        cfg = self.config
        if not cfg.control_enabled or self.setpoint is None:
            self.theta_e_deg = 0.0
            return script_targets
        try:
            feeds = self.receiver.poll(t_ms)
        except tel.NoDataYet:
            self.theta_e_deg = 0.0
            return script_targets
        (left_s, left_fresh) = feeds[LEFT]
        (right_s, right_fresh) = feeds[RIGHT]
        if not (left_fresh and right_fresh):
            # fail-safe: freeze output at the last value, reset the PID
            if not self.was_stale:
                self.pid_roll = PidState()
                self.pid_pitch = PidState()
                self.was_stale = True
            return self.commands
        self.was_stale = False
        measured = robot_cop(left_s, right_s)
        dt = TICK_MS / 1000.0
        out_roll, self.pid_roll = pid_step(
            self.pid_roll, cfg.gains, self.setpoint.cop_set_x, measured.x, dt,
            integral_limit=cfg.control.integral_limit,
        )
        out_pitch, self.pid_pitch = pid_step(
            self.pid_pitch, cfg.gains, self.setpoint.cop_set_y, measured.y, dt,
            integral_limit=cfg.control.integral_limit,
        )
        self.theta_e_deg = cfg.control.output_scale_deg * out_roll
        self.pitch_theta_e_deg = cfg.control.output_scale_deg * out_pitch
        if cfg.control.pitch_mapping:
            # pitch compensation mirrors the roll split onto the (unmodeled)
            # pitch servos; exposed for logging and the console only
            pitch_corr = distribute_correction(
                self.pitch_theta_e_deg, np.zeros(5), cfg.control.joint_limit_deg
            )
            self.pitch_commands = np.asarray(pitch_corr.targets_deg)
        if cfg.control.mode == "offset":
            corr = distribute_correction(
                self.theta_e_deg, script_targets, cfg.control.joint_limit_deg
            )
        else:
            corr = distribute_correction(
                self.theta_e_deg,
                self.incremental_offsets,
                cfg.control.joint_limit_deg,
            )
            self.incremental_offsets = np.asarray(corr.targets_deg)
            self.clamp_flag = corr.clamped
            raw = script_targets + self.incremental_offsets
            limit = cfg.control.joint_limit_deg
            return np.clip(raw, -limit, limit)
        self.clamp_flag = corr.clamped
        return np.asarray(corr.targets_deg)

    # -- one control period ----------------------------------------------

    def pose_at(self, t_ms: float) -> tuple[np.ndarray, str]:
        """Scripted pose and support for the tick starting at t; the live
        service overrides this with operator-driven targets."""
        return plant_mod.play_motion(self.script, t_ms)

    def tick(self) -> dict:
        """One 50 ms period: sense and transmit, control on the freshest
        delivered data, then integrate the plant toward the commands."""
        t = self.state.t_ms
        script_targets, support = self.pose_at(t)
        if support != self.state.support:
            if self.state.support == DOUBLE and self.setpoint is None:
                window = self.config.control.setpoint_window
                try:
                    self.setpoint = capture_setpoint(
                        self.capture_buf[-window:], min_samples=window
                    )
                except InsufficientData as exc:
                    raise ConfigError(
                        "double-support phase too short to capture a setpoint"
                    ) from exc
            self.state = plant_mod.set_support(self.state, self.params, support)

        true_pads = plant_mod.pad_forces(self.state, self.params)
        left_sample = self.left_unit.sample(true_pads[:4], t)
        right_sample = self.right_unit.sample(true_pads[4:], t)
        self.channel.submit(self.left_unit.transmit(left_sample), t)
        self.channel.submit(self.right_unit.transmit(right_sample), t)
        for deliver_at, data in self.channel.poll(t):
            self.receiver.push(data, deliver_at)

        measured = robot_cop(left_sample, right_sample)
        if support == DOUBLE and self.setpoint is None:
            self.capture_buf.append(measured)

        self.commands = self._controller(script_targets, t)
        self.state = plant_mod.advance(
            self.state, self.params, self.commands, SUBSTEPS_PER_TICK
        )

        row = {
            "t_ms": t,
            "cop_x": measured.x,
            "cop_y": measured.y,
            "theta_e": self.theta_e_deg,
            "torso": float(self.commands[0]),
            "hip": float(self.commands[1]),
            "ankle": float(self.commands[3]),
            "fallen": int(self.state.fallen),
            "single_support": int(support != DOUBLE),
        }
        self.rows.append(row)
        self.last_frame = {
            **row,
            "f_total_g": measured.f_total_g,
            "per_cell_g": list(left_sample.per_cell_g) + list(right_sample.per_cell_g),
            "support": support,
            "joints_deg": [float(v) for v in self.state.joint_angles_deg],
            "setpoint": None if self.setpoint is None else
                {"x": self.setpoint.cop_set_x, "y": self.setpoint.cop_set_y},
            "stale": self._staleness(t),
            "gains": {"kp": self.config.gains.kp, "ki": self.config.gains.ki,
                      "kd": self.config.gains.kd},
            "control_enabled": self.config.control_enabled,
            "tilt_deg": self.params.tilt_deg,
        }
        return row

    def _staleness(self, t_ms: float) -> dict:
        out = {}
        for foot in (LEFT, RIGHT):
            try:
                _, fresh = self.receiver.poll_foot(foot, t_ms)
                out[foot] = not fresh
            except tel.NoDataYet:
                out[foot] = True
        return out

    def run(self) -> TrialRecord:
        n_ticks = int(math.ceil(self.script.duration_ms / TICK_MS))
        for _ in range(n_ticks):
            self.tick()
        return self._record()

    def _record(self) -> TrialRecord:
        cols = {
            k: np.array([r[k] for r in self.rows])
            for k in (
                "t_ms", "cop_x", "cop_y", "theta_e", "torso", "hip", "ankle",
                "fallen", "single_support",
            )
        }
        setpoint = self.setpoint or Setpoints()
        mask = cols["single_support"].astype(bool)
        rms = rms_error(cols["cop_x"][mask], setpoint.cop_set_x) if mask.any() else 0.0
        return TrialRecord(
            t_ms=cols["t_ms"],
            cop_x=cols["cop_x"],
            cop_y=cols["cop_y"],
            theta_e=cols["theta_e"],
            torso=cols["torso"],
            hip=cols["hip"],
            ankle=cols["ankle"],
            fallen=cols["fallen"],
            single_support=cols["single_support"],
            setpoint=setpoint,
            outcome="Fall" if bool(cols["fallen"][-1]) else "NotFall",
            rms=rms,
        )


def run_trial(config: TrialConfig, trial_index: int = 0) -> TrialRecord:
    """One seeded trial of the standard foot-lift motion."""
    lift = config.lift_foot_for(trial_index)
    loop = BalanceLoop(config, lift, trial_seed=config.seed + trial_index)
    return loop.run()


def run_trials(config: TrialConfig) -> list[TrialRecord]:
    return [run_trial(config, i) for i in range(config.trials)]


def run_sweep(grid: list[PidGains], base: TrialConfig) -> SweepReport:
    """One report row per grid point; trial seeds are shared across rows so
    rows differ only by gains."""
    if not grid:
        raise ConfigError("empty gain grid")
    rows = []
    for gains in grid:
        config = replace(base, gains=gains)
        records = run_trials(config)
        falls = sum(1 for r in records if r.outcome == "Fall")
        not_falls = len(records) - falls
        rows.append(
            SweepRow(
                gains=gains,
                falls=falls,
                not_falls=not_falls,
                success_pct=100.0 * not_falls / len(records),
                mean_rms=float(np.mean([r.rms for r in records])),
            )
        )
    report = SweepReport(rows=rows, trials_per_row=base.trials)
    report.validate()
    return report


def standard_grid() -> list[PidGains]:
    """The three reference sweep tables as one grid: a Kp ladder, then a
    Ki ladder at Kp=0.10, then a Kd ladder at Kp=0.10."""
    grid = [PidGains(kp=v) for v in (0.0, 0.05, 0.10, 0.15, 0.20, 0.25)]
    grid += [PidGains(kp=0.10, ki=v) for v in (0.01, 0.02, 0.04, 0.10, 0.20)]
    grid += [PidGains(kp=0.10, kd=v) for v in (0.005, 0.010, 0.020, 0.050, 0.100)]
    return grid


def bringup(base: TrialConfig) -> dict:
    """Sweep the standard grid and report which points hold balance.

    Plant parameters are not the hardware rig's, so the working gain
    region must be found empirically; this returns the full report plus the
    100 % rows and the best of them by RMS.
    """
    report = run_sweep(standard_grid(), base)
    perfect = [r for r in report.rows if r.not_falls == report.trials_per_row]
    zero = [r for r in report.rows if r.not_falls == 0]
    best = min(perfect, key=lambda r: r.mean_rms) if perfect else None
    return {"report": report, "perfect_rows": perfect, "zero_rows": zero, "best": best}


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------

TRIAL_CSV_COLUMNS = ("t_ms", "cop_x", "cop_y", "theta_e", "torso", "hip", "ankle", "fallen")


def trial_to_csv(record: TrialRecord) -> str:
    lines = [",".join(TRIAL_CSV_COLUMNS)]
    for i in range(record.t_ms.size):
        lines.append(
            ",".join(
                [
                    repr(float(record.t_ms[i])),
                    repr(float(record.cop_x[i])),
                    repr(float(record.cop_y[i])),
                    repr(float(record.theta_e[i])),
                    repr(float(record.torso[i])),
                    repr(float(record.hip[i])),
                    repr(float(record.ankle[i])),
                    str(int(record.fallen[i])),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def trial_from_csv(text: str) -> TrialRecord:
    lines = [ln for ln in text.strip().splitlines() if ln]
    header = lines[0].split(",")
    if tuple(header) != TRIAL_CSV_COLUMNS:
        raise ConfigError(f"unexpected columns {header}")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    return TrialRecord(
        t_ms=data[:, 0],
        cop_x=data[:, 1],
        cop_y=data[:, 2],
        theta_e=data[:, 3],
        torso=data[:, 4],
        hip=data[:, 5],
        ankle=data[:, 6],
        fallen=data[:, 7].astype(int),
        single_support=np.zeros(data.shape[0], dtype=int),
    )


def report_to_csv(report: SweepReport) -> str:
    lines = ["kp,ki,kd,falls,not_falls,success_pct,mean_rms_error"]
    for row in report.rows:
        lines.append(
            ",".join(
                [
                    repr(float(row.gains.kp)),
                    repr(float(row.gains.ki)),
                    repr(float(row.gains.kd)),
                    str(row.falls),
                    str(row.not_falls),
                    repr(float(row.success_pct)),
                    repr(float(row.mean_rms)),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def report_from_csv(text: str) -> SweepReport:
    lines = [ln for ln in text.strip().splitlines() if ln][1:]
    rows = []
    trials = 0
    for ln in lines:
        kp, ki, kd, falls, not_falls, pct, rms = ln.split(",")
        row = SweepRow(
            gains=PidGains(kp=float(kp), ki=float(ki), kd=float(kd)),
            falls=int(falls),
            not_falls=int(not_falls),
            success_pct=float(pct),
            mean_rms=float(rms),
        )
        trials = row.falls + row.not_falls
        rows.append(row)
    return SweepReport(rows=rows, trials_per_row=trials)


def trial_to_json(record: TrialRecord) -> str:
    doc = {
        "outcome": record.outcome,
        "rms": record.rms,
        "setpoint": {"x": record.setpoint.cop_set_x, "y": record.setpoint.cop_set_y},
        "series": {
            name: [float(v) for v in getattr(record, name)]
            for name in TRIAL_CSV_COLUMNS
        },
        "single_support": [int(v) for v in record.single_support],
    }
    return json.dumps(doc)


def trial_from_json(text: str) -> TrialRecord:
    doc = json.loads(text)
    series = doc["series"]
    return TrialRecord(
        t_ms=np.array(series["t_ms"]),
        cop_x=np.array(series["cop_x"]),
        cop_y=np.array(series["cop_y"]),
        theta_e=np.array(series["theta_e"]),
        torso=np.array(series["torso"]),
        hip=np.array(series["hip"]),
        ankle=np.array(series["ankle"]),
        fallen=np.array(series["fallen"], dtype=int),
        single_support=np.array(doc["single_support"], dtype=int),
        setpoint=Setpoints(cop_set_x=doc["setpoint"]["x"], cop_set_y=doc["setpoint"]["y"]),
        outcome=doc["outcome"],
        rms=doc["rms"],
    )


def report_to_json(report: SweepReport) -> str:
    return json.dumps(
        {
            "trials_per_row": report.trials_per_row,
            "rows": [
                {
                    "kp": r.gains.kp, "ki": r.gains.ki, "kd": r.gains.kd,
                    "falls": r.falls, "not_falls": r.not_falls,
                    "success_pct": r.success_pct, "mean_rms": r.mean_rms,
                }
                for r in report.rows
            ],
        }
    )


def report_from_json(text: str) -> SweepReport:
    doc = json.loads(text)
    rows = [
        SweepRow(
            gains=PidGains(kp=r["kp"], ki=r["ki"], kd=r["kd"]),
            falls=r["falls"],
            not_falls=r["not_falls"],
            success_pct=r["success_pct"],
            mean_rms=r["mean_rms"],
        )
        for r in doc["rows"]
    ]
    return SweepReport(rows=rows, trials_per_row=doc["trials_per_row"])


def report_to_markdown(report: SweepReport) -> str:
    lines = [
        "| PID | Fall | Not Fall | Success | RMS Error |",
        "| --- | ---- | -------- | ------- | --------- |",
    ]
    for row in report.rows:
        g = row.gains
        label = f"Kp={g.kp:.2f}"
        if g.ki:
            label += f", Ki={g.ki:.2f}"
        if g.kd:
            label += f", Kd={g.kd:.3f}"
        lines.append(
            f"| {label} | {row.falls} | {row.not_falls} "
            f"| {row.success_pct:.0f} % | {row.mean_rms:.4f} |"
        )
    return "\n".join(lines) + "\n"
