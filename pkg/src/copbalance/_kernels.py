"""Hot numeric kernels for the plant substep loop.

Written as plain scalar Python over float64 arrays so the numba backend can
compile them unchanged; under ``COPBALANCE_BACKEND=numpy`` the same
functions run uncompiled and produce bit-identical trajectories (same ops,
same order, strict IEEE).  See benchmarks/bench_plant.py for the speed
comparison.

State vector layout (float64[9]):
    0 roll angle (rad)        5 ankle_l angle (deg)
    1 roll rate (rad/s)       6 ankle_r angle (deg)
    2 torso angle (deg)       7 CoP excursion timer (ms)
    3 hip_l angle (deg)       8 fallen latch (0.0 / 1.0)
    4 hip_r angle (deg)

Param vector layout (float64[15]):
    0 com height (m)          8 ankle_r sensitivity (m/deg)
    1 gravity (m/s^2)         9 servo direction (+/-1)
    2 surface tilt (rad)     10 joint slew limit (deg/s)
    3 foot half width (m)    11 fall persistence window (ms)
    4 torso sens (m/deg)     12 roll hard limit (rad)
    5 hip_l sens (m/deg)     13 double-support spring freq (rad/s)
    6 hip_r sens (m/deg)     14 double-support damping ratio
    7 ankle_l sens (m/deg)

Support codes: 0 double, 1 left only, 2 right only.
"""

import math

from copbalance._accel import jit_kernel

# state indices
ROLL, RATE, J0, TIMER, FALLEN = 0, 1, 2, 7, 8
# param indices
COM_H, GRAV, TILT, HALF_W, SENS0, SERVO_DIR, SLEW, FALL_MS, ROLL_LIM, DBL_W, DBL_Z = (
    0, 1, 2, 3, 4, 9, 10, 11, 12, 13, 14,
)

SUPPORT_DOUBLE, SUPPORT_LEFT, SUPPORT_RIGHT = 0, 1, 2


def _com_offset_m(state, params):
    """Restoring CoM offset produced by the five compensation joints.

    Joint angles are in the servo frame (positive leans the robot toward
    +X); the direction factor maps them onto the restoring sign used by
    the roll dynamics, so a positive servo angle shifts the CoM toward +X.
    """
    total = 0.0
    for j in range(5):
        total += params[SENS0 + j] * state[J0 + j]
    return params[SERVO_DIR] * total


def _polygon_m(support, params):
    """Support polygon edges on the robot X axis, meters."""
    w = params[HALF_W]
    if support == SUPPORT_LEFT:
        return -2.0 * w, 0.0
    if support == SUPPORT_RIGHT:
        return 0.0, 2.0 * w
    return -2.0 * w, 2.0 * w


def _pivot_m(support, params):
    if support == SUPPORT_LEFT:
        return -params[HALF_W]
    if support == SUPPORT_RIGHT:
        return params[HALF_W]
    return 0.0


def _x_com_m(state, params, support):
    """Unclamped lateral CoM ground projection in the robot frame."""
    pivot = _pivot_m(support, params)
    lever = params[COM_H] * math.sin(state[ROLL] + params[TILT])
    return pivot + lever - _com_offset_m(state, params)


def _excursion_update(state, params, support, dt_ms):
    """Accumulate time the unclamped CoM projection spends outside the
    support polygon; latch fallen past the persistence window."""
    lo, hi = _polygon_m(support, params)
    x = _x_com_m(state, params, support)
    if x < lo or x > hi:
        state[TIMER] += dt_ms
    else:
        state[TIMER] = 0.0
    if state[TIMER] > params[FALL_MS]:
        state[FALLEN] = 1.0


def _step_loop(state, support, commands, params, n_substeps, dt_s):
    """Advance the plant n substeps of dt_s seconds, in place.

    Per substep: slew joints toward commands, integrate the frontal-plane
    pendulum (semi-implicit Euler), update the fall latch.  A fallen plant
    is frozen.
    """
    g = params[GRAV]
    length = params[COM_H]
    dt_ms = dt_s * 1000.0
    max_step = params[SLEW] * dt_s
    for _ in range(n_substeps):
        if state[FALLEN] != 0.0:
            return
        for j in range(5):
            delta = commands[j] - state[J0 + j]
            if delta > max_step:
                delta = max_step
            elif delta < -max_step:
                delta = -max_step
            state[J0 + j] += delta
        if support == SUPPORT_DOUBLE:
            # both feet planted: stiff alignment of the body to the surface
            wn = params[DBL_W]
            accel = -wn * wn * state[ROLL] - 2.0 * params[DBL_Z] * wn * state[RATE]
        else:
            offset = _com_offset_m(state, params)
            accel = (g / length) * math.sin(state[ROLL] + params[TILT]) - (
                g / length
            ) * (offset / length)
        state[RATE] += accel * dt_s
        state[ROLL] += state[RATE] * dt_s
        if state[ROLL] > params[ROLL_LIM] or state[ROLL] < -params[ROLL_LIM]:
            state[FALLEN] = 1.0
        _excursion_update(state, params, support, dt_ms)


com_offset_m = jit_kernel(_com_offset_m)
polygon_m = jit_kernel(_polygon_m)
pivot_m = jit_kernel(_pivot_m)
x_com_m = jit_kernel(_x_com_m)
excursion_update = jit_kernel(_excursion_update)
step_loop = jit_kernel(_step_loop)

# jitted helpers must call jitted helpers; rebind the module-level names the
# compiled bodies reference
if step_loop is not _step_loop:
    _com_offset_m = com_offset_m
    _polygon_m = polygon_m
    _pivot_m = pivot_m
    _x_com_m = x_com_m
    _excursion_update = excursion_update
