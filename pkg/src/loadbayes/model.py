"""Load-model dynamics: tripping characteristics, motor DAE, steady state,
and forward-Euler trajectory simulation (deterministic or with process noise).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from . import _kernels
from .errors import ConfigError, InitializationError, SimulationError
from .params import LoadParams, MotorParams, TrippingParams, ZipParams, derived_motor_constants
from .scenario import VoltageScenario, voltage_series


@dataclass(frozen=True)
class LoadState:
    """Dynamic state: transient EMFs, slip, connected fraction, plus the
    algebraic stator currents and the (frozen) mechanical torque."""

    e_d: float
    e_q: float
    s: float
    fr: float
    i_d: float
    i_q: float
    tau_m: float


def block_tripping_fraction(v: float, p: TrippingParams) -> float:
    """All-or-nothing scheme: a fixed fraction stays connected between the
    thresholds, everything connected above, nothing below."""
    if v >= p.v_1off:
        return 1.0
    if v <= p.v_2off:
        return 0.0
    return p.b_frac


def d_input(v: float, p: TrippingParams) -> float:
    """Target connected fraction: linear ramp between the two thresholds."""
    if v >= p.v_1off:
        return 1.0
    if v <= p.v_2off:
        return 0.0
    return (v - p.v_2off) / (p.v_1off - p.v_2off)


def _check_step(h: float, p: TrippingParams) -> None:
    if not 0.0 < h < p.t_d:
        raise ConfigError(
            f"step size h={h} must satisfy 0 < h < t_d={p.t_d} for the explicit lag update"
        )


def step_fraction_deterministic(fr_k: float, v: float, h: float, p: TrippingParams) -> float:
    """One explicit Euler step of the first-order tripping lag, clamped to [0, 1]."""
    _check_step(h, p)
    f = fr_k + (h / p.t_d) * (-fr_k + d_input(v, p))
    return min(1.0, max(0.0, f))


def step_fraction_stochastic(fr_k: float, v: float, h: float, p: TrippingParams,
                             rng: np.random.Generator) -> float:
    """Lag step plus a Wiener increment sigma_w*sqrt(h)*z, active only while
    the voltage is strictly inside the ramp region. One standard normal is
    consumed per call regardless of the region."""
    _check_step(h, p)
    z = rng.standard_normal()
    f = fr_k + (h / p.t_d) * (-fr_k + d_input(v, p))
    if p.v_2off < v < p.v_1off:
        f = f + p.sigma_w * math.sqrt(h) * z
    return min(1.0, max(0.0, f))


def solve_algebraic_currents(e_d: float, e_q: float, v: float, theta_v: float,
                             p: MotorParams, q_axis_sign: float = 1.0):
    """Stator currents from the two algebraic equations (closed-form 2x2 solve)."""
    x_p = derived_motor_constants(p).x_prime
    sin_t = math.sin(theta_v)
    cos_t = math.cos(theta_v)
    b1 = -e_d - v * sin_t
    b2 = v * cos_t - e_q
    det = p.r_a * p.r_a + q_axis_sign * x_p * x_p
    if abs(det) < 1e-12 * max(1.0, p.r_a * p.r_a, x_p * x_p):
        raise SimulationError("singular stator algebraic system (r_a^2 + sign*x'^2 ~ 0)")
    i_d = (p.r_a * b1 + x_p * b2) / det
    i_q = (-q_axis_sign * x_p * b1 + p.r_a * b2) / det
    return i_d, i_q


def state_derivative(x: LoadState, v: float, theta_v: float, p: LoadParams):
    """Time derivatives (de_d, de_q, ds) of the motor ODEs at the given state.

    The stored algebraic currents are used; they must be consistent with
    (e_d, e_q, v, theta_v).
    """
    x0, x_p, t_p = derived_motor_constants(p.motor)
    de_d = -(x.e_d + (x0 - x_p) * x.i_q) / t_p + x.s * p.motor.omega_s * x.e_q
    de_q = -(x.e_q - (x0 - x_p) * x.i_d) / t_p - x.s * p.motor.omega_s * x.e_d
    ds = (x.tau_m - x.e_d * x.i_d - x.e_q * x.i_q) / (2.0 * p.motor.h)
    return de_d, de_q, ds


def motor_power(x: LoadState, v: float, theta_v: float):
    """(P, Q) consumed by the motor, before the tripping fraction is applied."""
    sin_t = math.sin(theta_v)
    cos_t = math.cos(theta_v)
    p = -v * sin_t * x.i_d + v * cos_t * x.i_q
    q = v * cos_t * x.i_d + v * sin_t * x.i_q
    return p, q


def zip_power(v: float, z: ZipParams):
    vr = v / z.v0
    return (z.p_p + z.p_i * vr + z.p_z * vr * vr,
            z.q_p + z.q_i * vr + z.q_z * vr * vr)


def measure_power(x: LoadState, v: float, theta_v: float, p: LoadParams):
    """Total injected power: tripping fraction times motor power, plus ZIP."""
    pm, qm = motor_power(x, v, theta_v)
    pz, qz = zip_power(v, p.zip)
    return x.fr * pm + pz, x.fr * qm + qz


# ---------------------------------------------------------------------------
# Steady-state initialization.
#
# For a fixed slip the EMF/current equations are linear, so the steady state
# reduces to a scalar root-find on the slip: solve the 4x4 system at each
# candidate slip and push the motor power to its target. The stable
# (low-slip) root is taken. The solve depends only on the electrical motor
# constants, so results are cached across inertia/tripping variations.
# ---------------------------------------------------------------------------

_SLIP_GRID = np.linspace(0.0, 0.999, 1000)


def _fields_at_slip(s, v0, x0, x_p, t_p, omega_s, r_a, qsign):
    k = s * omega_s * t_p
    a = np.array([
        [1.0, 0.0, r_a, -x_p],
        [0.0, 1.0, qsign * x_p, r_a],
        [1.0, -k, 0.0, x0 - x_p],
        [k, 1.0, -(x0 - x_p), 0.0],
    ])
    b = np.array([0.0, v0, 0.0, 0.0])  # voltage angle fixed at zero
    return np.linalg.solve(a, b)


@lru_cache(maxsize=256)
def _steady_state_solve(r_a, x_a, x_m, r_1, x_1, omega_s, p_mot_init, v0, qsign):
    motor = MotorParams(r_a=r_a, x_a=x_a, x_m=x_m, r_1=r_1, x_1=x_1,
                        h=1.0, p_mot_init=p_mot_init, omega_s=omega_s)
    x0, x_p, t_p = derived_motor_constants(motor)

    def power_gap(s):
        _, _, _, i_q = _fields_at_slip(s, v0, x0, x_p, t_p, omega_s, r_a, qsign)
        return v0 * i_q - p_mot_init

    bracket = None
    s_prev = _SLIP_GRID[0]
    g_prev = power_gap(s_prev)
    for s_hi in _SLIP_GRID[1:]:
        g_hi = power_gap(s_hi)
        if g_prev < 0.0 <= g_hi:
            bracket = (s_prev, s_hi)
            break
        s_prev, g_prev = s_hi, g_hi
    if bracket is None:
        raise InitializationError(
            f"no stable slip delivers P_mot={p_mot_init} at V={v0}; "
            "the motor cannot be initialized at this operating point"
        )
    s_star = brentq(power_gap, bracket[0], bracket[1], xtol=1e-15, rtol=8.9e-16)
    if not 0.0 < s_star < 1.0:
        raise InitializationError(f"steady-state slip {s_star} outside (0, 1)")
    e_d, e_q, i_d, i_q = _fields_at_slip(s_star, v0, x0, x_p, t_p, omega_s, r_a, qsign)
    tau_m = e_d * i_d + e_q * i_q
    return float(e_d), float(e_q), float(s_star), float(i_d), float(i_q), float(tau_m)


def steady_state_init(p: LoadParams, v0: float) -> LoadState:
    """Equilibrium state at constant voltage v0 (angle 0) with the motor
    delivering p_mot_init; the connected fraction sits at its ramp target.

    Raises InitializationError when no physical (slip in (0,1)) equilibrium
    exists or the residual of the full system exceeds 1e-10.
    """
    if not v0 > 0.0:
        raise ConfigError(f"initialization voltage must be > 0, got {v0}")
    m = p.motor
    e_d, e_q, s, i_d, i_q, tau_m = _steady_state_solve(
        m.r_a, m.x_a, m.x_m, m.r_1, m.x_1, m.omega_s, m.p_mot_init, v0, p.q_axis_sign
    )
    state = LoadState(e_d=e_d, e_q=e_q, s=s, fr=d_input(v0, p.tripping),
                      i_d=i_d, i_q=i_q, tau_m=tau_m)
    x_p = derived_motor_constants(m).x_prime
    de_d, de_q, ds = state_derivative(state, v0, 0.0, p)
    alg1 = m.r_a * i_d - x_p * i_q + e_d
    alg2 = m.r_a * i_q + p.q_axis_sign * x_p * i_d + e_q - v0
    pm, _ = motor_power(state, v0, 0.0)
    residual = math.sqrt(de_d ** 2 + de_q ** 2 + ds ** 2 + alg1 ** 2 + alg2 ** 2
                         + (pm - m.p_mot_init) ** 2)
    if residual > 1e-10:
        raise InitializationError(f"steady-state residual {residual:.3e} exceeds 1e-10")
    return state


# ---------------------------------------------------------------------------
# Trajectory simulation.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    v: np.ndarray
    e_d: np.ndarray
    e_q: np.ndarray
    s: np.ndarray
    fr: np.ndarray
    p_inj: np.ndarray
    q_inj: np.ndarray

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "V", "e_d", "e_q", "s", "fr", "P_inj", "Q_inj"])
            for row in zip(self.t, self.v, self.e_d, self.e_q, self.s,
                           self.fr, self.p_inj, self.q_inj):
                w.writerow([repr(float(x)) for x in row])


def pack_params(p: LoadParams, tau_m: float, batch: int) -> np.ndarray:
    """Per-trajectory constants in the kernel column layout."""
    x0, x_p, t_p = derived_motor_constants(p.motor)
    row = np.empty(_kernels.NPAR)
    row[_kernels.RA] = p.motor.r_a
    row[_kernels.XP] = x_p
    row[_kernels.X0] = x0
    row[_kernels.TP] = t_p
    row[_kernels.TWO_H] = 2.0 * p.motor.h
    row[_kernels.TAU_M] = tau_m
    row[_kernels.OMEG] = p.motor.omega_s
    row[_kernels.V1] = p.tripping.v_1off
    row[_kernels.V2] = p.tripping.v_2off
    row[_kernels.TD] = p.tripping.t_d
    row[_kernels.SGW] = p.tripping.sigma_w
    row[_kernels.PZ] = p.zip.p_z
    row[_kernels.PI] = p.zip.p_i
    row[_kernels.PP] = p.zip.p_p
    row[_kernels.QZ] = p.zip.q_z
    row[_kernels.QI] = p.zip.q_i
    row[_kernels.QP] = p.zip.q_p
    row[_kernels.VZ] = p.zip.v0
    return np.tile(row, (batch, 1))


def n_steps_for(t_end: float, h: float) -> int:
    n = t_end / h
    if abs(n - round(n)) > 1e-6:
        raise ConfigError(f"step size h={h} must divide the horizon t_end={t_end}")
    return int(round(n))


NO_NOISE = np.zeros((1, 1))


def simulate_trajectory(p: LoadParams, sc: VoltageScenario, h: float = 1e-3,
                        mode: str = "deterministic",
                        rng: Optional[np.random.Generator] = None,
                        seed: Optional[int] = None) -> Trajectory:
    """Forward-Euler integration over the scenario horizon.

    Deterministic mode is a pure function of (p, sc, h); stochastic mode adds
    the Wiener term to the fraction update using ``rng`` (or a generator
    seeded with ``seed``). Raises SimulationError with the failing step index
    if any state becomes non-finite.
    """
    if mode not in ("deterministic", "stochastic"):
        raise ConfigError(f"mode must be 'deterministic' or 'stochastic', got {mode!r}")
    _check_step(h, p.tripping)
    n_steps = n_steps_for(sc.t_end, h)
    v_seq = voltage_series(sc, h, n_steps)
    init = steady_state_init(p, float(v_seq[0]))
    cpar = pack_params(p, init.tau_m, 1)
    ed = np.array([init.e_d])
    eq = np.array([init.e_q])
    sl = np.array([init.s])
    fr = np.array([init.fr])
    use_noise = mode == "stochastic" and p.tripping.sigma_w > 0.0
    if use_noise:
        if rng is None:
            rng = np.random.default_rng(seed)
        noise = rng.standard_normal((1, n_steps))
    else:
        noise = NO_NOISE
    full = np.empty((n_steps + 1, 1, 6))
    p_obs = np.empty((0, 1))
    q_obs = np.empty((0, 1))
    bad = np.full(1, -1, dtype=np.int64)
    _kernels.simulate_batch(v_seq, h, cpar, p.q_axis_sign, 0.0, 1.0,
                            ed, eq, sl, fr, noise, use_noise,
                            n_steps + 2, p_obs, q_obs, full, True, bad)
    if bad[0] >= 0:
        raise SimulationError(
            f"state became non-finite at step {int(bad[0])} (t={bad[0] * h:.4f} s)",
            step=int(bad[0]),
        )
    return Trajectory(t=np.arange(n_steps + 1) * h, v=v_seq,
                      e_d=full[:, 0, 0], e_q=full[:, 0, 1], s=full[:, 0, 2],
                      fr=full[:, 0, 3], p_inj=full[:, 0, 4], q_inj=full[:, 0, 5])
