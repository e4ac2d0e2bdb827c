"""Parameter containers for the aggregated load model.

The load is a ZIP polynomial in parallel with a third-order induction motor
whose injected power is scaled by a voltage-dependent tripping fraction.
All quantities are per-unit unless noted. Containers are frozen dataclasses;
invariants are enforced at construction so downstream code can assume them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np
import yaml

from .errors import ConfigError

DEFAULT_OMEGA_S = 2.0 * math.pi * 60.0


@dataclass(frozen=True)
class MotorParams:
    """Third-order induction motor constants.

    ``h`` is the inertia constant in seconds (config key ``H``),
    ``p_mot_init`` the motor active power used by the steady-state solve,
    ``omega_s`` the synchronous electrical speed in rad/s.
    """

    r_a: float = 0.0138
    x_a: float = 0.083
    x_m: float = 3.0
    r_1: float = 0.055
    x_1: float = 0.053
    h: float = 0.8
    p_mot_init: float = 0.8
    omega_s: float = DEFAULT_OMEGA_S

    def __post_init__(self):
        for name in ("r_a", "x_a", "x_m", "r_1", "x_1", "h", "omega_s"):
            if not getattr(self, name) > 0.0:
                raise ConfigError(f"motor.{name} must be > 0, got {getattr(self, name)}")
        if not self.p_mot_init > 0.0:
            raise ConfigError(f"motor.p_mot_init must be > 0, got {self.p_mot_init}")


class DerivedMotorConstants(tuple):
    """(x0, x_prime, t_p) triple; named access for readability."""

    __slots__ = ()

    def __new__(cls, x0, x_prime, t_p):
        return super().__new__(cls, (x0, x_prime, t_p))

    @property
    def x0(self):
        return self[0]

    @property
    def x_prime(self):
        return self[1]

    @property
    def t_p(self):
        return self[2]


def derived_motor_constants(p: MotorParams) -> DerivedMotorConstants:
    """Open-circuit reactance, transient reactance and rotor time constant.

    x0 = x_a + x_m, x' = x_a + x_1 x_m / (x_1 + x_m),
    T_p = (x_1 + x_m) / (omega_s r_1).
    """
    x0 = p.x_a + p.x_m
    x_prime = p.x_a + p.x_1 * p.x_m / (p.x_1 + p.x_m)
    t_p = (p.x_1 + p.x_m) / (p.omega_s * p.r_1)
    if not x_prime < x0:
        raise ConfigError("derived reactances violate x' < x0; check motor parameters")
    return DerivedMotorConstants(x0, x_prime, t_p)


@dataclass(frozen=True)
class ZipParams:
    """ZIP polynomial coefficients: P(V) = p_p + p_i (V/v0) + p_z (V/v0)^2."""

    p_z: float = 0.6
    p_i: float = 0.2
    p_p: float = 0.1
    q_z: float = 0.2
    q_i: float = 0.05
    q_p: float = 0.05
    v0: float = 1.0

    def __post_init__(self):
        for name in ("p_z", "p_i", "p_p", "q_z", "q_i", "q_p"):
            if getattr(self, name) < 0.0:
                raise ConfigError(f"zip.{name} must be >= 0, got {getattr(self, name)}")
        if not self.v0 > 0.0:
            raise ConfigError(f"zip.v0 must be > 0, got {self.v0}")


@dataclass(frozen=True)
class TrippingParams:
    """Voltage-tripping characteristic.

    Between ``v_2off`` and ``v_1off`` the connected-fraction target ramps
    linearly; the fraction itself follows a first-order lag with time
    constant ``t_d``. ``sigma_w`` is the intensity of the Wiener term added
    inside the ramp region (per-step std is sigma_w * sqrt(h)). ``b_frac``
    is the fixed fraction used only by the all-or-nothing block scheme.
    """

    v_1off: float = 0.8
    v_2off: float = 0.2
    t_d: float = 0.1
    b_frac: float = 0.5
    sigma_w: float = 0.0

    def __post_init__(self):
        if not self.v_2off > 0.0:
            raise ConfigError(f"tripping.v_2off must be > 0, got {self.v_2off}")
        if not self.v_1off > self.v_2off:
            raise ConfigError(
                f"tripping thresholds must satisfy v_1off > v_2off, "
                f"got v_1off={self.v_1off}, v_2off={self.v_2off}"
            )
        if not self.t_d > 0.0:
            raise ConfigError(f"tripping.t_d must be > 0, got {self.t_d}")
        if self.sigma_w < 0.0:
            raise ConfigError(f"tripping.sigma_w must be >= 0, got {self.sigma_w}")
        if not 0.0 <= self.b_frac <= 1.0:
            raise ConfigError(f"tripping.b_frac must be in [0, 1], got {self.b_frac}")


# name used in theta vectors / config files -> (sub-params attribute, field)
THETA_REGISTRY = {
    "v_1off": ("tripping", "v_1off"),
    "v_2off": ("tripping", "v_2off"),
    "t_d": ("tripping", "t_d"),
    "sigma_w": ("tripping", "sigma_w"),
    "H": ("motor", "h"),
    "r_a": ("motor", "r_a"),
    "x_a": ("motor", "x_a"),
    "x_m": ("motor", "x_m"),
    "r_1": ("motor", "r_1"),
    "x_1": ("motor", "x_1"),
}


@dataclass(frozen=True)
class LoadParams:
    """Full parameter set plus the names of the inferred subset (theta).

    ``q_axis_sign`` selects the sign of the x'*i_d coupling term in the
    q-axis stator equation: +1 is the symmetric convention (impedance
    matrix [[r, -x'], [x', r]]), -1 reproduces an asymmetric variant.
    """

    motor: MotorParams = MotorParams()
    zip: ZipParams = ZipParams()
    tripping: TrippingParams = TrippingParams()
    theta_mask: tuple = ("v_1off", "v_2off", "H")
    q_axis_sign: float = 1.0

    def __post_init__(self):
        if len(self.theta_mask) == 0:
            raise ConfigError("theta_mask must name at least one parameter")
        object.__setattr__(self, "theta_mask", tuple(self.theta_mask))
        for name in self.theta_mask:
            if name not in THETA_REGISTRY:
                raise ConfigError(
                    f"unknown theta parameter {name!r}; choose from {sorted(THETA_REGISTRY)}"
                )
        if self.q_axis_sign not in (1.0, -1.0):
            raise ConfigError(f"q_axis_sign must be +1 or -1, got {self.q_axis_sign}")

    @property
    def dim(self) -> int:
        return len(self.theta_mask)

    def theta_values(self) -> np.ndarray:
        """Current values of the masked parameters, in mask order."""
        out = np.empty(len(self.theta_mask))
        for i, name in enumerate(self.theta_mask):
            group, field = THETA_REGISTRY[name]
            out[i] = getattr(getattr(self, group), field)
        return out

    def with_theta(self, theta: Sequence[float]) -> "LoadParams":
        """New LoadParams with the masked fields replaced by ``theta``.

        Raises ConfigError if the substituted values violate any invariant
        (e.g. disordered tripping thresholds or non-positive inertia).
        """
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (len(self.theta_mask),):
            raise ConfigError(
                f"theta has shape {theta.shape}, expected ({len(self.theta_mask)},)"
            )
        updates: dict = {}
        for name, value in zip(self.theta_mask, theta):
            group, field = THETA_REGISTRY[name]
            updates.setdefault(group, {})[field] = float(value)
        new_motor = replace(self.motor, **updates.get("motor", {}))
        new_trip = replace(self.tripping, **updates.get("tripping", {}))
        return replace(self, motor=new_motor, tripping=new_trip)


# ---------------------------------------------------------------------------
# Config-file serialization. Keys follow the conventional per-unit symbol
# names (r_a, x_a, ..., H, P_z, ..., v_1off, v_2off, t_d).
# ---------------------------------------------------------------------------

_MOTOR_KEYS = {
    "r_a": "r_a", "x_a": "x_a", "x_m": "x_m", "r_1": "r_1", "x_1": "x_1",
    "H": "h", "p_mot_init": "p_mot_init", "omega_s": "omega_s",
}
_ZIP_KEYS = {
    "P_z": "p_z", "P_i": "p_i", "P_p": "p_p",
    "Q_z": "q_z", "Q_i": "q_i", "Q_p": "q_p", "v0": "v0",
}
_TRIP_KEYS = {
    "v_1off": "v_1off", "v_2off": "v_2off", "t_d": "t_d",
    "b_frac": "b_frac", "sigma_w": "sigma_w",
}


def params_to_dict(p: LoadParams) -> dict:
    return {
        "motor": {k: getattr(p.motor, a) for k, a in _MOTOR_KEYS.items()},
        "zip": {k: getattr(p.zip, a) for k, a in _ZIP_KEYS.items()},
        "tripping": {k: getattr(p.tripping, a) for k, a in _TRIP_KEYS.items()},
        "theta": list(p.theta_mask),
        "q_axis_sign": p.q_axis_sign,
    }


def _section(d: Mapping, section: str, keymap: Mapping[str, str], cls):
    raw = d.get(section, {})
    if not isinstance(raw, Mapping):
        raise ConfigError(f"params section {section!r} must be a mapping")
    kwargs = {}
    for key, value in raw.items():
        if key not in keymap:
            raise ConfigError(f"unknown key {section}.{key!r} in parameter file")
        try:
            kwargs[keymap[key]] = float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{section}.{key} must be a number, got {value!r}") from None
    return cls(**kwargs)


def params_from_dict(d: Mapping) -> LoadParams:
    motor = _section(d, "motor", _MOTOR_KEYS, MotorParams)
    zipload = _section(d, "zip", _ZIP_KEYS, ZipParams)
    tripping = _section(d, "tripping", _TRIP_KEYS, TrippingParams)
    theta = tuple(d.get("theta", ("v_1off", "v_2off", "H")))
    sign = float(d.get("q_axis_sign", 1.0))
    return LoadParams(motor=motor, zip=zipload, tripping=tripping,
                      theta_mask=theta, q_axis_sign=sign)


def save_params(p: LoadParams, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(params_to_dict(p), fh, sort_keys=True)


def load_params(path) -> LoadParams:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, Mapping):
        raise ConfigError(f"parameter file {path} does not contain a mapping")
    return params_from_dict(data)
