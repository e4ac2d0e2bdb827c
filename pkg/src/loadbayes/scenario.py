"""Voltage test signal and synthetic measurement datasets.

The terminal-voltage disturbance is a dip to ``a`` pu lasting ``b`` cycles
(at 60 Hz) starting at t = 1 s, followed by a linear recovery ramp from
``d`` pu back to 1 pu ending at t = 1 + c. Everywhere else V = 1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Optional

import numpy as np
import yaml

from .errors import ConfigError
from .params import LoadParams, params_from_dict, params_to_dict


@dataclass(frozen=True)
class VoltageScenario:
    a: float = 0.6        # dip magnitude (pu)
    b: float = 5.0        # dip duration (cycles at 60 Hz)
    c: float = 0.5        # recovery end offset after t = 1 (s)
    d: float = 0.7        # ramp start voltage (pu)
    t_end: float = 5.0    # simulation horizon (s)

    def __post_init__(self):
        if not 0.0 < self.a <= 1.0:
            raise ConfigError(f"scenario.a must be in (0, 1], got {self.a}")
        if not 0.0 < self.d <= 1.0:
            raise ConfigError(f"scenario.d must be in (0, 1], got {self.d}")
        if not self.b / 60.0 < self.c:
            raise ConfigError(
                f"scenario requires b/60 < c, got b/60={self.b / 60.0}, c={self.c}"
            )
        if not self.c < self.t_end - 1.0:
            raise ConfigError(
                f"scenario requires c < t_end - 1, got c={self.c}, t_end={self.t_end}"
            )

    @property
    def dip_end(self) -> float:
        return 1.0 + self.b / 60.0

    @property
    def ramp_end(self) -> float:
        return 1.0 + self.c


def voltage_at(t, sc: VoltageScenario):
    """Piecewise terminal voltage; accepts a scalar or an array of times."""
    t = np.asarray(t, dtype=float)
    v = np.ones_like(t)
    dip = (t >= 1.0) & (t < sc.dip_end)
    ramp = (t >= sc.dip_end) & (t < sc.ramp_end)
    v[dip] = sc.a
    slope = -(1.0 - sc.d) / (sc.b / 60.0 - sc.c)
    v[ramp] = slope * (t[ramp] - (1.0 + sc.c)) + 1.0
    return v if v.ndim else float(v)


def voltage_series(sc: VoltageScenario, h: float, n_steps: int) -> np.ndarray:
    """Voltage sampled at t_k = k*h for k = 0..n_steps (inclusive)."""
    return voltage_at(np.arange(n_steps + 1) * h, sc)


def scenario_to_dict(sc: VoltageScenario) -> dict:
    return {"a": sc.a, "b": sc.b, "c": sc.c, "d": sc.d, "t_end": sc.t_end}


def scenario_from_dict(d: Mapping) -> VoltageScenario:
    known = {"a", "b", "c", "d", "t_end"}
    extra = set(d) - known
    if extra:
        raise ConfigError(f"unknown scenario keys: {sorted(extra)}")
    return VoltageScenario(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class MeasurementSeries:
    """Timestamped noisy (P, Q) observations with synthesis metadata."""

    times: np.ndarray
    p_meas: np.ndarray
    q_meas: np.ndarray
    noise_var: float
    seed: Optional[int] = None
    truth_params: Optional[LoadParams] = None
    scenario: Optional[VoltageScenario] = None
    h: Optional[float] = None
    mode: Optional[str] = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        p = np.asarray(self.p_meas, dtype=float)
        q = np.asarray(self.q_meas, dtype=float)
        if times.ndim != 1 or times.shape != p.shape or times.shape != q.shape:
            raise ConfigError("measurement arrays must be 1-D with matching lengths")
        if times.size < 2:
            raise ConfigError("measurement series needs at least two samples")
        dt = np.diff(times)
        if not np.all(dt > 0.0):
            raise ConfigError("measurement times must be strictly increasing")
        if not np.allclose(dt, dt[0], rtol=1e-9, atol=1e-12):
            raise ConfigError("measurement times must be uniformly spaced")
        if self.noise_var < 0.0:
            raise ConfigError(f"noise_var must be >= 0, got {self.noise_var}")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "p_meas", p)
        object.__setattr__(self, "q_meas", q)

    @property
    def n_obs(self) -> int:
        return self.times.size

    @property
    def obs_interval(self) -> float:
        return float(self.times[1] - self.times[0])


def synthesize_dataset(truth: LoadParams, sc: VoltageScenario, h: float,
                       obs_interval: float, noise_var: float, seed: int,
                       mode: str = "deterministic") -> MeasurementSeries:
    """Simulate the truth trajectory and add Gaussian measurement noise.

    Observations are taken at t = obs_interval, 2*obs_interval, ... t_end.
    The same N(0, noise_var) noise is drawn independently for the active and
    reactive channel (P first, then Q, from a generator seeded with ``seed``;
    stochastic mode spends the generator's first draws on the process noise).
    """
    from .model import simulate_trajectory  # deferred: model imports scenario

    stride = _check_stride(h, obs_interval)
    rng = np.random.default_rng(seed)
    traj = simulate_trajectory(truth, sc, h=h, mode=mode, rng=rng)
    idx = np.arange(stride, traj.t.size, stride)
    times = traj.t[idx]
    p_true = traj.p_inj[idx]
    q_true = traj.q_inj[idx]
    sig = np.sqrt(noise_var)
    p_meas = p_true + sig * rng.standard_normal(times.size)
    q_meas = q_true + sig * rng.standard_normal(times.size)
    return MeasurementSeries(times=times, p_meas=p_meas, q_meas=q_meas,
                             noise_var=noise_var, seed=seed, truth_params=truth,
                             scenario=sc, h=h, mode=mode)


def _check_stride(h: float, obs_interval: float) -> int:
    stride = obs_interval / h
    if abs(stride - round(stride)) > 1e-9 or round(stride) < 1:
        raise ConfigError(
            f"obs_interval ({obs_interval}) must be a positive integer multiple of h ({h})"
        )
    return int(round(stride))


# ---------------------------------------------------------------------------
# Persistence: CSV data file plus a YAML sidecar with full metadata.
# Floats are written with repr() so the round trip is bit-exact.
# ---------------------------------------------------------------------------

def save_dataset(ds: MeasurementSeries, path) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "P_meas", "Q_meas"])
        for t, p, q in zip(ds.times, ds.p_meas, ds.q_meas):
            w.writerow([repr(float(t)), repr(float(p)), repr(float(q))])
    meta = {
        "noise_var": float(ds.noise_var),
        "seed": ds.seed,
        "mode": ds.mode,
        "h": ds.h,
        "scenario": scenario_to_dict(ds.scenario) if ds.scenario else None,
        "truth_params": params_to_dict(ds.truth_params) if ds.truth_params else None,
    }
    with open(_sidecar(path), "w") as fh:
        yaml.safe_dump(meta, fh, sort_keys=True)


def load_dataset(path) -> MeasurementSeries:
    path = Path(path)
    rows = []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != ["t", "P_meas", "Q_meas"]:
            raise ConfigError(f"{path}: expected header t,P_meas,Q_meas, got {header}")
        for row in r:
            rows.append([float(x) for x in row])
    arr = np.array(rows)
    meta_path = _sidecar(path)
    meta = {}
    if meta_path.exists():
        with open(meta_path) as fh:
            meta = yaml.safe_load(fh) or {}
    truth = meta.get("truth_params")
    sc = meta.get("scenario")
    return MeasurementSeries(
        times=arr[:, 0], p_meas=arr[:, 1], q_meas=arr[:, 2],
        noise_var=float(meta.get("noise_var", 0.01)),
        seed=meta.get("seed"),
        truth_params=params_from_dict(truth) if truth else None,
        scenario=scenario_from_dict(sc) if sc else None,
        h=meta.get("h"), mode=meta.get("mode"),
    )


def _sidecar(path: Path) -> Path:
    return path.with_suffix(path.suffix + ".meta.yaml")
