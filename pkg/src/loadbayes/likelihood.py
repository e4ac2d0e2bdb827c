"""Log-likelihood of a measurement series under the load model.

Three interchangeable estimators:

* ``deterministic`` -- one noise-free trajectory, residuals against the data;
* ``mc``            -- average of the observation density over freely drawn
                       process-noise trajectories;
* ``pf``            -- bootstrap particle filter with adaptive systematic
                       resampling (unbiased on the likelihood scale).

All three consume the same jitted stepping kernel, so the degenerate cases
(zero process noise, resampling disabled) agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .errors import ConfigError
from .model import NO_NOISE, pack_params, steady_state_init
from .params import LoadParams
from .scenario import MeasurementSeries, VoltageScenario, voltage_series

ESTIMATOR_ALIASES = {
    "det": "deterministic",
    "deterministic": "deterministic",
    "mc": "mc",
    "pf": "pf",
}


def canonical_estimator(name: str) -> str:
    try:
        return ESTIMATOR_ALIASES[name]
    except KeyError:
        raise ConfigError(
            f"unknown estimator {name!r}; choose from det|mc|pf"
        ) from None


@dataclass(frozen=True)
class ObservationModel:
    """Per-channel Gaussian measurement noise."""

    noise_var: float

    def __post_init__(self):
        if not self.noise_var > 0.0:
            raise ConfigError(f"observation noise_var must be > 0, got {self.noise_var}")


@dataclass(frozen=True)
class LogLikEstimate:
    value: float
    estimator: str
    n_samples: int
    seed: Optional[int] = None
    diagnostic: Optional[str] = None


@dataclass(frozen=True)
class LikelihoodConfig:
    """Everything an estimator needs besides theta and the data."""

    params: LoadParams
    scenario: VoltageScenario
    h: float = 1e-3
    estimator: str = "deterministic"
    n_trajectories: int = 100
    n_particles: int = 200
    ess_threshold: float = 0.5

    def __post_init__(self):
        canonical_estimator(self.estimator)
        if self.n_trajectories < 1:
            raise ConfigError("n_trajectories must be >= 1")
        if self.n_particles < 2:
            raise ConfigError("n_particles must be >= 2")
        if not 0.0 <= self.ess_threshold <= 1.0:
            raise ConfigError("ess_threshold must be in [0, 1]")


def gaussian_loglik(resid, var):
    """Elementwise log N(resid; 0, var)."""
    return -0.5 * (resid * resid) / var - 0.5 * np.log(2.0 * np.pi * var)


def log_mean_exp(x) -> float:
    """log(mean(exp(x))), stable; exact when all entries are equal."""
    x = np.asarray(x, dtype=float)
    m = float(np.max(x))
    if not np.isfinite(m):
        return m  # all -inf (or a nan/inf has poisoned the batch)
    return m + float(np.log(np.mean(np.exp(x - m))))


def effective_sample_size(w) -> float:
    """1 / sum(w^2) for normalized weights."""
    w = np.asarray(w, dtype=float)
    return 1.0 / float(np.sum(w * w))


def systematic_resample(w, rng: np.random.Generator) -> np.ndarray:
    """Systematic resampling indices for normalized weights ``w``.

    One uniform draw positions the whole comb, so E[copies of i] = n*w_i.
    """
    w = np.asarray(w, dtype=float)
    n = w.size
    positions = (rng.random() + np.arange(n)) / n
    cs = np.cumsum(w)
    cs[-1] = 1.0  # guard against cumulative round-off
    return np.searchsorted(cs, positions).astype(np.int64)


# ---------------------------------------------------------------------------
# Layout of the observation grid relative to the integration grid.
# ---------------------------------------------------------------------------

def _layout(dataset: MeasurementSeries, config: LikelihoodConfig):
    dt = dataset.obs_interval
    h = config.h
    stride = dt / h
    if abs(stride - round(stride)) > 1e-9 or round(stride) < 1:
        raise ConfigError(
            f"observation interval {dt} must be an integer multiple of h={h}"
        )
    stride = int(round(stride))
    if abs(dataset.times[0] - dt) > 1e-9 * max(1.0, dt):
        raise ConfigError("observations must start one interval after t=0")
    n_steps = stride * dataset.n_obs
    if dataset.times[-1] > config.scenario.t_end + 1e-9:
        raise ConfigError(
            f"scenario horizon {config.scenario.t_end} s does not cover the last "
            f"observation at {dataset.times[-1]} s"
        )
    v_seq = voltage_series(config.scenario, h, n_steps)
    return stride, n_steps, v_seq


def _check_obs_var(dataset: MeasurementSeries) -> float:
    ObservationModel(dataset.noise_var)  # validates > 0
    return dataset.noise_var


def _cumulative_loglik(p_obs, q_obs, yp, yq, var, bad):
    """Per-trajectory log p(y | x^i), accumulated observation by observation
    (the particle filter adds the same increments in the same order)."""
    n_traj = p_obs.shape[1]
    clw = np.zeros(n_traj)
    for k in range(yp.size):
        lw = gaussian_loglik(p_obs[k] - yp[k], var) + gaussian_loglik(q_obs[k] - yq[k], var)
        clw = clw + lw
    if np.any(bad >= 0):
        clw = np.where(bad >= 0, -np.inf, clw)
    return clw


def _simulate_observations(params: LoadParams, config: LikelihoodConfig,
                           dataset: MeasurementSeries, n_traj: int,
                           noise, use_noise: bool):
    stride, n_steps, v_seq = _layout(dataset, config)
    init = steady_state_init(params, float(v_seq[0]))
    cpar = pack_params(params, init.tau_m, n_traj)
    ed = np.full(n_traj, init.e_d)
    eq = np.full(n_traj, init.e_q)
    sl = np.full(n_traj, init.s)
    fr = np.full(n_traj, init.fr)
    p_obs = np.full((dataset.n_obs, n_traj), np.nan)
    q_obs = np.full((dataset.n_obs, n_traj), np.nan)
    full = np.empty((0, 0, 6))
    bad = np.full(n_traj, -1, dtype=np.int64)
    _kernels.simulate_batch(v_seq, config.h, cpar, params.q_axis_sign, 0.0, 1.0,
                            ed, eq, sl, fr, noise, use_noise,
                            stride, p_obs, q_obs, full, False, bad)
    return p_obs, q_obs, bad


def loglik_deterministic(theta, dataset: MeasurementSeries,
                         config: LikelihoodConfig) -> LogLikEstimate:
    """Exact Gaussian log-likelihood under noise-free dynamics."""
    params = config.params.with_theta(theta)
    var = _check_obs_var(dataset)
    p_obs, q_obs, bad = _simulate_observations(params, config, dataset, 1, NO_NOISE, False)
    clw = _cumulative_loglik(p_obs, q_obs, dataset.p_meas, dataset.q_meas, var, bad)
    diagnostic = f"simulation failed at step {int(bad[0])}" if bad[0] >= 0 else None
    return LogLikEstimate(value=float(clw[0]), estimator="deterministic",
                          n_samples=1, diagnostic=diagnostic)


def loglik_mc(theta, dataset: MeasurementSeries, n_trajectories: int,
              seed, config: LikelihoodConfig) -> LogLikEstimate:
    """Monte Carlo average of the observation density over trajectories drawn
    from the process prior, combined with a stable log-mean-exp."""
    if n_trajectories < 1:
        raise ConfigError("n_trajectories must be >= 1")
    params = config.params.with_theta(theta)
    var = _check_obs_var(dataset)
    stride, n_steps, _ = _layout(dataset, config)
    use_noise = params.tripping.sigma_w > 0.0
    if use_noise:
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal((n_trajectories, n_steps))
    else:
        noise = NO_NOISE
    p_obs, q_obs, bad = _simulate_observations(params, config, dataset,
                                               n_trajectories, noise, use_noise)
    clw = _cumulative_loglik(p_obs, q_obs, dataset.p_meas, dataset.q_meas, var, bad)
    value = log_mean_exp(clw)
    n_bad = int(np.sum(bad >= 0))
    diagnostic = f"{n_bad}/{n_trajectories} trajectories failed" if n_bad else None
    return LogLikEstimate(value=value, estimator="mc", n_samples=n_trajectories,
                          seed=_seed_repr(seed), diagnostic=diagnostic)


def particle_filter_loglik(n_obs: int, n_particles: int,
                           propagate: Callable[[int], None],
                           log_obs_density: Callable[[int], np.ndarray],
                           reorder: Callable[[np.ndarray], None],
                           rng: np.random.Generator,
                           ess_threshold: float = 0.5):
    """Generic bootstrap filter likelihood accumulator.

    Cumulative log-weights are kept per segment between resampling events;
    each segment contributes log-mean-exp of its weights, which telescopes
    to the standard estimate and reduces exactly to the Monte Carlo average
    when resampling never triggers.

    Returns (loglik, n_resamples, collapse_index); collapse_index is the
    observation at which every particle had zero density (-1 if none).
    """
    clw = np.zeros(n_particles)
    total = 0.0
    n_resamples = 0
    for k in range(n_obs):
        propagate(k)
        lw = log_obs_density(k)
        clw = clw + lw
        if not np.isfinite(np.max(clw)):
            return -np.inf, n_resamples, k
        if ess_threshold > 0.0 and k < n_obs - 1:
            w = np.exp(clw - np.max(clw))
            w /= np.sum(w)
            if effective_sample_size(w) < ess_threshold * n_particles:
                total += log_mean_exp(clw)
                reorder(systematic_resample(w, rng))
                clw = np.zeros(n_particles)
                n_resamples += 1
    return total + log_mean_exp(clw), n_resamples, -1


def loglik_pf(theta, dataset: MeasurementSeries, n_particles: int,
              seed, config: LikelihoodConfig) -> LogLikEstimate:
    """Bootstrap particle filter estimate of the log-likelihood."""
    if n_particles < 2:
        raise ConfigError("n_particles must be >= 2")
    params = config.params.with_theta(theta)
    var = _check_obs_var(dataset)
    stride, n_steps, v_seq = _layout(dataset, config)
    init = steady_state_init(params, float(v_seq[0]))
    cpar = pack_params(params, init.tau_m, n_particles)
    ed = np.full(n_particles, init.e_d)
    eq = np.full(n_particles, init.e_q)
    sl = np.full(n_particles, init.s)
    fr = np.full(n_particles, init.fr)
    bad = np.full(n_particles, -1, dtype=np.int64)
    rng = np.random.default_rng(seed)
    use_noise = params.tripping.sigma_w > 0.0
    noise = rng.standard_normal((n_particles, n_steps)) if use_noise else NO_NOISE
    pbuf = np.empty(n_particles)
    qbuf = np.empty(n_particles)
    yp = dataset.p_meas
    yq = dataset.q_meas
    h = config.h
    sign = params.q_axis_sign

    def propagate(k):
        _kernels.advance(v_seq, h, k * stride, (k + 1) * stride, cpar, sign,
                         0.0, 1.0, ed, eq, sl, fr, noise, use_noise, bad)

    def log_obs_density(k):
        _kernels.inject_batch(v_seq[(k + 1) * stride], cpar, sign, 0.0, 1.0,
                              ed, eq, fr, pbuf, qbuf)
        lw = gaussian_loglik(pbuf - yp[k], var) + gaussian_loglik(qbuf - yq[k], var)
        if np.any(bad >= 0):
            lw = np.where(bad >= 0, -np.inf, lw)
        return lw

    def reorder(idx):
        ed[...] = ed[idx]
        eq[...] = eq[idx]
        sl[...] = sl[idx]
        fr[...] = fr[idx]
        bad[...] = bad[idx]

    value, n_resamples, collapse = particle_filter_loglik(
        dataset.n_obs, n_particles, propagate, log_obs_density, reorder, rng,
        ess_threshold=config.ess_threshold,
    )
    diagnostic = f"weight collapse at observation {collapse}" if collapse >= 0 else None
    return LogLikEstimate(value=value, estimator="pf", n_samples=n_particles,
                          seed=_seed_repr(seed), diagnostic=diagnostic)


def evaluate_loglik(theta, dataset: MeasurementSeries, config: LikelihoodConfig,
                    seed=None) -> LogLikEstimate:
    """Dispatch on the configured estimator."""
    kind = canonical_estimator(config.estimator)
    if kind == "deterministic":
        return loglik_deterministic(theta, dataset, config)
    if kind == "mc":
        return loglik_mc(theta, dataset, config.n_trajectories, seed, config)
    return loglik_pf(theta, dataset, config.n_particles, seed, config)


def estimator_variance_study(theta, dataset: MeasurementSeries, sample_counts,
                             replications: int, seed,
                             config: LikelihoodConfig) -> list:
    """Empirical variance of the MC and PF estimates versus sample count.

    Returns one record per (estimator, n): a dict with keys
    estimator, n, variance, replications.
    """
    if replications < 2:
        raise ConfigError("replications must be >= 2")
    records = []
    for est_id, fn in (("mc", loglik_mc), ("pf", loglik_pf)):
        for n in sample_counts:
            values = np.empty(replications)
            for r in range(replications):
                ss = np.random.SeedSequence((_entropy(seed), ord(est_id[0]), int(n), r))
                values[r] = fn(theta, dataset, int(n), ss, config).value
            records.append({
                "estimator": est_id,
                "n": int(n),
                "variance": float(np.var(values, ddof=1)),
                "replications": replications,
            })
    return records


def _entropy(seed) -> int:
    if isinstance(seed, np.random.SeedSequence):
        return int(seed.entropy)
    return int(seed) if seed is not None else 0


def _seed_repr(seed) -> Optional[int]:
    if seed is None:
        return None
    if isinstance(seed, np.random.SeedSequence):
        e = seed.entropy
        return int(e) if isinstance(e, int) else None
    return int(seed)
