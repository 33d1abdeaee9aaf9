"""
Change of measure from P to Q.

The kernel q(lambda) = (k sigma / 2) lambda^(k-1) - (a / sigma) lambda^(-k)
shifts the CKLS drift a - b lambda into k sigma^2 / 2 lambda^(2k-1) - b lambda.
The density process is M_t = exp{int q dW - 1/2 int q^2 ds}, with
W~ = W - int q ds a Brownian motion under Q.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed
from scipy import stats

from .conf import ckls_settings
from .exceptions import DomainError, ExcessiveOverflow, OverflowToZeroOrInf
from .simulate import Measure, MomentAccumulator, ckls_p_scheme, make_stream, time_grid

logger = logging.getLogger(__name__)

# exp() stays finite and nonzero on this range
LOG_M_MAX = math.log(np.finfo(float).max)
LOG_M_MIN = math.log(np.finfo(float).tiny)


@dataclass(frozen=True)
class KernelEval:
    lam: float
    q: float
    q_squared: float


@dataclass(frozen=True)
class CheckpointEstimate:
    t: float
    mean: float
    std_err: float
    ci95_lo: float
    ci95_hi: float


@dataclass(frozen=True)
class MartingaleReport:
    n_paths: int
    t_max: float
    dt: float
    mean_MT: float
    std_err: float
    ci95_lo: float
    ci95_hi: float
    frac_overflow: float
    floored_steps: int
    checkpoints: tuple

    @property
    def contains_one(self):
        return all(cp.ci95_lo <= 1.0 <= cp.ci95_hi for cp in self.checkpoints)


@dataclass(frozen=True)
class QEstimate:
    mean: float
    std_err: float
    n_used: int


@dataclass(frozen=True)
class NovikovReport:
    threshold: float
    n_samples: int
    empirical_tail: float
    tail_std_err: float
    analytic_tail: float
    mean_energy: float
    energy_std_err: float


def kernel_q(lam, p):
    """(k sigma / 2) lambda^(k-1) - (a / sigma) lambda^(-k)"""
    arr = np.asarray(lam, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError("lambda must be strictly positive")
    log_lam = np.log(arr)
    q = 0.5 * p.k * p.sigma * np.exp((p.k - 1.0) * log_lam) - p.a / p.sigma * np.exp(-p.k * log_lam)
    return float(q) if q.ndim == 0 else q


def kernel_eval(lam, p):
    q = kernel_q(lam, p)
    return KernelEval(lam=float(lam), q=q, q_squared=q * q)


def kernel_zero(p):
    """lambda* = (2a / (k sigma^2))^(1/(2k-1)); q keeps one sign at k = 1/2"""
    if p.is_cir_case:
        raise DomainError("q has no zero at k = 1/2")
    return (2.0 * p.a / (p.k * p.sigma ** 2)) ** (1.0 / (2.0 * p.k - 1.0))


def drift_shift_residual(x, p):
    """(a - bx) + q(x) sigma x^k - (k sigma^2 / 2 x^(2k-1) - bx)"""
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError("x must be strictly positive")
    log_x = np.log(arr)
    shifted = (p.a - p.b * arr) + np.asarray(kernel_q(arr, p)) * p.sigma * np.exp(p.k * log_x)
    target = 0.5 * p.k * p.sigma ** 2 * np.exp((2.0 * p.k - 1.0) * log_x) - p.b * arr
    residual = shifted - target
    return float(residual) if residual.ndim == 0 else residual


def log_dd_exponential(values, increments, times, p):
    """
    sum q(lambda_n) dW_n - 1/2 sum q(lambda_n)^2 dt along one path or a bundle.

    States below the positivity floor are evaluated at the floor; the second
    return value counts those steps.
    """
    values = np.asarray(values, dtype=float)
    increments = np.asarray(increments, dtype=float)
    floor = ckls_settings.POSITIVITY_FLOOR
    left = values[..., :-1]
    floored = int(np.count_nonzero(left < floor))
    q = np.asarray(kernel_q(np.maximum(left, floor), p))
    dts = np.diff(times)
    return np.sum(q * increments - 0.5 * q * q * dts, axis=-1), floored


def dd_exponential(path, p):
    """M_T along a P path simulated with ``keep_increments=True``"""
    if path.measure != Measure.P:
        raise DomainError("The density process is evaluated on P paths")
    if len(path.times) == 1:
        return 1.0
    if path.increments is None:
        raise DomainError("Path was simulated without its Brownian increments")
    log_m, floored = log_dd_exponential(path.values, path.increments, path.times, p)
    if floored:
        logger.info("%d steps evaluated at the positivity floor", floored)
    log_m = float(log_m)
    if not (LOG_M_MIN < log_m < LOG_M_MAX):
        raise OverflowToZeroOrInf(f"log M_T = {log_m:g} is outside the double range")
    return math.exp(log_m)


def _weighted_chunk(p, grid, n_paths, seed, stream_id, checkpoint_index):
    rng = make_stream(seed, stream_id)
    scheme = ckls_p_scheme(p)
    floor = ckls_settings.POSITIVITY_FLOOR
    lam = np.full(n_paths, p.lambda0)
    log_m = np.zeros(n_paths)
    # M_0 = 1
    saved = {t: log_m.copy() for t, index in checkpoint_index.items() if index == 0}
    floored = 0
    for n, dt in enumerate(np.diff(grid)):
        dw = rng.normal(n_paths) * math.sqrt(dt)
        lam_plus = np.maximum(lam, 0.0)
        floored += int(np.count_nonzero(lam_plus < floor))
        q = np.asarray(kernel_q(np.maximum(lam_plus, floor), p))
        log_m += q * dw - 0.5 * q * q * dt
        lam = scheme.advance(lam, dt, dw)
        for t, index in checkpoint_index.items():
            if index == n + 1:
                saved[t] = log_m.copy()
    return np.maximum(lam, 0.0), log_m, saved, floored


@dataclass(frozen=True)
class WeightedBatch:
    terminal: np.ndarray
    log_m: np.ndarray
    checkpoint_log_m: dict
    floored: int
    n_paths: int


def simulate_weighted(p, *, t_max, dt=None, n_paths=None, seed=None, checkpoints=(), n_jobs=None):
    """
    Terminal lambda and log M under P, sharing the Brownian increments.

    Chunk c draws from stream c of ``seed`` like ``simulate_paths``.
    """
    dt = ckls_settings.DT if dt is None else dt
    n_paths = ckls_settings.N_PATHS if n_paths is None else int(n_paths)
    seed = ckls_settings.SEED if seed is None else seed
    n_jobs = ckls_settings.N_JOBS if n_jobs is None else n_jobs
    grid = time_grid(t_max, dt)
    checkpoint_index = {float(t): int(np.argmin(np.abs(grid - t))) for t in checkpoints}

    chunk_size = ckls_settings.CHUNK_SIZE
    sizes = [min(chunk_size, n_paths - start) for start in range(0, n_paths, chunk_size)]
    chunks = Parallel(n_jobs=n_jobs)(
        delayed(_weighted_chunk)(p, grid, size, seed, stream_id, checkpoint_index)
        for stream_id, size in enumerate(sizes)
    )
    return WeightedBatch(
        terminal=np.concatenate([chunk[0] for chunk in chunks]),
        log_m=np.concatenate([chunk[1] for chunk in chunks]),
        checkpoint_log_m={t: np.concatenate([chunk[2][t] for chunk in chunks]) for t in checkpoint_index},
        floored=sum(chunk[3] for chunk in chunks),
        n_paths=n_paths,
    )


def _finite_weights(log_m):
    """exp(log M) on paths inside the double range, and the number excluded"""
    ok = (log_m > LOG_M_MIN) & (log_m < LOG_M_MAX)
    return np.exp(log_m[ok]), ok, int(np.count_nonzero(~ok))


def _estimate(t, samples):
    acc = MomentAccumulator.of(samples)
    z = stats.norm.ppf(0.975)
    return CheckpointEstimate(
        t=t,
        mean=acc.mean,
        std_err=acc.std_err,
        ci95_lo=acc.mean - z * acc.std_err,
        ci95_hi=acc.mean + z * acc.std_err,
    )


def martingale_estimate(p, t_max, dt=None, n_paths=None, seed=None, *, n_jobs=None):
    """
    E^P[M_t] at t in {1/4, 1/2, 3/4, 1} t_max with 95% confidence intervals.

    Paths whose log M leaves the double range are excluded and counted; more
    than MAX_OVERFLOW_FRACTION of them fails the estimate.
    """
    dt = ckls_settings.DT if dt is None else dt
    checkpoints = tuple(f * t_max for f in (0.25, 0.5, 0.75))
    batch = simulate_weighted(p, t_max=t_max, dt=dt, n_paths=n_paths, seed=seed,
                              checkpoints=checkpoints, n_jobs=n_jobs)

    overflow = 0
    estimates = []
    for t in (*checkpoints, t_max):
        log_m = batch.log_m if t == t_max else batch.checkpoint_log_m[float(t)]
        weights, _, excluded = _finite_weights(log_m)
        overflow = max(overflow, excluded)
        estimates.append(_estimate(float(t), weights))

    frac_overflow = overflow / batch.n_paths
    if overflow:
        logger.warning("%d of %d paths overflowed and were excluded", overflow, batch.n_paths)
    if frac_overflow > ckls_settings.MAX_OVERFLOW_FRACTION:
        raise ExcessiveOverflow(
            f"Overflow fraction {frac_overflow:.4f} exceeds {ckls_settings.MAX_OVERFLOW_FRACTION:.4f}"
        )

    final = estimates[-1]
    return MartingaleReport(
        n_paths=batch.n_paths,
        t_max=t_max,
        dt=dt,
        mean_MT=final.mean,
        std_err=final.std_err,
        ci95_lo=final.ci95_lo,
        ci95_hi=final.ci95_hi,
        frac_overflow=frac_overflow,
        floored_steps=batch.floored,
        checkpoints=tuple(estimates),
    )


def q_expectation(payoff, p, t_max, dt=None, n_paths=None, seed=None, *, n_jobs=None):
    """E^P[M_T f(lambda_T)], which equals E^Q[f(lambda_T)] when M is a martingale"""
    batch = simulate_weighted(p, t_max=t_max, dt=dt, n_paths=n_paths, seed=seed, n_jobs=n_jobs)
    weights, ok, excluded = _finite_weights(batch.log_m)
    if excluded / batch.n_paths > ckls_settings.MAX_OVERFLOW_FRACTION:
        raise ExcessiveOverflow(f"{excluded} of {batch.n_paths} paths overflowed")
    terminal = batch.terminal[ok]
    values = np.asarray(payoff(np.maximum(terminal, ckls_settings.POSITIVITY_FLOOR)), dtype=float)
    acc = MomentAccumulator.of(weights * values)
    return QEstimate(mean=acc.mean, std_err=acc.std_err, n_used=acc.count)


def novikov_counterexample(threshold, n_samples=None, seed=None, horizon=1.0):
    """
    A kernel q_t = sqrt(Z / T) with Z ~ Exp(1) on [0, T]: the energy
    int q^2 dt = Z has finite mean, yet P(int q^2 > C) = e^(-C) > 0 for every
    C, so no bound on the energy holds almost surely.
    """
    if threshold < 0:
        raise DomainError("The threshold must be nonnegative")
    if not horizon > 0:
        raise DomainError("The horizon must be strictly positive")
    n_samples = ckls_settings.N_PATHS if n_samples is None else int(n_samples)
    seed = ckls_settings.SEED if seed is None else seed
    z = make_stream(seed, 0).exponential(n_samples)
    q = np.sqrt(z / horizon)
    energy = q * q * horizon
    tail = float(np.mean(energy > threshold))
    acc = MomentAccumulator.of(energy)
    return NovikovReport(
        threshold=threshold,
        n_samples=n_samples,
        empirical_tail=tail,
        tail_std_err=math.sqrt(tail * (1.0 - tail) / n_samples),
        analytic_tail=math.exp(-threshold),
        mean_energy=acc.mean,
        energy_std_err=acc.std_err,
    )
