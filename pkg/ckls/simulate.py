"""
Path generation.

Euler-Maruyama with full truncation for the square-root-type diffusions
(lambda under P and under Q, X under P and under Q, the squared Bessel
process), exact Gaussian recursion for S = lambda^(1-k) under Q, and the
batch driver that fans Monte-Carlo chunks out over joblib workers.

Single paths (or small bundles) come back as ``Path``; large batches only
keep terminal values and checkpoint states, merged chunk by chunk.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from django.db.models import TextChoices
from joblib import Parallel, delayed
from scipy import integrate

from .conf import ckls_settings
from .exceptions import CensoredBatch, DomainError, NegativeSRealization
from .params import derive_cir, feller_ratio
from .transform import TransformSpec, forward

logger = logging.getLogger(__name__)


class Measure(TextChoices):
    P = 'P', 'Physical measure'
    Q = 'Q', 'Auxiliary measure'


class Scheme(TextChoices):
    EM = 'em_full_truncation', 'Euler-Maruyama, full truncation'
    EXACT = 'exact_gaussian', 'Exact Gaussian recursion for S'
    BESQ = 'besq_time_change', 'Squared Bessel process on the transformed clock'


@dataclass
class RngStream:
    """Reproducible substream ``stream_id`` of ``seed``"""
    seed: int
    stream_id: int
    generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        sequence = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.Philox(sequence))

    def normal(self, size=None):
        return self.generator.standard_normal(size)

    def exponential(self, size=None):
        return self.generator.standard_exponential(size)


def make_stream(seed, stream_id=0):
    return RngStream(seed=int(seed), stream_id=int(stream_id))


@dataclass(frozen=True)
class Path:
    """
    States on a time grid. ``values`` has shape (n_times,) for one path and
    (n_paths, n_times) for a bundle. ``increments`` holds the Brownian
    increments that drove the path when the scheme was asked to keep them.
    """
    times: np.ndarray
    values: np.ndarray
    measure: str
    scheme: str
    seed: int
    stream: int
    increments: np.ndarray = None
    truncated: int = 0
    censored_at: int = None

    def __post_init__(self):
        if self.values.shape[-1] != len(self.times):
            raise DomainError("Path values and times differ in length")

    @property
    def t_max(self):
        return float(self.times[-1])


def time_grid(t_max, dt):
    """0 = t_0 < ... < t_n = t_max with n = round(t_max / dt)"""
    if not (t_max > 0) or not (0 < dt <= t_max):
        raise DomainError(f"Need t_max > 0 and 0 < dt <= t_max (got t_max={t_max!r}, dt={dt!r})")
    n_steps = max(1, int(round(t_max / dt)))
    return np.linspace(0.0, t_max, n_steps + 1)


def _check_grid(grid):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 2 or grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
        raise DomainError("Grid must be strictly increasing from 0")
    return grid


class EulerScheme:
    """
    Full-truncation Euler-Maruyama step x + mu(x+) dt + nu(x+) dW.

    ``drift`` and ``diffusion`` are evaluated at x+ = max(x, 0) only; the
    unclipped state is carried forward and the clipped one is reported.
    """

    def __init__(self, drift, diffusion):
        self.drift = drift
        self.diffusion = diffusion

    def advance(self, x, dt, dw):
        x_plus = np.maximum(x, 0.0)
        return x + self.drift(x_plus) * dt + self.diffusion(x_plus) * dw

    def run(self, x0, grid, rng, n_paths=1, keep_increments=False):
        dts = np.diff(grid)
        values = np.empty((n_paths, len(grid)))
        values[:, 0] = x0
        increments = np.empty((n_paths, len(dts))) if keep_increments else None
        x = np.full(n_paths, float(x0))
        truncated = 0
        for n, dt in enumerate(dts):
            dw = rng.normal(n_paths) * math.sqrt(dt)
            if keep_increments:
                increments[:, n] = dw
            x = self.advance(x, dt, dw)
            truncated += int(np.count_nonzero(x < 0))
            values[:, n + 1] = np.maximum(x, 0.0)
        return values, increments, truncated


def _power(x, expo):
    """x^expo for x >= 0, with 0^0 = 1 and 0^expo = 0 for expo > 0"""
    with np.errstate(divide='ignore'):
        return np.where(x > 0, np.exp(expo * np.log(np.where(x > 0, x, 1.0))), 0.0 if expo > 0 else 1.0)


def ckls_p_scheme(p):
    """d lambda = (a - b lambda) dt + sigma lambda^k dW"""
    return EulerScheme(
        drift=lambda x: p.a - p.b * x,
        diffusion=lambda x: p.sigma * _power(x, p.k),
    )


def lambda_q_scheme(p):
    """d lambda = (k sigma^2 / 2 lambda^(2k-1) - b lambda) dt + sigma lambda^k dW"""
    return EulerScheme(
        drift=lambda x: 0.5 * p.k * p.sigma ** 2 * _power(x, 2.0 * p.k - 1.0) - p.b * x,
        diffusion=lambda x: p.sigma * _power(x, p.k),
    )


def cir_scheme(c):
    """dX = a*(b* - X) dt + sigma* sqrt(X) dW"""
    return EulerScheme(
        drift=lambda x: c.a_star * (c.b_star - x),
        diffusion=lambda x: c.sigma_star * np.sqrt(x),
    )


def x_p_scheme(p):
    """
    X = T(lambda) under P, by Ito's formula:
    dX = [L^2 / (2(1-k)) a lambda^(1-2k) - 2b(1-k) X + sigma^2 L^2 (1-2k) / (4(1-k))] dt + sigma L sqrt(X) dW
    with lambda^(1-2k) = (X / coeff)^((1-2k) / (2(1-k))).
    """
    spec = TransformSpec.for_params(p)
    one_minus_k = 1.0 - p.k
    floor = ckls_settings.POSITIVITY_FLOOR
    constant = p.sigma ** 2 * p.L ** 2 * (1.0 - 2.0 * p.k) / (4.0 * one_minus_k)
    expo = (1.0 - 2.0 * p.k) / (2.0 * one_minus_k)

    def drift(x):
        lam_term = np.exp(expo * (np.log(np.maximum(x, floor)) - spec.log_coeff))
        return p.L ** 2 / (2.0 * one_minus_k) * p.a * lam_term - 2.0 * p.b * one_minus_k * x + constant

    return EulerScheme(drift=drift, diffusion=lambda x: p.sigma * p.L * np.sqrt(x))


def _em_path(scheme, x0, t_max, dt, rng, measure, n_paths, keep_increments):
    grid = time_grid(t_max, dt)
    values, increments, truncated = scheme.run(x0, grid, rng, n_paths=n_paths, keep_increments=keep_increments)
    if n_paths == 1:
        values = values[0]
        increments = None if increments is None else increments[0]
    return Path(
        times=grid,
        values=values,
        measure=measure,
        scheme=Scheme.EM.value,
        seed=rng.seed,
        stream=rng.stream_id,
        increments=increments,
        truncated=truncated,
    )


def em_ckls_p(p, t_max, dt, rng, *, n_paths=1, keep_increments=False):
    return _em_path(ckls_p_scheme(p), p.lambda0, t_max, dt, rng, Measure.P.value, n_paths, keep_increments)


def em_x_q(c, t_max, dt, rng, *, n_paths=1):
    return _em_path(cir_scheme(c), c.x0, t_max, dt, rng, Measure.Q.value, n_paths, False)


def em_lambda_q(p, t_max, dt, rng, *, n_paths=1):
    return _em_path(lambda_q_scheme(p), p.lambda0, t_max, dt, rng, Measure.Q.value, n_paths, False)


def em_x_p(p, t_max, dt, rng, *, n_paths=1, keep_increments=False):
    x0 = forward(p.lambda0, TransformSpec.for_params(p))
    return _em_path(x_p_scheme(p), x0, t_max, dt, rng, Measure.P.value, n_paths, keep_increments)


# Exact recursion for S under Q

def s_step_constants(p, dt):
    """Decay factor and innovation standard deviation of one S step of length dt"""
    rate = p.b * (1.0 - p.k)
    decay = math.exp(-rate * dt)
    sd = math.sqrt(p.sigma ** 2 * (1.0 - p.k) * -math.expm1(-2.0 * rate * dt) / (2.0 * p.b))
    return decay, sd


def exact_s(p, grid, rng, n_paths=1):
    """S on the grid, shape (n_paths, n_times); Gaussian, may cross zero"""
    grid = _check_grid(grid)
    values = np.empty((n_paths, len(grid)))
    values[:, 0] = p.lambda0 ** (1.0 - p.k)
    for n, dt in enumerate(np.diff(grid)):
        decay, sd = s_step_constants(p, dt)
        values[:, n + 1] = values[:, n] * decay + sd * rng.normal(n_paths)
    return values


def exact_lambda_q(p, grid, rng, *, strict=False):
    """
    lambda = S^(1/(1-k)) along one exact S path.

    A path whose S reaches zero is censored: the returned path stops at the
    last positive state and ``censored_at`` holds the index of the crossing.
    With ``strict`` the crossing raises instead.
    """
    grid = _check_grid(grid)
    s = exact_s(p, grid, rng)[0]
    crossings = np.flatnonzero(s <= 0)
    censored_at = None
    if crossings.size:
        censored_at = int(crossings[0])
        if strict:
            raise NegativeSRealization(f"S crossed zero at t={grid[censored_at]:g}")
        logger.info("S path censored at t=%g", grid[censored_at])
        s = s[:censored_at]
        grid = grid[:censored_at]
    return Path(
        times=grid,
        values=np.exp(np.log(s) / (1.0 - p.k)),
        measure=Measure.Q.value,
        scheme=Scheme.EXACT.value,
        seed=rng.seed,
        stream=rng.stream_id,
        censored_at=censored_at,
    )


# Squared Bessel representation of CIR

def besq_dimension(c):
    return 2.0 * feller_ratio(c)


def besq_clock(t, c):
    """sigma*^2 (e^(a* t) - 1) / (4 a*)"""
    return c.sigma_star ** 2 * np.expm1(c.a_star * np.asarray(t)) / (4.0 * c.a_star)


def besq_scheme(dim):
    """dZ = dim du + 2 sqrt(Z) dB"""
    return EulerScheme(drift=lambda z: np.full_like(z, dim), diffusion=lambda z: 2.0 * np.sqrt(z))


def cir_via_besq(c, t_max, n_steps, rng, *, n_paths=1):
    """r_t = e^(-a* t) Z(besq_clock(t)) for Z a squared Bessel process from x0"""
    if not (t_max > 0) or n_steps < 1:
        raise DomainError("Need t_max > 0 and n_steps >= 1")
    grid = np.linspace(0.0, t_max, int(n_steps) + 1)
    z, _, truncated = besq_scheme(besq_dimension(c)).run(c.x0, besq_clock(grid, c), rng, n_paths=n_paths)
    values = np.exp(-c.a_star * grid) * z
    return Path(
        times=grid,
        values=values[0] if n_paths == 1 else values,
        measure=Measure.Q.value,
        scheme=Scheme.BESQ.value,
        seed=rng.seed,
        stream=rng.stream_id,
        truncated=truncated,
    )


def ergodic_average(path, q):
    """(1/T) times the trapezoidal integral of lambda^q over the path, one value per path of a bundle"""
    values = np.asarray(path.values, dtype=float)
    if q < 0 and np.any(values <= 0):
        raise DomainError("Negative exponent needs a strictly positive path")
    if q == 0:
        averages = np.ones(values.shape[:-1])
    else:
        span = path.times[-1] - path.times[0]
        averages = integrate.trapezoid(values ** q, path.times, axis=-1) / span
    return float(averages) if averages.ndim == 0 else averages


# Batch Monte Carlo

@dataclass(frozen=True)
class MomentAccumulator:
    count: int = 0
    total: float = 0.0
    total_sq: float = 0.0

    @classmethod
    def of(cls, samples):
        samples = np.asarray(samples, dtype=float)
        return cls(count=samples.size, total=float(samples.sum()), total_sq=float(np.square(samples).sum()))

    def merge(self, other):
        return MomentAccumulator(
            count=self.count + other.count,
            total=self.total + other.total,
            total_sq=self.total_sq + other.total_sq,
        )

    @property
    def mean(self):
        if self.count == 0:
            return math.nan
        return self.total / self.count

    @property
    def variance(self):
        """Unbiased sample variance"""
        if self.count < 2:
            return math.nan
        return max(self.total_sq - self.count * self.mean ** 2, 0.0) / (self.count - 1)

    @property
    def std_err(self):
        if self.count < 2:
            return math.nan
        return math.sqrt(self.variance / self.count)


@dataclass(frozen=True)
class BatchResult:
    terminal: np.ndarray
    checkpoints: dict
    accumulator: MomentAccumulator
    n_paths: int
    truncated: int
    censored: int
    measure: str
    scheme: str
    state: str
    seed: int


STATES = ('lambda', 'x', 's')


def _batch_scheme(p, measure, state):
    if measure == Measure.P:
        if state == 'lambda':
            return ckls_p_scheme(p), p.lambda0
        if state == 'x':
            return x_p_scheme(p), forward(p.lambda0, TransformSpec.for_params(p))
    else:
        if state == 'lambda':
            return lambda_q_scheme(p), p.lambda0
        if state == 'x':
            cir = derive_cir(p)
            return cir_scheme(cir), cir.x0
    raise DomainError(f"No Euler scheme for state {state!r} under {measure}")


def _checkpoint_indices(grid, checkpoints):
    return {float(t): int(np.argmin(np.abs(grid - t))) for t in checkpoints}


def _exact_state(s, censored, p, state):
    """S mapped to the requested state; lambda and X drop censored paths"""
    if state == 's':
        return s.copy()
    lam = np.exp(np.log(s[~censored]) / (1.0 - p.k))
    if state == 'lambda':
        return lam
    return forward(lam, TransformSpec.for_params(p))


def _simulate_chunk(p, measure, scheme, state, grid, n_paths, seed, stream_id, checkpoints):
    rng = make_stream(seed, stream_id)
    indices = _checkpoint_indices(grid, checkpoints)
    saved = {}
    truncated = 0
    censored = np.zeros(n_paths, dtype=bool)

    def save(step, observe):
        # index 0 is the initial state
        for t, index in indices.items():
            if index == step:
                saved[t] = observe()

    if scheme == Scheme.EXACT:
        s = np.full(n_paths, p.lambda0 ** (1.0 - p.k))
        save(0, lambda: _exact_state(s, censored, p, state))
        for n, dt in enumerate(np.diff(grid)):
            decay, sd = s_step_constants(p, dt)
            s = s * decay + sd * rng.normal(n_paths)
            censored |= s <= 0
            save(n + 1, lambda: _exact_state(s, censored, p, state))
        x = _exact_state(s, censored, p, state)
    elif scheme == Scheme.BESQ:
        cir = derive_cir(p)
        clock = besq_clock(grid, cir)
        besq = besq_scheme(besq_dimension(cir))
        z = np.full(n_paths, cir.x0)
        save(0, lambda: z.copy())
        for n, du in enumerate(np.diff(clock)):
            z = besq.advance(z, du, rng.normal(n_paths) * math.sqrt(du))
            truncated += int(np.count_nonzero(z < 0))
            save(n + 1, lambda: math.exp(-cir.a_star * grid[n + 1]) * np.maximum(z, 0.0))
        x = math.exp(-cir.a_star * grid[-1]) * np.maximum(z, 0.0)
    else:
        em, x0 = _batch_scheme(p, measure, state)
        x = np.full(n_paths, float(x0))
        save(0, lambda: x.copy())
        for n, dt in enumerate(np.diff(grid)):
            x = em.advance(x, dt, rng.normal(n_paths) * math.sqrt(dt))
            truncated += int(np.count_nonzero(x < 0))
            save(n + 1, lambda: np.maximum(x, 0.0))
        x = np.maximum(x, 0.0)

    if state == 's':
        return x, saved, truncated, 0
    return x, saved, truncated, int(censored.sum())


def simulate_paths(p, *, measure=Measure.Q, scheme=Scheme.EM, state='x', t_max=1.0, dt=None,
                   n_paths=None, seed=None, checkpoints=(), n_jobs=None):
    """
    Terminal states of ``n_paths`` independent paths.

    Paths are simulated in chunks of CHUNK_SIZE; chunk c draws from stream c of
    ``seed``, so the result does not depend on ``n_jobs``. The exact scheme
    runs under Q only and censors paths whose S reaches zero; the BESQ scheme
    produces X under Q.
    """
    measure = Measure(measure)
    scheme = Scheme(scheme)
    dt = ckls_settings.DT if dt is None else dt
    n_paths = ckls_settings.N_PATHS if n_paths is None else int(n_paths)
    seed = ckls_settings.SEED if seed is None else seed
    n_jobs = ckls_settings.N_JOBS if n_jobs is None else n_jobs
    if state not in STATES:
        raise DomainError(f"Unknown state {state!r}; expected one of {', '.join(STATES)}")
    if scheme != Scheme.EM and measure != Measure.Q:
        raise DomainError(f"{scheme.label} is only available under Q")
    if scheme == Scheme.BESQ and state != 'x':
        raise DomainError("The BESQ route produces X only")
    if scheme == Scheme.EM and state == 's':
        raise DomainError("S is simulated by the exact scheme only")
    if n_paths < 1:
        raise DomainError("n_paths must be at least 1")

    grid = time_grid(t_max, dt)
    chunk_size = ckls_settings.CHUNK_SIZE
    sizes = [min(chunk_size, n_paths - start) for start in range(0, n_paths, chunk_size)]
    chunks = Parallel(n_jobs=n_jobs)(
        delayed(_simulate_chunk)(p, measure, scheme, state, grid, size, seed, stream_id, checkpoints)
        for stream_id, size in enumerate(sizes)
    )

    terminal = np.concatenate([chunk[0] for chunk in chunks])
    saved = {
        t: np.concatenate([chunk[1][t] for chunk in chunks])
        for t in _checkpoint_indices(grid, checkpoints)
    }
    accumulator = MomentAccumulator()
    for chunk in chunks:
        accumulator = accumulator.merge(MomentAccumulator.of(chunk[0]))
    truncated = sum(chunk[2] for chunk in chunks)
    censored = sum(chunk[3] for chunk in chunks)

    logger.info(
        "Simulated %d paths (%s, %s, state=%s, T=%g, dt=%g): mean=%.6g se=%.3g truncated=%d censored=%d",
        n_paths, measure.value, scheme.value, state, t_max, dt,
        accumulator.mean, accumulator.std_err,
        truncated, censored,
    )
    if censored > ckls_settings.MAX_CENSORED_FRACTION * n_paths:
        logger.warning("Censored fraction %.4f exceeds %.4f", censored / n_paths, ckls_settings.MAX_CENSORED_FRACTION)
    if state != 's' and accumulator.count == 0:
        raise CensoredBatch(f"All {n_paths} paths were censored before T={t_max:g}")

    return BatchResult(
        terminal=terminal,
        checkpoints=saved,
        accumulator=accumulator,
        n_paths=n_paths,
        truncated=truncated,
        censored=censored,
        measure=measure.value,
        scheme=scheme.value,
        state=state,
        seed=seed,
    )


def histogram_l1(samples, density, grid):
    """
    L1 distance between the normalised histogram of ``samples`` on the bins
    of ``grid`` and ``density`` evaluated at the bin midpoints. Samples
    outside the grid count towards the distance.
    """
    samples = np.asarray(samples, dtype=float)
    grid = np.asarray(grid, dtype=float)
    counts, _ = np.histogram(samples, bins=grid)
    widths = np.diff(grid)
    empirical = counts / (samples.size * widths)
    reference = np.asarray(density(0.5 * (grid[:-1] + grid[1:])), dtype=float)
    outside = 1.0 - counts.sum() / samples.size
    return float(np.sum(np.abs(empirical - reference) * widths) + outside)
