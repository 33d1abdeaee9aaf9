"""
Feller's boundary machinery for one-dimensional diffusions
dZ = mu(Z) dt + nu(Z) dW on an interval (lo, hi).

With L(y) = -2 int_c^y mu / nu^2 the log scale density:

    psi(x) = int_c^x e^{L(y)} dy                                  scale function
    phi(x) = int_c^x int_c^y 2 / nu(z)^2 e^{L(y) - L(z)} dz dy    finer scale function
    Phi(x) = int_c^x int_c^y 2 / nu(y)^2 e^{L(z) - L(y)} dz dy    its dual

An endpoint is reached in finite time iff phi has a finite limit there; the
pair (phi, Phi) gives the four-way classification. Limits are read off a
geometric sequence of probe points walking towards the endpoint.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from .conf import ckls_settings
from .exceptions import ConvergenceFailure, DomainError, Inconclusive, QuadratureFailure
from .girsanov import kernel_q
from .params import aux_constants, derive_cir
from .quadrature import quad

logger = logging.getLogger(__name__)

REGULAR = 'regular'
EXIT = 'exit'
ENTRANCE = 'entrance'
NATURAL = 'natural'
REFLECTING = 'reflecting'
STICKY = 'sticky'

# Successive-increment ratios at or above this read as divergence
DIVERGENT_RATIO = 0.99


@dataclass(frozen=True)
class DiffusionSpec:
    drift: object
    diffusion: object
    lo: float
    hi: float
    anchor: float
    log_scale: object = None
    log_scale_gap: object = None
    name: str = ''

    def __post_init__(self):
        if not (self.lo < self.anchor < self.hi):
            raise DomainError(f"Anchor {self.anchor!r} is not inside ({self.lo!r}, {self.hi!r})")
        if self.diffusion(self.anchor) == 0:
            raise DomainError("The diffusion coefficient vanishes at the anchor")


@dataclass(frozen=True)
class BoundaryReport:
    endpoint: str
    psi_limit: float
    phi_limit: float
    Phi_limit: float
    classification: str
    sub_class: str
    evidence: list = field(default_factory=list)

    @property
    def reachable(self):
        return math.isfinite(self.phi_limit)


@dataclass(frozen=True)
class EngelbertSchmidtFlags:
    nondegenerate: bool
    inv_diffusion_sq: bool
    drift_ratio: bool
    kernel_ratio: bool
    spot_integrals: dict
    endpoint_exponents: dict = field(default_factory=dict)
    zero_exponents: dict = field(default_factory=dict)

    @property
    def all_ok(self):
        return self.nondegenerate and self.inv_diffusion_sq and self.drift_ratio and self.kernel_ratio


@dataclass(frozen=True)
class MartingaleVerdict:
    exits_at_lo: bool
    exits_at_hi: bool
    assumptions_ok: bool
    flags: EngelbertSchmidtFlags
    is_true_martingale: bool


def _rtol():
    return ckls_settings.FELLER_RTOL


def _inside(x, spec):
    if not (spec.lo < x < spec.hi):
        raise DomainError(f"x = {x!r} is not inside ({spec.lo!r}, {spec.hi!r})")


def log_scale_density(y, spec):
    """L(y) = -2 int_c^y mu / nu^2"""
    if spec.log_scale is not None:
        return spec.log_scale(y)
    return -2.0 * quad(lambda z: spec.drift(z) / spec.diffusion(z) ** 2, spec.anchor, y, rtol=_rtol())


def scale_density(x, spec):
    _inside(x, spec)
    return float(np.exp(log_scale_density(x, spec)))


def speed_density(x, spec):
    """2 / (psi'(x) nu(x)^2)"""
    _inside(x, spec)
    return float(2.0 * np.exp(-log_scale_density(x, spec)) / spec.diffusion(x) ** 2)


def _gap(y, z, spec):
    """L(y) - L(z)"""
    if spec.log_scale_gap is not None:
        return spec.log_scale_gap(y, z)
    return log_scale_density(y, spec) - log_scale_density(z, spec)


def _toward(y, c, depth=10):
    """Breakpoints accumulating at y inside [c, y]"""
    return [y + (c - y) * 10.0 ** -j for j in range(1, depth + 1)]


def _phi_integrand(y, spec):
    """int_c^y 2 / nu(z)^2 e^{L(y) - L(z)} dz"""
    return quad(
        lambda z: 2.0 / spec.diffusion(z) ** 2 * np.exp(_gap(y, z, spec)),
        spec.anchor, y, rtol=_rtol(), points=_toward(y, spec.anchor),
    )


def _dual_integrand(y, spec):
    """2 / nu(y)^2 int_c^y e^{L(z) - L(y)} dz"""
    inner = quad(
        lambda z: np.exp(-_gap(y, z, spec)),
        spec.anchor, y, rtol=_rtol(), points=_toward(y, spec.anchor),
    )
    return 2.0 / spec.diffusion(y) ** 2 * inner


def _psi_piece(lo, hi, spec):
    return quad(lambda y: np.exp(log_scale_density(y, spec)), lo, hi, rtol=_rtol())


def _phi_piece(lo, hi, spec):
    return quad(lambda y: _phi_integrand(y, spec), lo, hi, rtol=_rtol())


def _dual_piece(lo, hi, spec):
    return quad(lambda y: _dual_integrand(y, spec), lo, hi, rtol=_rtol())


def scale_psi(x, spec):
    """psi(x) = int_c^x exp{-2 int_c^y mu / nu^2} dy"""
    _inside(x, spec)
    return _psi_piece(spec.anchor, x, spec)


def phi_fine(x, spec):
    _inside(x, spec)
    return _phi_piece(spec.anchor, x, spec)


def phi_dual(x, spec):
    _inside(x, spec)
    return _dual_piece(spec.anchor, x, spec)


# Closed forms for the auxiliary CKLS diffusion with anchor 1

def _series_terms(p):
    """log of the Poisson weights M^j e^{-M} / j! and the exponents (2j+1)(1-k)"""
    M = aux_constants(p).M
    j = np.arange(ckls_settings.BESSEL_MAX_TERMS)
    log_weights = j * math.log(M) - special.gammaln(j + 1.0) - M
    return log_weights, (2.0 * j + 1.0) * (1.0 - p.k)


def psi_series(x, p):
    """e^{-M} sum_j M^j / j! [x^((2j+1)(1-k)) - 1] / ((2j+1)(1-k))"""
    if not x > 0:
        raise DomainError(f"x must be strictly positive (got {x!r})")
    if x == 1.0:
        return 0.0
    M = aux_constants(p).M
    log_weights, expos = _series_terms(p)
    rtol = ckls_settings.SERIES_RTOL
    log_x = math.log(x)
    total = 0.0
    for j in range(len(expos)):
        term = (math.exp(log_weights[j] + expos[j] * log_x) - math.exp(log_weights[j])) / expos[j]
        total += term
        # past the peak of the terms every later term is smaller
        past_peak = j > M * math.exp(2.0 * (1.0 - p.k) * max(log_x, 0.0))
        if past_peak and abs(term) < rtol * abs(total):
            return total
    raise ConvergenceFailure(f"psi series at x={x!r} did not converge in {len(expos)} terms")


def psi_lower_limit(p):
    """lim psi(x) as x -> 0+: -(e^{-M} / (1-k)) sum_j M^j / ((2j+1) j!)"""
    log_weights, expos = _series_terms(p)
    return -math.exp(special.logsumexp(log_weights - np.log(expos)))


def phi_square_bound(eps, p):
    """
    (2 / sigma^2) e^{-M} int_eps^1 z^(-2k) dz, the integral over the whole
    unit square instead of the triangle {y <= z}; it diverges as eps -> 0
    while phi(0+) stays finite.
    """
    if not 0 < eps < 1:
        raise DomainError("eps must lie in (0, 1)")
    M = aux_constants(p).M
    if p.is_cir_case:
        integral = -math.log(eps)
    else:
        integral = math.expm1((1.0 - 2.0 * p.k) * math.log(eps)) / (2.0 * p.k - 1.0)
    return 2.0 / p.sigma ** 2 * math.exp(-M) * integral


# Boundary probing

def _probe_points(endpoint, spec):
    start = ckls_settings.PROBE_START
    ratio = ckls_settings.PROBE_RATIO
    epsilons = start * ratio ** -np.arange(ckls_settings.PROBE_COUNT)
    c = spec.anchor
    e = spec.lo if endpoint == 'lo' else spec.hi
    if math.isfinite(e):
        return (e + (c - e) * epsilons).tolist()
    # infinite endpoints are walked out more slowly, c +- |c| / sqrt(eps)
    sign = 1.0 if e > 0 else -1.0
    return (c + sign * max(1.0, abs(c)) / np.sqrt(epsilons)).tolist()


def _limit(piece, probes, spec, label):
    """
    Walk the cumulative integral through the probes and decide its limit.

    Infinite once |value| exceeds DIVERGENCE_THRESHOLD, an integrand
    overflows, or the last three increment ratios all stay at or above
    DIVERGENT_RATIO; finite (geometrically extrapolated) when they all stay
    below it.
    """
    threshold = ckls_settings.DIVERGENCE_THRESHOLD
    evidence = []
    value = 0.0
    increments = []
    previous = spec.anchor
    for x in probes:
        try:
            with np.errstate(over='raise'):
                step = piece(previous, x, spec)
        except (QuadratureFailure, FloatingPointError, OverflowError):
            evidence.append((x, math.inf))
            return math.copysign(math.inf, x - spec.anchor), evidence
        value += step
        previous = x
        increments.append(abs(step))
        evidence.append((x, value))
        if abs(value) > threshold or not math.isfinite(value):
            return math.copysign(math.inf, value), evidence

    ratios = [
        later / earlier if earlier > 0 else 0.0
        for earlier, later in zip(increments[-4:-1], increments[-3:])
    ]
    if all(r >= DIVERGENT_RATIO for r in ratios):
        return math.copysign(math.inf, value), evidence
    if all(r < DIVERGENT_RATIO for r in ratios):
        r = ratios[-1]
        tail = increments[-1] * r / (1.0 - r)
        return value + math.copysign(tail, value), evidence
    raise Inconclusive(f"{label} probes neither converge nor diverge: ratios {ratios}", evidence=evidence)


def _speed_mass(e, width, spec):
    return quad(lambda z: 2.0 * np.exp(-log_scale_density(z, spec)) / spec.diffusion(z) ** 2,
                e, e + width, rtol=_rtol())


def _sub_class(endpoint, spec):
    """
    Reflecting when the speed measure of (e, e + eps] keeps shrinking with
    eps (no point mass at e), sticky otherwise.
    """
    e = spec.lo if endpoint == 'lo' else spec.hi
    if not math.isfinite(e):
        return REFLECTING
    eps = ckls_settings.REFLECTING_PROBE
    width = eps if endpoint == 'lo' else -eps
    outer = abs(_speed_mass(e, width, spec))
    inner = abs(_speed_mass(e, width / ckls_settings.PROBE_RATIO, spec))
    if outer == 0 or inner / outer <= 1.0 - ckls_settings.REFLECTING_MASS:
        return REFLECTING
    return STICKY


def _classify(phi_limit, Phi_limit):
    phi_finite = math.isfinite(phi_limit)
    Phi_finite = math.isfinite(Phi_limit)
    if phi_finite and Phi_finite:
        return REGULAR
    if phi_finite:
        return EXIT
    if Phi_finite:
        return ENTRANCE
    return NATURAL


def boundary_classify(endpoint, spec):
    if endpoint not in ('lo', 'hi'):
        raise DomainError(f"endpoint must be 'lo' or 'hi' (got {endpoint!r})")
    probes = _probe_points(endpoint, spec)
    psi_limit, psi_evidence = _limit(_psi_piece, probes, spec, 'psi')
    phi_limit, phi_evidence = _limit(_phi_piece, probes, spec, 'phi')
    Phi_limit, Phi_evidence = _limit(_dual_piece, probes, spec, 'Phi')
    classification = _classify(phi_limit, Phi_limit)
    sub_class = _sub_class(endpoint, spec) if classification == REGULAR else 'none'

    evidence = [
        {'x': x, 'psi': psi, 'phi': phi, 'Phi': dual}
        for (x, psi), (_, phi), (_, dual) in zip(psi_evidence, phi_evidence, Phi_evidence)
    ]
    logger.debug("%s %s: psi=%g phi=%g Phi=%g -> %s", spec.name, endpoint, psi_limit, phi_limit, Phi_limit,
                 classification)
    return BoundaryReport(
        endpoint=endpoint,
        psi_limit=psi_limit,
        phi_limit=abs(phi_limit),
        Phi_limit=abs(Phi_limit),
        classification=classification,
        sub_class=sub_class,
        evidence=evidence,
    )


def _exits(endpoint, spec):
    probes = _probe_points(endpoint, spec)
    psi_limit, _ = _limit(_psi_piece, probes, spec, 'psi')
    if not math.isfinite(psi_limit):
        return False
    phi_limit, _ = _limit(_phi_piece, probes, spec, 'phi')
    return math.isfinite(phi_limit)


def explosion_verdict(spec):
    """(exits_lo, exits_hi): an endpoint is reached in finite time iff phi is finite there"""
    return _exits('lo', spec), _exits('hi', spec)


# Points where nu vanishes are searched for on this grid
ES_GRID = np.geomspace(1e-6, 1e6, 2401)
ES_SPOTS = (0.1, 1.0, 10.0)
# |nu| shrinking at least like h^0.05 towards a local minimum reads as a zero
VANISHING_EXPONENT = 0.05


def _log_slope(func, points, origin):
    """d log|func| / d log|x - origin| between two points"""
    f1, f2 = (abs(float(func(x))) for x in points)
    if f1 == 0 and f2 == 0:
        # vanishes faster than any power
        return math.inf
    h1, h2 = (abs(x - origin) for x in points)
    with np.errstate(divide='ignore', invalid='ignore'):
        return float((np.log(f1) - np.log(f2)) / (math.log(h1) - math.log(h2)))


def _two_sided_exponent(func, z, h):
    return min(
        _log_slope(func, (z - h, z - 0.1 * h), z),
        _log_slope(func, (z + h, z + 0.1 * h), z),
    )


def _diffusion_zeros(spec):
    """Interior points of (0, inf) where |nu| has a local minimum and vanishes there like a power"""
    def size(x):
        return abs(float(spec.diffusion(x)))

    values = np.array([size(x) for x in ES_GRID])
    zeros = []
    for i in range(1, len(ES_GRID) - 1):
        if values[i] == 0:
            zeros.append(float(ES_GRID[i]))
            continue
        if not (values[i] < values[i - 1] and values[i] < values[i + 1]):
            continue
        lo, hi = ES_GRID[i - 1], ES_GRID[i + 1]
        z = optimize.minimize_scalar(size, bounds=(lo, hi), method='bounded',
                                     options={'xatol': 1e-12 * ES_GRID[i]}).x
        if size(z) == 0 or _two_sided_exponent(size, z, 1e-2 * (hi - lo)) >= VANISHING_EXPONENT:
            zeros.append(float(z))
    return zeros


def _over_nu_sq(spec, numerator, x):
    # a zero of nu gives inf, not ZeroDivisionError
    with np.errstate(divide='ignore', invalid='ignore'):
        return np.float64(numerator) / np.float64(spec.diffusion(x)) ** 2


def engelbert_schmidt_check(p, spec=None):
    """
    Local integrability of nu^-2, |mu| nu^-2 and q^2 nu^-2 on compact subsets
    of (0, inf), by default for the auxiliary diffusion.

    A power singularity |x - z|^e is integrable iff e > -1. Such singularities
    can only sit where nu vanishes, so each zero of nu is located and the
    local exponent of every integrand is read there. The exponents at 0 and
    at infinity are recorded as well; they do not enter the flags since the
    conditions concern compacts of the open interval. Spot integrals over
    [c, c + 1] back up the exponents.
    """
    spec = auxiliary_ckls(p) if spec is None else spec
    if spec.lo != 0 or spec.hi != math.inf:
        raise DomainError("The integrability check runs on diffusions over (0, inf)")
    threshold = ckls_settings.DIVERGENCE_THRESHOLD
    integrands = {
        'inv_diffusion_sq': lambda x: _over_nu_sq(spec, 1.0, x),
        'drift_ratio': lambda x: _over_nu_sq(spec, abs(spec.drift(x)), x),
        'kernel_ratio': lambda x: _over_nu_sq(spec, kernel_q(x, p) ** 2, x),
    }

    zeros = _diffusion_zeros(spec)
    zero_exponents = {
        name: {z: _two_sided_exponent(func, z, 1e-3 * z) for z in zeros}
        for name, func in integrands.items()
    }
    endpoint_exponents = {
        name: {
            'lo': _log_slope(func, (1e-6, 1e-8), 0.0),
            'hi': _log_slope(func, (1e6, 1e8), 0.0),
        }
        for name, func in integrands.items()
    }

    spot = {}
    for name, func in integrands.items():
        for c in ES_SPOTS:
            try:
                spot[(name, c)] = quad(func, c, c + 1.0, rtol=_rtol())
            except QuadratureFailure:
                spot[(name, c)] = math.inf

    flags = {
        name: all(e > -1.0 for e in zero_exponents[name].values())
        and all(0 <= spot[(name, c)] < threshold for c in ES_SPOTS)
        for name in integrands
    }
    nondegenerate = not zeros and all(
        math.isfinite(v) and v != 0 for v in (float(spec.diffusion(x)) for x in ES_GRID)
    )
    if zeros:
        logger.warning("nu vanishes inside (0, inf) at %s", ", ".join(f"{z:.6g}" for z in zeros))
    return EngelbertSchmidtFlags(
        nondegenerate=nondegenerate,
        inv_diffusion_sq=flags['inv_diffusion_sq'],
        drift_ratio=flags['drift_ratio'],
        kernel_ratio=flags['kernel_ratio'],
        spot_integrals={f"{name}@{c:g}": value for (name, c), value in spot.items()},
        endpoint_exponents=endpoint_exponents,
        zero_exponents={name: {f"{z:.12g}": e for z, e in values.items()} for name, values in zero_exponents.items()},
    )


def martingale_verdict(p, anchor=1.0):
    """M is a true martingale iff the auxiliary diffusion reaches neither endpoint"""
    flags = engelbert_schmidt_check(p)
    exits_lo, exits_hi = explosion_verdict(auxiliary_ckls(p, anchor))
    logger.info("Martingale verdict for %s: exits_lo=%s exits_hi=%s assumptions=%s",
                p, exits_lo, exits_hi, flags.all_ok)
    return MartingaleVerdict(
        exits_at_lo=exits_lo,
        exits_at_hi=exits_hi,
        assumptions_ok=flags.all_ok,
        flags=flags,
        is_true_martingale=not exits_lo and not exits_hi and flags.all_ok,
    )


# Diffusions

def brownian_motion(anchor=0.0):
    return DiffusionSpec(
        drift=lambda x: 0.0,
        diffusion=lambda x: 1.0,
        lo=-math.inf,
        hi=math.inf,
        anchor=anchor,
        log_scale=lambda y: 0.0,
        name='brownian_motion',
    )


def ornstein_uhlenbeck(a, s, mean=0.0, anchor=0.0):
    """dZ = a (mean - Z) dt + s dW"""
    return DiffusionSpec(
        drift=lambda x: a * (mean - x),
        diffusion=lambda x: s,
        lo=-math.inf,
        hi=math.inf,
        anchor=anchor,
        log_scale=lambda y: a / s ** 2 * ((y - mean) ** 2 - (anchor - mean) ** 2),
        log_scale_gap=lambda y, z: a / s ** 2 * (y - z) * (y + z - 2.0 * mean),
        name='ornstein_uhlenbeck',
    )


def cir_diffusion(c, anchor=None):
    """dr = a*(b* - r) dt + sigma* sqrt(r) dW on (0, inf)"""
    anchor = c.b_star if anchor is None else anchor
    s2 = c.sigma_star ** 2
    return DiffusionSpec(
        drift=lambda x: c.a_star * (c.b_star - x),
        diffusion=lambda x: c.sigma_star * math.sqrt(x),
        lo=0.0,
        hi=math.inf,
        anchor=anchor,
        log_scale=lambda y: 2.0 * c.a_star / s2 * (-c.b_star * math.log(y / anchor) + (y - anchor)),
        log_scale_gap=lambda y, z: 2.0 * c.a_star / s2 * (-c.b_star * math.log(y / z) + (y - z)),
        name='cir',
    )


def auxiliary_ckls(p, anchor=1.0):
    """
    The CKLS state under Q: drift k sigma^2 / 2 x^(2k-1) - bx, diffusion
    sigma x^k, log scale -k log y + M (y^(2(1-k)) - 1) relative to 1.
    """
    M = aux_constants(p).M
    expo = 2.0 * (1.0 - p.k)

    def log_scale_at_one(y):
        return -p.k * math.log(y) + M * math.expm1(expo * math.log(y))

    shift = log_scale_at_one(anchor)
    return DiffusionSpec(
        drift=lambda x: 0.5 * p.k * p.sigma ** 2 * x ** (2.0 * p.k - 1.0) - p.b * x,
        diffusion=lambda x: p.sigma * x ** p.k,
        lo=0.0,
        hi=math.inf,
        anchor=anchor,
        log_scale=lambda y: log_scale_at_one(y) - shift,
        name='auxiliary_ckls',
    )


def ckls_diffusion(p, anchor=None):
    """The CKLS state under P: drift a - bx, diffusion sigma x^k"""
    anchor = p.a / p.b if anchor is None else anchor

    def antiderivative(y):
        if p.is_cir_case:
            return p.a * math.log(y) - p.b * y
        return (p.a * y ** (1.0 - 2.0 * p.k) / (1.0 - 2.0 * p.k)
                - p.b * y ** (2.0 - 2.0 * p.k) / (2.0 - 2.0 * p.k))

    shift = antiderivative(anchor)
    return DiffusionSpec(
        drift=lambda x: p.a - p.b * x,
        diffusion=lambda x: p.sigma * x ** p.k,
        lo=0.0,
        hi=math.inf,
        anchor=anchor,
        log_scale=lambda y: -2.0 / p.sigma ** 2 * (antiderivative(y) - shift),
        name='ckls',
    )


def explosive_quadratic(anchor=1.0):
    """dZ = Z^2 dt + dW on (0, inf); reaches +inf in finite time"""
    return DiffusionSpec(
        drift=lambda x: x * x,
        diffusion=lambda x: 1.0,
        lo=0.0,
        hi=math.inf,
        anchor=anchor,
        log_scale=lambda y: -2.0 * (y ** 3 - anchor ** 3) / 3.0,
        log_scale_gap=lambda y, z: -2.0 * (y - z) * (y * y + y * z + z * z) / 3.0,
        name='explosive_quadratic',
    )


def cir_from_params(p, anchor=None):
    return cir_diffusion(derive_cir(p), anchor)
