"""
Closed-form laws of the transformed processes.

Under Q, X = T(lambda) is a CIR process with a* = 2b(1-k), b* = sigma^2 L^2 /
(8b(1-k)), sigma* = sigma L, and Y = sqrt(X) is an OU process; S = lambda^(1-k)
and V = lambda^(2(1-k)) are linear images of Y and X. Every density of lambda,
S and V here is obtained from the CIR/OU quantities by a change of variables.
Under P, lambda has the stationary density C_k x^(-2k) e^{Lambda(x; k)}, whose
constant is found by quadrature.
"""

import functools
import logging
import math
from dataclasses import dataclass

import numpy as np
from django.db.models import TextChoices
from scipy import integrate, optimize, special, stats

from .conf import ckls_settings
from .exceptions import ConvergenceFailure, DomainError, NormalizationFailure
from .params import derive_cir, derive_ou, feller_ratio
from .quadrature import integrate_density
from .transform import TransformSpec, d1, forward

logger = logging.getLogger(__name__)


class LawTag(TextChoices):
    CIR_TRANSITION = 'cir_transition', 'CIR transition density'
    CIR_STATIONARY = 'cir_stationary', 'CIR stationary (gamma) density'
    CKLS_STATIONARY_P = 'ckls_stationary_P', 'CKLS stationary density under P'
    LAMBDA_STATIONARY_Q = 'lambda_stationary_Q', 'Stationary density of lambda under Q'
    LAMBDA_TRANSITION_Q = 'lambda_transition_Q', 'Transition density of lambda under Q'
    V_TRANSITION_Q = 'v_transition_Q', 'Transition density of V under Q'
    V_STATIONARY_Q = 'v_stationary_Q', 'Stationary density of V under Q'


@dataclass(frozen=True)
class DensityCurve:
    grid: np.ndarray
    values: np.ndarray
    mass: float
    law_tag: str


@dataclass(frozen=True)
class TransitionSpec:
    omega: float
    theta: float
    kappa: float
    t: float


# Modified Bessel function of the first kind

def _check_bessel_args(order, x):
    if order <= -1:
        raise DomainError(f"Bessel order must exceed -1 (got {order!r})")
    if x < 0:
        raise DomainError(f"Bessel argument must be nonnegative (got {x!r})")


def log_bessel_i_series(order, x):
    """
    log I_order(x) from the ascending series
    (x/2)^order sum_n (x/2)^(2n) / (n! Gamma(order + n + 1)).

    Terms are accumulated relative to the leading one and rescaled whenever
    the partial sum grows large, so arguments far beyond exp overflow work.
    The number of terms grows like x and is capped by BESSEL_MAX_TERMS.
    """
    _check_bessel_args(order, x)
    if x == 0:
        if order == 0:
            return 0.0
        return -math.inf if order > 0 else math.inf

    rtol = ckls_settings.BESSEL_RTOL
    max_terms = ckls_settings.BESSEL_MAX_TERMS
    half = 0.5 * x
    q = half * half
    log_lead = order * math.log(half) - special.gammaln(order + 1.0)

    term = 1.0
    total = 1.0
    log_scale = 0.0
    n = 0
    while True:
        ratio = q / ((n + 1) * (order + n + 1))
        next_term = term * ratio
        if ratio < 1.0 and next_term < rtol * total:
            break
        n += 1
        if n >= max_terms:
            raise ConvergenceFailure(f"Bessel series for I_{order}({x}) exceeded {max_terms} terms")
        term = next_term
        total += term
        if total > 1e280:
            total *= 1e-280
            term *= 1e-280
            log_scale += 280.0 * math.log(10.0)

    return log_lead + log_scale + math.log(total)


def log_bessel_i(order, x):
    """log I_order(x): the ascending series up to BESSEL_SERIES_MAX_ARG, scaled ive beyond"""
    _check_bessel_args(order, x)
    if x <= ckls_settings.BESSEL_SERIES_MAX_ARG:
        return log_bessel_i_series(order, x)
    scaled = float(special.ive(order, x))
    if not (math.isfinite(scaled) and scaled > 0):
        raise ConvergenceFailure(f"ive({order}, {x}) returned {scaled!r}")
    return math.log(scaled) + x


def bessel_i(order, x):
    return math.exp(log_bessel_i(order, x))


# CIR transition law

def transition_spec(x0, t, c):
    if t <= 0 or x0 <= 0:
        raise DomainError("Transition law needs t > 0 and x0 > 0")
    omega = 2.0 * c.a_star / (-math.expm1(-c.a_star * t) * c.sigma_star ** 2)
    return TransitionSpec(
        omega=omega,
        theta=omega * math.exp(-c.a_star * t) * x0,
        kappa=feller_ratio(c) - 1.0,
        t=t,
    )


def _cir_log_transition(x, x0, t, c):
    if x <= 0:
        raise DomainError(f"x must be strictly positive (got {x!r})")
    spec = transition_spec(x0, t, c)
    log_omega = math.log(spec.omega)
    log_theta = log_omega - c.a_star * t + math.log(x0)
    log_gamma = log_omega + math.log(x)
    log_half_z = 0.5 * (log_theta + log_gamma)
    if log_half_z < -300.0:
        log_i = spec.kappa * log_half_z - special.gammaln(spec.kappa + 1.0)
    else:
        log_i = log_bessel_i(spec.kappa, 2.0 * math.exp(log_half_z))
    return (
        log_omega
        - math.exp(log_theta)
        - math.exp(log_gamma)
        + 0.5 * spec.kappa * (log_gamma - log_theta)
        + log_i
    )


def cir_transition_density(x, x0, t, c):
    """omega e^(-theta - gamma) (gamma / theta)^(kappa/2) I_kappa(2 sqrt(theta gamma)), gamma = omega x"""
    if np.ndim(x) == 0:
        return math.exp(_cir_log_transition(float(x), x0, t, c))
    return np.array([math.exp(_cir_log_transition(float(v), x0, t, c)) for v in np.ravel(x)]).reshape(np.shape(x))


def cir_mean_var_cov(t, t2, c):
    """Mean and variance at t and Cov(r_t, r_t2) for 0 <= t <= t2"""
    if t < 0 or t2 < t:
        raise DomainError("Moments need 0 <= t <= t2")
    a, b, s2, x0 = c.a_star, c.b_star, c.sigma_star ** 2, c.x0
    e_t = math.exp(-a * t)
    mean = x0 * e_t + b * (1.0 - e_t)
    var = x0 * s2 / a * (e_t - e_t * e_t) + b * s2 / (2.0 * a) * (1.0 - e_t) ** 2
    cov = (
        x0 * s2 / a * (math.exp(-a * t2) - math.exp(-a * (t + t2)))
        + b * s2 / (2.0 * a) * (math.exp(a * (t - t2)) + math.exp(-a * (t + t2)) - 2.0 * math.exp(-a * t2))
    )
    return mean, var, cov


def cir_mean(t, c):
    return cir_mean_var_cov(t, t, c)[0]


def cir_variance(t, c):
    return cir_mean_var_cov(t, t, c)[1]


def cir_moment_n(n, t, c):
    """
    E[r_t^n] from the noncentral chi-square law of 2 omega r_t.

    The cumulants of r_t are 2^(m-1) (m-1)! h^(m-1) (d h + m x0 e^(-a t))
    with h = (1 - e^(-a t)) sigma^2 / (4a) and d = 4 a b / sigma^2; raw moments
    follow from the moment-cumulant recursion.
    """
    if n < 1 or int(n) != n:
        raise DomainError(f"Moment order must be a natural number (got {n!r})")
    if t < 0:
        raise DomainError("Moments need t >= 0")
    a, b, s2, x0 = c.a_star, c.b_star, c.sigma_star ** 2, c.x0
    h = -math.expm1(-a * t) * s2 / (4.0 * a)
    d = 4.0 * a * b / s2
    drift = x0 * math.exp(-a * t)
    cumulants = [
        2.0 ** (m - 1) * math.factorial(m - 1) * h ** (m - 1) * (d * h + m * drift)
        for m in range(1, int(n) + 1)
    ]
    moments = [1.0]
    for order in range(1, int(n) + 1):
        moments.append(math.fsum(
            math.comb(order - 1, j) * cumulants[j] * moments[order - 1 - j] for j in range(order)
        ))
    return moments[int(n)]


def cir_stationary_density(x, c):
    """Gamma density with shape 2 a* b* / sigma*^2 and rate 2 a* / sigma*^2"""
    shape = feller_ratio(c)
    rate = 2.0 * c.a_star / c.sigma_star ** 2
    return stats.gamma.pdf(x, a=shape, scale=1.0 / rate)


# Laws of lambda, V and S under Q

def lambda_transition_density_q(ell, ell0, t, p):
    """f_X(T(ell) | T(ell0)) T'(ell)"""
    spec = TransformSpec.for_params(p)
    cir = derive_cir(p)
    x0 = forward(ell0, spec)
    return cir_transition_density(forward(ell, spec), x0, t, cir) * d1(ell, spec)


def lambda_stationary_density_q(ell, p):
    """(2 sqrt(b(1-k)) / (sigma sqrt(pi))) ell^(-k) exp(-b ell^(2(1-k)) / (sigma^2 (1-k)))"""
    ell = np.asarray(ell, dtype=float)
    if np.any(~(ell > 0)):
        raise DomainError("ell must be strictly positive")
    one_minus_k = 1.0 - p.k
    log_norm = 0.5 * math.log(p.b * one_minus_k) + math.log(2.0 / (p.sigma * math.sqrt(math.pi)))
    log_ell = np.log(ell)
    values = np.exp(
        log_norm - p.k * log_ell - p.b * np.exp(2.0 * one_minus_k * log_ell) / (p.sigma ** 2 * one_minus_k)
    )
    return float(values) if values.ndim == 0 else values


def _v_scale(p):
    """V = X / coeff"""
    return TransformSpec.for_params(p).coeff


def v_transition_density_q(v, v0, t, p):
    coeff = _v_scale(p)
    cir = derive_cir(p)
    return cir_transition_density(np.asarray(v) * coeff, v0 * coeff, t, cir) * coeff


def v_stationary_density_q(v, p):
    coeff = _v_scale(p)
    return cir_stationary_density(np.asarray(v) * coeff, derive_cir(p)) * coeff


def v_moments(t, t2, p):
    coeff = _v_scale(p)
    mean, var, cov = cir_mean_var_cov(t, t2, derive_cir(p))
    return mean / coeff, var / coeff ** 2, cov / coeff ** 2


def ou_moments(t, t2, p):
    """Mean, variance at t and covariance with t2 of Y = sqrt(X), an OU process under Q"""
    if t < 0 or t2 < t:
        raise DomainError("Moments need 0 <= t <= t2")
    ou = derive_ou(p)
    a, s2 = ou.a_diamond, ou.sigma_diamond ** 2
    mean = ou.b_diamond + (ou.y0 - ou.b_diamond) * math.exp(-a * t)
    var = s2 / (2.0 * a) * -math.expm1(-2.0 * a * t)
    cov = math.exp(-a * (t2 - t)) * var
    return mean, var, cov


def s_moments(t, t2, p):
    """Mean, variance at t and covariance with t2 of S = lambda^(1-k) under Q"""
    if t < 0 or t2 < t:
        raise DomainError("Moments need 0 <= t <= t2")
    one_minus_k = 1.0 - p.k
    rate = p.b * one_minus_k
    mean = p.lambda0 ** one_minus_k * math.exp(-rate * t)
    var = p.sigma ** 2 * one_minus_k / (2.0 * p.b) * -math.expm1(-2.0 * rate * t)
    cov = p.sigma ** 2 * one_minus_k / (2.0 * p.b) * (math.exp(-rate * (t2 - t)) - math.exp(-rate * (t + t2)))
    return mean, var, cov


def s_mgf(theta, t, p):
    """Gaussian MGF of S_t"""
    mean, var, _ = s_moments(t, t, p)
    return math.exp(theta * mean + 0.5 * theta ** 2 * var)


def ou_mgf(theta, t, p):
    mean, var, _ = ou_moments(t, t, p)
    return math.exp(theta * mean + 0.5 * theta ** 2 * var)


def lambda_linear_approx(t, p):
    """Mean and variance of the first-order expansion of lambda_t = S_t^(1/(1-k)) around its mean"""
    if t <= 0:
        raise DomainError("t must be strictly positive")
    one_minus_k = 1.0 - p.k
    mean = p.lambda0 * math.exp(-p.b * t)
    var = (
        p.sigma ** 2 * p.lambda0 ** (2.0 * p.k) / (2.0 * p.b * one_minus_k)
        * (math.exp(-2.0 * p.b * p.k * t) - math.exp(-2.0 * p.b * t))
    )
    return mean, var


def chebyshev_tail(eps, t, p):
    """Chebyshev bound on P(|S_t - E S_t| >= eps E S_t)"""
    if eps <= 0 or t <= 0:
        raise DomainError("eps and t must be strictly positive")
    one_minus_k = 1.0 - p.k
    return (
        p.sigma ** 2 * one_minus_k * math.expm1(2.0 * p.b * one_minus_k * t)
        / (2.0 * p.b * eps ** 2 * p.lambda0 ** (2.0 * one_minus_k))
    )


# Stationary law of lambda under P

def ckls_log_unnormalized(x, p):
    """-2k log x + Lambda(x; k)"""
    if x <= 0:
        raise DomainError(f"x must be strictly positive (got {x!r})")
    s2 = p.sigma ** 2
    log_x = math.log(x)
    if p.is_cir_case:
        big_lambda = 2.0 / s2 * (p.a * log_x - p.b * x)
    else:
        big_lambda = 2.0 / s2 * (
            p.a * math.exp((1.0 - 2.0 * p.k) * log_x) / (1.0 - 2.0 * p.k)
            - p.b * math.exp((2.0 - 2.0 * p.k) * log_x) / (2.0 - 2.0 * p.k)
        )
    return -2.0 * p.k * log_x + big_lambda


@functools.lru_cache(maxsize=64)
def ckls_log_normalizer(p):
    """log C_k, by quadrature of the peak-scaled density"""
    scale = p.a / p.b
    found = optimize.minimize_scalar(
        lambda u: -ckls_log_unnormalized(math.exp(u), p),
        bracket=(math.log(scale) - 1.0, math.log(scale)),
    )
    log_peak = -found.fun
    mode = math.exp(found.x)

    def scaled(x):
        return math.exp(ckls_log_unnormalized(x, p) - log_peak)

    head_power = 2.0 * p.a / p.sigma ** 2 - 1.0 if p.is_cir_case else None
    mass = integrate_density(scaled, scale=max(scale, mode), head_power=head_power, breakpoints=(mode,))
    if not (mass > 0 and math.isfinite(mass)):
        raise NormalizationFailure(f"Stationary density of {p} does not normalise (mass={mass!r})")
    logger.debug("C_k for %s: log_peak=%g mass=%g mode=%g", p, log_peak, mass, mode)
    return -log_peak - math.log(mass)


def ckls_stationary_density_p(x, p):
    """C_k x^(-2k) e^{Lambda(x; k)}"""
    log_c = ckls_log_normalizer(p)
    if np.ndim(x) == 0:
        return math.exp(log_c + ckls_log_unnormalized(float(x), p))
    return np.array([math.exp(log_c + ckls_log_unnormalized(float(v), p)) for v in np.ravel(x)]).reshape(np.shape(x))


def ckls_stationary_moment(q, p):
    """Integral of x^q p_inf(x), the ergodic limit of the time average of lambda^q"""
    log_c = ckls_log_normalizer(p)
    scale = p.a / p.b

    def integrand(x):
        return math.exp(log_c + ckls_log_unnormalized(x, p) + q * math.log(x))

    head_power = 2.0 * p.a / p.sigma ** 2 - 1.0 + q if p.is_cir_case else None
    return integrate_density(integrand, scale=scale, head_power=head_power, breakpoints=(scale,))


# Density curves

def density_curve(law_tag, grid, p, t=None):
    """Evaluate one of the laws on an ascending positive grid"""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or np.any(~(grid > 0)) or np.any(np.diff(grid) <= 0):
        raise DomainError("Grid must be ascending and strictly positive")
    law_tag = LawTag(law_tag)
    needs_t = law_tag in (LawTag.CIR_TRANSITION, LawTag.LAMBDA_TRANSITION_Q, LawTag.V_TRANSITION_Q)
    if needs_t and (t is None or t <= 0):
        raise DomainError(f"{law_tag.value} needs a horizon t > 0")

    cir = derive_cir(p)
    if law_tag == LawTag.CIR_TRANSITION:
        values = cir_transition_density(grid, cir.x0, t, cir)
    elif law_tag == LawTag.CIR_STATIONARY:
        values = cir_stationary_density(grid, cir)
    elif law_tag == LawTag.CKLS_STATIONARY_P:
        values = ckls_stationary_density_p(grid, p)
    elif law_tag == LawTag.LAMBDA_STATIONARY_Q:
        values = lambda_stationary_density_q(grid, p)
    elif law_tag == LawTag.LAMBDA_TRANSITION_Q:
        values = lambda_transition_density_q(grid, p.lambda0, t, p)
    elif law_tag == LawTag.V_TRANSITION_Q:
        values = v_transition_density_q(grid, p.lambda0 ** (2.0 * (1.0 - p.k)), t, p)
    else:
        values = v_stationary_density_q(grid, p)

    values = np.asarray(values, dtype=float)
    return DensityCurve(
        grid=grid,
        values=values,
        mass=float(integrate.trapezoid(values, grid)),
        law_tag=law_tag.value,
    )
