"""
Adaptive quadrature for densities and improper integrals on (0, inf).

All integrals go through QUADPACK (``scipy.integrate.quad``). Integrals over
(0, inf) are split at geometric edges so that each piece sees at most one
scale. The piece (0, eps) is integrated by QUADPACK when the caller declares
the power of the integrand at zero and dropped otherwise; the piece beyond
the effective support is closed with an exponential-tail estimate.
"""

import logging
import math
import warnings

import numpy as np
from scipy import integrate

from .conf import ckls_settings
from .exceptions import NormalizationFailure, QuadratureFailure

logger = logging.getLogger(__name__)

MAX_SUPPORT = 1e12


def quad(func, lo, hi, *, rtol=None, atol=0.0, limit=200, points=None):
    """
    QUADPACK integral over [lo, hi] that raises on unusable results.
    ``points`` are interior breakpoints; lo > hi flips the sign.
    """
    rtol = ckls_settings.QUAD_RTOL if rtol is None else rtol
    if lo == hi:
        return 0.0
    if lo > hi:
        return -quad(func, hi, lo, rtol=rtol, atol=atol, limit=limit, points=points)
    if points is not None:
        points = sorted({x for x in points if lo < x < hi}) or None
    with warnings.catch_warnings(), np.errstate(over='ignore', under='ignore'):
        warnings.simplefilter('ignore', integrate.IntegrationWarning)
        result = integrate.quad(func, lo, hi, epsrel=rtol, epsabs=atol, limit=limit, full_output=1, points=points)
    value, abserr = result[0], result[1]
    if not math.isfinite(value):
        raise QuadratureFailure(f"Non-finite integral on [{lo}, {hi}]")
    if len(result) > 3 and abserr > max(1e3 * rtol * abs(value), 1e3 * atol):
        raise QuadratureFailure(
            f"Integral on [{lo}, {hi}] did not reach rtol={rtol}: "
            f"value={value!r}, abserr={abserr!r} ({result[3].splitlines()[0]})"
        )
    return value


def geometric_edges(lo, hi, ratio=10.0, breakpoints=()):
    """Edges lo < ... < hi, one per factor ``ratio``, with extra breakpoints merged in"""
    n = max(1, int(math.ceil(math.log(hi / lo) / math.log(ratio))))
    edges = set(np.geomspace(lo, hi, n + 1).tolist())
    edges.update(b for b in breakpoints if lo < b < hi)
    return sorted(edges)


def integrate_split(func, lo, hi, *, rtol=None, breakpoints=()):
    """Sum of ``quad`` over geometric pieces of [lo, hi] (lo > 0)"""
    rtol = ckls_settings.QUAD_RTOL if rtol is None else rtol
    edges = geometric_edges(lo, hi, breakpoints=breakpoints)
    probes = np.geomspace(lo, hi, 2000)
    rough = abs(integrate.trapezoid([func(x) for x in probes], probes))
    atol = 1e-3 * rtol * rough
    return math.fsum(quad(func, left, right, rtol=rtol, atol=atol) for left, right in zip(edges[:-1], edges[1:]))


def effective_support(func, scale, *, eps=None):
    """
    Upper cut-off X_max where ``func`` falls below 1e-16 of its peak.

    The peak is taken on a geometric probe grid between eps and the current
    cut-off; the cut-off doubles until the criterion holds.
    """
    eps = ckls_settings.QUAD_EPS if eps is None else eps
    x_max = 2.0 * max(scale, 1e-8)
    while x_max < MAX_SUPPORT:
        probes = np.geomspace(eps, x_max, 400)
        peak = max(func(x) for x in probes)
        if peak > 0 and func(x_max) < 1e-16 * peak:
            return x_max
        x_max *= 2.0
    raise NormalizationFailure(f"No effective support below {MAX_SUPPORT:g}")


def integrate_density(func, *, scale, head_power=None, breakpoints=(), rtol=None, eps=None):
    """
    Integral of a nonnegative function over (0, inf).

    ``head_power`` p declares func(x) ~ C x^p near zero (p > -1); the piece
    (0, eps) is then integrated with QUADPACK's endpoint-singularity
    extrapolation. Without it the head is taken as negligible.
    """
    eps = ckls_settings.QUAD_EPS if eps is None else eps
    x_max = effective_support(func, scale, eps=eps)
    body = integrate_split(func, eps, x_max, rtol=rtol, breakpoints=breakpoints)

    head = 0.0
    if head_power is not None:
        if head_power <= -1:
            raise NormalizationFailure(f"Non-integrable power x^{head_power} at zero")
        head = quad(func, 0.0, eps, rtol=rtol)

    tail = 0.0
    f_hi = func(x_max)
    if f_hi > 0:
        h = 1e-3 * x_max
        f_next = func(x_max + h)
        if f_next > 0:
            rate = -(math.log(f_next) - math.log(f_hi)) / h
            if rate > 0:
                tail = f_hi / rate

    total = head + body + tail
    logger.debug("integrate_density: head=%g body=%g tail=%g x_max=%g", head, body, tail, x_max)
    if not math.isfinite(total):
        raise NormalizationFailure("Density integral is not finite")
    return total
