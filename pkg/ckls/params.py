"""
Model parameters.

``CklsParams`` holds the six inputs of the short-rate model
d lambda = (a - b lambda) dt + sigma lambda^k dW together with the transform
constant L. Everything downstream (the CIR triple, the OU triple and the
Bessel/series constants) is derived here.
"""

import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import toml

from . import exceptions
from .conf import ensure_configured
from .forms import PARAM_FIELDS, CklsParamsForm
from .transform import TransformSpec, forward

logger = logging.getLogger(__name__)

_REJECTIONS = {
    'non_positive': exceptions.NonPositiveParameter,
    'elasticity_range': exceptions.ElasticityOutOfRange,
    'feller_half': exceptions.FellerViolationAtHalf,
}


@dataclass(frozen=True)
class CklsParams:
    a: float
    b: float
    sigma: float
    k: float
    lambda0: float
    L: float

    @property
    def is_cir_case(self):
        """k = 1/2: the model is itself a CIR process"""
        return self.k == 0.5

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class CirParams:
    """dr = a*(b* - r) dt + sigma* sqrt(r) dW, started at x0"""
    a_star: float
    b_star: float
    sigma_star: float
    x0: float = 1.0


@dataclass(frozen=True)
class OuParams:
    """dY = a°(b° - Y) dt + sigma° dW, started at y0"""
    a_diamond: float
    b_diamond: float
    sigma_diamond: float
    y0: float


@dataclass(frozen=True)
class AuxConstants:
    kappa: float
    M: float
    dim_besq: float


def validate(a, b, sigma, k, lambda0, L):
    """
    Validate six raw reals and return ``CklsParams``.

    Raises the exception named after the first violated constraint, in field
    order a, b, sigma, k, lambda0, L, then the k = 1/2 Feller check.
    """
    ensure_configured()
    raw = {'a': a, 'b': b, 'sigma': sigma, 'k': k, 'lambda0': lambda0, 'L': L}
    form = CklsParamsForm(data=raw)
    if form.is_valid():
        return CklsParams(**{name: float(form.cleaned_data[name]) for name in PARAM_FIELDS})

    errors = form.errors.as_data()
    for field in (*PARAM_FIELDS, '__all__'):
        for error in errors.get(field, ()):
            exc_class = _REJECTIONS.get(error.code)
            if exc_class is None:
                exc = exceptions.NonFiniteParameter(
                    f"{field} must be a finite real (got {raw.get(field)!r}).", field=field
                )
            else:
                exc = exc_class(error.message, field=None if field == '__all__' else field)
            logger.warning("Rejected parameters: %s: %s", type(exc).__name__, exc)
            raise exc

    raise exceptions.ParameterError("Parameter set rejected.")


def load_params(path):
    """Read a flat ``key = value`` file and validate it"""
    try:
        raw = toml.load(Path(path))
    except (OSError, toml.TomlDecodeError) as exc:
        raise exceptions.ConfigError(f"Cannot read parameter file {path}: {exc}") from exc

    unknown = sorted(set(raw) - set(PARAM_FIELDS))
    if unknown:
        raise exceptions.ConfigError(f"Unknown keys in {path}: {', '.join(unknown)}")
    missing = [name for name in PARAM_FIELDS if name not in raw]
    if missing:
        raise exceptions.ConfigError(f"Missing keys in {path}: {', '.join(missing)}")

    return validate(**raw)


def derive_cir(p):
    """The CIR triple that X = T(lambda) follows under Q"""
    one_minus_k = 1.0 - p.k
    return CirParams(
        a_star=2.0 * p.b * one_minus_k,
        b_star=p.sigma ** 2 * p.L ** 2 / (8.0 * p.b * one_minus_k),
        sigma_star=p.sigma * p.L,
        x0=float(forward(p.lambda0, TransformSpec.for_params(p))),
    )


def derive_ou(p):
    """The OU triple that Y = sqrt(X) follows under Q"""
    cir = derive_cir(p)
    return OuParams(
        a_diamond=p.b * (1.0 - p.k),
        b_diamond=0.0,
        sigma_diamond=p.sigma * p.L / 2.0,
        y0=math.sqrt(cir.x0),
    )


def feller_ratio(c):
    """2 a* b* / sigma*^2; >= 1 means the origin is unattainable"""
    return 2.0 * c.a_star * c.b_star / c.sigma_star ** 2


def aux_constants(p):
    cir = derive_cir(p)
    ratio = feller_ratio(cir)
    return AuxConstants(
        kappa=ratio - 1.0,
        M=p.b / (p.sigma ** 2 * (1.0 - p.k)),
        dim_besq=2.0 * ratio,
    )
