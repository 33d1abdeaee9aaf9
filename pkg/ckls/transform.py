"""
The mapping T(x) = L^2 / (4 (1-k)^2) x^(2(1-k)) and its companions.

T solves T'(x) x^k = L sqrt(T(x)) with zero integration constant, which turns
the CKLS diffusion coefficient sigma x^k into sigma L sqrt(T). All powers are
taken through exp/log of strictly positive arguments.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import DomainError


@dataclass(frozen=True)
class TransformSpec:
    coeff: float
    expo: float
    inv_coeff: float
    inv_expo: float

    @classmethod
    def from_k_L(cls, k, L):
        one_minus_k = 1.0 - k
        return cls(
            coeff=L ** 2 / (4.0 * one_minus_k ** 2),
            expo=2.0 * one_minus_k,
            inv_coeff=(2.0 * one_minus_k / L) ** (1.0 / one_minus_k),
            inv_expo=1.0 / (2.0 * one_minus_k),
        )

    @classmethod
    def for_params(cls, p):
        return cls.from_k_L(p.k, p.L)

    @property
    def k(self):
        return 1.0 - self.expo / 2.0

    @property
    def L(self):
        return self.expo * math.sqrt(self.coeff)

    @property
    def log_coeff(self):
        return math.log(self.coeff)


def _positive(x, name='x'):
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError(f"{name} must be strictly positive")
    return arr


def _out(arr):
    return float(arr) if arr.ndim == 0 else arr


def forward(x, s):
    """T(x) = coeff * x^expo"""
    x = _positive(x)
    return _out(np.exp(s.log_coeff + s.expo * np.log(x)))


def inverse(y, s):
    """T^-1(y) = inv_coeff * y^inv_expo"""
    y = _positive(y, 'y')
    return _out(np.exp((np.log(y) - s.log_coeff) / s.expo))


def d1(x, s):
    """T'(x) = L^2 / (2(1-k)) x^(1-2k)"""
    x = _positive(x)
    return _out(s.coeff * s.expo * np.exp((s.expo - 1.0) * np.log(x)))


def d2(x, s):
    """T''(x) = L^2 (1-2k) / (2(1-k)) x^(-2k); identically zero at k = 1/2"""
    x = _positive(x)
    return _out(s.coeff * s.expo * (s.expo - 1.0) * np.exp((s.expo - 2.0) * np.log(x)))


def ode_residual(x, s):
    """T'(x) x^k - L sqrt(T(x))"""
    x = _positive(x)
    lhs = np.asarray(d1(x, s)) * np.exp(s.k * np.log(x))
    rhs = s.L * np.sqrt(np.asarray(forward(x, s)))
    return _out(lhs - rhs)


def ode_tolerance(x, s):
    """Admissible |ode_residual|: 1e-10 (1 + L sqrt(T(x)))"""
    return _out(1e-10 * (1.0 + s.L * np.sqrt(np.asarray(forward(x, s)))))


def map_path(path, s):
    """Apply T to every state of a path; grid, measure and scheme are kept"""
    values = _positive(path.values, 'path values')
    return replace(path, values=np.exp(s.log_coeff + s.expo * np.log(values)))
