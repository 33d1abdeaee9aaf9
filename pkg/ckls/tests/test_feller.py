import math

import pytest

from ckls.exceptions import DomainError
from ckls.feller import (
    ENTRANCE,
    EXIT,
    NATURAL,
    REFLECTING,
    REGULAR,
    DiffusionSpec,
    auxiliary_ckls,
    boundary_classify,
    brownian_motion,
    cir_diffusion,
    cir_from_params,
    engelbert_schmidt_check,
    explosion_verdict,
    explosive_quadratic,
    martingale_verdict,
    ornstein_uhlenbeck,
    phi_dual,
    phi_fine,
    phi_square_bound,
    psi_lower_limit,
    psi_series,
    scale_density,
    scale_psi,
    speed_density,
)
from ckls.params import CirParams


class TestScaleFunctions:
    @pytest.mark.parametrize('x', [-3.0, -0.5, 0.5, 2.0])
    def test_brownian_motion(self, x):
        spec = brownian_motion()
        assert scale_psi(x, spec) == pytest.approx(x)
        assert phi_fine(x, spec) == pytest.approx(x * x)
        assert phi_dual(x, spec) == pytest.approx(x * x)

    def test_vanish_at_anchor(self, p0):
        spec = auxiliary_ckls(p0, anchor=1.5)
        assert scale_psi(1.5, spec) == 0.0
        assert phi_fine(1.5, spec) == 0.0
        assert scale_density(1.5, spec) == pytest.approx(1.0)

    def test_speed_density(self):
        spec = ornstein_uhlenbeck(1.0, 1.0)
        assert speed_density(0.0, spec) == pytest.approx(2.0)
        assert speed_density(1.0, spec) == pytest.approx(2.0 / math.e)

    def test_outside_interval(self, p0):
        spec = auxiliary_ckls(p0)
        with pytest.raises(DomainError):
            scale_psi(0.0, spec)
        with pytest.raises(DomainError):
            phi_fine(-1.0, spec)

    def test_anchor_must_be_inside(self):
        with pytest.raises(DomainError):
            cir_diffusion(CirParams(a_star=1.0, b_star=1.0, sigma_star=1.0), anchor=0.0)


class TestPsiSeries:
    @pytest.mark.parametrize('x', [0.1, 0.5, 2.0, 5.0, 10.0])
    def test_matches_quadrature(self, params, x):
        assert psi_series(x, params) == pytest.approx(scale_psi(x, auxiliary_ckls(params)), rel=1e-6)

    def test_zero_at_one(self, params):
        assert psi_series(1.0, params) == 0.0

    def test_increasing(self, params):
        assert psi_series(0.5, params) < 0.0 < psi_series(2.0, params) < psi_series(4.0, params)

    def test_lower_limit_bounds(self, params):
        limit = psi_lower_limit(params)
        assert -1.0 / (1.0 - params.k) < limit < 0.0
        assert limit < psi_series(1e-6, params)

    def test_lower_limit_matches_probes(self, params):
        report = boundary_classify('lo', auxiliary_ckls(params))
        assert report.psi_limit == pytest.approx(psi_lower_limit(params), rel=1e-6)

    def test_rejects_nonpositive(self, p0):
        with pytest.raises(DomainError):
            psi_series(0.0, p0)


class TestClassification:
    def test_cir_above_feller_is_entrance(self):
        report = boundary_classify('lo', cir_diffusion(CirParams(a_star=1.0, b_star=1.0, sigma_star=1.0)))
        assert report.classification == ENTRANCE
        assert report.psi_limit == -math.inf
        assert not report.reachable
        assert report.sub_class == 'none'

    def test_derived_cir_is_regular_reflecting(self, p0):
        report = boundary_classify('lo', cir_from_params(p0))
        assert report.classification == REGULAR
        assert report.sub_class == REFLECTING
        assert report.reachable
        assert report.evidence[0]['x'] == pytest.approx(0.36 * 1e-2)

    def test_ou_at_infinity_is_natural(self):
        report = boundary_classify('hi', ornstein_uhlenbeck(1.0, 1.0))
        assert report.classification == NATURAL
        assert report.psi_limit == math.inf

    def test_brownian_motion_is_natural(self):
        assert boundary_classify('lo', brownian_motion()).classification == NATURAL

    def test_explosive_drift_exits_at_infinity(self):
        spec = explosive_quadratic()
        assert boundary_classify('hi', spec).classification == EXIT
        _, exits_hi = explosion_verdict(spec)
        assert exits_hi

    def test_ou_does_not_explode(self):
        assert explosion_verdict(ornstein_uhlenbeck(0.5, 0.3)) == (False, False)

    def test_bad_endpoint(self):
        with pytest.raises(DomainError):
            boundary_classify('left', brownian_motion())


class TestAuxiliaryDiffusion:
    def test_origin_is_regular(self, params):
        report = boundary_classify('lo', auxiliary_ckls(params))
        assert report.classification == REGULAR
        assert math.isfinite(report.phi_limit)
        assert math.isfinite(report.Phi_limit)

    def test_square_bound_diverges(self, params):
        bounds = [phi_square_bound(eps, params) for eps in (1e-5, 1e-10, 1e-20, 1e-40)]
        assert bounds == sorted(bounds)
        assert bounds[-1] > 2.0 * bounds[0]

    def test_phi_stays_below_square_bound(self, p0):
        report = boundary_classify('lo', auxiliary_ckls(p0))
        assert report.phi_limit < phi_square_bound(1e-40, p0)

    def test_square_bound_domain(self, p0):
        with pytest.raises(DomainError):
            phi_square_bound(1.0, p0)

    def test_engelbert_schmidt(self, params):
        flags = engelbert_schmidt_check(params)
        assert flags.all_ok
        assert len(flags.spot_integrals) == 9
        assert all(math.isfinite(v) for v in flags.spot_integrals.values())

    def test_engelbert_schmidt_exponents(self, p0):
        flags = engelbert_schmidt_check(p0)
        assert flags.nondegenerate
        assert flags.zero_exponents == {'inv_diffusion_sq': {}, 'drift_ratio': {}, 'kernel_ratio': {}}
        exponents = flags.endpoint_exponents
        assert exponents['inv_diffusion_sq']['lo'] == pytest.approx(-2 * p0.k)
        assert exponents['inv_diffusion_sq']['hi'] == pytest.approx(-2 * p0.k)
        assert exponents['drift_ratio']['lo'] == pytest.approx(-1.0, abs=0.02)
        assert exponents['drift_ratio']['hi'] == pytest.approx(1 - 2 * p0.k, abs=0.02)
        assert exponents['kernel_ratio']['lo'] == pytest.approx(-4 * p0.k, abs=0.02)
        assert exponents['kernel_ratio']['hi'] == pytest.approx(-2.0, abs=0.02)

    def test_vanishing_diffusion_fails_integrability(self, p0):
        spec = DiffusionSpec(drift=lambda x: 1.0, diffusion=lambda x: abs(x - 2.0), lo=0.0, hi=math.inf, anchor=1.0)
        flags = engelbert_schmidt_check(p0, spec)
        assert not flags.nondegenerate
        assert not flags.inv_diffusion_sq
        assert not flags.all_ok
        (zero, exponent), = flags.zero_exponents['inv_diffusion_sq'].items()
        assert float(zero) == pytest.approx(2.0, rel=1e-6)
        assert exponent == pytest.approx(-2.0, abs=1e-3)

    def test_mild_zero_is_integrable_but_degenerate(self, p0):
        spec = DiffusionSpec(drift=lambda x: 1.0, diffusion=lambda x: abs(x - 2.0) ** 0.25,
                             lo=0.0, hi=math.inf, anchor=1.0)
        flags = engelbert_schmidt_check(p0, spec)
        assert not flags.nondegenerate
        assert flags.inv_diffusion_sq
        (exponent,) = flags.zero_exponents['inv_diffusion_sq'].values()
        assert exponent == pytest.approx(-0.5, abs=1e-3)

    def test_engelbert_schmidt_needs_half_line(self, p0):
        with pytest.raises(DomainError):
            engelbert_schmidt_check(p0, brownian_motion())

    @pytest.mark.parametrize('anchor', [0.5, 1.0, 2.0])
    def test_verdict_does_not_depend_on_anchor(self, params, anchor):
        verdict = martingale_verdict(params, anchor=anchor)
        assert verdict.exits_at_lo
        assert not verdict.exits_at_hi
        assert verdict.assumptions_ok
        assert not verdict.is_true_martingale
