import math

import numpy as np
import pytest
from scipy import stats

from ckls.analytic import (
    cir_mean,
    cir_transition_density,
    cir_variance,
    ckls_stationary_density_p,
    ckls_stationary_moment,
    lambda_transition_density_q,
    s_moments,
)
from ckls.exceptions import CensoredBatch, DomainError, NegativeSRealization
from ckls.params import CklsParams, derive_cir, validate
from ckls.simulate import (
    Measure,
    MomentAccumulator,
    Path,
    Scheme,
    besq_clock,
    besq_dimension,
    cir_via_besq,
    em_ckls_p,
    em_x_p,
    em_x_q,
    ergodic_average,
    exact_lambda_q,
    exact_s,
    histogram_l1,
    make_stream,
    simulate_paths,
    time_grid,
)
from ckls.transform import TransformSpec, map_path


def within(estimate, expected, std_err, multiplier=4.0):
    return abs(estimate - expected) <= multiplier * std_err


class TestStreams:
    def test_same_seed_and_stream_repeat(self):
        first = make_stream(7, 3).normal(1000)
        second = make_stream(7, 3).normal(1000)
        assert np.array_equal(first, second)

    def test_streams_differ(self):
        assert not np.array_equal(make_stream(7, 0).normal(10), make_stream(7, 1).normal(10))
        assert not np.array_equal(make_stream(7, 0).normal(10), make_stream(8, 0).normal(10))

    def test_streams_uncorrelated(self):
        x = make_stream(11, 0).normal(100_000)
        y = make_stream(11, 1).normal(100_000)
        assert abs(np.corrcoef(x, y)[0, 1]) < 0.015


class TestTimeGrid:
    def test_grid(self):
        grid = time_grid(1.0, 0.25)
        assert np.allclose(grid, [0.0, 0.25, 0.5, 0.75, 1.0])

    @pytest.mark.parametrize('t_max, dt', [(0.0, 0.1), (1.0, 0.0), (1.0, 2.0), (-1.0, 0.1)])
    def test_bad_grid(self, t_max, dt):
        with pytest.raises(DomainError):
            time_grid(t_max, dt)

    def test_path_rejects_mismatched_lengths(self):
        with pytest.raises(DomainError):
            Path(times=np.array([0.0, 1.0]), values=np.array([1.0, 2.0, 3.0]),
                 measure='P', scheme='em_full_truncation', seed=0, stream=0)


class TestEuler:
    def test_zero_volatility_is_the_ode(self):
        p = CklsParams(a=0.2, b=0.5, sigma=0.0, k=0.75, lambda0=1.0, L=2.0)
        path = em_ckls_p(p, 10.0, 1e-3, make_stream(1))
        exact = 0.4 + 0.6 * np.exp(-0.5 * path.times)
        assert np.max(np.abs(path.values - exact)) < 1e-4
        assert np.all(np.diff(path.values) < 0)
        assert path.truncated == 0

    def test_reported_states_are_nonnegative(self):
        p = validate(a=0.05, b=0.5, sigma=0.3, k=0.5, lambda0=0.01, L=1.0)
        path = em_ckls_p(p, 2.0, 1e-2, make_stream(3), n_paths=500)
        assert path.values.shape == (500, 201)
        assert np.all(path.values >= 0)
        assert path.truncated >= 0

    def test_increments_kept(self, p0):
        path = em_ckls_p(p0, 1.0, 0.1, make_stream(5), keep_increments=True)
        assert path.increments.shape == (10,)
        assert path.measure == Measure.P
        assert path.scheme == Scheme.EM

    def test_seeded_paths_repeat(self, p0):
        first = em_ckls_p(p0, 1.0, 1e-2, make_stream(9, 2))
        second = em_ckls_p(p0, 1.0, 1e-2, make_stream(9, 2))
        assert np.array_equal(first.values, second.values)
        assert (first.seed, first.stream) == (9, 2)

    def test_x_under_p_starts_at_transform(self, p0):
        path = em_x_p(p0, 0.5, 0.05, make_stream(1))
        assert path.values[0] == pytest.approx(16.0)

    def test_x_under_q_matches_cir_moments(self, p0):
        cir = derive_cir(p0)
        result = simulate_paths(p0, measure=Measure.Q, scheme=Scheme.EM, state='x',
                                t_max=1.0, dt=1e-3, n_paths=20_000, seed=21)
        acc = result.accumulator
        assert within(acc.mean, cir_mean(1.0, cir), acc.std_err)
        variance_se = acc.variance * math.sqrt(2.0 / acc.count)
        assert within(acc.variance, cir_variance(1.0, cir), variance_se)

    def test_x_under_q_histogram(self, p0):
        cir = derive_cir(p0)
        path = em_x_q(cir, 1.0, 1e-2, make_stream(25), n_paths=20_000)
        grid = np.linspace(2.0, 24.0, 89)
        density = lambda x: cir_transition_density(x, cir.x0, 1.0, cir)
        assert histogram_l1(path.values[:, -1], density, grid) < 0.08

    @pytest.mark.slow
    def test_x_under_q_histogram_fine_grid(self, p0):
        cir = derive_cir(p0)
        path = em_x_q(cir, 1.0, 1e-3, make_stream(25), n_paths=100_000)
        grid = np.linspace(2.0, 24.0, 89)
        density = lambda x: cir_transition_density(x, cir.x0, 1.0, cir)
        assert histogram_l1(path.values[:, -1], density, grid) < 0.05

    def test_mapped_lambda_matches_x_under_p(self, p0):
        mapped = map_path(em_ckls_p(p0, 1.0, 1e-3, make_stream(27, 0), n_paths=20_000), TransformSpec.for_params(p0))
        direct = em_x_p(p0, 1.0, 1e-3, make_stream(27, 1), n_paths=20_000)
        first = MomentAccumulator.of(mapped.values[:, -1])
        second = MomentAccumulator.of(direct.values[:, -1])
        assert np.allclose(mapped.values[:, 0], 16.0)
        assert within(first.mean, second.mean, math.hypot(first.std_err, second.std_err))
        variance_se = math.hypot(first.variance, second.variance) * math.sqrt(2.0 / first.count)
        assert within(first.variance, second.variance, variance_se)

    def test_truncations_shrink_with_step_at_half(self):
        # 2a / sigma^2 = 3: the truncation count scales like dt^2
        p = validate(a=0.135, b=0.5, sigma=0.3, k=0.5, lambda0=0.05, L=1.0)
        counts = [
            simulate_paths(p, measure=Measure.P, state='lambda', t_max=1.0, dt=dt,
                           n_paths=50_000, seed=23).truncated
            for dt in (0.1, 0.05, 0.025)
        ]
        assert counts[0] > 0
        assert counts[1] <= counts[0] / 2
        assert counts[2] <= counts[1] / 2

    def test_lambda_under_p_seed_stability(self, p0):
        first = simulate_paths(p0, measure=Measure.P, state='lambda', t_max=1.0, dt=1e-2,
                               n_paths=20_000, seed=1).accumulator
        second = simulate_paths(p0, measure=Measure.P, state='lambda', t_max=1.0, dt=1e-2,
                                n_paths=20_000, seed=2).accumulator
        assert within(first.mean, second.mean, math.hypot(first.std_err, second.std_err))


class TestExactS:
    def test_zero_volatility_decay(self):
        p = CklsParams(a=0.2, b=0.5, sigma=0.0, k=0.75, lambda0=1.0, L=2.0)
        grid = np.linspace(0.0, 4.0, 41)
        path = exact_lambda_q(p, grid, make_stream(1))
        assert np.allclose(path.values, np.exp(-0.5 * grid), rtol=1e-10)
        assert path.censored_at is None

    def test_terminal_moments(self, p0):
        mean, var, _ = s_moments(1.0, 1.0, p0)
        result = simulate_paths(p0, scheme=Scheme.EXACT, state='s', t_max=1.0, dt=1.0,
                                n_paths=100_000, seed=4)
        acc = result.accumulator
        assert mean == pytest.approx(0.88250, abs=5e-6)
        assert var == pytest.approx(0.0049770, abs=5e-8)
        assert within(acc.mean, mean, acc.std_err)
        assert within(acc.variance, var, var * math.sqrt(2.0 / acc.count))
        distance = stats.kstest(result.terminal, 'norm', args=(mean, math.sqrt(var))).statistic
        assert distance < 0.01

    def test_exact_on_any_grid(self, p0):
        mean, var, _ = s_moments(1.0, 1.0, p0)
        result = simulate_paths(p0, scheme=Scheme.EXACT, state='s', t_max=1.0, dt=0.1,
                                n_paths=50_000, seed=6)
        acc = result.accumulator
        assert within(acc.mean, mean, acc.std_err)
        assert within(acc.variance, var, var * math.sqrt(2.0 / acc.count))

    def test_bundle_shape(self, p0):
        values = exact_s(p0, np.linspace(0.0, 1.0, 11), make_stream(1), n_paths=3)
        assert values.shape == (3, 11)
        assert np.all(values[:, 0] == 1.0)

    def test_crossing_is_censored(self):
        p = validate(a=0.2, b=0.5, sigma=3.0, k=0.75, lambda0=1e-4, L=2.0)
        grid = np.linspace(0.0, 100.0, 10_001)
        path = exact_lambda_q(p, grid, make_stream(2))
        assert path.censored_at is not None
        assert len(path.values) == len(path.times) == path.censored_at
        assert np.all(path.values > 0)
        with pytest.raises(NegativeSRealization):
            exact_lambda_q(p, grid, make_stream(2), strict=True)

    def test_all_paths_censored(self):
        p = validate(a=0.2, b=0.5, sigma=3.0, k=0.75, lambda0=1e-4, L=2.0)
        with pytest.raises(CensoredBatch):
            simulate_paths(p, scheme=Scheme.EXACT, state='lambda', t_max=20.0, dt=0.01, n_paths=3, seed=2)

    def test_checkpoints_drop_censored_paths(self):
        p = validate(a=0.2, b=0.5, sigma=3.0, k=0.75, lambda0=1.0, L=2.0)
        result = simulate_paths(p, scheme=Scheme.EXACT, state='lambda', t_max=2.0, dt=0.01,
                                n_paths=2000, seed=3, checkpoints=(1.0, 2.0))
        assert result.censored > 0
        assert len(result.terminal) == 2000 - result.censored
        assert np.array_equal(result.checkpoints[2.0], result.terminal)
        assert len(result.checkpoints[1.0]) >= len(result.terminal)
        assert np.all(result.checkpoints[1.0] > 0)

    def test_lambda_histogram_matches_transition_density(self, p0):
        result = simulate_paths(p0, scheme=Scheme.EXACT, state='lambda', t_max=1.0, dt=1.0,
                                n_paths=100_000, seed=8)
        assert result.censored == 0
        grid = np.linspace(0.01, 2.0, 80)
        distance = histogram_l1(result.terminal, lambda x: lambda_transition_density_q(x, 1.0, 1.0, p0), grid)
        assert distance < 0.05

    def test_bad_grid(self, p0):
        with pytest.raises(DomainError):
            exact_lambda_q(p0, [0.0, 1.0, 0.5], make_stream(1))


class TestBesq:
    def test_dimension_is_one(self, params):
        assert besq_dimension(derive_cir(params)) == pytest.approx(1.0)

    def test_clock(self, p0):
        cir = derive_cir(p0)
        assert besq_clock(0.0, cir) == 0.0
        assert besq_clock(1.0, cir) == pytest.approx(0.36 * math.expm1(0.25) / 1.0)

    def test_path_shape(self, p0):
        path = cir_via_besq(derive_cir(p0), 1.0, 100, make_stream(1), n_paths=4)
        assert path.values.shape == (4, 101)
        assert path.values[:, 0] == pytest.approx(16.0)
        assert path.scheme == Scheme.BESQ

    def test_terminal_moments(self, p0):
        cir = derive_cir(p0)
        result = simulate_paths(p0, scheme=Scheme.BESQ, state='x', t_max=1.0, dt=1e-2,
                                n_paths=20_000, seed=12)
        acc = result.accumulator
        assert within(acc.mean, cir_mean(1.0, cir), acc.std_err)
        assert within(acc.variance, cir_variance(1.0, cir), acc.variance * math.sqrt(2.0 / acc.count))


class TestErgodicAverage:
    def path(self, values):
        values = np.asarray(values, dtype=float)
        return Path(times=np.linspace(0.0, 2.0, values.shape[-1]), values=values,
                    measure='P', scheme='em_full_truncation', seed=0, stream=0)

    def test_constant_path(self):
        assert ergodic_average(self.path([3.0, 3.0, 3.0]), 2.0) == pytest.approx(9.0)

    def test_zero_exponent(self):
        assert ergodic_average(self.path([0.0, 5.0, 2.0]), 0.0) == 1.0

    def test_linear_path(self):
        assert ergodic_average(self.path([0.0, 1.0, 2.0]), 1.0) == pytest.approx(1.0)

    def test_negative_exponent_needs_positive_path(self):
        with pytest.raises(DomainError):
            ergodic_average(self.path([1.0, 0.0, 2.0]), -1.0)

    def test_bundle(self):
        averages = ergodic_average(self.path([[1.0, 1.0], [2.0, 2.0]]), 1.0)
        assert np.allclose(averages, [1.0, 2.0])

    @pytest.mark.slow
    def test_time_average_approaches_stationary_mean(self, p0):
        path = em_ckls_p(p0, 500.0, 1e-3, make_stream(31), n_paths=8)
        averages = ergodic_average(path, 1.0)
        assert np.mean(averages) == pytest.approx(ckls_stationary_moment(1.0, p0), rel=0.05)


class TestBatch:
    def test_accumulator_merge(self):
        samples = make_stream(1).normal(1000)
        whole = MomentAccumulator.of(samples)
        merged = MomentAccumulator.of(samples[:300]).merge(MomentAccumulator.of(samples[300:]))
        assert merged.count == 1000
        assert merged.mean == pytest.approx(whole.mean)
        assert merged.variance == pytest.approx(np.var(samples, ddof=1))

    def test_result_does_not_depend_on_workers(self, p0, settings):
        settings.CKLS = {**settings.CKLS, 'CHUNK_SIZE': 1000}
        kwargs = dict(measure=Measure.P, state='lambda', t_max=0.5, dt=1e-2, n_paths=3000, seed=5)
        serial = simulate_paths(p0, n_jobs=1, **kwargs)
        parallel = simulate_paths(p0, n_jobs=2, **kwargs)
        assert np.array_equal(serial.terminal, parallel.terminal)

    def test_checkpoints(self, p0):
        result = simulate_paths(p0, measure=Measure.P, state='lambda', t_max=1.0, dt=0.1,
                                n_paths=100, seed=5, checkpoints=(0.5, 1.0))
        assert set(result.checkpoints) == {0.5, 1.0}
        assert np.array_equal(result.checkpoints[1.0], result.terminal)

    def test_exact_checkpoints_follow_state(self, p0):
        result = simulate_paths(p0, scheme=Scheme.EXACT, state='lambda', t_max=1.0, dt=0.05,
                                n_paths=20_000, seed=14, checkpoints=(0.5, 1.0))
        assert np.array_equal(result.checkpoints[1.0], result.terminal)
        mean, var, _ = s_moments(0.5, 0.5, p0)
        acc = MomentAccumulator.of(result.checkpoints[0.5])
        assert within(acc.mean, mean ** 4 + 6 * mean ** 2 * var + 3 * var ** 2, acc.std_err)

    @pytest.mark.parametrize('scheme, state', [
        (Scheme.EM, 'x'),
        (Scheme.EXACT, 'lambda'),
        (Scheme.BESQ, 'x'),
    ])
    def test_checkpoint_at_start_is_initial_state(self, p0, scheme, state):
        result = simulate_paths(p0, scheme=scheme, state=state, t_max=0.1, dt=0.1,
                                n_paths=50, seed=5, checkpoints=(0.025,))
        expected = p0.lambda0 if state == 'lambda' else 16.0
        assert result.checkpoints[0.025] == pytest.approx(np.full(50, expected))

    def test_empty_accumulator(self):
        acc = MomentAccumulator()
        assert math.isnan(acc.mean)
        assert math.isnan(acc.variance)
        assert math.isnan(acc.std_err)

    @pytest.mark.parametrize('kwargs', [
        dict(measure='P', scheme='exact_gaussian', state='lambda'),
        dict(measure='Q', scheme='besq_time_change', state='lambda'),
        dict(measure='Q', scheme='em_full_truncation', state='s'),
        dict(measure='Q', scheme='em_full_truncation', state='v'),
    ])
    def test_unsupported_combinations(self, p0, kwargs):
        with pytest.raises(DomainError):
            simulate_paths(p0, t_max=1.0, dt=0.1, n_paths=10, **kwargs)

    @pytest.mark.slow
    def test_long_run_matches_stationary_law(self, p0):
        result = simulate_paths(p0, measure=Measure.P, state='lambda', t_max=30.0, dt=1e-2,
                                n_paths=20_000, seed=17)
        grid = np.linspace(0.02, 2.0, 100)
        assert histogram_l1(result.terminal, lambda x: ckls_stationary_density_p(x, p0), grid) < 0.1


class TestHistogram:
    def test_gamma_samples(self):
        samples = stats.gamma.rvs(2.0, size=200_000, random_state=np.random.default_rng(3))
        grid = np.linspace(0.0, 20.0, 81)
        assert histogram_l1(samples, lambda x: stats.gamma.pdf(x, 2.0), grid) < 0.03

    def test_outside_mass_counts(self):
        grid = np.linspace(0.0, 1.0, 11)
        assert histogram_l1(np.array([5.0, 6.0]), lambda x: np.zeros_like(x), grid) == pytest.approx(1.0)
