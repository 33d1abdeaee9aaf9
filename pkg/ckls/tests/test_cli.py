import json
import math
from io import StringIO

import pytest

from ckls.cli import run

from .conftest import P0


def call(*argv):
    stdout, stderr = StringIO(), StringIO()
    code = run(list(argv), stdout=stdout, stderr=stderr)
    return code, stdout.getvalue(), stderr.getvalue()


@pytest.fixture
def config(write_config):
    return write_config(P0)


def test_validate(config):
    code, out, _ = call('validate', '--config', config)
    assert code == 0
    report = json.loads(out)
    assert report['cir']['a_star'] == pytest.approx(0.25)
    assert report['cir']['x0'] == pytest.approx(16.0)
    assert report['feller_ratio'] == pytest.approx(0.5)


def test_rejected_parameters_exit_1(write_config):
    code, out, err = call('validate', '--config', write_config({**P0, 'k': 1.0}))
    assert code == 1
    assert out == ''
    assert 'ElasticityOutOfRange' in err


def test_missing_key_exit_1(write_config):
    values = dict(P0)
    del values['L']
    code, _, err = call('validate', '--config', write_config(values))
    assert code == 1
    assert 'ConfigError' in err


def test_unknown_subcommand_exit_3():
    assert call('calibrate')[0] == 3
    assert call()[0] == 3


def test_bad_flags_exit_3(config):
    assert call('validate', '--config', config, '--bogus')[0] == 3
    assert call('validate')[0] == 3
    assert call('density', '--config', config, '--which', 'cir_transition', '--t', '1', '--grid', 'a:b')[0] == 3
    assert call('feller', '--config', config, '--which', 'psi')[0] == 3


def test_help_exit_0(capsys):
    assert call('moments', '--help')[0] == 0


def test_domain_error_exit_1(config):
    code, _, err = call('feller', '--config', config, '--which', 'psi', '--x', '-1')
    assert code == 1
    assert 'DomainError' in err


def test_numerical_failure_exit_2(config, settings):
    settings.CKLS = {**settings.CKLS, 'BESSEL_MAX_TERMS': 1}
    code, _, err = call('density', '--config', config, '--which', 'cir_transition', '--t', '1')
    assert code == 2
    assert 'ConvergenceFailure' in err


def test_transform_grid(config, tmp_path):
    out = tmp_path / 'transform.csv'
    code, stdout, _ = call('transform', '--config', config, '--grid', '0.01', '100', '5', '--out', str(out))
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == 'x,T,T_prime,T_second,inverse_of_T,ode_residual'
    assert len(lines) == 6
    points = json.loads(stdout)['points']
    assert points[2]['T'] == pytest.approx(16.0)


def test_density(config, tmp_path):
    out = tmp_path / 'density.csv'
    code, stdout, _ = call('density', '--config', config, '--which', 'ckls_stationary_P',
                           '--grid', '0.001:10:4001', '--out', str(out))
    assert code == 0
    report = json.loads(stdout)
    assert report['trapezoid_mass'] == pytest.approx(1.0, abs=5e-3)
    assert len(out.read_text().splitlines()) == 4002


def test_density_needs_horizon(config):
    code, _, err = call('density', '--config', config, '--which', 'lambda_transition_Q')
    assert code == 1
    assert 'DomainError' in err


def test_moments(config):
    code, stdout, _ = call('moments', '--config', config, '--t', '1', '--n', '2')
    assert code == 0
    report = json.loads(stdout)
    assert report['cir']['mean'] == pytest.approx(12.540, abs=5e-4)
    assert set(report['cir_raw_moments']) == {'1', '2'}
    assert report['s']['mean'] == pytest.approx(0.88250, abs=5e-6)


def test_simulate_is_reproducible(config, tmp_path):
    argv = ['simulate', '--config', config, '--measure', 'Q', '--scheme', 'exact', '--paths', '500',
            '--t-max', '1', '--dt', '0.1', '--seed', '7']
    first, second = tmp_path / 'first.csv', tmp_path / 'second.csv'
    code, out_first, _ = call(*argv, '--out', str(first))
    assert code == 0
    _, out_second, _ = call(*argv, '--out', str(second))
    assert first.read_bytes() == second.read_bytes()
    assert out_first == out_second
    report = json.loads(out_first)
    assert report['state'] == 'lambda'
    assert report['n_paths'] == 500
    assert first.read_text().splitlines()[0] == 'path_id,t,value'


def test_simulate_rejects_exact_under_p(config):
    code, _, err = call('simulate', '--config', config, '--measure', 'P', '--scheme', 'exact',
                        '--paths', '10', '--dt', '0.5')
    assert code == 1
    assert 'DomainError' in err


def test_girsanov_counterexample_needs_no_config():
    code, stdout, _ = call('girsanov', '--counterexample', '--c', '2', '--paths', '1000')
    assert code == 0
    report = json.loads(stdout)
    assert report['analytic_tail'] == pytest.approx(math.exp(-2.0))
    assert report['n_samples'] == 1000


def test_girsanov_needs_config():
    assert call('girsanov', '--paths', '10')[0] == 3


def test_girsanov_estimate(config):
    code, stdout, _ = call('girsanov', '--config', config, '--paths', '2000', '--dt', '0.01')
    assert code == 0
    report = json.loads(stdout)
    assert len(report['checkpoints']) == 4
    assert report['frac_overflow'] == 0.0


def test_feller_verdict(config):
    code, stdout, _ = call('feller', '--config', config, '--which', 'verdict')
    assert code == 0
    report = json.loads(stdout)
    assert report['exits_at_lo'] is True
    assert report['exits_at_hi'] is False
    assert report['is_true_martingale'] is False
    assert report['flags']['kernel_ratio'] is True


def test_feller_psi_series(config):
    code, stdout, _ = call('feller', '--config', config, '--which', 'psi', '--x', '2')
    assert code == 0
    report = json.loads(stdout)
    assert report['psi'] == pytest.approx(report['psi_series'], rel=1e-6)


def test_feller_classify_cir(config):
    code, stdout, _ = call('feller', '--config', config, '--which', 'classify', '--diffusion', 'cir')
    assert code == 0
    report = json.loads(stdout)
    assert report['classification'] == 'regular'
    assert report['sub_class'] == 'reflecting'


def test_feller_help_explains_verdict(capsys):
    assert call('feller', '--help')[0] == 0
    assert 'is_true_martingale=false' in capsys.readouterr().out


def test_all_censored_batch_exit_2(write_config):
    config = write_config({**P0, 'sigma': 3.0, 'lambda0': 1e-4})
    code, out, err = call('simulate', '--config', config, '--measure', 'Q', '--scheme', 'exact',
                          '--paths', '3', '--t-max', '20', '--dt', '0.01', '--seed', '2')
    assert code == 2
    assert out == ''
    assert 'CensoredBatch' in err
