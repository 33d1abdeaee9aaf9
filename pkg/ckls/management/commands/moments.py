"""
Closed-form moments of X (CIR), Y (OU), S and V under Q, with the
stationary targets and the Chebyshev tail bound.
Run with: python manage.py moments --config params.toml --t 1
"""

from ckls import analytic
from ckls.params import derive_cir

from ._base import CklsCommand


class Command(CklsCommand):
    help = 'Print closed-form moments at t (and covariances with t2)'

    def add_command_arguments(self, parser):
        parser.add_argument('--t', type=float, default=1.0)
        parser.add_argument('--t2', type=float, default=None, help='Second time for covariances (default t)')
        parser.add_argument('--n', type=int, default=4, help='Highest raw CIR moment')
        parser.add_argument('--eps', type=float, default=0.5, help='Relative deviation for the Chebyshev bound')

    def handle(self, *args, **options):
        p = self.load_params(options)
        t = options['t']
        t2 = t if options['t2'] is None else options['t2']
        if options['n'] < 1:
            raise self.usage_error('--n must be at least 1')
        cir = derive_cir(p)

        def triple(values):
            mean, var, cov = values
            return {'mean': mean, 'variance': var, 'covariance': cov}

        report = {
            't': t,
            't2': t2,
            'cir': triple(analytic.cir_mean_var_cov(t, t2, cir)),
            'cir_raw_moments': {n: analytic.cir_moment_n(n, t, cir) for n in range(1, options['n'] + 1)},
            'ou': triple(analytic.ou_moments(t, t2, p)),
            's': triple(analytic.s_moments(t, t2, p)),
            'v': triple(analytic.v_moments(t, t2, p)),
            'stationary': {
                'cir_mean': cir.b_star,
                'ckls_mean_P': analytic.ckls_stationary_moment(1.0, p),
            },
        }
        if t > 0:
            mean, var = analytic.lambda_linear_approx(t, p)
            report['lambda_linear'] = {'mean': mean, 'variance': var}
            report['chebyshev'] = {'eps': options['eps'], 'bound': analytic.chebyshev_tail(options['eps'], t, p)}
        return self.report(report)
