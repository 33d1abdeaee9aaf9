"""
Monte-Carlo simulation of the CKLS state and its transforms.
Run with: python manage.py simulate --config params.toml --measure Q --scheme exact --paths 100000

The CSV (--out) holds the terminal sample as path_id,t,value; the JSON
summary on stdout compares sample moments with the closed forms where
they exist.
"""

from ckls import analytic
from ckls.params import derive_cir
from ckls.simulate import Measure, Scheme, simulate_paths

from ._base import CklsCommand

SCHEMES = {
    'em': Scheme.EM,
    'exact': Scheme.EXACT,
    'besq': Scheme.BESQ,
}


class Command(CklsCommand):
    help = 'Simulate paths under P or Q and summarise the terminal sample'

    def add_command_arguments(self, parser):
        parser.add_argument('--measure', choices=[m.value for m in Measure], default=Measure.Q.value)
        parser.add_argument('--scheme', choices=sorted(SCHEMES), default='em')
        parser.add_argument(
            '--state',
            choices=['lambda', 'x', 's'],
            help='Simulated quantity (default: lambda under P, x under Q, lambda for the exact scheme)'
        )
        parser.add_argument('--paths', type=int, default=None, help='Number of paths')
        parser.add_argument('--t-max', type=float, default=1.0, help='Horizon')
        parser.add_argument('--dt', type=float, default=None, help='Time step')
        parser.add_argument('--n-jobs', type=int, default=None, help='joblib workers')

    def handle(self, *args, **options):
        p = self.load_params(options)
        measure = Measure(options['measure'])
        scheme = SCHEMES[options['scheme']]
        state = options['state'] or self.default_state(measure, scheme)
        t_max = options['t_max']

        self.progress(f"Simulating {measure.value}/{scheme.value}/{state} to T={t_max:g}")
        result = simulate_paths(
            p,
            measure=measure,
            scheme=scheme,
            state=state,
            t_max=t_max,
            dt=options['dt'],
            n_paths=options['paths'],
            seed=options['seed'],
            n_jobs=options['n_jobs'],
        )
        acc = result.accumulator
        self.write_table(
            options,
            ['path_id', 't', 'value'],
            ((index, t_max, value) for index, value in enumerate(result.terminal)),
        )
        return self.report({
            'measure': result.measure,
            'scheme': result.scheme,
            'state': result.state,
            'seed': result.seed,
            'n_paths': result.n_paths,
            't_max': t_max,
            'mean': acc.mean,
            'variance': acc.variance,
            'std_err': acc.std_err,
            'truncated_steps': result.truncated,
            'censored': result.censored,
            'censored_fraction': result.censored / result.n_paths,
            'analytic': self.reference(p, measure, state, t_max),
        })

    def default_state(self, measure, scheme):
        if scheme == Scheme.EXACT or measure == Measure.P:
            return 'lambda'
        return 'x'

    def reference(self, p, measure, state, t_max):
        """Closed-form mean and variance of the simulated quantity, when known"""
        if measure != Measure.Q:
            return None
        if state == 'x':
            mean, var, _ = analytic.cir_mean_var_cov(t_max, t_max, derive_cir(p))
        elif state == 's':
            mean, var, _ = analytic.s_moments(t_max, t_max, p)
        else:
            return None
        return {'mean': mean, 'variance': var}
