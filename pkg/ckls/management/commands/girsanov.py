"""
Monte-Carlo check of E^P[M_t] = 1, or the Novikov counterexample.
Run with: python manage.py girsanov --config params.toml --paths 100000 --t-max 1
"""

from ckls.girsanov import martingale_estimate, novikov_counterexample

from ._base import CklsCommand


class Command(CklsCommand):
    help = 'Estimate E^P[M_T] with confidence intervals at quarter checkpoints'
    requires_config = False

    def add_command_arguments(self, parser):
        parser.add_argument('--paths', type=int, default=None)
        parser.add_argument('--t-max', type=float, default=1.0)
        parser.add_argument('--dt', type=float, default=None)
        parser.add_argument('--n-jobs', type=int, default=None)
        parser.add_argument(
            '--counterexample',
            action='store_true',
            help='Report the tail of the Exp(1) energy kernel instead'
        )
        parser.add_argument('--c', type=float, default=1.0, help='Energy threshold for --counterexample')

    def handle(self, *args, **options):
        if options['counterexample']:
            return self.report(novikov_counterexample(options['c'], options['paths'], options['seed']))

        if not options['config']:
            raise self.usage_error('--config is required unless --counterexample is given')
        p = self.load_params(options)
        self.progress(f"Weighting P paths to T={options['t_max']:g}")
        report = martingale_estimate(
            p,
            options['t_max'],
            dt=options['dt'],
            n_paths=options['paths'],
            seed=options['seed'],
            n_jobs=options['n_jobs'],
        )
        return self.report(report)
