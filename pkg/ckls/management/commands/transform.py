"""
Evaluate T, its derivatives and its inverse on given points or a log grid.
Run with: python manage.py transform --config params.toml --x 0.5 1 2
"""

import numpy as np

from ckls.transform import TransformSpec, d1, d2, forward, inverse, ode_residual

from ._base import CklsCommand


class Command(CklsCommand):
    help = 'Evaluate the transform T(x) = L^2 / (4(1-k)^2) x^(2(1-k))'

    def add_command_arguments(self, parser):
        parser.add_argument('--x', type=float, nargs='+', help='Points to evaluate')
        parser.add_argument(
            '--grid',
            type=float,
            nargs=3,
            metavar=('LO', 'HI', 'N'),
            help='Log-spaced grid from LO to HI with N points'
        )

    def handle(self, *args, **options):
        p = self.load_params(options)
        if options['x']:
            points = np.asarray(options['x'], dtype=float)
        elif options['grid']:
            lo, hi, n = options['grid']
            if not (0 < lo < hi) or n < 2:
                raise self.usage_error('--grid needs 0 < LO < HI and N >= 2')
            points = np.geomspace(lo, hi, int(n))
        else:
            raise self.usage_error('Give --x or --grid')

        spec = TransformSpec.for_params(p)
        y = np.atleast_1d(forward(points, spec))
        rows = list(zip(
            points,
            y,
            np.atleast_1d(d1(points, spec)),
            np.atleast_1d(d2(points, spec)),
            np.atleast_1d(inverse(y, spec)),
            np.atleast_1d(ode_residual(points, spec)),
        ))
        header = ['x', 'T', 'T_prime', 'T_second', 'inverse_of_T', 'ode_residual']
        self.write_table(options, header, rows)
        return self.report({'transform': spec, 'points': [dict(zip(header, row)) for row in rows]})
