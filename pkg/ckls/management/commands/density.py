"""
Tabulate one of the closed-form densities on a grid.
Run with: python manage.py density --config params.toml --which cir_transition --t 1 --grid 0.01:40:2001 --out density.csv
"""

import numpy as np

from ckls.analytic import LawTag, density_curve

from ._base import CklsCommand


class Command(CklsCommand):
    help = 'Evaluate a transition or stationary density on a grid'

    def add_command_arguments(self, parser):
        parser.add_argument('--which', choices=LawTag.values, required=True, help='Law to evaluate')
        parser.add_argument('--t', type=float, default=None, help='Horizon for transition laws')
        parser.add_argument('--grid', default='0.001:10:2001', help='LO:HI:N, N evenly spaced points')
        parser.add_argument('--log-grid', action='store_true', help='Space the grid geometrically')

    def parse_grid(self, text):
        try:
            lo, hi, n = text.split(':')
            lo, hi, n = float(lo), float(hi), int(n)
        except ValueError:
            raise self.usage_error(f'--grid expects LO:HI:N (got {text!r})')
        if not (0 < lo < hi) or n < 2:
            raise self.usage_error('--grid needs 0 < LO < HI and N >= 2')
        return lo, hi, n

    def handle(self, *args, **options):
        p = self.load_params(options)
        lo, hi, n = self.parse_grid(options['grid'])
        grid = np.geomspace(lo, hi, n) if options['log_grid'] else np.linspace(lo, hi, n)

        curve = density_curve(options['which'], grid, p, t=options['t'])
        self.write_table(options, ['x', 'density'], zip(curve.grid, curve.values))
        return self.report({
            'law_tag': curve.law_tag,
            't': options['t'],
            'grid': {'lo': lo, 'hi': hi, 'points': n},
            'trapezoid_mass': curve.mass,
            'peak': float(curve.values.max()),
        })
