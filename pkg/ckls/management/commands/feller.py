"""
Scale functions, boundary classification and the martingale verdict.
Run with: python manage.py feller --config params.toml --which verdict

The origin is a regular boundary of the auxiliary diffusion (phi stays
finite there for every admissible parameter set), so the verdict reports
exits_at_lo = true and is_true_martingale = false.
"""

from ckls import feller

from ._base import CklsCommand

DIFFUSIONS = {
    'aux': feller.auxiliary_ckls,
    'ckls': feller.ckls_diffusion,
    'cir': feller.cir_from_params,
}


class Command(CklsCommand):
    help = 'Feller test quantities for the auxiliary CKLS diffusion'

    def add_command_arguments(self, parser):
        parser.add_argument(
            '--which',
            choices=['psi', 'phi', 'classify', 'verdict'],
            required=True,
            help='verdict: explosion test of the auxiliary diffusion; the origin is regular, '
                 'so it reports exits_at_lo=true and is_true_martingale=false',
        )
        parser.add_argument('--x', type=float, default=None, help='Evaluation point for psi and phi')
        parser.add_argument('--endpoint', choices=['lo', 'hi'], default='lo')
        parser.add_argument('--anchor', type=float, default=None, help='Interior anchor c')
        parser.add_argument(
            '--diffusion',
            choices=sorted(DIFFUSIONS),
            default='aux',
            help='aux: the state under Q; ckls: the state under P; cir: X = T(lambda) under Q'
        )

    def handle(self, *args, **options):
        p = self.load_params(options)
        which = options['which']
        anchor = options['anchor']

        if which == 'verdict':
            return self.report(feller.martingale_verdict(p, 1.0 if anchor is None else anchor))

        builder = DIFFUSIONS[options['diffusion']]
        spec = builder(p) if anchor is None else builder(p, anchor)

        if which == 'classify':
            return self.report(feller.boundary_classify(options['endpoint'], spec))

        x = options['x']
        if x is None:
            raise self.usage_error(f'--which {which} needs --x')
        if which == 'psi':
            report = {'x': x, 'psi': feller.scale_psi(x, spec), 'anchor': spec.anchor}
            if options['diffusion'] == 'aux' and spec.anchor == 1.0:
                report['psi_series'] = feller.psi_series(x, p)
                report['psi_lower_limit'] = feller.psi_lower_limit(p)
            return self.report(report)
        return self.report({
            'x': x,
            'anchor': spec.anchor,
            'phi': feller.phi_fine(x, spec),
            'Phi': feller.phi_dual(x, spec),
        })
