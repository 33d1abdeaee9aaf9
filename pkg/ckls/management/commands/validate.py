"""
Validate a parameter file and echo the derived CIR/OU parameters.
Run with: python manage.py validate --config params.toml
"""

from ckls.params import aux_constants, derive_cir, derive_ou, feller_ratio

from ._base import CklsCommand


class Command(CklsCommand):
    help = 'Validate CKLS parameters and print the derived CIR and OU parameters'

    def handle(self, *args, **options):
        p = self.load_params(options)
        cir = derive_cir(p)
        return self.report({
            'params': p.as_dict(),
            'cir': cir,
            'ou': derive_ou(p),
            'aux': aux_constants(p),
            'feller_ratio': feller_ratio(cir),
        })
