"""
Settings access for the ckls app.

Library code reads tunables from ``ckls_settings``; the values come from the
``CKLS`` dict in the Django settings module when one is configured and from
``DEFAULTS`` otherwise, so the numerical modules also work as a plain library.
"""

from django.conf import settings

DEFAULTS = {
    'SEED': 42,
    'DT': 1e-3,
    'N_PATHS': 100_000,
    'CHUNK_SIZE': 10_000,
    'N_JOBS': 1,
    'POSITIVITY_FLOOR': 1e-12,
    'MAX_OVERFLOW_FRACTION': 0.01,
    'MAX_CENSORED_FRACTION': 0.005,
    'MC_SE_MULTIPLIER': 3.0,
    'BESSEL_RTOL': 1e-15,
    'BESSEL_MAX_TERMS': 10_000,
    'BESSEL_SERIES_MAX_ARG': 1_000.0,
    'SERIES_RTOL': 1e-15,
    'QUAD_RTOL': 1e-9,
    'QUAD_EPS': 1e-10,
    'FELLER_RTOL': 1e-8,
    'DIVERGENCE_THRESHOLD': 1e12,
    'PROBE_START': 1e-2,
    'PROBE_RATIO': 4.0,
    'PROBE_COUNT': 12,
    'REFLECTING_PROBE': 1e-8,
    'REFLECTING_MASS': 1e-3,
}


class CklsSettings:
    """Attribute-style view of the CKLS settings merged over DEFAULTS"""

    def __getattr__(self, name):
        if name not in DEFAULTS:
            raise AttributeError(f"Invalid CKLS setting: '{name}'")
        overrides = getattr(settings, 'CKLS', {}) if settings.configured else {}
        return overrides.get(name, DEFAULTS[name])


ckls_settings = CklsSettings()


def ensure_configured():
    """Configure minimal Django settings when the app is used as a plain library"""
    if not settings.configured:
        settings.configure(USE_I18N=False, CKLS={})
