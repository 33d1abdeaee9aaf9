from django import forms
from django.core.exceptions import ValidationError

PARAM_FIELDS = ('a', 'b', 'sigma', 'k', 'lambda0', 'L')


class CklsParamsForm(forms.Form):
    """Form validating the six CKLS model parameters"""

    a = forms.FloatField(help_text="Drift intercept (rate x level)")
    b = forms.FloatField(help_text="Mean-reversion speed (1/time)")
    sigma = forms.FloatField(help_text="Diffusion coefficient")
    k = forms.FloatField(help_text="Elasticity exponent, 1/2 <= k < 1")
    lambda0 = forms.FloatField(help_text="Initial short rate")
    L = forms.FloatField(help_text="Transform constant")

    def _clean_positive(self, name):
        value = self.cleaned_data.get(name)
        if value is not None and value <= 0:
            raise ValidationError(
                f"{name} must be strictly positive (got {value!r}).",
                code='non_positive',
            )
        return value

    def clean_a(self):
        return self._clean_positive('a')

    def clean_b(self):
        return self._clean_positive('b')

    def clean_sigma(self):
        return self._clean_positive('sigma')

    def clean_lambda0(self):
        return self._clean_positive('lambda0')

    def clean_L(self):
        return self._clean_positive('L')

    def clean_k(self):
        """Only the elasticity range [1/2, 1) admits the transform"""
        k = self.cleaned_data.get('k')
        if k is not None and not (0.5 <= k < 1.0):
            raise ValidationError(
                f"k must satisfy 1/2 <= k < 1 (got {k!r}).",
                code='elasticity_range',
            )
        return k

    def clean(self):
        """At k = 1/2 the CIR case needs Feller's condition 2a >= sigma^2"""
        cleaned_data = super().clean()
        a = cleaned_data.get('a')
        sigma = cleaned_data.get('sigma')
        k = cleaned_data.get('k')

        if a is not None and sigma is not None and k == 0.5 and 2 * a < sigma ** 2:
            raise ValidationError(
                f"k = 1/2 requires 2a >= sigma^2 (2a = {2 * a!r}, sigma^2 = {sigma ** 2!r}).",
                code='feller_half',
            )

        return cleaned_data
