import pytest

from ckls.params import validate

P0 = dict(a=0.2, b=0.5, sigma=0.3, k=0.75, lambda0=1.0, L=2.0)
P1 = dict(a=0.2, b=0.5, sigma=0.3, k=0.5, lambda0=1.0, L=2.0)


@pytest.fixture
def p0():
    return validate(**P0)


@pytest.fixture
def p1():
    return validate(**P1)


@pytest.fixture(params=['p0', 'p1'])
def params(request):
    return request.getfixturevalue(request.param)


@pytest.fixture
def write_config(tmp_path):
    """Write a flat key = value parameter file and return its path"""

    def write(values, name='params.toml'):
        path = tmp_path / name
        path.write_text(''.join(f"{key} = {value!r}\n" for key, value in values.items()))
        return str(path)

    return write
