import json
import math
from dataclasses import dataclass
from io import StringIO

import numpy as np

from ckls.export import dumps, format_cell, prepare, write_csv


@dataclass(frozen=True)
class Sample:
    name: str
    value: float
    history: tuple


def test_prepare_dataclass_with_non_finite():
    prepared = prepare(Sample(name='psi', value=-math.inf, history=(1.0, math.nan, math.inf)))
    assert prepared == {'name': 'psi', 'value': '-inf', 'history': [1.0, 'nan', 'inf']}


def test_dumps_numpy_values():
    text = dumps({'count': np.int64(3), 'mean': np.float64(0.5), 'ok': np.bool_(True),
                  'grid': np.array([1.0, np.inf])})
    assert json.loads(text) == {'count': 3, 'mean': 0.5, 'ok': True, 'grid': [1.0, 'inf']}


def test_dumps_is_sorted_and_stable():
    first = dumps({'b': 1, 'a': {2: 'x', 1: 'y'}})
    assert first == dumps({'a': {1: 'y', 2: 'x'}, 'b': 1})
    assert first.index('"a"') < first.index('"b"')


def test_format_cell_round_trips_doubles():
    value = 0.1 + 0.2
    assert float(format_cell(value)) == value
    assert format_cell(np.float64(1.5)) == '1.5'
    assert format_cell(7) == 7


def test_write_csv():
    stream = StringIO()
    write_csv(stream, ['x', 'density'], [(0.5, 1.0 / 3.0), (1.0, 0.25)])
    assert stream.getvalue() == 'x,density\n0.5,0.33333333333333331\n1,0.25\n'
