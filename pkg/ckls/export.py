"""
Report serialisation: JSON for reports, CSV for grids and paths.
"""

import csv
import dataclasses
import json
import math

import numpy as np
from django.core.serializers.json import DjangoJSONEncoder


class ReportEncoder(DjangoJSONEncoder):
    """DjangoJSONEncoder that also knows numpy scalars and arrays"""

    def default(self, o):
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return _finite_or_name(float(o))
        if isinstance(o, np.bool_):
            return bool(o)
        if isinstance(o, np.ndarray):
            return prepare(o.tolist())
        return super().default(o)


def _finite_or_name(value):
    if math.isnan(value):
        return 'nan'
    if math.isinf(value):
        return 'inf' if value > 0 else '-inf'
    return value


def prepare(obj):
    """Turn dataclasses, tuples and non-finite floats into plain JSON values"""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: prepare(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(key): prepare(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [prepare(item) for item in obj]
    if isinstance(obj, np.ndarray):
        return prepare(obj.tolist())
    if isinstance(obj, (float, np.floating)):
        return _finite_or_name(float(obj))
    return obj


def dumps(obj):
    """Deterministic JSON: sorted keys, non-finite floats as strings"""
    return json.dumps(prepare(obj), cls=ReportEncoder, sort_keys=True, indent=2, allow_nan=False)


def format_cell(value):
    if isinstance(value, (float, np.floating)):
        return format(float(value), '.17g')
    return value


def write_csv(stream, header, rows):
    writer = csv.writer(stream, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_cell(value) for value in row])
