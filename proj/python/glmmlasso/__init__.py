"""Lasso-penalized generalized linear mixed models.

Thin layer over the compiled core: data come in as a CSV file, CSV text or a
mapping of columns; results come back as the JSON documents the CLI writes.
"""

import csv
import io
import json

from . import _core
from ._core import (
    ConvergenceError,
    InvalidInput,
    NumericalError,
    UnsupportedModel,
    descent_direction,
    designs,
)

__all__ = [
    "Model",
    "load",
    "from_columns",
    "simulate",
    "designs",
    "descent_direction",
    "InvalidInput",
    "UnsupportedModel",
    "ConvergenceError",
    "NumericalError",
]


class Model:
    """A dataset bound to a model spec (see the README for the spec grammar)."""

    def __init__(self, core):
        self._core = core

    @property
    def n(self):
        return self._core.n

    @property
    def columns(self):
        return list(self._core.columns)

    @property
    def family(self):
        return self._core.family

    def fit(self, lam, mode="exact"):
        return json.loads(self._core.fit(float(lam), mode))

    def path(self, n_lambda=21, min_ratio=0.01, mode="exact"):
        return json.loads(self._core.path(int(n_lambda), float(min_ratio), mode))

    def two_stage(self, kind="hybrid", n_lambda=21, min_ratio=0.01, mode="exact"):
        return json.loads(self._core.two_stage(kind, int(n_lambda), float(min_ratio), mode))

    def rescore(self, document):
        """(location, stored Q_LA, recomputed Q_LA) for each fit in a result document."""
        text = document if isinstance(document, str) else json.dumps(document)
        return self._core.rescore(text)


def load(path, spec):
    return Model(_core.load_csv_file(str(path), spec))


def from_columns(columns, spec):
    """Model from a mapping name -> sequence (numbers or group labels)."""
    names = list(columns)
    if not names:
        raise InvalidInput("no columns")
    cols = [list(columns[k]) for k in names]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for row in zip(*cols):
        w.writerow([repr(float(v)) if isinstance(v, (int, float)) and not isinstance(v, bool) else str(v)
                    for v in row])
    return Model(_core.load_csv_text(buf.getvalue(), spec))


def simulate(design, replicates=2, seed=1, workers=1, methods=(), n_lambda=21):
    """Runs a named desk-scale design; returns (replicates_csv, summary_csv, table)."""
    return _core.simulate(design, int(replicates), int(seed), int(workers), list(methods), int(n_lambda))
