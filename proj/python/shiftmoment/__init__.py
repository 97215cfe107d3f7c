"""Moment estimation under covariate shift.

Thin Python layer over the C++ core. Density, regressor and experiment specs
are plain dicts using the same JSON schema as the command-line tool.
"""

import csv
import io
import json

from . import _shiftmoment as _core
from ._shiftmoment import (
    ConfigError,
    DegeneratePairError,
    DomainError,
    InputError,
    ratio_from_propensity,
)

__version__ = _core.__version__

__all__ = [
    "ConfigError",
    "DegeneratePairError",
    "DomainError",
    "InputError",
    "density_bounds",
    "estimate_plugin",
    "estimate_two_stage_known",
    "likelihood_ratio",
    "pdf",
    "ratio_from_propensity",
    "run_cli",
    "run_experiment",
    "sample",
    "sup_ratio",
    "truth_oracle",
]


def _dump(obj):
    return obj if isinstance(obj, str) else json.dumps(obj)


def _rows(xs):
    return [list(x) if hasattr(x, "__len__") else [float(x)] for x in xs]


def _point(x):
    return list(x) if hasattr(x, "__len__") else [float(x)]


def pdf(spec, x):
    return _core.pdf(_dump(spec), _point(x))


def sample(spec, n, seed):
    return _core.sample(_dump(spec), n, seed)


def likelihood_ratio(source, target, x):
    return _core.likelihood_ratio(_dump(source), _dump(target), _point(x))


def sup_ratio(source, target):
    """Diagnostic B: supremum of target/source density."""
    return _core.sup_ratio(_dump(source), _dump(target))


def density_bounds(spec):
    """(b_lower, b_upper) of a density."""
    return _core.density_bounds(_dump(spec))


def truth_oracle(k, target, q=2):
    """E_target[f(X)^q] for f(x) = 1 + x^2 + sin(kx)/5."""
    return _core.truth_oracle(k, _dump(target), q)


def estimate_two_stage_known(xs, ys, source, target, config=None, seed=0):
    out = _core.estimate_two_stage_known(_rows(xs), list(ys), _dump(source), _dump(target), _dump(config or {}), seed)
    return json.loads(out)


def estimate_plugin(xs, ys, unlabeled, threshold, config=None, degree=3, seed=0):
    cfg = dict(config or {})
    cfg["threshold"] = threshold
    return json.loads(_core.estimate_plugin(_rows(xs), list(ys), _rows(unlabeled), json.dumps(cfg), degree, seed))


def run_experiment(spec):
    """Runs one study. Returns (rows, metadata); rows are dicts."""
    result = json.loads(_core.run_experiment(_dump(spec)))
    if "rows" in result:
        return result["rows"], result["metadata"]
    rows = list(csv.DictReader(io.StringIO(result["csv"])))
    for r in rows:
        for key in ("param", "estimate", "truth", "abs_error"):
            r[key] = float(r[key])
        r["rep"] = int(r["rep"])
    return rows, result["metadata"]


def run_cli(args):
    """Runs the command-line front end in-process. Returns (code, stdout, stderr)."""
    return _core.run_cli([str(a) for a in args])
