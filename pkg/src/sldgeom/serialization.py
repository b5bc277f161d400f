"""JSON and CSV encodings for operators, estimators and reports."""

from __future__ import annotations

import csv
import io
import json

import numpy as np

from .manifold import dual_frame
from .operators import DensityOperator, TOL_HERM

from .estimation import DiscreteEstimator


class MalformedInputError(ValueError):
    pass


def operator_to_dict(a):
    a = np.asarray(a, dtype=complex)
    return {"dim": int(a.shape[0]), "re": a.real.tolist(), "im": a.imag.tolist()}


def operator_from_dict(obj):
    """Decode ``{"dim", "re", "im"}``; the result is re-symmetrized.

    Raises
    ------
    MalformedInputError
        On missing keys, shape mismatch or a non-Hermitian payload.
    """
    try:
        d = int(obj["dim"])
        re = np.asarray(obj["re"], dtype=float)
        im = np.asarray(obj.get("im", np.zeros((d, d))), dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedInputError(f"bad operator record: {exc}") from exc
    if re.shape != (d, d) or im.shape != (d, d):
        raise MalformedInputError(f"operator entries do not match dim={d}")
    a = re + 1j * im
    scale = max(1.0, float(np.max(np.abs(a), initial=0.0)))
    if np.max(np.abs(a - a.conj().T), initial=0.0) > TOL_HERM * scale:
        raise MalformedInputError("operator is not Hermitian")
    return 0.5 * (a + a.conj().T)


def density_from_dict(obj):
    try:
        return DensityOperator(operator_from_dict(obj))
    except ValueError as exc:
        raise MalformedInputError(str(exc)) from exc


def estimator_to_dict(Pi):
    return {"elements": [operator_to_dict(e) for e in Pi.elements],
            "values": Pi.values.tolist()}


def estimator_from_dict(obj):
    try:
        return DiscreteEstimator([operator_from_dict(e) for e in obj["elements"]],
                                 obj["values"])
    except (KeyError, TypeError) as exc:
        raise MalformedInputError(f"bad estimator record: {exc}") from exc


def jsonable(x):
    """Recursively convert numpy scalars/arrays; complex arrays become operator dicts."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        if np.iscomplexobj(x):
            if x.ndim == 2 and x.shape[0] == x.shape[1]:
                return operator_to_dict(x)
            return {"re": x.real.tolist(), "im": x.imag.tolist()}
        return x.tolist()
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, DensityOperator):
        return operator_to_dict(x.matrix)
    return x


def dumps(obj):
    """Deterministic JSON text (sorted keys, fixed indentation)."""
    return json.dumps(jsonable(obj), sort_keys=True, indent=2) + "\n"


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def dump_model_samples(model, grid, fp):
    """Write one JSON line per grid point: state, SLDs and Fisher matrix."""
    for xi in np.atleast_2d(grid):
        rho, G, slds, _ = dual_frame(model, xi)
        rec = {"xi": list(map(float, xi)), "state": operator_to_dict(rho.matrix),
               "slds": [operator_to_dict(L) for L in slds], "fisher": G.matrix.tolist()}
        fp.write(json.dumps(rec, sort_keys=True) + "\n")
