"""Named models with default sample grids, addressable as ``name(k=v, ...)``."""

from __future__ import annotations

import ast
import itertools

import numpy as np

from .autoparallel import QuasiExponentialFamily
from .manifold import full_state_model
from .qubit import (
    bloch_ellipsoid_model,
    bloch_geodesic_model,
    bloch_model,
    latitude_band_model,
)


class UnknownModelError(ValueError):
    pass


def parse_model_spec(text):
    """Split ``"name(k=v, ...)"`` into the name and literal keyword arguments."""
    text = text.strip()
    if "(" not in text:
        return text, {}
    if not text.endswith(")"):
        raise ValueError(f"malformed model spec {text!r}")
    name, args = text.split("(", 1)
    try:
        call = ast.parse(f"f({args}", mode="eval").body
    except SyntaxError as exc:
        raise ValueError(f"malformed model spec {text!r}") from exc
    if call.args:
        raise ValueError("model parameters must be given as key=value")
    try:
        kwargs = {kw.arg: ast.literal_eval(kw.value) for kw in call.keywords}
    except ValueError as exc:
        raise ValueError(f"model parameters must be literals in {text!r}") from exc
    return name.strip(), kwargs


def _box_grid(lo, hi, per_axis, keep=lambda x: True):
    axes = [np.linspace(a, b, per_axis) for a, b in zip(lo, hi)]
    pts = [np.array(p) for p in itertools.product(*axes)]
    return np.array([p for p in pts if keep(p)])


def _bloch_full(per_axis=5):
    return bloch_model(), _box_grid([-0.5] * 3, [0.5] * 3, per_axis, lambda r: r @ r < 0.6)


def _ellipsoid(per_axis=15, c=0.3, u1=(1, 0, 0), u2=(0, 1, 0), v=(0, 0, 1)):
    return (bloch_ellipsoid_model(c, u1, u2, v),
            _box_grid([-0.65] * 2, [0.65] * 2, per_axis))


def _geodesic(per_axis=21, a=0.0, c=0.0, param="xi"):
    model = bloch_geodesic_model(a, c, param=param)
    span = 0.9 if param == "xi" else 2.0
    return model, np.linspace(-span, span, per_axis)[:, None]


def _quasi_exp(per_axis=5, F=((1, 0, -1), (0, 1, 1)), P=None):
    fam = QuasiExponentialFamily([np.diag(np.asarray(f, dtype=float)) for f in F],
                                 None if P is None else np.diag(np.asarray(P, dtype=float)))
    thetas = _box_grid([-1.0] * fam.n, [1.0] * fam.n, per_axis)
    return fam.expectation_model(), np.array([fam.expectation_coords(t) for t in thetas])


def _latitude(per_axis=10, radius=0.8):
    return (latitude_band_model(radius),
            _box_grid([0.8, -1.5], [2.2, 1.5], per_axis))


def _full(per_axis=2, d=3):
    model = full_state_model(int(d))
    n = model.n
    rng = np.random.default_rng(0)
    return model, rng.uniform(-0.05, 0.05, size=(max(per_axis, 2) * n, n))


CATALOG = {
    "bloch-full": (_bloch_full, "full qubit manifold, Bloch coordinates (m-affine)"),
    "bloch-ellipsoid": (_ellipsoid, "semi-ellipsoid surface, expectation coordinates"),
    "bloch-geodesic": (_geodesic, "e-geodesic; param='xi' (m-affine) or 'theta' (e-affine)"),
    "quasi-exp": (_quasi_exp, "commuting diagonal F list, expectation coordinates"),
    "latitude-band": (_latitude, "fixed-radius sphere patch (not autoparallel)"),
    "full-state": (_full, "full d-level state space, m-affine coordinates"),
}


def load_model(spec, per_axis=None):
    """Model and its default grid for a catalog spec string.

    Parameters
    ----------
    spec : str
        e.g. ``"bloch-ellipsoid(c=0.3)"``.
    per_axis : int, optional
        Grid points per coordinate axis.
    """
    name, kwargs = parse_model_spec(spec)
    if name not in CATALOG:
        raise UnknownModelError(f"unknown model {name!r}; known: {', '.join(sorted(CATALOG))}")
    if per_axis is not None:
        kwargs["per_axis"] = int(per_axis)
    try:
        return CATALOG[name][0](**kwargs)
    except TypeError as exc:
        raise ValueError(f"bad parameters for {name}: {exc}") from exc
