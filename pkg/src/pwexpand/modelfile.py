"""Loading maps from built-in names or JSON model files.

Schema (JSON object)::

    {
      "name": "my-map",                  optional
      "L": 1.0,                          half width of the square, > 0
      "alpha": 1.0,                      Hoelder exponent in (0, 1]
      "Y": 1,                            positive integer
      "A": 10.0, "M": 0.5,               optional declared derivative bounds
      "branches": [
        {
          "id": 0,                       optional, defaults to the list position
          "halo": 0.1,                   optional, defaults to 0.1 L
          "band": {"type": "curve", "lower": [c0, c1, ...], "upper": [...]}
                | {"type": "affine", "cu": 3, "cv": 1, "lo": -1, "hi": 1},
          "phi": [[i, j, c], ...]        phi(u, v) = sum of c u^i v^j
        }
      ]
    }

Curve bounds are polynomials in u with coefficients in increasing degree.
Built-in names: ``nonlinear-example`` (alias ``nonlinear``) and
``linear-example:a,b,L`` (alias ``linear:a,b,L``).
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import DomainError, ModelFileError
from .mapcore import AffineBand, Branch, CurveBand, PiecewiseMap
from .models import linear_example, nonlinear_example

__all__ = ["load_model", "model_from_dict", "parse_builtin", "model_key"]

_TOP_KEYS = {"name", "L", "alpha", "Y", "A", "M", "branches"}
_BRANCH_KEYS = {"id", "halo", "band", "phi"}


def parse_builtin(name: str) -> PiecewiseMap:
    name = name.strip()
    if name in ("nonlinear-example", "nonlinear"):
        return nonlinear_example()
    for prefix in ("linear-example:", "linear:"):
        if name.startswith(prefix):
            parts = name[len(prefix) :].split(",")
            if len(parts) not in (2, 3):
                raise ModelFileError(f"expected {prefix}a,b[,L], got {name!r}")
            try:
                a, b = int(parts[0]), int(parts[1])
                L = float(parts[2]) if len(parts) == 3 else 1.0
                return linear_example(a, b, L)
            except (ValueError, DomainError) as exc:
                raise ModelFileError(f"bad linear model {name!r}: {exc}") from exc
    raise ModelFileError(f"unknown built-in model {name!r}")


def _poly(coeffs):
    c = np.asarray(coeffs, dtype=float)
    if c.ndim != 1 or c.size == 0 or not np.all(np.isfinite(c)):
        raise ModelFileError("polynomial coefficients must be a non-empty list of numbers")
    return lambda u: np.polynomial.polynomial.polyval(np.asarray(u, dtype=float), c)


def _phi_terms(terms):
    try:
        t = [(int(i), int(j), float(c)) for i, j, c in terms]
    except (TypeError, ValueError):
        raise ModelFileError("phi must be a list of [i, j, coefficient] terms") from None
    if not t or any(i < 0 or j < 0 for i, j, _ in t):
        raise ModelFileError("phi needs at least one term with non-negative powers")

    def phi(u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        return sum(c * u**i * v**j for i, j, c in t) + 0.0 * (u + v)

    def grad(u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        du = sum(c * i * u ** max(i - 1, 0) * v**j for i, j, c in t if i > 0)
        dv = sum(c * j * u**i * v ** max(j - 1, 0) for i, j, c in t if j > 0)
        z = 0.0 * (u + v)
        return du + z, dv + z

    return phi, grad


def _band(spec):
    if not isinstance(spec, dict) or "type" not in spec:
        raise ModelFileError("band must be an object with a 'type'")
    kind = spec["type"]
    if kind == "curve":
        if set(spec) != {"type", "lower", "upper"}:
            raise ModelFileError("curve band needs exactly 'lower' and 'upper'")
        return CurveBand(_poly(spec["lower"]), _poly(spec["upper"]))
    if kind == "affine":
        if set(spec) != {"type", "cu", "cv", "lo", "hi"}:
            raise ModelFileError("affine band needs exactly 'cu', 'cv', 'lo' and 'hi'")
        try:
            cu, cv, lo, hi = (float(spec[k]) for k in ("cu", "cv", "lo", "hi"))
        except (TypeError, ValueError):
            raise ModelFileError("affine band coefficients must be numbers") from None
        if cu == 0 and cv == 0 or not lo < hi:
            raise ModelFileError("degenerate affine band")
        return AffineBand(cu, cv, lo, hi)
    raise ModelFileError(f"unknown band type {kind!r}")


def model_from_dict(d: dict) -> PiecewiseMap:
    if not isinstance(d, dict):
        raise ModelFileError("model must be a JSON object")
    extra = set(d) - _TOP_KEYS
    if extra:
        raise ModelFileError(f"unknown keys: {sorted(extra)}")
    if "branches" not in d or not isinstance(d["branches"], list) or not d["branches"]:
        raise ModelFileError("model needs a non-empty 'branches' list")
    try:
        L = float(d.get("L", 1.0))
        alpha = float(d.get("alpha", 1.0))
        Y = int(d.get("Y", 1))
    except (TypeError, ValueError):
        raise ModelFileError("L, alpha and Y must be numbers") from None
    branches = []
    for pos, b in enumerate(d["branches"]):
        if not isinstance(b, dict):
            raise ModelFileError(f"branch {pos} must be an object")
        extra = set(b) - _BRANCH_KEYS
        if extra:
            raise ModelFileError(f"branch {pos}: unknown keys {sorted(extra)}")
        if "band" not in b or "phi" not in b:
            raise ModelFileError(f"branch {pos} needs 'band' and 'phi'")
        phi, grad = _phi_terms(b["phi"])
        try:
            branches.append(
                Branch(id=int(b.get("id", pos)), band=_band(b["band"]), phi=phi, grad=grad, halo=float(b.get("halo", 0.1 * L)))
            )
        except DomainError as exc:
            raise ModelFileError(f"branch {pos}: {exc}") from exc
    try:
        return PiecewiseMap(
            half_width=L,
            branches=tuple(branches),
            alpha=alpha,
            Y=Y,
            name=str(d.get("name", "custom")),
            declared_A=None if d.get("A") is None else float(d["A"]),
            declared_M=None if d.get("M") is None else float(d["M"]),
            params={"model": "file"},
        )
    except DomainError as exc:
        raise ModelFileError(str(exc)) from exc


def load_model(source: str) -> PiecewiseMap:
    """A built-in name or the path of a JSON model file."""
    p = Path(source)
    if p.suffix == ".json" or p.is_file():
        try:
            data = json.loads(p.read_text())
        except FileNotFoundError:
            raise ModelFileError(f"model file {source} not found") from None
        except json.JSONDecodeError as exc:
            raise ModelFileError(f"model file {source} is not valid JSON: {exc}") from exc
        return model_from_dict(data)
    return parse_builtin(source)


def model_key(source: str) -> str:
    """Stable identifier of a model source: the name, or a hash of the file."""
    p = Path(source)
    if p.is_file():
        return "file:" + hashlib.sha256(p.read_bytes()).hexdigest()
    return parse_builtin(source).name
