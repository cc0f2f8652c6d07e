"""Piecewise expanding maps induced by ``X[t+2] = phi(X[t], X[t+1])``."""
from .errors import *  # noqa: F401,F403
from .mapcore import (
    AffineBand,
    Branch,
    CurveBand,
    InducedSystem,
    Orbit,
    PiecewiseMap,
    Point2,
    apply_T,
    branch_of,
    induce,
    invert_branch,
    orbit,
    phi,
    x_series,
)
from .models import (
    branch_multiplicity,
    check_p1_not_invariant,
    linear_example,
    linear_system,
    nonlinear_example,
    nonlinear_system,
    pf_nonlinear,
    prng_stream,
)

__version__ = "0.1.0"
