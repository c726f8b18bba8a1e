"""Central-difference partial derivatives with one Richardson level.

This is the independent numerical oracle the jet engine is validated
against.  The base stencils are second-order accurate; combining D(h) and
D(h/2) as (4 D(h/2) - D(h)) / 3 removes the h^2 term, so the documented
error order is O(step^4) plus roundoff.

Roundoff grows like eps / step^degree, so the default step is scaled by
the total derivative degree instead of being a single constant: 1e-4 for
first derivatives, 1e-3 for second, 5e-3 for third.  A fixed 1e-4 step
would drown third derivatives in cancellation noise at double precision.
"""
from __future__ import annotations

import itertools
import math

MAX_DEGREE = 3

DEFAULT_STEPS = {0: 1.0, 1: 1e-4, 2: 1e-3, 3: 5e-3}

# offsets and weights for d-th derivative, O(h^2) accurate
_STENCILS = {
    1: ((-1, -0.5), (1, 0.5)),
    2: ((-1, 1.0), (0, -2.0), (1, 1.0)),
    3: ((-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)),
}


def _apply_stencil(fn, point, idx, h):
    """Tensor-product central-difference estimate at a single step h."""
    axes = [v for v, d in enumerate(idx) if d > 0]
    grids = [_STENCILS[idx[v]] for v in axes]
    total = 0.0
    for combo in itertools.product(*grids):
        shifted = list(point)
        weight = 1.0
        for v, (offset, w) in zip(axes, combo):
            shifted[v] = shifted[v] + offset * h
            weight *= w
        val = fn(shifted)
        if not math.isfinite(val):
            raise ValueError(
                f"function returned non-finite value {val} at {shifted}"
            )
        total += weight * val
    return total / h ** sum(idx)


def fd_partial(fn, point, idx, step: float | None = None) -> float:
    """Estimate D^idx fn(point) by central differences plus Richardson.

    fn maps a list of floats to a float; idx is a multi-index tuple with
    total degree at most 3.  step=None picks the degree-scaled default.
    """
    idx = tuple(int(e) for e in idx)
    if len(idx) != len(point):
        raise ValueError("multi-index length does not match point length")
    if any(e < 0 for e in idx):
        raise ValueError("multi-index entries must be nonnegative")
    degree = sum(idx)
    if degree > MAX_DEGREE:
        raise ValueError(f"total degree {degree} exceeds {MAX_DEGREE}")
    if degree == 0:
        val = fn(list(point))
        if not math.isfinite(val):
            raise ValueError(f"function returned non-finite value {val}")
        return val
    h = DEFAULT_STEPS[degree] if step is None else float(step)
    if h <= 0:
        raise ValueError("step must be positive")
    coarse = _apply_stencil(fn, point, idx, h)
    fine = _apply_stencil(fn, point, idx, h / 2.0)
    return (4.0 * fine - coarse) / 3.0
