"""Generic Finsler pipeline: spray, curvature and S-curvature from F alone.

Everything here is computed straight from the defining equations via
truncated Taylor arithmetic over the 2n tangent-bundle variables
(x^1..x^n, y^1..y^n).  No structure of any particular metric class is
assumed, which is what makes this module usable as an independent
cross-check for closed-form implementations.

The curvature of the spray needs second derivatives of the geodesic
coefficients, which themselves hold second derivatives of F^2, so the
full pipeline works with jets of total order four.
"""
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .expr import ExprAst, eval_expr
from .jets import Jet, JetDomainError, jet_det, jet_space, jet_solve
from .riemann import SingularMetricError

VOLUME_KINDS = ("Busemann-Hausdorff", "weighted", "custom")


class ConicDomainError(ValueError):
    """Raised when (x, y) lies outside the conic domain of the metric."""


@dataclass(frozen=True)
class FinslerEvaluator:
    """A Finsler metric F(x, y) usable over floats, jets and numpy arrays.

    func(x, y) evaluates F for sequences of scalar-like entries (plain
    floats, Jet instances, or numpy arrays for vectorized sweeps), and
    domain(x, y) must return True (or a boolean mask) exactly where F
    is defined and positive.  box_hint(x) -> (lo, hi) optionally bounds
    the unit sublevel set {y : F(x, y) < 1} for Monte-Carlo volume
    estimation, and bh_closed(x) optionally supplies a closed-form
    unit-ball density when one is known for the metric class.
    """

    dim: int
    func: Callable
    domain: Callable
    name: str = "finsler"
    box_hint: Optional[Callable] = None
    bh_closed: Optional[Callable] = None

    def __call__(self, x, y):
        return self.func(x, y)


@dataclass(frozen=True)
class VolumeDensity:
    """Coordinate volume density sigma(x), as in dV = sigma(x) dx.

    func(x) must accept floats and Jet instances.  kind records where
    the density came from; it has no effect on the numerics.
    """

    func: Callable
    kind: str = "custom"

    def __post_init__(self):
        if self.kind not in VOLUME_KINDS:
            raise ValueError(
                f"volume kind must be one of {VOLUME_KINDS}, got {self.kind!r}"
            )

    def __call__(self, x):
        return self.func(x)


@dataclass(frozen=True)
class CurvatureSample:
    """All pointwise curvature data of a metric at one (x, y)."""

    x: np.ndarray
    y: np.ndarray
    g: np.ndarray            # fundamental tensor g_ij
    spray: np.ndarray        # geodesic coefficients G^i
    connection: np.ndarray   # N^i_j = dG^i/dy^j
    riemann: np.ndarray      # R^i_k
    ricci: float
    tau: float               # distortion
    s: float                 # S-curvature
    sdot: float              # horizontal derivative of S
    hess_f: Optional[float]  # Hessian form of the weight function, if given


def _check_domain(F: FinslerEvaluator, x, y):
    ok = F.domain(list(x), list(y))
    if not bool(ok):
        raise ConicDomainError(
            f"(x, y) outside the conic domain of metric {F.name!r}"
        )


def _check_invertible(g: np.ndarray, what="fundamental tensor"):
    if not np.all(np.isfinite(g)):
        raise SingularMetricError(f"{what} has non-finite entries")
    if np.linalg.cond(g) > 1e13:
        raise SingularMetricError(f"{what} is numerically singular")


def _f2_jet(F: FinslerEvaluator, x, y, order: int) -> Jet:
    """F^2 as a jet in the 2n variables (x, y), seeded at the base point."""
    n = F.dim
    space = jet_space(2 * n, order)
    seeds = space.seed(list(x) + list(y))
    f = F.func(seeds[:n], seeds[n:])
    if not isinstance(f, Jet):
        f = space.constant(float(f))
    return f * f


def _unit2(n2: int, a: int, b: Optional[int] = None) -> tuple:
    idx = [0] * n2
    idx[a] += 1
    if b is not None:
        idx[b] += 1
    return tuple(idx)


def _metric_jets(f2: Jet, n: int):
    """g_ij = (1/2) [F^2]_{y^i y^j} as jets two orders below f2."""
    rows = []
    for i in range(n):
        row = []
        for j in range(n):
            if j < i:
                row.append(rows[j][i])
            else:
                row.append(f2.deriv(n + i).deriv(n + j) * 0.5)
        rows.append(row)
    return rows


def fundamental_tensor(F: FinslerEvaluator, x, y) -> np.ndarray:
    _check_domain(F, x, y)
    n = F.dim
    f2 = _f2_jet(F, x, y, 2)
    g = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            g[i, j] = g[j, i] = 0.5 * f2.partial(_unit2(2 * n, n + i, n + j))
    _check_invertible(g)
    return g


def spray_generic(F: FinslerEvaluator, x, y) -> np.ndarray:
    """Geodesic coefficients G^i = (1/4) g^{il} ([F^2]_{x^k y^l} y^k - [F^2]_{x^l})."""
    _check_domain(F, x, y)
    n = F.dim
    f2 = _f2_jet(F, x, y, 2)
    g = np.empty((n, n))
    rhs = np.empty(n)
    for l in range(n):
        for i in range(l, n):
            g[l, i] = g[i, l] = 0.5 * f2.partial(_unit2(2 * n, n + l, n + i))
        acc = 0.0
        for k in range(n):
            acc += f2.partial(_unit2(2 * n, k, n + l)) * y[k]
        rhs[l] = acc - f2.partial(_unit2(2 * n, l))
    _check_invertible(g)
    try:
        return 0.25 * np.linalg.solve(g, rhs)
    except np.linalg.LinAlgError as e:
        raise SingularMetricError(str(e)) from e


def _spray_jets(F: FinslerEvaluator, x, y, order: int, f2: Optional[Jet] = None):
    """G^i as jets of the requested order over the 2n variables."""
    n = F.dim
    if f2 is None:
        f2 = _f2_jet(F, x, y, order + 2)
    f2t = f2.truncate(order + 2)
    g = _metric_jets(f2t, n)
    space_lo = jet_space(2 * n, order)
    yj = [space_lo.variable(n + k, y[k]) for k in range(n)]
    rhs = []
    for l in range(n):
        acc = space_lo.constant(0.0)
        for k in range(n):
            acc = acc + f2t.deriv(k).deriv(n + l) * yj[k]
        rhs.append(acc - f2t.deriv(l).truncate(order))
    try:
        w = jet_solve(g, rhs)
    except JetDomainError as e:
        raise SingularMetricError(str(e)) from e
    return [wi * 0.25 for wi in w]


def _riemann_from_spray_jets(Gj, y, n: int) -> np.ndarray:
    n2 = 2 * n
    Gv = np.array([G.value for G in Gj])
    dGx = np.empty((n, n))
    dGy = np.empty((n, n))
    d2xy = np.empty((n, n, n))
    d2yy = np.empty((n, n, n))
    for i in range(n):
        grad = Gj[i].gradient()
        dGx[i] = grad[:n]
        dGy[i] = grad[n:]
        for m in range(n):
            for k in range(n):
                d2xy[i, m, k] = Gj[i].partial(_unit2(n2, m, n + k))
                d2yy[i, m, k] = Gj[i].partial(_unit2(n2, n + m, n + k))
    yv = np.asarray(y, dtype=float)
    return (
        2.0 * dGx
        - np.einsum("m,imk->ik", yv, d2xy)
        + 2.0 * np.einsum("m,imk->ik", Gv, d2yy)
        - np.einsum("im,mk->ik", dGy, dGy)
    )


def riemann_generic(F: FinslerEvaluator, x, y) -> np.ndarray:
    """Riemann curvature R^i_k of the spray, from second jets of G^i."""
    _check_domain(F, x, y)
    return _riemann_from_spray_jets(_spray_jets(F, x, y, 2), y, F.dim)


def ricci_generic(F: FinslerEvaluator, x, y) -> float:
    return float(np.trace(riemann_generic(F, x, y)))


def _sigma_jet(sigma: VolumeDensity, x, n: int, order: int) -> Jet:
    space = jet_space(2 * n, order)
    xj = [space.variable(i, x[i]) for i in range(n)]
    s = sigma.func(xj)
    if not isinstance(s, Jet):
        s = space.constant(float(s))
    return s


def _tau_jet(F, sigma, x, y, order: int, f2: Optional[Jet] = None) -> Jet:
    n = F.dim
    if f2 is None:
        f2 = _f2_jet(F, x, y, order + 2)
    g = _metric_jets(f2.truncate(order + 2), n)
    det = jet_det(g)
    if det.value <= 0.0:
        raise SingularMetricError("nonpositive fundamental determinant")
    sj = _sigma_jet(sigma, x, n, order)
    if sj.value <= 0.0:
        raise ValueError("volume density must be positive")
    return det.log() * 0.5 - sj.log()


def distortion(F: FinslerEvaluator, sigma: VolumeDensity, x, y) -> float:
    """tau = ln(sqrt(det g_ij) / sigma) at one tangent vector."""
    _check_domain(F, x, y)
    g = fundamental_tensor(F, x, y)
    det = float(np.linalg.det(g))
    if det <= 0.0:
        raise SingularMetricError("nonpositive fundamental determinant")
    sv = sigma.func([float(v) for v in x])
    sv = sv.value if isinstance(sv, Jet) else float(sv)
    if sv <= 0.0:
        raise ValueError("volume density must be positive")
    return 0.5 * math.log(det) - math.log(sv)


def s_curvature_generic(F: FinslerEvaluator, sigma: VolumeDensity, x, y) -> float:
    """S = y^m dtau/dx^m - 2 G^j dtau/dy^j (horizontal derivative of tau)."""
    _check_domain(F, x, y)
    n = F.dim
    tau = _tau_jet(F, sigma, x, y, 1)
    G = spray_generic(F, x, y)
    grad = tau.gradient()
    return float(np.dot(y, grad[:n]) - 2.0 * np.dot(G, grad[n:]))


def _s_jet(F, sigma, x, y, f2: Jet) -> Jet:
    """S as a first-order jet over the 2n variables."""
    n = F.dim
    tau = _tau_jet(F, sigma, x, y, 2, f2=f2)
    Gj = _spray_jets(F, x, y, 1, f2=f2)
    space1 = jet_space(2 * n, 1)
    s = space1.constant(0.0)
    for m in range(n):
        ym = space1.variable(n + m, y[m])
        s = s + ym * tau.deriv(m) - Gj[m] * tau.deriv(n + m) * 2.0
    return s


def sdot_generic(F: FinslerEvaluator, sigma: VolumeDensity, x, y) -> float:
    """The horizontal derivative of S itself, along the same spray."""
    _check_domain(F, x, y)
    n = F.dim
    f2 = _f2_jet(F, x, y, 4)
    s = _s_jet(F, sigma, x, y, f2)
    Gv = np.array([G.value for G in _spray_jets(F, x, y, 1, f2=f2)])
    grad = s.gradient()
    return float(np.dot(y, grad[:n]) - 2.0 * np.dot(Gv, grad[n:]))


def hess_form(f, x, y, G, n: int) -> float:
    """f_{x^i x^j} y^i y^j - 2 f_{x^i} G^i for a given spray value G."""
    space = jet_space(n, 2)
    seeds = space.seed(list(x))
    fj = eval_expr(f, seeds) if isinstance(f, ExprAst) else f(seeds)
    if not isinstance(fj, Jet):
        fj = space.constant(float(fj))
    acc = 0.0
    for i in range(n):
        for j in range(n):
            acc += fj.partial(_unit2(n, i, j)) * y[i] * y[j]
    return float(acc - 2.0 * np.dot(fj.gradient(), G))


def hess_F(f, F: FinslerEvaluator, x, y) -> float:
    """Geodesic Hessian form of a scalar f(x): f_{x^i x^j} y^i y^j - 2 f_{x^i} G^i."""
    _check_domain(F, x, y)
    return hess_form(f, x, y, spray_generic(F, x, y), F.dim)


def curvature_sample(
    F: FinslerEvaluator, sigma: VolumeDensity, x, y, f=None
) -> CurvatureSample:
    """Full curvature bundle at (x, y), sharing one order-4 jet of F^2."""
    _check_domain(F, x, y)
    n = F.dim
    f4 = _f2_jet(F, x, y, 4)
    g = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            g[i, j] = g[j, i] = 0.5 * f4.partial(_unit2(2 * n, n + i, n + j))
    _check_invertible(g)
    Gj = _spray_jets(F, x, y, 2, f2=f4)
    Gv = np.array([G.value for G in Gj])
    N = np.array([G.gradient()[n:] for G in Gj])
    R = _riemann_from_spray_jets(Gj, y, n)
    tau = _tau_jet(F, sigma, x, y, 2, f2=f4)
    s_jet = _s_jet(F, sigma, x, y, f4)
    grad = s_jet.gradient()
    sdot = float(np.dot(y, grad[:n]) - 2.0 * np.dot(Gv, grad[n:]))
    hess = hess_form(f, x, y, Gv, n) if f is not None else None
    return CurvatureSample(
        x=np.asarray(x, dtype=float),
        y=np.asarray(y, dtype=float),
        g=g,
        spray=Gv,
        connection=N,
        riemann=R,
        ricci=float(np.trace(R)),
        tau=tau.value,
        s=s_jet.value,
        sdot=sdot,
        hess_f=hess,
    )


@dataclass(frozen=True)
class GeodesicPath:
    t: np.ndarray
    pos: np.ndarray  # (steps + 1, n)
    vel: np.ndarray  # (steps + 1, n)


def geodesic_flow(F: FinslerEvaluator, x, y, t_end: float, steps: int) -> GeodesicPath:
    """Integrate the geodesic equation xddot = -2 G(x, xdot) with classical RK4."""
    if steps < 1:
        raise ValueError("steps must be at least 1")
    h = t_end / steps
    if not (h > 0.0 and math.isfinite(h)):
        raise ValueError("step underflow: t_end/steps must be positive and finite")
    n = F.dim

    def rhs(xv, yv):
        return yv, -2.0 * spray_generic(F, list(xv), list(yv))

    pos = np.empty((steps + 1, n))
    vel = np.empty((steps + 1, n))
    xv = np.asarray(x, dtype=float).copy()
    yv = np.asarray(y, dtype=float).copy()
    pos[0], vel[0] = xv, yv
    for k in range(steps):
        try:
            k1x, k1y = rhs(xv, yv)
            k2x, k2y = rhs(xv + 0.5 * h * k1x, yv + 0.5 * h * k1y)
            k3x, k3y = rhs(xv + 0.5 * h * k2x, yv + 0.5 * h * k2y)
            k4x, k4y = rhs(xv + h * k3x, yv + h * k3y)
        except ConicDomainError as e:
            raise ConicDomainError(
                f"geodesic left the conic domain near t={k * h:.6g}"
            ) from e
        xv = xv + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        yv = yv + (h / 6.0) * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        pos[k + 1], vel[k + 1] = xv, yv
    return GeodesicPath(np.linspace(0.0, t_end, steps + 1), pos, vel)


@dataclass(frozen=True)
class BHDensityEstimate:
    value: float            # Vol(B^n) / Vol{F < 1}
    stderr: float
    sublevel_volume: float
    samples: int
    hits: int
    closed: Optional[float]  # closed-form density if the metric supplies one


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)


def _probe_box(F: FinslerEvaluator, x, probes: int = 256):
    """Axis-aligned box containing {F(x, .) < 1}, found by radial probing.

    By 1-homogeneity the sublevel set is the radial graph t < 1/F(x, u),
    so its extent along any probed direction is exact; doubling the
    largest extent covers directions between probes for the smooth
    convex sublevel sets handled here.  The probe directions come from
    a fixed-key generator so the box does not depend on the caller's
    Monte-Carlo seed.
    """
    n = F.dim
    rng = np.random.Generator(np.random.Philox(key=0x9E3779B9))
    dirs = rng.normal(size=(probes, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    dirs = np.vstack([dirs, np.eye(n), -np.eye(n)])
    xs = [float(v) for v in x]
    r = 0.0
    for u in dirs:
        if not bool(F.domain(xs, list(u))):
            continue
        val = F.func(xs, list(u))
        val = val.value if isinstance(val, Jet) else float(val)
        if math.isfinite(val) and val > 0.0:
            r = max(r, 1.0 / val)
    if r == 0.0:
        raise ValueError("degenerate sublevel set: no admissible probe direction")
    r *= 2.0
    return -r * np.ones(n), r * np.ones(n)


def _indicator(F: FinslerEvaluator, xs, samples: np.ndarray) -> np.ndarray:
    """Boolean mask of rows with F(x, row) < 1, vectorized when possible."""
    m = samples.shape[0]
    cols = [samples[:, i] for i in range(F.dim)]
    try:
        with np.errstate(all="ignore"):
            mask = np.asarray(F.domain(xs, cols))
            if mask.shape != (m,):
                raise TypeError("domain predicate is not vectorized")
            vals = np.asarray(F.func(xs, cols), dtype=float)
        return mask & np.isfinite(vals) & (vals > 0.0) & (vals < 1.0)
    except (TypeError, ValueError, AttributeError):
        out = np.zeros(m, dtype=bool)
        for k in range(m):
            row = list(samples[k])
            try:
                if not bool(F.domain(xs, row)):
                    continue
                v = float(F.func(xs, row))
            except (ArithmeticError, ValueError):
                continue
            out[k] = math.isfinite(v) and 0.0 < v < 1.0
        return out


def bh_density(
    F: FinslerEvaluator, x, mc_samples: int = 200_000, seed: int = 0
) -> BHDensityEstimate:
    """Unit-ball volume density Vol(B^n)/Vol{y : F(x, y) < 1} by Monte Carlo."""
    if mc_samples < 1:
        raise ValueError("mc_samples must be positive")
    n = F.dim
    if F.box_hint is not None:
        lo, hi = F.box_hint(x)
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
    else:
        lo, hi = _probe_box(F, x)
    box_volume = float(np.prod(hi - lo))
    rng = np.random.Generator(np.random.Philox(key=seed))
    samples = lo + rng.random(size=(mc_samples, n)) * (hi - lo)
    xs = [float(v) for v in x]
    inside = _indicator(F, xs, samples)
    hits = int(inside.sum())
    if hits == 0:
        raise ValueError("degenerate sublevel set: no Monte-Carlo hits")
    p = hits / mc_samples
    sublevel = p * box_volume
    value = unit_ball_volume(n) / sublevel
    rel = math.sqrt(p * (1.0 - p) / mc_samples) / p
    closed = None
    if F.bh_closed is not None:
        closed = float(F.bh_closed(x))
    return BHDensityEstimate(
        value=value,
        stderr=value * rel,
        sublevel_volume=sublevel,
        samples=mc_samples,
        hits=hits,
        closed=closed,
    )
