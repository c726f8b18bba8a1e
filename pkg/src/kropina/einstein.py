"""Weighted Ricci curvature family and the weakly-Einstein checkers.

The weighted Ricci curvature with weight constants (a, c) is

    ric_ac(y) = Ric(y) + a*Sdot(y) - c*S(y)^2,

with S and Sdot taken against the weighted volume density
e^{-(n+1) f} sigma_BH.  A Kropina metric is *weakly weighted Einstein*
when ric_ac = (n-1) (3 theta(y)/F + sigma) F^2 for a 1-form theta and a
scalar sigma on the chart.  The derived constants

    kappa = (n-1) - a(n+1),        nu = 3(n-1) - 4a(n+1) - c(n+1)^2

split the (a, c) plane into three regimes, each with its own closed
characterization; thm41_check/thm44_check cover nu != 0 (navigation and
metric-form views), thm51_check covers nu = 0, kappa != 0, and
thm61_check covers kappa = nu = 0.  Every "there exists a scalar /
1-form" clause in those characterizations is resolved by a least-squares
fit whose residual is reported; verdicts derive from residuals and the
configured tolerance only.
"""

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .expr import ExprAst, parse_expr
from .forms import (
    KropinaSpace,
    ab_fields,
    ab_invariants,
    finsler_evaluator,
    isotropy_fit,
    kropina_ricci_closed,
    s_closed,
    s_dot_closed,
    volume_density,
)
from .generic import ricci_generic, s_curvature_generic, sdot_generic
from .riemann import (
    FieldPoint,
    MetricPoint,
    NotPositiveDefiniteError,
    RiemannianMetric,
    _extract,
    eval_component_jets,
    hess_h,
    w_invariants_from_point,
)


class DispatchError(ValueError):
    """A checker was invoked outside its (kappa, nu) regime."""


# The classification boundary is exact for rational weight constants;
# float inputs that merely round onto the boundary are snapped to it at
# this relative tolerance.
_REGIME_TOL = 1e-12


def _frac(v):
    if isinstance(v, Fraction):
        return v
    return Fraction(v)


def weight_constants(a, c, n):
    """The derived constants (kappa, nu) for weight constants (a, c)."""
    if n < 2:
        raise ValueError("weight constants need dimension n >= 2")
    kappa = (n - 1) - a * (n + 1)
    nu = 3 * (n - 1) - 4 * a * (n + 1) - c * (n + 1) ** 2
    return float(kappa), float(nu)


def pric_constants(n):
    """The (a, c) pair that collapses ric_ac to the projective Ricci
    curvature; kappa and nu both vanish exactly for it."""
    return Fraction(n - 1, n + 1), Fraction(-(n - 1), (n + 1) ** 2)


@dataclass(frozen=True)
class WeightConfig:
    """Weight constants (a, c) in dimension n, plus an optional weight
    function overriding the one carried by the space under test.

    kappa and nu are recomputed on access (never stored), in exact
    rational arithmetic so the regime classification is stable; pass a
    and c as Fraction/int to keep boundary cases exact.
    """

    a: object
    c: object
    n: int
    f: Optional[ExprAst] = None

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("weight config needs dimension n >= 2")
        if isinstance(self.f, str):
            object.__setattr__(self, "f", parse_expr(self.f, self.n))

    @property
    def kappa_exact(self):
        return (self.n - 1) - _frac(self.a) * (self.n + 1)

    @property
    def nu_exact(self):
        return (
            3 * (self.n - 1)
            - 4 * _frac(self.a) * (self.n + 1)
            - _frac(self.c) * (self.n + 1) ** 2
        )

    @property
    def kappa(self):
        return float(self.kappa_exact)

    @property
    def nu(self):
        return float(self.nu_exact)

    def _is_zero(self, exact):
        if exact == 0:
            return True
        scale = (
            3 * (self.n - 1)
            + 4 * abs(float(self.a)) * (self.n + 1)
            + abs(float(self.c)) * (self.n + 1) ** 2
        )
        return abs(float(exact)) <= _REGIME_TOL * max(1.0, scale)

    @property
    def nu_is_zero(self):
        return self._is_zero(self.nu_exact)

    @property
    def kappa_is_zero(self):
        return self._is_zero(self.kappa_exact)

    @property
    def regime(self):
        if not self.nu_is_zero:
            return "nu!=0"
        if not self.kappa_is_zero:
            return "nu=0,kappa!=0"
        return "nu=0,kappa=0"

    @property
    def checkers(self):
        """Checker ids applicable in this regime."""
        return {
            "nu!=0": ("41", "44"),
            "nu=0,kappa!=0": ("51",),
            "nu=0,kappa=0": ("61",),
        }[self.regime]

    def with_weight(self, f):
        if isinstance(f, str):
            f = parse_expr(f, self.n)
        return WeightConfig(self.a, self.c, self.n, f)


def weight_preset(name, n, f=None):
    """Resolve a named weight-constant preset to a WeightConfig.

    plain      a = 0, c = 0 (unweighted Ricci curvature)
    ricInf     a = 1, c = 0
    ricN:N     a = 1, c = 1/(N - n), N != n
    pric       the projective constants from pric_constants(n)
    """
    if name == "plain":
        a, c = Fraction(0), Fraction(0)
    elif name == "ricInf":
        a, c = Fraction(1), Fraction(0)
    elif name.startswith("ricN:"):
        raw = name.split(":", 1)[1]
        try:
            big_n = int(raw)
        except ValueError:
            big_n = float(raw)
        if big_n == n:
            raise ValueError(f"ricN preset needs N != n, got N = n = {n}")
        c = Fraction(1, big_n - n) if isinstance(big_n, int) else 1.0 / (big_n - n)
        a = Fraction(1)
    elif name == "pric":
        a, c = pric_constants(n)
    else:
        raise ValueError(f"unknown weight preset {name!r}")
    return WeightConfig(a, c, n, f)


def _space_with_cfg(space: KropinaSpace, cfg: WeightConfig) -> KropinaSpace:
    if cfg.f is None:
        return space
    return space.with_weight(cfg.f)


# -- the curvature family ------------------------------------------------------


def ric_ac(space: KropinaSpace, cfg: WeightConfig, x, y, route="closed"):
    """Weighted Ricci curvature Ric + a*Sdot - c*S^2 at (x, y).

    route selects the code path: "closed" uses the drift-invariant
    formulas, "generic" differentiates F and the weighted density
    directly.  The two paths share no curvature code and agree to the
    cross-validation tolerance.
    """
    space = _space_with_cfg(space, cfg)
    a, c = float(cfg.a), float(cfg.c)
    n = space.dim
    if route == "closed":
        val = kropina_ricci_closed(space, x, y)
        if a != 0.0:
            val += a * (n + 1) * s_dot_closed(space, x, y)
        if c != 0.0:
            val -= c * s_closed(space, x, y) ** 2
        return val
    if route == "generic":
        ev = finsler_evaluator(space, "ab")
        dens = volume_density(space)
        val = ricci_generic(ev, x, y)
        if a != 0.0:
            val += a * sdot_generic(ev, dens, x, y)
        if c != 0.0:
            val -= c * s_curvature_generic(ev, dens, x, y) ** 2
        return val
    raise ValueError(f"unknown route {route!r}")


def pric(space: KropinaSpace, x, y, route="closed"):
    """Projective Ricci curvature: ric_ac at the constants where both
    derived constants vanish."""
    a, c = pric_constants(space.dim)
    return ric_ac(space, WeightConfig(a, c, space.dim), x, y, route=route)


def ric_ac_via_projective(space: KropinaSpace, cfg: WeightConfig, x, y,
                          route="closed"):
    """ric_ac reassembled around the projective Ricci curvature:

        ric_ac = pric - kappa/(n+1) * (Sdot + 4 S^2/(n+1))
                      + nu * S^2/(n+1)^2.

    Independent evaluation path for the identity tests.
    """
    space = _space_with_cfg(space, cfg)
    n = space.dim
    kappa, nu = cfg.kappa, cfg.nu
    if route == "closed":
        sdot = (n + 1) * s_dot_closed(space, x, y)
        s = s_closed(space, x, y)
    else:
        ev = finsler_evaluator(space, "ab")
        dens = volume_density(space)
        sdot = sdot_generic(ev, dens, x, y)
        s = s_curvature_generic(ev, dens, x, y)
    base = pric(space, x, y, route=route)
    return (base - kappa / (n + 1) * (sdot + 4 * s**2 / (n + 1))
            + nu * s**2 / (n + 1) ** 2)


# -- the Einstein ansatz and its fit -------------------------------------------


@dataclass(frozen=True)
class EinsteinAnsatz:
    """A candidate (theta, sigma) pair at one chart point.

    provenance records whether the values were supplied ("given") or
    least-squares fitted ("fitted"); a fitted pair carries the residual
    of its fit.
    """

    theta: tuple
    sigma: float
    provenance: str = "given"
    residual: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "theta", tuple(float(t) for t in self.theta))
        object.__setattr__(self, "sigma", float(self.sigma))
        if self.provenance not in ("given", "fitted"):
            raise ValueError("provenance must be 'given' or 'fitted'")
        if self.provenance == "fitted" and self.residual is None:
            raise ValueError("fitted ansatz must carry its fit residual")

    def model(self, F, y):
        """The ansatz with the (n-1) prefactor split off:
        3 theta(y) F + sigma F^2."""
        th = float(np.dot(self.theta, np.asarray(y, dtype=float)))
        return 3.0 * th * F + self.sigma * F * F


def einstein_residual(space: KropinaSpace, cfg: WeightConfig,
                      ansatz: EinsteinAnsatz, x, y, route="closed"):
    """ric_ac(y) - (n-1) (3 theta(y) F + sigma F^2) at one (x, y)."""
    space = _space_with_cfg(space, cfg)
    n = space.dim
    inv = ab_invariants(space, x, y)
    return ric_ac(space, cfg, x, y, route=route) - (n - 1) * ansatz.model(inv.F, y)


def fit_theta_sigma(space: KropinaSpace, cfg: WeightConfig, x, directions,
                    route="closed"):
    """Least-squares (theta_1..theta_n, sigma) minimizing the Einstein
    residual over the given directions at x.

    Needs at least n+2 admissible directions spanning the tangent
    space; a rank-deficient direction set raises ValueError.  The
    returned ansatz carries the root-mean-square fit residual relative
    to the curvature scale.
    """
    space = _space_with_cfg(space, cfg)
    n = space.dim
    directions = [np.asarray(y, dtype=float) for y in directions]
    if len(directions) < n + 2:
        raise ValueError(
            f"theta/sigma fit needs at least {n + 2} directions, "
            f"got {len(directions)}"
        )
    rows, target = [], []
    for y in directions:
        inv = ab_invariants(space, x, y)
        rows.append(
            [3.0 * (n - 1) * inv.F * y[i] for i in range(n)]
            + [(n - 1) * inv.F**2]
        )
        target.append(ric_ac(space, cfg, x, y, route=route))
    A = np.array(rows)
    t = np.array(target)
    if np.linalg.matrix_rank(A) < n + 1:
        raise ValueError("direction set is rank-deficient for the theta/sigma fit")
    sol, *_ = np.linalg.lstsq(A, t, rcond=None)
    scale = max(1.0, float(np.sqrt(np.mean(t * t))))
    resid = float(np.sqrt(np.mean((A @ sol - t) ** 2))) / scale
    return EinsteinAnsatz(tuple(sol[:n]), float(sol[n]), "fitted", resid)


# -- pointwise tensor test ------------------------------------------------------


def _values_at(obj, x, what):
    if isinstance(obj, np.ndarray):
        return obj
    if isinstance(obj, RiemannianMetric):
        return MetricPoint.from_exprs(obj, list(x), order=0).g
    if callable(obj):
        return np.asarray(obj(x), dtype=float)
    raise TypeError(f"{what} must be an array, metric, or callable")


def tensor_einstein_check(T, h, x=None):
    """Proportionality test T = (n-1) mu h for a symmetric bilinear form.

    Returns (mu, residual) with mu = trace_h(T) / (n (n-1)) and the
    residual measured in the h-operator norm (largest absolute
    eigenvalue of the h-whitened deviation T - (n-1) mu h).
    """
    Tv = _values_at(T, x, "bilinear form")
    hv = _values_at(h, x, "metric")
    n = hv.shape[0]
    try:
        L = np.linalg.cholesky(hv)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError(
            "tensor proportionality check needs a positive-definite metric"
        )
    mu = float(np.trace(np.linalg.solve(hv, Tv))) / (n * (n - 1))
    dev = Tv - (n - 1) * mu * hv
    Li = np.linalg.inv(L)
    white = Li @ dev @ Li.T
    resid = float(np.abs(np.linalg.eigvalsh(0.5 * (white + white.T))).max())
    return mu, resid


def weighted_ricci_tensor(h: RiemannianMetric, f, cfg: WeightConfig, x):
    """Ric^h + a(n+1) Hess_h f - c(n+1)^2 df (x) df at x; the bilinear
    form whose proportionality to h characterizes the nu != 0 regime in
    navigation data."""
    n = h.dim
    if isinstance(f, str):
        f = parse_expr(f, n)
    a, c = float(cfg.a), float(cfg.c)
    mp = MetricPoint.from_exprs(h, list(x), order=2)
    T = mp.ricci.copy()
    if f is not None:
        T = T + a * (n + 1) * hess_h(f, h, list(x))
        fg = _weight_gradient(f, n, x)
        T = T - c * (n + 1) ** 2 * np.outer(fg, fg)
    return T


def _weight_gradient(f: ExprAst, n, x):
    jets = eval_component_jets(f, list(x), 1)
    _, grad = _extract(jets, n, 1)
    return np.asarray(grad, dtype=float)


def _f_data(space: KropinaSpace, x):
    """(gradient, covariant Hessian) of the weight at x against the
    drift metric of the space; zeros when no weight is set."""
    n = space.dim
    if space.weight is None:
        return np.zeros(n), np.zeros((n, n))
    return (_weight_gradient(space.weight, n, x),
            hess_h(space.weight, space.a, list(x)))


# -- polynomial divisibility ----------------------------------------------------


def _sym3(t):
    out = np.zeros_like(t)
    for p in itertools.permutations(range(3)):
        out = out + t.transpose(p)
    return out / 6.0


def _sym4(t):
    out = np.zeros_like(t)
    for p in itertools.permutations(range(4)):
        out = out + t.transpose(p)
    return out / 24.0


def _sym_vec_metric(v, a):
    """Coefficient tensor of (v_i y^i)(a_jk y^j y^k), a symmetric."""
    return (
        np.einsum("i,jk->ijk", v, a)
        + np.einsum("j,ik->ijk", v, a)
        + np.einsum("k,ij->ijk", v, a)
    ) / 3.0


def _sym_mat_metric(q, a):
    """Fully symmetric coefficient tensor of (q_ij y^i y^j)
    (a_kl y^k y^l), both symmetric: all six ways to give q a slot
    pair."""
    return (
        np.einsum("ij,kl->ijkl", q, a)
        + np.einsum("ik,jl->ijkl", q, a)
        + np.einsum("il,jk->ijkl", q, a)
        + np.einsum("kl,ij->ijkl", q, a)
        + np.einsum("jl,ik->ijkl", q, a)
        + np.einsum("jk,il->ijkl", q, a)
    ) / 6.0


def poly_divisible_by_alpha2(coeffs, alpha, x=None):
    """Least-squares division of a homogeneous polynomial by the metric
    quadratic alpha^2.

    coeffs is the coefficient tensor of a degree-2, 3 or 4 polynomial
    (symmetrized here if it is not already); alpha is the metric as a
    value matrix, or an expression metric together with the point x.
    Returns (quotient coefficients, relative residual); the residual
    decides divisibility at the caller's tolerance.  The quotient is a
    scalar, covector or symmetric matrix according to the degree.
    """
    a = _values_at(alpha, x, "metric")
    C = np.asarray(coeffs, dtype=float)
    d = C.ndim
    n = a.shape[0]
    if d == 2:
        C = 0.5 * (C + C.T)
        col = a.ravel()
        q = float(C.ravel() @ col) / float(col @ col)
        fit = q * a
        quotient = q
    elif d == 3:
        C = _sym3(C)
        A = np.array([
            _sym_vec_metric(np.eye(n)[i], a).ravel() for i in range(n)
        ]).T
        sol, *_ = np.linalg.lstsq(A, C.ravel(), rcond=None)
        fit = (A @ sol).reshape(C.shape)
        quotient = sol
    elif d == 4:
        C = _sym4(C)
        pairs = [(i, j) for i in range(n) for j in range(i, n)]
        basis = []
        for i, j in pairs:
            E = np.zeros((n, n))
            E[i, j] = E[j, i] = 1.0
            basis.append(_sym_mat_metric(E, a).ravel())
        A = np.array(basis).T
        sol, *_ = np.linalg.lstsq(A, C.ravel(), rcond=None)
        fit = (A @ sol).reshape(C.shape)
        quotient = np.zeros((n, n))
        for (i, j), v in zip(pairs, sol):
            quotient[i, j] = quotient[j, i] = v
    else:
        raise ValueError("divisibility test covers degrees 2, 3 and 4 only")
    scale = max(1.0, float(np.abs(C).max()))
    resid = float(np.abs(fit - C).max()) / scale
    return quotient, resid


# -- reports --------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionResult:
    name: str
    residual: float
    tol: float
    passed: bool
    kind: str = "condition"  # "condition" | "precondition"
    note: str = ""

    def as_dict(self):
        return {
            "name": self.name,
            "residual": self.residual,
            "tol": self.tol,
            "passed": self.passed,
            "kind": self.kind,
            "note": self.note,
        }


@dataclass(frozen=True)
class TheoremReport:
    theorem: str
    verdict: str  # "PASS" | "FAIL" | "PRECONDITION"
    conditions: tuple
    scalars: dict
    points: int
    directions: int

    @property
    def passed(self):
        return self.verdict == "PASS"

    def condition(self, name):
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_dict(self):
        return {
            "theorem": self.theorem,
            "verdict": self.verdict,
            "conditions": [c.as_dict() for c in self.conditions],
            "scalars": _jsonable(self.scalars),
            "points": self.points,
            "directions": self.directions,
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


class _Residuals:
    """Accumulates the worst residual per condition name."""

    def __init__(self, tol):
        self.tol = tol
        self._worst = {}
        self._kind = {}
        self._order = []

    def add(self, name, residual, kind="condition"):
        residual = abs(float(residual))
        if name not in self._worst:
            self._order.append(name)
            self._worst[name] = residual
            self._kind[name] = kind
        else:
            self._worst[name] = max(self._worst[name], residual)

    def conditions(self):
        out = []
        for name in self._order:
            r = self._worst[name]
            out.append(ConditionResult(
                name=name,
                residual=r,
                tol=self.tol,
                passed=bool(r <= self.tol),
                kind=self._kind[name],
            ))
        return tuple(out)


def _verdict(conditions):
    for c in conditions:
        if c.kind == "precondition" and not c.passed:
            return "PRECONDITION"
    if all(c.passed for c in conditions):
        return "PASS"
    return "FAIL"


def _rel(value, *scales):
    s = max([1.0] + [abs(float(v)) for v in scales])
    return abs(float(value)) / s


def _normalize_samples(samples):
    out = []
    total = 0
    for x, ys in samples:
        ys = [np.asarray(y, dtype=float) for y in ys]
        out.append((np.asarray(x, dtype=float), ys))
        total += len(ys)
    if not out:
        raise ValueError("checker needs at least one sample point")
    return out, total


def _require_regime(cfg, want, theorem):
    if cfg.regime != want:
        raise DispatchError(
            f"checker {theorem} applies in regime {want}, got {cfg.regime} "
            f"(kappa={cfg.kappa:.6g}, nu={cfg.nu:.6g})"
        )


def _end_to_end(space, cfg, ev, dens, x, ys, variants, res):
    """Generic-pipeline Einstein residuals for each named ansatz; the
    report's bottom line never reuses the closed formulas."""
    n = space.dim
    a, c = float(cfg.a), float(cfg.c)
    for y in ys:
        inv = ab_invariants(space, x, y)
        val = ricci_generic(ev, x, y)
        if a != 0.0:
            val += a * sdot_generic(ev, dens, x, y)
        if c != 0.0:
            val -= c * s_curvature_generic(ev, dens, x, y) ** 2
        for label, ansatz in variants:
            model = (n - 1) * ansatz.model(inv.F, y)
            res.add(label, _rel(val - model, val, model))


def _drift_scalars(fld):
    """(s^i s_i, s^j_k s^k_j, s^j_k r^k_j) contractions of the drift."""
    sksk = float(fld.s_vec @ fld.ainv @ fld.s_vec)
    ss = float(np.einsum("ij,ji->", fld.s_up, fld.s_up))
    sr = float(np.einsum("ij,ji->", fld.s_up, fld.r_up))
    return sksk, ss, sr


def _sigma_from_drift(fld):
    """The sigma forced by the drift data alone:
    -(s^k s_k / 2 + b^2 s^j_k s^k_j / 4) / ((n - 1) b^2)."""
    n = fld.n
    sksk, ss, _ = _drift_scalars(fld)
    return -(0.5 * sksk + 0.25 * fld.b2 * ss) / ((n - 1) * fld.b2)


def _sym_rv(r, v):
    """Cubic coefficient tensor of r_00 * (v_i y^i), r symmetric."""
    return (
        np.einsum("ij,k->ijk", r, v)
        + np.einsum("ik,j->ijk", r, v)
        + np.einsum("jk,i->ijk", r, v)
    ) / 3.0


def _sym_outer(u, v):
    return 0.5 * (np.outer(u, v) + np.outer(v, u))


# -- checkers -------------------------------------------------------------------


def thm41_check(h: RiemannianMetric, w, f, cfg: WeightConfig, samples,
                tol=1e-6):
    """Navigation-data checker for the nu != 0 regime.

    Conditions: the wind is Killing (symmetrized covariant derivative
    vanishes); the weighted Ricci bilinear form of (h, f) is
    proportional to h; the two closed expressions for sigma agree; the
    closed-form (theta, sigma) agrees with the least-squares fit; and
    the weakly-Einstein equation itself holds end-to-end through the
    generic pipeline, once with the closed-form pair and once with the
    fitted pair.

    Raises DispatchError outside the regime and ValueError when the
    wind is not h-unit at a sample point.
    """
    _require_regime(cfg, "nu!=0", "41")
    n = h.dim
    a, c = float(cfg.a), float(cfg.c)
    if f is None:
        f = cfg.f
    if isinstance(f, str):
        f = parse_expr(f, n)
    space = KropinaSpace.from_nav(h, w, weight=f)
    # the space carries the resolved weight; keep the config neutral so
    # downstream fits cannot swap in a different one
    cfg = WeightConfig(cfg.a, cfg.c, cfg.n)
    samples, total = _normalize_samples(samples)

    ev = finsler_evaluator(space, "ab")
    dens = volume_density(space)
    res = _Residuals(tol)
    scal = {
        "mu": [], "sigma_formula": [], "sigma_proof": [], "sigma_fitted": [],
        "theta_formula": [], "theta_fitted": [], "wind_norm_dev": [],
    }

    for x, ys in samples:
        mp = MetricPoint.from_exprs(h, list(x), order=2)
        fp = FieldPoint.from_exprs(mp, list(space.w), list(x), order=1)
        wdev = abs(float(fp.w_low @ fp.w) - 1.0)
        scal["wind_norm_dev"].append(wdev)
        if wdev > 1e-8:
            raise ValueError(
                f"wind field is not h-unit at {list(x)}: "
                f"||W||_h^2 deviates by {wdev:.3g}"
            )
        wi = w_invariants_from_point(mp, fp)
        cov_scale = max(1.0, float(np.abs(fp.cov1).max()))
        res.add("wind-killing", float(np.abs(wi.r_ij).max()) / cov_scale)

        T = weighted_ricci_tensor(h, f, cfg, x)
        mu, tres = tensor_einstein_check(T, mp.g)
        res.add("einstein-tensor", tres)
        scal["mu"].append(mu)

        if f is not None:
            fg = _weight_gradient(f, n, x)
            hf = hess_h(f, h, list(x))
        else:
            fg = np.zeros(n)
            hf = np.zeros((n, n))
        ric_ww = float(fp.w @ mp.ricci @ fp.w)
        ss = float(np.einsum("ij,ji->", wi.s_up, wi.s_up))
        hess_ww = float(fp.w @ hf @ fp.w)
        f_w = float(fg @ fp.w)
        sigma_formula = mu - (
            ric_ww + ss + a * (n + 1) * hess_ww - c * (n + 1) ** 2 * f_w**2
        ) / (n - 1)
        theta_formula = (
            2 * a * (n + 1) * (hf @ fp.w + np.einsum("p,pi->i", fg, wi.s_up))
            - 2 * c * (n + 1) ** 2 * fg * f_w
        ) / (3 * (n - 1))
        theta_w = float(theta_formula @ fp.w)
        sigma_proof = mu - 3 * theta_w - (
            ric_ww + ss - a * (n + 1) * hess_ww + c * (n + 1) ** 2 * f_w**2
        ) / (n - 1)
        scal["sigma_formula"].append(sigma_formula)
        scal["sigma_proof"].append(sigma_proof)
        scal["theta_formula"].append(list(theta_formula))
        res.add("sigma-consistency",
                abs(sigma_formula - sigma_proof) / max(1.0, abs(sigma_formula)))

        fitted = fit_theta_sigma(space, cfg, x, ys)
        scal["sigma_fitted"].append(fitted.sigma)
        scal["theta_fitted"].append(list(fitted.theta))
        agree = max(
            abs(sigma_formula - fitted.sigma),
            float(np.abs(theta_formula - np.array(fitted.theta)).max()),
        )
        res.add("theta-sigma-fit-agreement", agree / max(1.0, abs(fitted.sigma)))

        formula = EinsteinAnsatz(tuple(theta_formula), sigma_formula)
        _end_to_end(space, cfg, ev, dens, x, ys,
                    [("einstein-residual-formula", formula),
                     ("einstein-residual-fitted", fitted)], res)

    conditions = res.conditions()
    return TheoremReport("41", _verdict(conditions), conditions, scal,
                         len(samples), total)


def thm44_check(space: KropinaSpace, cfg: WeightConfig, samples, tol=1e-6):
    """Metric-form checker for the nu != 0 regime.

    Precondition: the symmetrized drift derivative is conformal to the
    metric, r_00 = eta alpha^2 (isotropy fit).  Conditions: the
    quadratic curvature reduction, with lambda from its closed form;
    the odd-degree reduction; agreement of the drift-forced sigma with
    the fitted one; and the end-to-end Einstein equation through the
    generic pipeline.
    """
    _require_regime(cfg, "nu!=0", "44")
    space = _space_with_cfg(space, cfg)
    n = space.dim
    a = float(cfg.a)
    kappa, nu = cfg.kappa, cfg.nu
    samples, total = _normalize_samples(samples)

    ev = finsler_evaluator(space, "ab")
    dens = volume_density(space)
    res = _Residuals(tol)
    scal = {
        "eta": [], "isotropy_residual": [], "lambda": [],
        "sigma_formula": [], "sigma_fitted": [], "theta_fitted": [],
    }

    for x, ys in samples:
        fit = isotropy_fit(space, x, rel_tol=tol)
        iso = fit.residual / max(1.0, fit.scale)
        res.add("isotropy", iso, kind="precondition")
        scal["eta"].append(fit.eta)
        scal["isotropy_residual"].append(iso)

        fld = ab_fields(space, x)
        b2 = fld.b2
        eta = fit.eta
        eta_k = fld.eta_grad
        fitted = fit_theta_sigma(space, cfg, x, ys)
        theta = np.array(fitted.theta)
        theta_b = float(theta @ fld.bu)
        sksk, ss, _ = _drift_scalars(fld)
        lam = (
            -((n - 2) * eta**2 + float(fld.bu @ eta_k)) * b2
            + 3 * (n - 1) * b2 * theta_b
            + (n - 2) * sksk
            - b2 * (fld.div_s + ss)
        )
        scal["lambda"].append(lam)
        sigma_formula = _sigma_from_drift(fld)
        scal["sigma_formula"].append(sigma_formula)
        scal["sigma_fitted"].append(fitted.sigma)
        scal["theta_fitted"].append(list(fitted.theta))
        res.add("sigma-agreement",
                abs(sigma_formula - fitted.sigma) / max(1.0, abs(fitted.sigma)))

        fg, hess_a = _f_data(space, x)
        for y in ys:
            inv = ab_invariants(space, x, y)
            ric_a = float(y @ fld.ric @ y)
            hf_y = float(y @ hess_a @ y)
            lhs = (
                ric_a * b2**2
                + (n - 2) * (
                    b2 * (inv.s0_0 + float(eta_k @ y) * inv.beta)
                    - 2 * eta * inv.beta * inv.s_0
                    - inv.s_0**2
                    - eta**2 * inv.beta**2
                )
                - (3 * kappa - nu - a * (n + 1)) * b2**2 * inv.f_0**2
                + (-kappa + n - 1) * b2**2 * hf_y
            )
            res.add("ricci-reduction",
                    _rel(lhs - lam * inv.alpha2,
                         ric_a * b2**2, lam * inv.alpha2))
            odd = (
                inv.beta * (
                    (n - 2) * sksk + 3 * (n - 1) * b2 * theta_b
                    - b2 * (fld.div_s + ss)
                )
                + b2 * (
                    (n - 3) * eta * inv.s_0
                    + inv.s0_b
                    - b2 * inv.div_s0
                    + (n - 1) * inv.sk_sk0
                    - 3 * (n - 1) * b2 * float(theta @ y)
                )
            )
            res.add("one-form-reduction",
                    _rel(odd, inv.beta * b2 * (fld.div_s + ss),
                         b2 * inv.s0_b, b2**2 * inv.div_s0,
                         3 * (n - 1) * b2**2 * float(theta @ y)))

        formula = EinsteinAnsatz(tuple(theta), sigma_formula)
        _end_to_end(space, cfg, ev, dens, x, ys,
                    [("einstein-residual-formula", formula),
                     ("einstein-residual-fitted", fitted)], res)

    conditions = res.conditions()
    return TheoremReport("44", _verdict(conditions), conditions, scal,
                         len(samples), total)


def _cubic_drift_tensor(fld, cfg):
    """Symmetric cubic slot of the curvature polynomial in the
    nu = 0, kappa != 0 regime; divisibility by alpha^2 defines zeta."""
    n = fld.n
    a = float(cfg.a)
    kappa = cfg.kappa
    t = kappa * (
        fld.b2 * _sym3(fld.dr)
        + 2 * _sym_rv(fld.r, fld.r_vec)
        + 2 * _sym_rv(fld.r, fld.s_vec)
    )
    return t + 2 * (3 * kappa - a * (n + 1)) * fld.b2 * _sym_rv(fld.r, fld.f_grad)


def _quadratic_drift_tensor(fld, cfg, hess_a):
    """Symmetric quadratic slot of the curvature polynomial in the
    nu = 0, kappa != 0 regime."""
    n = fld.n
    a = float(cfg.a)
    kap = cfg.kappa
    b2 = fld.b2
    dsv_s = 0.5 * (fld.dsv + fld.dsv.T)
    drv_s = 0.5 * (fld.drv + fld.drv.T)
    rs = fld.r @ fld.s_up
    return (
        b2**2 * fld.ric
        + b2 * np.einsum("ijk,k->ij", fld.dr, fld.bu)
        + (n - 2) * b2 * dsv_s
        + b2 * fld.trace_r_up * fld.r
        - (n - 2) * np.outer(fld.s_vec, fld.s_vec)
        + (-kap + n - 2) * b2 * drv_s
        + (kap - n) * fld.r_scalar * fld.r
        + (-2 * kap + 4 - 2 * n) * _sym_outer(fld.r_vec, fld.s_vec)
        + 2 * (kap + 1) * b2 * 0.5 * (rs + rs.T)
        + (-2 * kap + 2 - n) * np.outer(fld.r_vec, fld.r_vec)
        + (-kap + n - 1) * b2**2 * hess_a
        - (3 * kap - a * (n + 1)) * (
            2 * b2 * _sym_outer(fld.r_vec, fld.f_grad)
            + b2**2 * np.outer(fld.f_grad, fld.f_grad)
        )
    )


def _linear_drift_vector(fld, u, theta, kappa, eta=None):
    """Linear slot of the curvature polynomial as a covector.

    With eta supplied (conformal factor of an isotropic drift) the
    collapsed kappa = 0 coefficients are used; otherwise the generic
    nu = 0 coefficients, which keep the full r-couplings.
    """
    n = fld.n
    b2 = fld.b2
    lin = (
        u * fld.bl
        + b2 * (fld.dsv @ fld.bu)
        - b2**2 * fld.div_s_up
        + (n - 1) * b2 * np.einsum("k,kj->j", fld.s_vec, fld.s_up)
        - 3 * (n - 1) * b2**2 * theta
    )
    if eta is None:
        s_up_vec = fld.ainv @ fld.s_vec
        lin = lin + (
            (kappa - n) * fld.r_scalar * fld.s_vec
            + b2 * fld.trace_r_up * fld.s_vec
            + (n - kappa - 2) * b2 * np.einsum("k,kj->j", fld.r_vec, fld.s_up)
            - b2 * (fld.r @ s_up_vec)
        )
    else:
        lin = lin + (n - 3) * b2 * eta * fld.s_vec
    return lin


def thm51_check(space: KropinaSpace, cfg: WeightConfig, samples, tol=1e-6):
    """Checker for the nu = 0, kappa != 0 regime.

    The curvature polynomial splits by degree in y.  Precondition: the
    cubic slot is divisible by alpha^2, which defines the 1-form zeta.
    Conditions: the quadratic slot plus beta*zeta reduces to u alpha^2
    with u from its closed form; the linear slot vanishes; the
    drift-forced sigma agrees with the fit; and the Einstein equation
    holds end-to-end through the generic pipeline.
    """
    _require_regime(cfg, "nu=0,kappa!=0", "51")
    space = _space_with_cfg(space, cfg)
    n = space.dim
    kappa = cfg.kappa
    samples, total = _normalize_samples(samples)

    ev = finsler_evaluator(space, "ab")
    dens = volume_density(space)
    res = _Residuals(tol)
    scal = {
        "zeta": [], "u": [], "sigma_formula": [], "sigma_fitted": [],
        "theta_fitted": [], "divisibility_residual": [],
    }

    for x, ys in samples:
        fld = ab_fields(space, x)
        b2 = fld.b2
        cubic = _cubic_drift_tensor(fld, cfg)
        zeta, div_res = poly_divisible_by_alpha2(cubic, fld.mp.g)
        res.add("cubic-divisibility", div_res, kind="precondition")
        scal["zeta"].append(list(zeta))
        scal["divisibility_residual"].append(div_res)

        fitted = fit_theta_sigma(space, cfg, x, ys)
        theta = np.array(fitted.theta)
        theta_b = float(theta @ fld.bu)
        sksk, ss, sr = _drift_scalars(fld)
        u = (
            (n - kappa) * float(fld.r_vec @ (fld.ainv @ fld.s_vec))
            + (n - 2) * sksk
            + 3 * (n - 1) * b2 * theta_b
            - b2 * (fld.div_s + ss + sr)
        )
        scal["u"].append(u)
        sigma_formula = _sigma_from_drift(fld)
        scal["sigma_formula"].append(sigma_formula)
        scal["sigma_fitted"].append(fitted.sigma)
        scal["theta_fitted"].append(list(fitted.theta))
        res.add("sigma-agreement",
                abs(sigma_formula - fitted.sigma) / max(1.0, abs(fitted.sigma)))

        _, hess_a = _f_data(space, x)
        quad = _sym_outer(fld.bl, zeta) \
            + _quadratic_drift_tensor(fld, cfg, hess_a)
        dev = quad - u * fld.mp.g
        res.add("quadratic-reduction",
                float(np.abs(dev).max())
                / max(1.0, b2**2 * float(np.abs(fld.ric).max()), abs(u)))

        lin = _linear_drift_vector(fld, u, theta, kappa)
        res.add("linear-reduction",
                float(np.abs(lin).max())
                / max(1.0, abs(u) * float(np.abs(fld.bl).max()),
                      b2**2 * float(np.abs(fld.div_s_up).max())))

        formula = EinsteinAnsatz(tuple(theta), sigma_formula)
        _end_to_end(space, cfg, ev, dens, x, ys,
                    [("einstein-residual-formula", formula),
                     ("einstein-residual-fitted", fitted)], res)

    conditions = res.conditions()
    return TheoremReport("51", _verdict(conditions), conditions, scal,
                         len(samples), total)


def thm61_check(space: KropinaSpace, samples, tol=1e-6, cfg=None):
    """Checker for the projective regime (kappa = nu = 0).

    Precondition: the symmetrized drift derivative is conformal,
    r_00 = eta alpha^2.  Conditions: the cubic slot determines zeta
    (zero for a constant weight); the quadratic slot plus beta*zeta
    reduces with u from its closed form; the linear slot vanishes; the
    drift-forced sigma agrees with the fit; and the projective Ricci
    curvature satisfies the Einstein equation end-to-end through the
    generic pipeline.
    """
    n = space.dim
    if cfg is None:
        a, c = pric_constants(n)
        cfg = WeightConfig(a, c, n)
    _require_regime(cfg, "nu=0,kappa=0", "61")
    space = _space_with_cfg(space, cfg)
    samples, total = _normalize_samples(samples)

    ev = finsler_evaluator(space, "ab")
    dens = volume_density(space)
    res = _Residuals(tol)
    scal = {
        "eta": [], "isotropy_residual": [], "zeta": [], "u": [],
        "sigma_formula": [], "sigma_fitted": [], "theta_fitted": [],
    }

    for x, ys in samples:
        fit = isotropy_fit(space, x, rel_tol=tol)
        iso = fit.residual / max(1.0, fit.scale)
        res.add("drift-isotropy", iso, kind="precondition")
        scal["eta"].append(fit.eta)
        scal["isotropy_residual"].append(iso)

        fld = ab_fields(space, x)
        b2 = fld.b2
        eta = fit.eta
        eta_k = fld.eta_grad
        fg, hess_a = _f_data(space, x)

        cubic = -2 * (n - 1) * b2 * _sym_rv(fld.r, fg)
        zeta, div_res = poly_divisible_by_alpha2(cubic, fld.mp.g)
        res.add("cubic-divisibility", div_res)
        scal["zeta"].append(list(zeta))

        fitted = fit_theta_sigma(space, cfg, x, ys)
        theta = np.array(fitted.theta)
        theta_b = float(theta @ fld.bu)
        sksk, ss, _ = _drift_scalars(fld)
        u = (n - 2) * sksk + 3 * (n - 1) * b2 * theta_b - b2 * (fld.div_s + ss)
        scal["u"].append(u)
        sigma_formula = _sigma_from_drift(fld)
        scal["sigma_formula"].append(sigma_formula)
        scal["sigma_fitted"].append(fitted.sigma)
        scal["theta_fitted"].append(list(fitted.theta))
        res.add("sigma-agreement",
                abs(sigma_formula - fitted.sigma) / max(1.0, abs(fitted.sigma)))

        dsv_s = 0.5 * (fld.dsv + fld.dsv.T)
        quad = (
            _sym_outer(fld.bl, zeta)
            + b2**2 * fld.ric
            + ((float(fld.bu @ eta_k) + (n - 2) * eta**2) * b2 - u) * fld.mp.g
            - (n - 2) * eta**2 * np.outer(fld.bl, fld.bl)
            + (n - 2) * b2 * _sym_outer(eta_k, fld.bl)
            - 2 * (n - 2) * eta * _sym_outer(fld.s_vec, fld.bl)
            + 2 * (n - 1) * b2 * eta * _sym_outer(fg, fld.bl)
            + (n - 2) * (b2 * dsv_s - np.outer(fld.s_vec, fld.s_vec))
            + (n - 1) * b2**2 * (hess_a + np.outer(fg, fg))
        )
        res.add("quadratic-reduction",
                float(np.abs(quad).max())
                / max(1.0, b2**2 * float(np.abs(fld.ric).max()), abs(u)))

        lin = _linear_drift_vector(fld, u, theta, 0.0, eta=eta)
        res.add("linear-reduction",
                float(np.abs(lin).max())
                / max(1.0, abs(u) * float(np.abs(fld.bl).max()),
                      b2**2 * float(np.abs(fld.div_s_up).max())))

        formula = EinsteinAnsatz(tuple(theta), sigma_formula)
        _end_to_end(space, cfg, ev, dens, x, ys,
                    [("einstein-residual-formula", formula),
                     ("einstein-residual-fitted", fitted)], res)

    conditions = res.conditions()
    return TheoremReport("61", _verdict(conditions), conditions, scal,
                         len(samples), total)
