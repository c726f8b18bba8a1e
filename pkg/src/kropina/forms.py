"""Closed-form machinery for Kropina metrics F = alpha^2 / beta.

A Kropina structure on a chart carries two equivalent descriptions:

* the (alpha, beta) view: a Riemannian metric a_ij(x) and a 1-form
  b_i(x), with F = alpha^2 / beta on the half-space beta > 0;
* the navigation view: a Riemannian metric h_ij(x) and a unit vector
  field W^i(x) (the wind), with F = h^2 / (2 W_0).

The two are linked by a positive gauge scalar b(x) = ||beta||_alpha:
writing rho = ln(2/b), one has a_ij = e^{-2 rho} h_ij, b_i =
2 e^{-2 rho} W_i and b^2 = 4 e^{-2 rho}.  Any positive gauge gives the
same F, so every F-level quantity computed here must be (and is tested
to be) gauge independent.  The canonical gauge is the constant 2, which
makes rho = 0 and collapses the two views onto each other.

KropinaSpace stores both views as expression trees so that curvature
formulas can draw exact derivatives from the jet evaluator.  The
closed forms live alongside generic.py's pipeline on purpose: every
formula here is validated against that independent route in the test
suite, never trusted on its own.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Optional

import numpy as np

from .expr import (
    ExprAst,
    as_ast,
    e_add,
    e_call,
    e_const,
    e_div,
    e_mul,
    e_neg,
    e_pow,
    eval_expr,
    parse_expr,
)
from .generic import ConicDomainError, FinslerEvaluator, VolumeDensity
from .jets import Jet, jet_det
from .riemann import (
    FieldPoint,
    MetricPoint,
    RiemannianMetric,
    _extract,
    eval_component_jets,
    w_invariants_from_point,
)
from .fd import fd_partial


class GaugeError(ValueError):
    """The gauge scalar b(x) vanished or went negative on the chart."""


class HypothesisNotMetError(ValueError):
    """A formula's standing hypothesis failed at the requested point."""


# -- expression-level linear algebra -----------------------------------------


def _det_node(rows):
    """Determinant of a square grid of AST nodes, Laplace along row 0."""
    n = len(rows)
    if n == 1:
        return rows[0][0]
    acc = None
    for j in range(n):
        minor = [[rows[i][k] for k in range(n) if k != j] for i in range(1, n)]
        term = e_mul(rows[0][j], _det_node(minor))
        if j % 2 == 1:
            term = e_neg(term)
        acc = term if acc is None else e_add(acc, term)
    return acc


def _inverse_nodes(rows):
    """Adjugate inverse of a grid of AST nodes; returns (inv, det)."""
    n = len(rows)
    det = _det_node(rows)
    inv = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [
                [rows[r][c] for c in range(n) if c != j]
                for r in range(n)
                if r != i
            ]
            cof = _det_node(minor) if minor else e_const(1.0)
            if (i + j) % 2 == 1:
                cof = e_neg(cof)
            inv[j][i] = e_div(cof, det)
    return inv, det


def _coerce_scalar(expr, dim, what):
    if expr is None:
        return None
    if isinstance(expr, str):
        return parse_expr(expr, dim)
    if isinstance(expr, (int, float)):
        return as_ast(e_const(float(expr)), dim)
    if isinstance(expr, ExprAst):
        if expr.dim != dim:
            raise ValueError(f"{what} is declared over dimension {expr.dim}, "
                             f"expected {dim}")
        return expr
    raise TypeError(f"{what} must be an expression, string, or number")


def _coerce_vector(exprs, dim, what):
    out = []
    for k, e in enumerate(exprs):
        out.append(_coerce_scalar(e, dim, f"{what}[{k}]"))
    if len(out) != dim:
        raise ValueError(f"{what} must have {dim} components")
    return tuple(out)


# -- the space ---------------------------------------------------------------


@dataclass(frozen=True)
class KropinaSpace:
    """Both views of one Kropina metric, linked by a gauge scalar.

    Immutable after construction.  Use from_ab / from_nav, not the
    raw constructor, so the derived view and the gauge stay in sync.
    """

    dim: int
    a: RiemannianMetric       # (alpha, beta)-view metric a_ij
    b: tuple                  # drift 1-form b_i, ExprAst per component
    b_up: tuple               # raised drift b^i = a^{ij} b_j (equals 2 W^i)
    h: RiemannianMetric       # navigation metric h_ij
    w: tuple                  # wind W^i, ExprAst per component
    gauge: ExprAst            # b(x) = ||beta||_alpha
    rho: ExprAst              # ln(2 / b(x))
    weight: Optional[ExprAst] = None
    name: str = "kropina"

    @classmethod
    def from_nav(cls, h, w, gauge=None, weight=None, name="kropina",
                 check_at=None):
        """Build from navigation data (h, W) and an optional gauge.

        gauge defaults to the constant 2 (rho = 0, so a = h and
        b_i = 2 W_i).  check_at, when given, is a list of chart points
        where ||W||_h = 1 is verified to 1e-8 before accepting W.
        """
        n = h.dim
        w = _coerce_vector(w, n, "wind")
        if check_at is not None:
            _require_unit_wind(h, w, check_at)
        g = _coerce_scalar(2.0 if gauge is None else gauge, n, "gauge")
        quarter = e_div(e_pow(g.root, 2), e_const(4.0))
        half = e_div(e_pow(g.root, 2), e_const(2.0))
        a_rows = [[None] * n for _ in range(n)]
        for i in range(n):
            for j in range(i, n):
                node = e_mul(quarter, h.exprs[i][j].root)
                a_rows[i][j] = a_rows[j][i] = as_ast(node, n)
        b_low = []
        for i in range(n):
            acc = None
            for j in range(n):
                t = e_mul(h.exprs[i][j].root, w[j].root)
                acc = t if acc is None else e_add(acc, t)
            b_low.append(as_ast(e_mul(half, acc), n))
        b_up = tuple(as_ast(e_mul(e_const(2.0), wi.root), n) for wi in w)
        rho = as_ast(e_call("ln", e_div(e_const(2.0), g.root)), n)
        return cls(
            dim=n,
            a=RiemannianMetric(n, tuple(tuple(row) for row in a_rows)),
            b=tuple(b_low),
            b_up=b_up,
            h=h,
            w=w,
            gauge=g,
            rho=rho,
            weight=_coerce_scalar(weight, n, "weight"),
            name=name,
        )

    @classmethod
    def from_ab(cls, a, b, weight=None, name="kropina"):
        """Build from the (alpha, beta) view; the gauge is ||beta||_alpha."""
        n = a.dim
        b = _coerce_vector(b, n, "drift form")
        rows = [[a.exprs[i][j].root for j in range(n)] for i in range(n)]
        inv, _ = _inverse_nodes(rows)
        b_up = []
        for i in range(n):
            acc = None
            for j in range(n):
                t = e_mul(inv[i][j], b[j].root)
                acc = t if acc is None else e_add(acc, t)
            b_up.append(acc)
        b2 = None
        for i in range(n):
            t = e_mul(b[i].root, b_up[i])
            b2 = t if b2 is None else e_add(b2, t)
        gauge = e_call("sqrt", b2)
        rho = e_call("ln", e_div(e_const(2.0), gauge))
        scale = e_div(e_const(4.0), b2)
        h_rows = [[None] * n for _ in range(n)]
        for i in range(n):
            for j in range(i, n):
                node = e_mul(scale, a.exprs[i][j].root)
                h_rows[i][j] = h_rows[j][i] = as_ast(node, n)
        w = tuple(as_ast(e_mul(e_const(0.5), bu), n) for bu in b_up)
        return cls(
            dim=n,
            a=a,
            b=b,
            b_up=tuple(as_ast(bu, n) for bu in b_up),
            h=RiemannianMetric(n, tuple(tuple(row) for row in h_rows)),
            w=w,
            gauge=as_ast(gauge, n),
            rho=as_ast(rho, n),
            weight=_coerce_scalar(weight, n, "weight"),
            name=name,
        )

    def with_gauge(self, gauge, check_at=None):
        """The same metric re-expressed in a different gauge b(x)."""
        return KropinaSpace.from_nav(
            self.h, self.w, gauge=gauge, weight=self.weight,
            name=self.name, check_at=check_at,
        )

    def with_weight(self, weight):
        return replace(self, weight=_coerce_scalar(weight, self.dim, "weight"))

    def validate(self, xs, ys=None, tol_norm=1e-8, tol_view=1e-10):
        """Check the linking identities at sample points; raise on failure.

        xs is an iterable of chart points.  ys, when given, pairs with
        xs and additionally checks that both views produce the same F.
        """
        for k, x in enumerate(xs):
            env = [float(v) for v in x]
            h_val = _matrix_values(self.h, env)
            w_val = np.array([eval_expr(e, env) for e in self.w], dtype=float)
            norm = float(w_val @ h_val @ w_val)
            if abs(norm - 1.0) > tol_norm:
                raise ValueError(
                    f"wind norm ||W||_h = {math.sqrt(max(norm, 0.0)):.12g} "
                    f"differs from 1 at point {k}"
                )
            rho_v = float(eval_expr(self.rho, env))
            e2 = math.exp(-2.0 * rho_v)
            a_val = _matrix_values(self.a, env)
            b_val = np.array([eval_expr(e, env) for e in self.b], dtype=float)
            g_val = float(eval_expr(self.gauge, env))
            if g_val <= 0.0:
                raise GaugeError(f"gauge b = {g_val:.6g} at point {k}")
            checks = (
                ("a_ij vs e^(-2 rho) h_ij",
                 np.max(np.abs(a_val - e2 * h_val)), np.max(np.abs(a_val))),
                ("b_i vs 2 e^(-2 rho) W_i",
                 np.max(np.abs(b_val - 2.0 * e2 * (h_val @ w_val))),
                 np.max(np.abs(b_val))),
                ("b^2 vs 4 e^(-2 rho)",
                 abs(g_val * g_val - 4.0 * e2), 4.0 * e2),
            )
            for label, err, scale in checks:
                if err > tol_view * max(1.0, scale):
                    raise ValueError(
                        f"view consistency failed ({label}) at point {k}: "
                        f"max error {err:.3e}"
                    )
            if ys is not None:
                y = [float(v) for v in ys[k]]
                f_ab = _f_ab(self, env, y)
                f_nav = _f_nav(self, env, y)
                if abs(f_ab - f_nav) > tol_view * max(1.0, abs(f_ab)):
                    raise ValueError(
                        f"F disagrees between views at point {k}: "
                        f"{f_ab!r} vs {f_nav!r}"
                    )


def _matrix_values(metric: RiemannianMetric, env) -> np.ndarray:
    n = metric.dim
    out = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = eval_expr(metric.exprs[i][j], env)
    return out


def _require_unit_wind(h, w, xs, tol=1e-8):
    for k, x in enumerate(xs):
        env = [float(v) for v in x]
        h_val = _matrix_values(h, env)
        w_val = np.array([eval_expr(e, env) for e in w], dtype=float)
        norm = float(w_val @ h_val @ w_val)
        if abs(norm - 1.0) > tol:
            raise ValueError(
                f"wind field is not h-unit at sample point {k}: "
                f"||W||_h^2 = {norm:.12g}"
            )


def _f_ab(space, env, y):
    a_val = _matrix_values(space.a, env)
    b_val = np.array([eval_expr(e, env) for e in space.b], dtype=float)
    yv = np.asarray(y, dtype=float)
    beta = float(b_val @ yv)
    if beta <= 0.0:
        raise ConicDomainError("beta must be positive for F = alpha^2/beta")
    return float(yv @ a_val @ yv) / beta


def _f_nav(space, env, y):
    h_val = _matrix_values(space.h, env)
    w_val = np.array([eval_expr(e, env) for e in space.w], dtype=float)
    yv = np.asarray(y, dtype=float)
    w0 = float((h_val @ w_val) @ yv)
    if w0 <= 0.0:
        raise ConicDomainError("W_0 must be positive for F = h^2/(2 W_0)")
    return float(yv @ h_val @ yv) / (2.0 * w0)


# -- conversions --------------------------------------------------------------


def ab_to_nav(space: KropinaSpace):
    """Navigation data (h, W) of the space; W is a tuple of ExprAst."""
    return space.h, space.w


def nav_to_ab(h, w, gauge=None, check_at=None):
    """(alpha, beta) data for navigation input, in the requested gauge.

    Returns (a, b): the view metric and the drift 1-form components.
    gauge defaults to the constant 2.  check_at points, when given,
    gate on ||W||_h = 1 to 1e-8 and raise ValueError otherwise.
    """
    space = KropinaSpace.from_nav(h, w, gauge=gauge, check_at=check_at)
    return space.a, space.b


# -- pointwise field bundle ----------------------------------------------------


class AbFields:
    """All x-level tensors of the (alpha, beta) view at one chart point.

    Derivative conventions: cov1[i, k] = b_{i;k} and cov2[k, i, j] =
    b_{k;i;j} with the Levi-Civita connection of a_ij; dr[i, j, k] =
    r_{ij;k} and dsv[j, k] = s_{j;k} differentiate the full tensors
    (the contracted forms s_j = b^i s_ij pick up a b^i_{;k} term).
    """

    def __init__(self, space: KropinaSpace, x):
        self.space = space
        self.x = np.asarray(x, dtype=float)
        self.n = space.dim
        self.mp = MetricPoint.from_exprs(space.a, list(self.x), order=2)
        self.fp = FieldPoint.from_exprs(
            self.mp, list(space.b_up), list(self.x), order=2
        )

    @cached_property
    def ainv(self):
        return self.mp.ginv

    @cached_property
    def bl(self):
        """Drift form values b_i."""
        return self.fp.w_low

    @cached_property
    def bu(self):
        """Raised drift values b^i."""
        return self.fp.w

    @cached_property
    def b2(self):
        v = float(self.bl @ self.bu)
        if v <= 1e-300:
            raise GaugeError("drift form vanishes: b^2 = 0 at this point")
        return v

    @cached_property
    def r(self):
        c = self.fp.cov1
        return 0.5 * (c + c.T)

    @cached_property
    def s(self):
        c = self.fp.cov1
        return 0.5 * (c - c.T)

    @cached_property
    def s_up(self):
        return self.ainv @ self.s

    @cached_property
    def r_up(self):
        return self.ainv @ self.r

    @cached_property
    def s_vec(self):
        return self.bu @ self.s

    @cached_property
    def r_vec(self):
        return self.bu @ self.r

    @cached_property
    def r_scalar(self):
        return float(self.r_vec @ self.bu)

    @cached_property
    def e_ij(self):
        return (
            self.r
            + np.outer(self.bl, self.s_vec)
            + np.outer(self.s_vec, self.bl)
        )

    @cached_property
    def dr(self):
        c2 = self.fp.cov2
        return 0.5 * (c2 + c2.transpose(1, 0, 2))

    @cached_property
    def ds(self):
        c2 = self.fp.cov2
        return 0.5 * (c2 - c2.transpose(1, 0, 2))

    @cached_property
    def dbu(self):
        """b^i_{;k}, raised with the (covariantly constant) metric."""
        return self.ainv @ self.fp.cov1

    @cached_property
    def dsv(self):
        """s_{j;k} for the contracted form s_j = b^i s_ij."""
        return np.einsum("ik,ij->jk", self.dbu, self.s) + np.einsum(
            "i,ijk->jk", self.bu, self.ds
        )

    @cached_property
    def drv(self):
        return np.einsum("ik,ij->jk", self.dbu, self.r) + np.einsum(
            "i,ijk->jk", self.bu, self.dr
        )

    @cached_property
    def div_s_up(self):
        """s^k_{j;k} as a covector in j."""
        return np.einsum("kl,ljk->j", self.ainv, self.ds)

    @cached_property
    def div_s(self):
        """s^k_{;k} for the raised contracted vector s^k = a^{kj} s_j."""
        return float(np.einsum("kj,jk->", self.ainv, self.dsv))

    @cached_property
    def ric(self):
        return self.mp.ricci

    @cached_property
    def gamma(self):
        return self.mp.christoffel

    @cached_property
    def trace_r_up(self):
        return float(np.trace(self.r_up))

    @cached_property
    def eta(self):
        """Trace proxy tr(a^{-1} r)/n; equals the conformal factor when
        r_ij is proportional to a_ij, which is the only regime where the
        downstream formulas consume it."""
        return self.trace_r_up / self.n

    @cached_property
    def eta_grad(self):
        space, x = self.space, self.x

        def eta_at(p):
            return _eta_hat(space, p)

        return np.array([
            fd_partial(eta_at, x, tuple(int(w == k) for w in range(self.n)))
            for k in range(self.n)
        ])

    @cached_property
    def _weight_jets(self):
        if self.space.weight is None:
            return 0.0, np.zeros(self.n), np.zeros((self.n, self.n))
        jets = eval_component_jets(self.space.weight, list(self.x), 2)
        val, grad, hess = _extract(jets, self.n, 2)
        return float(val), grad, hess

    @property
    def f_val(self):
        return self._weight_jets[0]

    @property
    def f_grad(self):
        return self._weight_jets[1]

    @property
    def f_hess(self):
        """Plain coordinate second partials of the weight, not covariant."""
        return self._weight_jets[2]


def _eta_hat(space: KropinaSpace, x):
    mp = MetricPoint.from_exprs(space.a, [float(v) for v in x], order=1)
    fp = FieldPoint.from_exprs(
        mp, list(space.b_up), [float(v) for v in x], order=1
    )
    c = fp.cov1
    r = 0.5 * (c + c.T)
    return float(np.trace(mp.ginv @ r)) / space.dim


def ab_fields(space: KropinaSpace, x) -> AbFields:
    return AbFields(space, x)


class AbInvariants:
    """Scalar contractions of the drift derivatives at one (x, y).

    Tensor-level data stays on .fields; everything y-contracted is a
    plain float attribute here.  Notation: a trailing 0 is contraction
    with y, a ';' in the docstrings below marks the covariant
    derivative taken before that contraction.
    """

    def __init__(self, fields: AbFields, y):
        f = fields
        y = np.asarray(y, dtype=float)
        self.fields = f
        self.y = y
        self.b2 = f.b2
        self.alpha2 = float(y @ f.mp.g @ y)
        self.beta = float(f.bl @ y)
        if self.beta <= 0.0:
            raise ConicDomainError(
                "beta(x, y) must be positive for Kropina contractions"
            )
        self.F = self.alpha2 / self.beta

        self.r_00 = float(y @ f.r @ y)
        self.r_0 = float(f.r_vec @ y)
        self.s_0 = float(f.s_vec @ y)
        self.s_i0 = f.s_up @ y              # s^i_0
        self.r_0i = f.r @ y                 # r_{0 i}
        self.r_scalar = f.r_scalar

        self.r00_0 = float(np.einsum("ijk,i,j,k->", f.dr, y, y, y))
        self.r00_b = float(np.einsum("ijk,i,j,k->", f.dr, y, y, f.bu))
        self.s0_0 = float(y @ f.dsv @ y)    # s_{0;0}
        self.s0_b = float(y @ f.dsv @ f.bu)  # b^k s_{0;k}
        self.r0_0 = float(y @ f.drv @ y)    # r_{0;0}
        self.div_s0 = float(f.div_s_up @ y)  # s^k_{0;k}
        self.div_s = f.div_s                 # s^k_{;k}

        self.sk_sk0 = float(f.s_vec @ self.s_i0)          # s_k s^k_0
        self.sksk = float(f.s_vec @ f.ainv @ f.s_vec)     # s^k s_k
        self.ss = float(np.einsum("ij,ji->", f.s_up, f.s_up))  # s^j_k s^k_j
        self.rk_sk0 = float(f.r_vec @ self.s_i0)          # r_k s^k_0
        self.r0k_sk = float(self.r_0i @ (f.ainv @ f.s_vec))  # r_{0k} s^k
        self.r0k_sk0 = float(self.r_0i @ self.s_i0)       # r_{0k} s^k_0

        self.f_0 = float(f.f_grad @ y)

    # tensor passthroughs, so callers need not reach into .fields

    @property
    def r_ij(self):
        return self.fields.r

    @property
    def s_ij(self):
        return self.fields.s

    @property
    def r_up(self):
        return self.fields.r_up

    @property
    def s_up(self):
        return self.fields.s_up

    @property
    def r_j(self):
        return self.fields.r_vec

    @property
    def s_j(self):
        return self.fields.s_vec

    @property
    def r_up_j(self):
        return self.fields.ainv @ self.fields.r_vec

    @property
    def s_up_j(self):
        return self.fields.ainv @ self.fields.s_vec

    @property
    def e_ij(self):
        return self.fields.e_ij

    @property
    def eta(self):
        return self.fields.eta

    @property
    def eta_k(self):
        return self.fields.eta_grad

    @property
    def eta_0(self):
        return float(self.fields.eta_grad @ self.y)


def ab_invariants(space: KropinaSpace, x, y) -> AbInvariants:
    """Every drift-derivative contraction the curvature formulas use."""
    return AbInvariants(AbFields(space, x), y)


# -- closed forms -------------------------------------------------------------


def _spray_closed(f: AbFields, y: np.ndarray) -> np.ndarray:
    a2 = float(y @ f.mp.g @ y)
    beta = float(f.bl @ y)
    if beta <= 0.0:
        raise ConicDomainError("beta must be positive in the conic domain")
    b2 = f.b2
    g_a = 0.5 * np.einsum("kij,i,j->k", f.gamma, y, y)
    s_i0 = f.s_up @ y
    s_0 = float(f.s_vec @ y)
    r_00 = float(y @ f.r @ y)
    correction = (
        -(a2 / (2.0 * beta)) * s_i0
        + ((a2 / beta) * s_0 + r_00) / (2.0 * b2) * f.bu
        - (s_0 + (beta / a2) * r_00) / b2 * y
    )
    return g_a + correction


def kropina_spray_closed(space: KropinaSpace, x, y) -> np.ndarray:
    """Geodesic coefficients G^i from the drift-derivative tensors."""
    return _spray_closed(AbFields(space, x), np.asarray(y, dtype=float))


def kropina_ricci_closed(space: KropinaSpace, x, y) -> float:
    """Ricci curvature as the base Ricci plus drift correction terms."""
    f = AbFields(space, x)
    y = np.asarray(y, dtype=float)
    inv = AbInvariants(f, y)
    n = f.n
    F = inv.F
    b2 = f.b2
    b4 = b2 * b2
    ric_a = float(y @ f.ric @ y)
    t = (
        3.0 * (n - 1) / (b4 * F * F) * inv.r_00 ** 2
        + (n - 1) / (F * b4) * (
            2.0 * inv.r_00 * inv.s_0
            - 4.0 * inv.r_00 * inv.r_0
            - 4.0 * F * inv.r_0 * inv.s_0
            - F * inv.s_0 ** 2
        )
        + (n - 1) / (b2 * F) * (
            inv.r00_0 + F * inv.s0_0 + F * F * inv.sk_sk0
        )
        + ((inv.r_0 + inv.s_0) ** 2
           - inv.r_scalar * (inv.r_00 + F * inv.s_0)) / b4
        + (
            F * inv.s0_b + inv.r00_b
            - (inv.r0_0 + inv.s0_0)
            + (inv.r_00 + F * inv.s_0) * f.trace_r_up
            + 2.0 * n * inv.r0k_sk0
            - F * inv.rk_sk0
            - F * inv.r0k_sk
            - 0.5 * F * F * inv.sksk
        ) / b2
        - F * inv.div_s0
        - 0.25 * F * F * inv.ss
    )
    return ric_a + t


def s_bh_closed(space: KropinaSpace, x, y) -> float:
    """S-curvature for the unit-ball volume normalisation."""
    f = AbFields(space, x)
    y = np.asarray(y, dtype=float)
    inv = AbInvariants(f, y)
    return (f.n + 1) / f.b2 * (inv.r_0 - inv.r_00 / inv.F)


def s_closed(space: KropinaSpace, x, y) -> float:
    """S-curvature for the weighted density e^{-(n+1) f} sigma."""
    f = AbFields(space, x)
    y = np.asarray(y, dtype=float)
    inv = AbInvariants(f, y)
    base = (f.n + 1) / f.b2 * (inv.r_0 - inv.r_00 / inv.F)
    return base + (f.n + 1) * inv.f_0


def s_dot_closed(space: KropinaSpace, x, y) -> float:
    """Horizontal derivative of the weighted S-curvature, per unit (n+1).

    Returns S-dot / (n+1); multiply by n+1 to compare with the generic
    pipeline's sdot value.
    """
    f = AbFields(space, x)
    y = np.asarray(y, dtype=float)
    inv = AbInvariants(f, y)
    b2 = f.b2
    b4 = b2 * b2
    a2 = inv.alpha2
    beta = inv.beta
    first = (
        inv.r0_0
        - (beta / a2) * inv.r00_0
        + (a2 / beta) * inv.rk_sk0
        - 2.0 * inv.r0k_sk0
    ) / b2
    second = (
        -((a2 / beta) * inv.s_0 + inv.r_00) * inv.r_scalar
        + (2.0 * beta / a2) * inv.r_00 * (3.0 * inv.r_0 - inv.s_0)
        + 2.0 * inv.r_0 * (inv.s_0 - inv.r_0)
        - 4.0 * (beta / a2) ** 2 * inv.r_00 ** 2
    ) / b4
    return first + second + _hess_weight(f, y)


def _hess_weight(f: AbFields, y: np.ndarray) -> float:
    if f.space.weight is None:
        return 0.0
    g = _spray_closed(f, y)
    return float(y @ f.f_hess @ y - 2.0 * f.f_grad @ g)


def hess_f_closed(space: KropinaSpace, x, y) -> float:
    """Geodesic Hessian form of the weight along the closed-form spray."""
    return _hess_weight(AbFields(space, x), np.asarray(y, dtype=float))


# -- isotropy decision ---------------------------------------------------------


@dataclass(frozen=True)
class IsotropyFit:
    """Least-squares fit of r_00 = eta * alpha^2 over a direction set."""

    eta: float
    residual: float     # rms of r_00(d) - eta alpha^2(d) over directions
    scale: float        # rms of r_00(d), the comparison magnitude
    isotropic: bool


def isotropy_fit(space: KropinaSpace, x, rel_tol=1e-8) -> IsotropyFit:
    """Decide numerically whether r_ij is proportional to a_ij at x.

    Solves for the proportionality factor over n(n+1)/2 independent
    directions and reports the fit residual; isotropy holds when the
    residual is below rel_tol times the size of r itself.
    """
    f = AbFields(space, x)
    n = f.n
    dirs = []
    for i in range(n):
        d = np.zeros(n)
        d[i] = 1.0
        dirs.append(d)
    for i in range(n):
        for j in range(i + 1, n):
            d = np.zeros(n)
            d[i] = d[j] = 1.0
            dirs.append(d)
    a_vals = np.array([d @ f.mp.g @ d for d in dirs])
    r_vals = np.array([d @ f.r @ d for d in dirs])
    scale = float(np.sqrt(np.mean(r_vals ** 2)))
    if scale < 1e-14 * max(1.0, float(np.sqrt(np.mean(a_vals ** 2)))):
        return IsotropyFit(0.0, 0.0, scale, True)
    eta, *_ = np.linalg.lstsq(a_vals[:, None], r_vals, rcond=None)
    eta = float(eta[0])
    residual = float(np.sqrt(np.mean((r_vals - eta * a_vals) ** 2)))
    return IsotropyFit(eta, residual, scale, residual <= rel_tol * scale)


# -- navigation-side curvature --------------------------------------------------


def nav_spray(h: RiemannianMetric, w, x, y) -> np.ndarray:
    """Geodesic coefficients straight from navigation data.

    G^i = G^i_h - F S^i_0 - (R_00 + 2 F S_0) / (2F) (y^i - F W^i),
    with R and S the symmetrised and skew covariant derivatives of the
    lowered wind.
    """
    w = _coerce_vector(w, h.dim, "wind")
    mp = MetricPoint.from_exprs(h, [float(v) for v in x], order=1)
    fp = FieldPoint.from_exprs(mp, list(w), [float(v) for v in x], order=1)
    wi = w_invariants_from_point(mp, fp)
    y = np.asarray(y, dtype=float)
    w0 = float(fp.w_low @ y)
    if w0 <= 0.0:
        raise ConicDomainError("W_0 must be positive in the conic domain")
    h2 = float(y @ mp.g @ y)
    if h2 <= 0.0:
        raise ValueError("y must be nonzero")
    F = h2 / (2.0 * w0)
    g_h = 0.5 * np.einsum("kij,i,j->k", mp.christoffel, y, y)
    s_i0 = wi.s_up @ y
    s_0 = float(wi.s_vec @ y)
    r_00 = float(y @ wi.r_ij @ y)
    return g_h - F * s_i0 - (r_00 + 2.0 * F * s_0) / (2.0 * F) * (y - F * fp.w)


def _nav_hypothesis(mp: MetricPoint, fp: FieldPoint, tol: float):
    """Gate for the isotropic-drift curvature formulas.

    They are only valid when the wind is Killing (symmetrised covariant
    derivative zero) and the skew contraction S_j vanishes; refuse to
    evaluate otherwise rather than return an unproven number.
    """
    wi = w_invariants_from_point(mp, fp)
    scale = max(1.0, float(np.linalg.norm(fp.cov1)))
    r_norm = float(np.linalg.norm(wi.r_ij))
    s_norm = float(np.linalg.norm(wi.s_vec))
    if r_norm > tol * scale:
        raise HypothesisNotMetError(
            f"wind is not Killing here: ||sym cov W|| = {r_norm:.3e} "
            f"exceeds {tol:.1e} * {scale:.3g}"
        )
    if s_norm > tol * scale:
        raise HypothesisNotMetError(
            f"skew contraction S_j does not vanish: ||S_j|| = {s_norm:.3e}"
        )
    return wi


def nav_riemann_isotropic(h: RiemannianMetric, w, x, y, tol=1e-8) -> np.ndarray:
    """Riemann curvature R^i_k from navigation data, Killing wind only.

    Index convention for the base curvature riem[p, i, k, q] =
    R_p^i_{kq}: the pure-metric spray curvature is riem contracted
    with y in slots p and q, which the generic pipeline confirms.
    """
    w = _coerce_vector(w, h.dim, "wind")
    xs = [float(v) for v in x]
    mp = MetricPoint.from_exprs(h, xs, order=2)
    fp = FieldPoint.from_exprs(mp, list(w), xs, order=1)
    wi = _nav_hypothesis(mp, fp, tol)
    y = np.asarray(y, dtype=float)
    w0 = float(fp.w_low @ y)
    if w0 <= 0.0:
        raise ConicDomainError("W_0 must be positive in the conic domain")
    h2 = float(y @ mp.g @ y)
    F = h2 / (2.0 * w0)
    wv = fp.w
    riem = mp.riemann
    xi_low = mp.g @ (y - F * wv)
    s_up = wi.s_up

    t1 = np.einsum("pikq,p,q->ik", riem, y, y)
    t2 = -2.0 * F * np.einsum("pikq,p,q->ik", riem, y, wv)
    v3 = np.einsum("pimq,p,m,q->i", riem, y, wv, y)
    t3 = -np.outer(v3, xi_low) / w0
    t4 = F * np.einsum("kimq,m,q->ik", riem, y, wv)
    t5 = -F * F * (s_up @ s_up)
    t6 = (F / w0) * np.outer(s_up @ (s_up @ y), xi_low)
    return t1 + t2 + t3 + t4 + t5 + t6


def nav_ricci_isotropic(h: RiemannianMetric, w, x, y, tol=1e-8) -> float:
    """Ricci curvature from navigation data, Killing wind only."""
    w = _coerce_vector(w, h.dim, "wind")
    xs = [float(v) for v in x]
    mp = MetricPoint.from_exprs(h, xs, order=2)
    fp = FieldPoint.from_exprs(mp, list(w), xs, order=1)
    wi = _nav_hypothesis(mp, fp, tol)
    y = np.asarray(y, dtype=float)
    w0 = float(fp.w_low @ y)
    if w0 <= 0.0:
        raise ConicDomainError("W_0 must be positive in the conic domain")
    h2 = float(y @ mp.g @ y)
    F = h2 / (2.0 * w0)
    ric = mp.ricci
    s_up = wi.s_up
    return float(
        y @ ric @ y
        - 2.0 * F * (y @ ric @ fp.w)
        - F * F * np.einsum("ij,ji->", s_up, s_up)
    )


def rs_from_RS(space: KropinaSpace, x, y):
    """(r_00, s^i_0, s_0) of the view metric from navigation-side data.

    Computes the drift-derivative contractions from the wind's
    covariant derivatives and the gauge's log-gradient instead of from
    the view metric directly; must agree with ab_invariants.
    """
    xs = [float(v) for v in x]
    mp = MetricPoint.from_exprs(space.h, xs, order=1)
    fp = FieldPoint.from_exprs(mp, list(space.w), xs, order=1)
    wi = w_invariants_from_point(mp, fp)
    rj = eval_component_jets(space.rho, xs, 1)
    rho_grad = np.asarray(rj.gradient())
    e2 = math.exp(-2.0 * rj.value)
    y = np.asarray(y, dtype=float)
    h2 = float(y @ mp.g @ y)
    w0 = float(fp.w_low @ y)
    w_rho = float(fp.w @ rho_grad)
    rho_0 = float(rho_grad @ y)
    rho_up = mp.ginv @ rho_grad
    big_r00 = float(y @ wi.r_ij @ y)
    big_si0 = wi.s_up @ y
    big_s0 = float(wi.s_vec @ y)
    r_00 = 2.0 * e2 * (big_r00 - w_rho * h2)
    s_i0 = 2.0 * (big_si0 + rho_up * w0 - rho_0 * fp.w)
    s_0 = 4.0 * e2 * (big_s0 + w_rho * w0 - rho_0)
    return r_00, s_i0, s_0


# -- volume densities and evaluators --------------------------------------------


def _sigma_bh_value(space: KropinaSpace, env):
    """(2/b)^n sqrt(det a) over a float or jet environment."""
    n = space.dim
    rows = [
        [eval_expr(space.a.exprs[i][j], env) for j in range(n)]
        for i in range(n)
    ]
    b = eval_expr(space.gauge, env)
    jet = next(
        (e for row in rows for e in row if isinstance(e, Jet)),
        b if isinstance(b, Jet) else None,
    )
    if jet is None:
        det = float(np.linalg.det(np.asarray(rows, dtype=float)))
        if det <= 0.0 or float(b) <= 0.0:
            raise GaugeError("degenerate view metric or gauge")
        return math.sqrt(det) * (2.0 / float(b)) ** n
    sp = jet.space
    rows = [
        [e if isinstance(e, Jet) else sp.constant(float(e)) for e in row]
        for row in rows
    ]
    if not isinstance(b, Jet):
        b = sp.constant(float(b))
    det = jet_det(rows)
    if det.value <= 0.0 or b.value <= 0.0:
        raise GaugeError("degenerate view metric or gauge")
    return det.sqrt() * (b.reciprocal() * 2.0) ** n


def sigma_bh(space: KropinaSpace, x) -> float:
    """Unit-ball volume density of the Kropina metric at x.

    The unit sublevel set {F < 1} is the ellipsoid |y - v|_a < b/2
    centred at v = a^{-1} b_low / 2, which integrates to the closed
    form (2/b)^n sqrt(det a); validated against Monte-Carlo estimates
    in the test suite.
    """
    return float(_sigma_bh_value(space, [float(v) for v in x]))


def bh_volume_density(space: KropinaSpace) -> VolumeDensity:
    def func(xs):
        return _sigma_bh_value(space, list(xs))

    return VolumeDensity(func, kind="Busemann-Hausdorff")


def volume_density(space: KropinaSpace) -> VolumeDensity:
    """The measure the S-curvature formulas refer to.

    Without a weight this is the unit-ball density; with a weight f it
    is e^{-(n+1) f} times that density.
    """
    if space.weight is None:
        return bh_volume_density(space)
    n1 = space.dim + 1

    def func(xs):
        base = _sigma_bh_value(space, list(xs))
        fv = eval_expr(space.weight, list(xs))
        arg = -float(n1) * fv
        damp = arg.exp() if isinstance(arg, Jet) else math.exp(arg)
        return damp * base

    return VolumeDensity(func, kind="weighted")


def finsler_evaluator(space: KropinaSpace, view="ab") -> FinslerEvaluator:
    """Package one view of the space for the generic pipeline.

    Both views describe the same metric, so their evaluators must agree
    everywhere; the choice only affects which expression trees do the
    work.  The box hint brackets the unit-ball ellipsoid exactly.
    """
    n = space.dim
    if view == "ab":
        a_exprs = space.a.exprs
        b_exprs = space.b

        def func(x, y):
            env = list(x)
            num = _quadratic_eval(a_exprs, env, y, n)
            den = None
            for i in range(n):
                t = eval_expr(b_exprs[i], env) * y[i]
                den = t if den is None else den + t
            return num / den

        def domain(x, y):
            env = list(x)
            den = None
            for i in range(n):
                t = eval_expr(b_exprs[i], env) * y[i]
                den = t if den is None else den + t
            return den > 0

    elif view == "nav":
        h_exprs = space.h.exprs
        w_exprs = space.w

        def func(x, y):
            env = list(x)
            num = _quadratic_eval(h_exprs, env, y, n)
            den = None
            for i in range(n):
                wl = None
                for j in range(n):
                    t = eval_expr(h_exprs[i][j], env) * eval_expr(
                        w_exprs[j], env
                    )
                    wl = t if wl is None else wl + t
                t = wl * y[i]
                den = t if den is None else den + t
            return num / (2.0 * den)

        def domain(x, y):
            env = list(x)
            den = None
            for i in range(n):
                wl = None
                for j in range(n):
                    t = eval_expr(h_exprs[i][j], env) * eval_expr(
                        w_exprs[j], env
                    )
                    wl = t if wl is None else wl + t
                t = wl * y[i]
                den = t if den is None else den + t
            return den > 0

    else:
        raise ValueError(f"view must be 'ab' or 'nav', got {view!r}")

    def box_hint(x):
        env = [float(v) for v in x]
        a_val = _matrix_values(space.a, env)
        b_val = np.array([eval_expr(e, env) for e in space.b], dtype=float)
        ainv = np.linalg.inv(a_val)
        centre = ainv @ b_val / 2.0
        b_norm = math.sqrt(float(b_val @ ainv @ b_val))
        half = 0.5 * b_norm * np.sqrt(np.diag(ainv))
        return centre - half, centre + half

    def bh_closed(x):
        return sigma_bh(space, x)

    return FinslerEvaluator(
        dim=n,
        func=func,
        domain=domain,
        name=f"{space.name}:{view}",
        box_hint=box_hint,
        bh_closed=bh_closed,
    )


def _quadratic_eval(exprs, env, y, n):
    acc = None
    for i in range(n):
        for j in range(n):
            t = eval_expr(exprs[i][j], env) * y[i] * y[j]
            acc = t if acc is None else acc + t
    return acc
