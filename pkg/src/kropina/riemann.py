"""Riemannian metric calculus on chart expressions.

Everything at a chart point is driven by jets of the component
expressions: the metric and any field are evaluated once as jets over x,
the raw partials are extracted into numpy arrays, and the tensor algebra
proceeds by einsum.

Index conventions, fixed operationally by the convention self-test in the
test suite:

- christoffel()[k, i, j] = Gamma^k_ij
- riemann_h()[k, m, i, j] = R_k^m_ij, the array satisfying the Ricci
  identity  W_{k|i|j} - W_{k|j|i} = W_m R_k^m_ij  for covariant fields
- ricci_h()[k, j] = sum_m R_k^m_mj, positive for round spheres
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .expr import ExprAst, eval_expr
from .jets import Jet, jet_space


class NotPositiveDefiniteError(ValueError):
    """Metric failed the positive-definiteness check at a sample point."""


class SingularMetricError(ValueError):
    """Metric (or fundamental tensor) is numerically singular."""


@dataclass(frozen=True)
class RiemannianMetric:
    """Symmetric matrix of component expressions g_ij(x)."""

    dim: int
    exprs: tuple  # tuple of tuples of ExprAst

    def __post_init__(self):
        if len(self.exprs) != self.dim or any(
            len(row) != self.dim for row in self.exprs
        ):
            raise ValueError("metric expression matrix has wrong shape")
        for i in range(self.dim):
            for j in range(i + 1, self.dim):
                if self.exprs[i][j].root != self.exprs[j][i].root:
                    raise ValueError(
                        f"metric expressions not symmetric at ({i + 1},{j + 1})"
                    )


def metric_from_strings(rows, dim=None):
    from .expr import parse_expr

    n = dim or len(rows)
    return RiemannianMetric(
        n, tuple(tuple(parse_expr(e, n) for e in row) for row in rows)
    )


def eval_component_jets(exprs, x, order):
    """Evaluate a nested structure of ExprAst over x-jets.

    Returns a matching nested list of jets.  Constant expressions come
    back as floats from eval_expr and are lifted to constant jets here.
    """
    space = jet_space(len(x), order)
    env = space.seed(x)

    def ev(e):
        v = eval_expr(e, env)
        return v if isinstance(v, Jet) else space.constant(v)

    if isinstance(exprs, ExprAst):
        return ev(exprs)
    if isinstance(exprs[0], (list, tuple)):
        return [[ev(e) for e in row] for row in exprs]
    return [ev(e) for e in exprs]


def _extract(jets, n, order):
    """Pull value/first/second derivative arrays out of a jet structure."""
    if isinstance(jets, Jet):
        jets = [[jets]]
        shape = ()
    elif isinstance(jets[0], list):
        shape = (len(jets), len(jets[0]))
    else:
        jets = [jets]
        shape = (len(jets[0]),)

    rows, cols = len(jets), len(jets[0])
    val = np.empty((rows, cols))
    d1 = np.empty((rows, cols, n)) if order >= 1 else None
    d2 = np.empty((rows, cols, n, n)) if order >= 2 else None
    for i in range(rows):
        for j in range(cols):
            jv = jets[i][j]
            val[i, j] = jv.value
            if order >= 1:
                for k in range(n):
                    idx = tuple(1 if w == k else 0 for w in range(n))
                    d1[i, j, k] = jv.partial(idx)
            if order >= 2:
                for k in range(n):
                    for l in range(k, n):
                        idx = tuple(
                            (1 if w == k else 0) + (1 if w == l else 0)
                            for w in range(n)
                        )
                        d2[i, j, k, l] = d2[i, j, l, k] = jv.partial(idx)
    if shape == ():
        res = [val[0, 0]]
        if order >= 1:
            res.append(d1[0, 0])
        if order >= 2:
            res.append(d2[0, 0])
        return res
    if len(shape) == 1:
        res = [val[0]]
        if order >= 1:
            res.append(d1[0])
        if order >= 2:
            res.append(d2[0])
        return res
    res = [val]
    if order >= 1:
        res.append(d1)
    if order >= 2:
        res.append(d2)
    return res


class MetricPoint:
    """Metric data at one chart point: values, derivatives, curvature."""

    def __init__(self, g, dg=None, d2g=None):
        self.n = g.shape[0]
        self.g = g
        self.dg = dg
        self.d2g = d2g
        try:
            np.linalg.cholesky(g)
        except np.linalg.LinAlgError:
            raise NotPositiveDefiniteError(
                "metric is not positive definite at this point"
            ) from None

    @classmethod
    def from_exprs(cls, metric: RiemannianMetric, x, order=2):
        jets = eval_component_jets(metric.exprs, x, order)
        parts = _extract(jets, len(x), order)
        return cls(*parts)

    @cached_property
    def ginv(self):
        return np.linalg.inv(self.g)

    @cached_property
    def dginv(self):
        # d(g^-1)_k = -g^-1 dg_k g^-1
        return -np.einsum("ia,abk,bj->ijk", self.ginv, self.dg, self.ginv)

    @cached_property
    def christoffel(self):
        """Gamma[k, i, j] = 1/2 g^kl (d_i g_jl + d_j g_il - d_l g_ij)."""
        dg = self.dg
        return 0.5 * np.einsum(
            "kl,ijl->kij",
            self.ginv,
            np.einsum("jli->ijl", dg) + np.einsum("ilj->ijl", dg) - dg,
        )

    @cached_property
    def dchristoffel(self):
        """dGamma[k, i, j, m] = d_m Gamma^k_ij."""
        dg, d2g = self.dg, self.d2g
        inner = (
            np.einsum("jlim->ijlm", d2g)
            + np.einsum("iljm->ijlm", d2g)
            - np.einsum("ijlm->ijlm", d2g)
        )
        term1 = 0.5 * np.einsum("klm,ijl->kijm", self.dginv,
                                np.einsum("jli->ijl", dg) + np.einsum("ilj->ijl", dg) - dg)
        term2 = 0.5 * np.einsum("kl,ijlm->kijm", self.ginv, inner)
        return term1 + term2

    @cached_property
    def riemann(self):
        """Riem[k, m, i, j] = R_k^m_ij (see module docstring)."""
        G, dG = self.christoffel, self.dchristoffel
        out = (
            np.einsum("mjki->kmij", dG)
            - np.einsum("mikj->kmij", dG)
            + np.einsum("mip,pjk->kmij", G, G)
            - np.einsum("mjp,pik->kmij", G, G)
        )
        return out

    @cached_property
    def ricci(self):
        return np.einsum("kmmj->kj", self.riemann)

    @cached_property
    def lowered_riemann(self):
        """R_kmij = g_mp R_k^p_ij."""
        return np.einsum("mp,kpij->kmij", self.g, self.riemann)


def christoffel(metric: RiemannianMetric, x):
    return MetricPoint.from_exprs(metric, x, order=1).christoffel


def riemann_h(metric: RiemannianMetric, x):
    return MetricPoint.from_exprs(metric, x, order=2).riemann


def ricci_h(metric: RiemannianMetric, x):
    return MetricPoint.from_exprs(metric, x, order=2).ricci


def hess_h(f: ExprAst, metric: RiemannianMetric, x):
    """Covariant Hessian f_{i|j} = d_i d_j f - Gamma^m_ij d_m f."""
    mp = MetricPoint.from_exprs(metric, x, order=1)
    fj = eval_component_jets(f, x, 2)
    _, df, d2f = _extract(fj, len(x), 2)
    return d2f - np.einsum("mij,m->ij", mp.christoffel, df)


class FieldPoint:
    """A vector field W^i at a point, with covariant derivative data."""

    def __init__(self, mp: MetricPoint, w, dw=None, d2w=None):
        self.mp = mp
        self.w = w
        self.dw = dw
        self.d2w = d2w

    @classmethod
    def from_exprs(cls, mp: MetricPoint, w_exprs, x, order=2):
        jets = eval_component_jets(list(w_exprs), x, order)
        parts = _extract(jets, len(x), order)
        return cls(mp, *parts)

    @cached_property
    def w_low(self):
        return self.mp.g @ self.w

    @cached_property
    def dw_low(self):
        # d_k (g_ij W^j)
        return np.einsum("ijk,j->ik", self.mp.dg, self.w) + np.einsum(
            "ij,jk->ik", self.mp.g, self.dw
        )

    @cached_property
    def d2w_low(self):
        g, dg, d2g = self.mp.g, self.mp.dg, self.mp.d2g
        return (
            np.einsum("ijkl,j->ikl", d2g, self.w)
            + np.einsum("ijk,jl->ikl", dg, self.dw)
            + np.einsum("ijl,jk->ikl", dg, self.dw)
            + np.einsum("ij,jkl->ikl", g, self.d2w)
        )

    @cached_property
    def cov1(self):
        """cov1[i, k] = W_{i|k} (lowered field, Levi-Civita connection)."""
        return self.dw_low - np.einsum(
            "mik,m->ik", self.mp.christoffel, self.w_low
        )

    @cached_property
    def cov2(self):
        """cov2[k, i, j] = W_{k|i|j} = (W_{k|i})_{|j}."""
        G, dG = self.mp.christoffel, self.mp.dchristoffel
        dcov1 = (
            self.d2w_low
            - np.einsum("mkij,m->kij", dG, self.w_low)
            - np.einsum("mki,mj->kij", G, self.dw_low)
        )
        return (
            dcov1
            - np.einsum("mkj,mi->kij", G, self.cov1)
            - np.einsum("mij,km->kij", G, self.cov1)
        )


@dataclass(frozen=True)
class WInvariants:
    """Symmetrised / antisymmetrised covariant derivatives of a field."""

    r_ij: np.ndarray  # 1/2 (W_{i|j} + W_{j|i})
    s_ij: np.ndarray  # 1/2 (W_{i|j} - W_{j|i})
    s_up: np.ndarray  # S^i_j = g^ik S_kj
    s_vec: np.ndarray  # S_j = W^i S_ij
    r_vec: np.ndarray  # R_j = W^i R_ij
    r_scalar: float  # R_j W^j


def w_invariants(metric: RiemannianMetric, w_exprs, x) -> WInvariants:
    mp = MetricPoint.from_exprs(metric, x, order=2)
    fp = FieldPoint.from_exprs(mp, w_exprs, x, order=1)
    return w_invariants_from_point(mp, fp)


def w_invariants_from_point(mp: MetricPoint, fp: FieldPoint) -> WInvariants:
    c = fp.cov1
    r = 0.5 * (c + c.T)
    s = 0.5 * (c - c.T)
    s_up = mp.ginv @ s
    s_vec = fp.w @ s
    r_vec = fp.w @ r
    return WInvariants(r, s, s_up, s_vec, r_vec, float(r_vec @ fp.w))


def second_cov_w(metric: RiemannianMetric, w_exprs, x):
    """W_{k|i|j} as a (k, i, j)-indexed array."""
    mp = MetricPoint.from_exprs(metric, x, order=2)
    fp = FieldPoint.from_exprs(mp, w_exprs, x, order=2)
    return fp.cov2
