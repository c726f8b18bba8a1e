"""Jet arithmetic: frozen values, ring laws, and the fd cross-check."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kropina.expr import eval_expr, parse_expr
from kropina.fd import fd_partial
from kropina.jets import (
    Jet,
    JetDomainError,
    JetOrderError,
    jet_det,
    jet_inverse,
    jet_solve,
    jet_space,
)


def test_square_partial():
    s = jet_space(1, 2)
    x = s.variable(0, 3.0)
    f = x * x
    assert f.value == 9.0
    assert f.partial((1,)) == 6.0
    assert f.partial((2,)) == 2.0


def test_product_mixed_partial():
    s = jet_space(2, 2)
    x, y = s.seed([2.0, 5.0])
    f = x * y
    assert f.partial((1, 1)) == 1.0
    assert f.partial((1, 0)) == 5.0
    assert f.partial((0, 1)) == 2.0


def test_order_overflow_raises():
    s = jet_space(1, 2)
    x = s.variable(0, 1.0)
    with pytest.raises(JetOrderError):
        (x * x).partial((3,))


def test_reciprocal_series():
    # 1/(1+x) has Taylor coefficients (-1)^k at x=0
    s = jet_space(1, 4)
    x = s.variable(0, 0.0)
    f = 1.0 / (1.0 + x)
    for k in range(5):
        assert abs(f.coef[k] - (-1.0) ** k) < 1e-14


def test_exp_derivatives():
    s = jet_space(1, 4)
    x = s.variable(0, 0.7)
    f = x.exp()
    e = math.exp(0.7)
    for k in range(5):
        assert abs(f.partial((k,)) - e) < 1e-12 * e * math.factorial(k)


def test_log_sqrt_domain_errors():
    s = jet_space(1, 2)
    x = s.variable(0, -1.0)
    with pytest.raises(JetDomainError):
        x.log()
    with pytest.raises(JetDomainError):
        x.sqrt()
    z = s.variable(0, 0.0)
    with pytest.raises(JetDomainError):
        z.reciprocal()


def test_sin_cos_consistency():
    s = jet_space(1, 4)
    x = s.variable(0, 0.4)
    lhs = x.sin() * x.sin() + x.cos() * x.cos()
    assert abs(lhs.value - 1.0) < 1e-14
    for k in range(1, 5):
        assert abs(lhs.partial((k,))) < 1e-12


def test_integer_power_matches_repeated_product():
    s = jet_space(2, 3)
    x, y = s.seed([1.3, -0.4])
    f = x + 2.0 * y
    assert np.allclose((f**3).coef, (f * f * f).coef, rtol=0, atol=1e-13)


def test_negative_power():
    s = jet_space(1, 3)
    x = s.variable(0, 2.0)
    f = x**-2
    g = 1.0 / (x * x)
    assert np.allclose(f.coef, g.coef, rtol=1e-13)


def test_zero_base_power_ok_nonnegative():
    s = jet_space(1, 3)
    y = s.variable(0, 0.0)
    f = y**3
    assert f.value == 0.0
    assert f.partial((3,)) == 6.0


def test_deriv_view_matches_partials():
    s = jet_space(2, 3)
    x, y = s.seed([0.5, 1.5])
    f = x * x * y + y * y * x
    fx = f.deriv(0)
    assert fx.value == f.partial((1, 0))
    assert fx.partial((1, 1)) == f.partial((2, 1))


def test_truncate_keeps_prefix():
    s = jet_space(2, 3)
    x, y = s.seed([1.0, 2.0])
    f = x * y * y
    g = f.truncate(1)
    assert g.value == f.value
    assert g.partial((0, 1)) == f.partial((0, 1))


@st.composite
def int_jets(draw, nvars=2, order=3):
    s = jet_space(nvars, order)
    coef = draw(
        st.lists(
            st.integers(min_value=-8, max_value=8),
            min_size=s.ncoef,
            max_size=s.ncoef,
        )
    )
    return Jet(s, np.array(coef, dtype=float))


@settings(max_examples=60, deadline=None)
@given(int_jets(), int_jets(), int_jets())
def test_ring_laws_exact_on_integers(a, b, c):
    # small integer coefficients keep float arithmetic exact, so
    # associativity and distributivity must hold bitwise
    assert np.array_equal(((a * b) * c).coef, (a * (b * c)).coef)
    assert np.array_equal((a * (b + c)).coef, (a * b + a * c).coef)


@settings(max_examples=40, deadline=None)
@given(int_jets(), int_jets())
def test_commutativity_exact(a, b):
    assert np.array_equal((a * b).coef, (b * a).coef)


def test_jet_solve_and_det_against_numpy():
    rng = np.random.default_rng(11)
    s = jet_space(2, 2)
    for _ in range(5):
        base = rng.normal(size=(3, 3)) + 4.0 * np.eye(3)
        A = [[s.constant(base[i, j]) for j in range(3)] for i in range(3)]
        rhs_v = rng.normal(size=3)
        rhs = [s.constant(v) for v in rhs_v]
        sol = jet_solve(A, rhs)
        expect = np.linalg.solve(base, rhs_v)
        assert np.allclose([u.value for u in sol], expect, rtol=1e-12)
        assert abs(jet_det(A).value - np.linalg.det(base)) < 1e-10
        inv = jet_inverse(A)
        got = np.array([[inv[i][j].value for j in range(3)] for i in range(3)])
        assert np.allclose(got, np.linalg.inv(base), rtol=1e-11, atol=1e-12)


def _random_tame_expr(rng, dim):
    """Polynomial/trig expression with bounded coefficients."""
    terms = []
    for _ in range(rng.integers(1, 4)):
        c = round(float(rng.uniform(-2, 2)), 3)
        v1 = int(rng.integers(1, dim + 1))
        v2 = int(rng.integers(1, dim + 1))
        form = rng.integers(0, 4)
        if form == 0:
            terms.append(f"{c}*x{v1}*x{v2}")
        elif form == 1:
            terms.append(f"{c}*sin(x{v1})")
        elif form == 2:
            terms.append(f"{c}*cos(x{v1}*x{v2})")
        else:
            terms.append(f"{c}*x{v1}^2")
    return " + ".join(terms)


def test_jet_partials_match_fd_on_random_expressions():
    """200 random polynomial/trig expressions, all multi-indices of
    degree <= 3, relative agreement 1e-6 between jets and fd."""
    rng = np.random.default_rng(2024)
    dim = 2
    space = jet_space(dim, 3)
    idxs = [idx for idx in space.indices if 1 <= sum(idx) <= 3]
    for _ in range(200):
        text = _random_tame_expr(rng, dim)
        ast = parse_expr(text, dim)
        point = [float(v) for v in rng.uniform(-1, 1, size=dim)]
        jet_env = space.seed(point)
        jv = eval_expr(ast, jet_env)

        def fn(p, ast=ast):
            return eval_expr(ast, list(p))

        for idx in idxs:
            want = fd_partial(fn, point, idx)
            got = jv.partial(idx)
            assert abs(got - want) <= 1e-6 * max(1.0, abs(got), abs(want)), (
                text,
                idx,
                got,
                want,
            )
