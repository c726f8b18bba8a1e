"""Weighted Ricci family, the (theta, sigma) fit, and the four checkers."""
import json
import math
from fractions import Fraction

import numpy as np
import pytest

from kropina.expr import eval_expr, parse_expr
from kropina.forms import (
    KropinaSpace,
    ab_fields,
    ab_invariants,
    kropina_ricci_closed,
)
from kropina.einstein import (
    ConditionResult,
    DispatchError,
    EinsteinAnsatz,
    TheoremReport,
    WeightConfig,
    einstein_residual,
    fit_theta_sigma,
    poly_divisible_by_alpha2,
    pric,
    pric_constants,
    ric_ac,
    ric_ac_via_projective,
    tensor_einstein_check,
    thm41_check,
    thm44_check,
    thm51_check,
    thm61_check,
    weight_constants,
    weight_preset,
    weighted_ricci_tensor,
)
from kropina.riemann import (
    NotPositiveDefiniteError,
    metric_from_strings,
    ricci_h,
)

EUCLID3 = metric_from_strings([["1", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]])
SPHERE3 = metric_from_strings(
    [["1", "0", "0"], ["0", "sin(x1)^2", "0"], ["0", "0", "cos(x1)^2"]]
)
HOPF_W = ("0", "1", "1")
HOPF_SHIFT = (0.7, 0.3, 0.5)
GAUSS_F = "0.1*(x1^2 + x2^2 + x3^2)"
TWIST_W = ("cos(0.5*x2)", "sin(0.5*x2)", "0")


def hopf_space(weight=None):
    return KropinaSpace.from_nav(SPHERE3, HOPF_W, weight=weight, name="s3_hopf")


def gauss_space():
    return KropinaSpace.from_nav(
        EUCLID3, ("1", "0", "0"), weight=GAUSS_F, name="euclid_gaussian"
    )


def parallel_space():
    return KropinaSpace.from_nav(EUCLID3, ("1", "0", "0"), name="flat_wind")


def twist_space():
    return KropinaSpace.from_nav(EUCLID3, TWIST_W, name="euclid_twist")


def conformal_space():
    return KropinaSpace.from_ab(
        EUCLID3, ("0.4*x1", "0.4*x2", "0.4*x3"),
        weight="0.3*x1 + 0.1*x2^2", name="conformal",
    )


def wavy_space():
    a = metric_from_strings([
        ["1 + 0.1*sin(x2)", "0.05*x3", "0"],
        ["0.05*x3", "1 + 0.1*x1^2", "0"],
        ["0", "0", "1 + 0.05*x1"],
    ])
    return KropinaSpace.from_ab(
        a, ("1 + 0.05*x2", "0.1*x1", "0.05"),
        weight="0.2*x1 + 0.1*x2*x3", name="wavy",
    )


def admissible_directions(space, x, rng, count, cutoff=0.05):
    fld = ab_fields(space, x)
    out = []
    while len(out) < count:
        y = rng.normal(size=space.dim)
        beta = float(fld.bl @ y)
        if beta < 0.0:
            y, beta = -y, -beta
        norm = math.sqrt(float(y @ fld.mp.g @ y))
        if beta > cutoff * norm * math.sqrt(fld.b2):
            out.append(y)
    return out


def checker_samples(space, rng, points=2, dirs=7, shift=(0.0, 0.0, 0.0),
                    scale=0.25):
    shift = np.asarray(shift, dtype=float)
    samples = []
    for _ in range(points):
        x = shift + scale * rng.uniform(-1.0, 1.0, space.dim)
        samples.append((x, admissible_directions(space, x, rng, dirs)))
    return samples


CFG_INF = weight_preset("ricInf", 3)
CFG_51 = WeightConfig(Fraction(0), Fraction(3, 8), 3)  # kappa=2, nu=0
CFG_PRIC = weight_preset("pric", 3)


# -- weight constants and regimes ----------------------------------------------


def test_weight_constants_examples():
    kappa, nu = weight_constants(1, 0, 3)
    assert kappa == -2.0 and nu == -10.0
    kappa, nu = weight_constants(0, 0, 3)
    assert kappa == 2.0 and nu == 6.0
    a, c = pric_constants(3)
    kappa, nu = weight_constants(a, c, 3)
    assert kappa == 0.0 and nu == 0.0
    with pytest.raises(ValueError):
        weight_constants(1, 0, 1)


def test_ricn_preset():
    cfg = weight_preset("ricN:5", 3)
    assert float(cfg.a) == 1.0
    assert cfg.c == Fraction(1, 2)
    with pytest.raises(ValueError):
        weight_preset("ricN:3", 3)
    with pytest.raises(ValueError):
        weight_preset("nonsense", 3)


def test_ricinf_nu_value():
    # kappa = -2 in every dimension; nu = -(n + 7)
    for n in (2, 3, 4):
        cfg = weight_preset("ricInf", n)
        assert cfg.kappa == -2.0
        assert cfg.nu == -(n + 7)


def test_pric_constants_exact_zero():
    for n in (2, 3, 4):
        cfg = weight_preset("pric", n)
        assert cfg.kappa_exact == 0
        assert cfg.nu_exact == 0
        assert cfg.regime == "nu=0,kappa=0"
        assert cfg.checkers == ("61",)


def test_regime_classification():
    assert CFG_INF.regime == "nu!=0"
    assert CFG_INF.checkers == ("41", "44")
    assert CFG_51.regime == "nu=0,kappa!=0"
    assert CFG_51.checkers == ("51",)
    # float constants that only round onto the boundary still classify
    # as on it: a = 0, c = 9/25 at n = 4 gives nu = 0 up to rounding
    cfg = WeightConfig(0.0, 9 / 25, 4)
    assert cfg.regime == "nu=0,kappa!=0"


def test_regime_dispatch_total():
    rng = np.random.default_rng(31)
    seen = set()
    for _ in range(60):
        if rng.random() < 0.5:
            a = Fraction(int(rng.integers(-8, 9)), int(rng.integers(1, 7)))
            c = Fraction(int(rng.integers(-8, 9)), int(rng.integers(1, 7)))
        else:
            a = float(rng.uniform(-2, 2))
            c = float(rng.uniform(-2, 2))
        cfg = WeightConfig(a, c, int(rng.integers(2, 5)))
        assert cfg.regime in ("nu!=0", "nu=0,kappa!=0", "nu=0,kappa=0")
        assert len(cfg.checkers) >= 1
        seen.add(cfg.regime)
    assert "nu!=0" in seen


def test_weight_config_parses_string_weight():
    cfg = WeightConfig(1, 0, 3, f="0.2*x1")
    assert cfg.f is not None
    assert eval_expr(cfg.f, [1.0, 0.0, 0.0]) == pytest.approx(0.2)
    cfg2 = cfg.with_weight("x2^2")
    assert eval_expr(cfg2.f, [0.0, 3.0, 0.0]) == pytest.approx(9.0)


# -- the curvature family -------------------------------------------------------


def test_ric_ac_plain_is_unweighted_ricci():
    space = wavy_space()
    cfg = weight_preset("plain", 3)
    rng = np.random.default_rng(7)
    x = np.array([0.2, 0.4, -0.3])
    for y in admissible_directions(space, x, rng, 4):
        assert ric_ac(space, cfg, x, y) == pytest.approx(
            kropina_ricci_closed(space, x, y), rel=1e-12, abs=1e-12
        )


def test_ric_ac_routes_agree():
    space = wavy_space()
    rng = np.random.default_rng(8)
    for cfg in (CFG_INF, weight_preset("ricN:5", 3), CFG_PRIC):
        for shift in ((0.0, 0.0, 0.0), (0.3, -0.2, 0.1)):
            x = np.asarray(shift) + 0.1 * rng.uniform(-1, 1, 3)
            for y in admissible_directions(space, x, rng, 5):
                closed = ric_ac(space, cfg, x, y, route="closed")
                generic = ric_ac(space, cfg, x, y, route="generic")
                assert closed == pytest.approx(
                    generic, rel=1e-5, abs=1e-5 * max(1.0, abs(closed))
                )
    with pytest.raises(ValueError):
        ric_ac(space, CFG_INF, x, y, route="sideways")


def test_gwric2_identity_random_constants():
    space = wavy_space()
    rng = np.random.default_rng(9)
    x = np.array([0.2, 0.4, -0.3])
    ys = admissible_directions(space, x, rng, 3)
    for _ in range(10):
        cfg = WeightConfig(float(rng.uniform(-1.5, 1.5)),
                           float(rng.uniform(-1.5, 1.5)), 3)
        for y in ys:
            direct = ric_ac(space, cfg, x, y)
            via = ric_ac_via_projective(space, cfg, x, y)
            assert direct == pytest.approx(
                via, rel=1e-8, abs=1e-8 * max(1.0, abs(direct))
            )


def test_pric_matches_ric_ac_at_projective_constants():
    rng = np.random.default_rng(10)
    for space, shift in ((hopf_space(), HOPF_SHIFT), (wavy_space(), (0, 0, 0))):
        x = np.asarray(shift, dtype=float)
        for y in admissible_directions(space, x, rng, 4):
            assert pric(space, x, y) == pytest.approx(
                ric_ac(space, CFG_PRIC, x, y), rel=1e-8, abs=1e-12
            )


def test_hopf_ric_ac_weight_independent():
    # S = 0 on the Killing example, so every (a, c) sees the plain Ricci
    space = hopf_space()
    rng = np.random.default_rng(12)
    x = np.array(HOPF_SHIFT)
    for y in admissible_directions(space, x, rng, 3):
        base = kropina_ricci_closed(space, x, y)
        inv = ab_invariants(space, x, y)
        assert base == pytest.approx(2.0 * inv.F**2, rel=1e-9)
        for cfg in (CFG_INF, CFG_51, CFG_PRIC):
            assert ric_ac(space, cfg, x, y) == pytest.approx(base, rel=1e-10)


# -- einstein residual and fit --------------------------------------------------


def test_einstein_residual_known_pair_on_hopf():
    space = hopf_space()
    rng = np.random.default_rng(13)
    x = np.array(HOPF_SHIFT)
    ansatz = EinsteinAnsatz((0.0, 0.0, 0.0), 1.0)
    for y in admissible_directions(space, x, rng, 4):
        assert abs(einstein_residual(space, CFG_INF, ansatz, x, y)) < 1e-9


def test_einstein_residual_sigma_perturbation():
    space = hopf_space()
    rng = np.random.default_rng(14)
    x = np.array(HOPF_SHIFT)
    delta = 0.37
    base = EinsteinAnsatz((0.0, 0.0, 0.0), 1.0)
    bumped = EinsteinAnsatz((0.0, 0.0, 0.0), 1.0 + delta)
    for y in admissible_directions(space, x, rng, 4):
        inv = ab_invariants(space, x, y)
        r0 = einstein_residual(space, CFG_INF, base, x, y)
        r1 = einstein_residual(space, CFG_INF, bumped, x, y)
        assert r1 - r0 == pytest.approx(-(3 - 1) * delta * inv.F**2, rel=1e-9)


def test_fit_recovers_hopf_pair():
    space = hopf_space()
    rng = np.random.default_rng(15)
    x = np.array(HOPF_SHIFT)
    fit = fit_theta_sigma(space, CFG_INF, x, admissible_directions(space, x, rng, 9))
    assert fit.provenance == "fitted"
    assert fit.residual < 1e-9
    assert np.abs(np.array(fit.theta)).max() < 1e-7
    assert fit.sigma == pytest.approx(1.0, abs=1e-7)


def test_fit_recovers_gaussian_pair():
    space = gauss_space()
    rng = np.random.default_rng(16)
    x = np.array([0.3, -0.2, 0.5])
    fit = fit_theta_sigma(space, CFG_INF, x, admissible_directions(space, x, rng, 9))
    assert fit.theta[0] == pytest.approx(2 * 4 * 0.2 / (3 * 2), abs=1e-7)
    assert abs(fit.theta[1]) < 1e-7 and abs(fit.theta[2]) < 1e-7
    assert abs(fit.sigma) < 1e-7
    assert fit.residual < 1e-9


def test_fit_flat_is_zero():
    space = parallel_space()
    rng = np.random.default_rng(17)
    x = np.array([0.1, 0.2, 0.3])
    fit = fit_theta_sigma(space, CFG_INF, x, admissible_directions(space, x, rng, 8))
    assert np.abs(np.array(fit.theta)).max() < 1e-12
    assert abs(fit.sigma) < 1e-12


def test_fit_errors():
    space = hopf_space()
    rng = np.random.default_rng(18)
    x = np.array(HOPF_SHIFT)
    ys = admissible_directions(space, x, rng, 4)
    with pytest.raises(ValueError, match="at least"):
        fit_theta_sigma(space, CFG_INF, x, ys)
    dup = [ys[0]] * 7
    with pytest.raises(ValueError, match="rank"):
        fit_theta_sigma(space, CFG_INF, x, dup)


def test_ansatz_provenance_rules():
    with pytest.raises(ValueError):
        EinsteinAnsatz((0, 0, 0), 1.0, provenance="guessed")
    with pytest.raises(ValueError):
        EinsteinAnsatz((0, 0, 0), 1.0, provenance="fitted")  # no residual


# -- pointwise tensor test ------------------------------------------------------


def test_tensor_check_multiple_of_metric():
    h = np.eye(3)
    mu, resid = tensor_einstein_check(5.0 * h, h)
    assert mu == pytest.approx(2.5)
    assert resid < 1e-14


def test_tensor_check_round_sphere():
    x = [0.7, 0.3, 0.5]
    T = ricci_h(SPHERE3, x)
    mu, resid = tensor_einstein_check(T, SPHERE3, x)
    assert mu == pytest.approx(1.0, rel=1e-10)
    assert resid < 1e-10


def test_tensor_check_gaussian_weight():
    cfg = CFG_INF
    x = [0.4, -0.1, 0.2]
    T = weighted_ricci_tensor(EUCLID3, GAUSS_F, cfg, x)
    mu, resid = tensor_einstein_check(T, EUCLID3, x)
    # Hess of the quadratic weight is 2*0.1*I, so mu = a(n+1)*0.2/(n-1)
    assert mu == pytest.approx(1.0 * 4 * 0.2 / 2, rel=1e-12)
    assert resid < 1e-12


def test_tensor_check_rejects_indefinite_metric():
    with pytest.raises(NotPositiveDefiniteError):
        tensor_einstein_check(np.eye(3), np.diag([1.0, -1.0, 1.0]))


# -- polynomial divisibility ----------------------------------------------------


def test_divisibility_recovers_linear_factor():
    rng = np.random.default_rng(19)
    a = np.array([[2.0, 0.3, 0.0], [0.3, 1.5, 0.1], [0.0, 0.1, 1.0]])
    v = rng.normal(size=3)
    coeffs = (
        np.einsum("i,jk->ijk", v, a)
        + np.einsum("j,ik->ijk", v, a)
        + np.einsum("k,ij->ijk", v, a)
    ) / 3.0
    q, resid = poly_divisible_by_alpha2(coeffs, a)
    assert np.abs(q - v).max() < 1e-12
    assert resid < 1e-12


def test_divisibility_rejects_pure_cube():
    coeffs = np.zeros((3, 3, 3))
    coeffs[0, 0, 0] = 1.0  # y1^3 is not divisible by a Euclidean alpha^2
    q, resid = poly_divisible_by_alpha2(coeffs, np.eye(3))
    assert resid > 1e-2


def test_divisibility_zero_in_zero_out():
    q, resid = poly_divisible_by_alpha2(np.zeros((3, 3, 3)), np.eye(3))
    assert np.abs(q).max() == 0.0
    assert resid == 0.0


def test_divisibility_degree_two_and_four():
    a = np.array([[1.3, 0.2, 0.0], [0.2, 0.9, 0.0], [0.0, 0.0, 1.1]])
    q, resid = poly_divisible_by_alpha2(4.2 * a, a)
    assert q == pytest.approx(4.2)
    assert resid < 1e-12
    qm = np.array([[0.5, 0.1, 0.0], [0.1, -0.3, 0.2], [0.0, 0.2, 0.8]])
    coeffs = (
        np.einsum("ij,kl->ijkl", qm, a)
        + np.einsum("ik,jl->ijkl", qm, a)
        + np.einsum("il,jk->ijkl", qm, a)
    ) / 3.0
    got, resid = poly_divisible_by_alpha2(coeffs, a)
    assert np.abs(got - qm).max() < 1e-10
    assert resid < 1e-10
    with pytest.raises(ValueError):
        poly_divisible_by_alpha2(np.zeros((3,) * 5), a)


# -- thm41 ----------------------------------------------------------------------


def test_thm41_hopf_passes():
    rng = np.random.default_rng(21)
    space = hopf_space()
    samples = checker_samples(space, rng, shift=HOPF_SHIFT)
    rep = thm41_check(SPHERE3, HOPF_W, None, CFG_INF, samples)
    assert rep.verdict == "PASS"
    assert rep.passed
    for mu in rep.scalars["mu"]:
        assert mu == pytest.approx(1.0, rel=1e-9)
    for s_f, s_p in zip(rep.scalars["sigma_formula"], rep.scalars["sigma_proof"]):
        assert s_f == pytest.approx(1.0, rel=1e-9)
        assert s_p == pytest.approx(1.0, rel=1e-9)
    for th in rep.scalars["theta_formula"]:
        assert np.abs(th).max() < 1e-12


def test_thm41_gaussian_passes_with_nonzero_theta():
    rng = np.random.default_rng(22)
    space = gauss_space()
    samples = checker_samples(space, rng, shift=(0.2, -0.1, 0.3))
    rep = thm41_check(EUCLID3, ("1", "0", "0"), GAUSS_F, CFG_INF, samples)
    assert rep.verdict == "PASS"
    assert rep.condition("einstein-residual-fitted").residual < 1e-6
    assert rep.condition("einstein-residual-formula").residual < 1e-6
    for th_formula, th_fit in zip(rep.scalars["theta_formula"],
                                  rep.scalars["theta_fitted"]):
        assert th_formula[0] == pytest.approx(0.8 / 3, rel=1e-8)
        assert th_fit[0] == pytest.approx(0.8 / 3, rel=1e-6)
        assert abs(th_fit[0]) > 1e-3  # genuinely nonzero theta
    for mu in rep.scalars["mu"]:
        assert mu == pytest.approx(0.4, rel=1e-9)
    for s in rep.scalars["sigma_formula"]:
        assert abs(s) < 1e-10


def test_thm41_flat_all_zero():
    rng = np.random.default_rng(23)
    space = parallel_space()
    samples = checker_samples(space, rng)
    rep = thm41_check(EUCLID3, ("1", "0", "0"), None, CFG_INF, samples)
    assert rep.verdict == "PASS"
    assert all(abs(m) < 1e-12 for m in rep.scalars["mu"])
    assert all(abs(s) < 1e-12 for s in rep.scalars["sigma_formula"])


def test_thm41_twist_fails_on_wind_killing():
    rng = np.random.default_rng(24)
    space = twist_space()
    samples = checker_samples(space, rng)
    rep = thm41_check(EUCLID3, TWIST_W, None, CFG_INF, samples)
    assert rep.verdict == "FAIL"
    assert not rep.condition("wind-killing").passed
    # the disagreement between formula and fit is surfaced, not averaged
    assert not rep.condition("theta-sigma-fit-agreement").passed


def test_thm41_dispatch_error_outside_regime():
    rng = np.random.default_rng(25)
    space = hopf_space()
    samples = checker_samples(space, rng, points=1, shift=HOPF_SHIFT)
    with pytest.raises(DispatchError):
        thm41_check(SPHERE3, HOPF_W, None, CFG_PRIC, samples)


def test_thm41_rejects_non_unit_wind():
    rng = np.random.default_rng(26)
    space = parallel_space()
    samples = checker_samples(space, rng, points=1)
    with pytest.raises(ValueError, match="h-unit"):
        thm41_check(EUCLID3, ("2", "0", "0"), None, CFG_INF, samples)


# -- thm44 ----------------------------------------------------------------------


def test_thm44_hopf_passes_lambda32():
    rng = np.random.default_rng(27)
    space = hopf_space()
    samples = checker_samples(space, rng, shift=HOPF_SHIFT)
    rep = thm44_check(space, CFG_INF, samples)
    assert rep.verdict == "PASS"
    for lam in rep.scalars["lambda"]:
        assert lam == pytest.approx(32.0, rel=1e-9)
    for s in rep.scalars["sigma_formula"]:
        assert s == pytest.approx(1.0, rel=1e-9)


def test_thm44_gaussian_passes():
    rng = np.random.default_rng(28)
    space = gauss_space()
    samples = checker_samples(space, rng, shift=(0.1, 0.2, -0.2))
    rep = thm44_check(space, CFG_INF, samples)
    assert rep.verdict == "PASS"
    for lam in rep.scalars["lambda"]:
        assert lam == pytest.approx(16 * 4 * 0.2, rel=1e-8)


def test_thm44_twist_precondition_verdict():
    rng = np.random.default_rng(29)
    space = twist_space()
    samples = checker_samples(space, rng)
    rep = thm44_check(space, CFG_INF, samples)
    assert rep.verdict == "PRECONDITION"
    iso = rep.condition("isotropy")
    assert iso.kind == "precondition"
    assert not iso.passed


def test_thm44_dispatch():
    rng = np.random.default_rng(30)
    space = hopf_space()
    samples = checker_samples(space, rng, points=1, shift=HOPF_SHIFT)
    with pytest.raises(DispatchError):
        thm44_check(space, CFG_51, samples)


# -- thm51 ----------------------------------------------------------------------


def test_thm51_hopf_passes_u32():
    rng = np.random.default_rng(32)
    space = hopf_space()
    samples = checker_samples(space, rng, shift=HOPF_SHIFT)
    rep = thm51_check(space, CFG_51, samples)
    assert rep.verdict == "PASS"
    for u in rep.scalars["u"]:
        assert u == pytest.approx(32.0, rel=1e-9)
    for z in rep.scalars["zeta"]:
        assert np.abs(z).max() < 1e-10


def test_thm51_flat_passes():
    rng = np.random.default_rng(33)
    space = parallel_space()
    samples = checker_samples(space, rng)
    rep = thm51_check(space, CFG_51, samples)
    assert rep.verdict == "PASS"


def test_thm51_conformal_zeta_matches_closed_form():
    # not Einstein, but the cubic slot is exactly divisible and zeta has
    # the closed form kappa (b^2 deta + 2 eta (r + s)) + 2(3 kappa
    # - a(n+1)) b^2 eta df on a conformal drift
    rng = np.random.default_rng(34)
    space = conformal_space()
    x = np.array([0.4, -0.3, 0.6])
    samples = [(x, admissible_directions(space, x, rng, 7))]
    rep = thm51_check(space, CFG_51, samples)
    div = rep.condition("cubic-divisibility")
    assert div.kind == "precondition"
    assert div.passed
    zeta = np.array(rep.scalars["zeta"][0])
    fld = ab_fields(space, x)
    eta = 0.4
    kap = CFG_51.kappa
    expect = (
        kap * (fld.b2 * fld.eta_grad + 2 * eta * fld.r_vec + 2 * eta * fld.s_vec)
        + 2 * (3 * kap - float(CFG_51.a) * 4) * fld.b2 * eta * fld.f_grad
    )
    assert np.abs(zeta - expect).max() < 1e-8
    # the drift is conformal but the space is not weakly Einstein here
    assert rep.verdict == "FAIL"


def test_thm51_dispatch():
    rng = np.random.default_rng(35)
    space = hopf_space()
    samples = checker_samples(space, rng, points=1, shift=HOPF_SHIFT)
    with pytest.raises(DispatchError):
        thm51_check(space, CFG_INF, samples)


# -- thm61 ----------------------------------------------------------------------


def test_thm61_hopf_passes_u32():
    rng = np.random.default_rng(36)
    space = hopf_space()
    samples = checker_samples(space, rng, shift=HOPF_SHIFT)
    rep = thm61_check(space, samples)
    assert rep.verdict == "PASS"
    for u in rep.scalars["u"]:
        assert u == pytest.approx(32.0, rel=1e-9)


def test_thm61_flat_passes():
    rng = np.random.default_rng(37)
    space = parallel_space()
    samples = checker_samples(space, rng)
    rep = thm61_check(space, samples)
    assert rep.verdict == "PASS"


def test_thm61_constant_weight_zeta_zero():
    rng = np.random.default_rng(38)
    space = hopf_space(weight="0.5")
    samples = checker_samples(space, rng, points=1, shift=HOPF_SHIFT)
    rep = thm61_check(space, samples)
    assert rep.verdict == "PASS"
    assert np.abs(rep.scalars["zeta"][0]).max() < 1e-14


def test_thm61_dispatch():
    rng = np.random.default_rng(39)
    space = hopf_space()
    samples = checker_samples(space, rng, points=1, shift=HOPF_SHIFT)
    with pytest.raises(DispatchError):
        thm61_check(space, samples, cfg=CFG_INF)


# -- cross-cutting properties ---------------------------------------------------


def test_isotropy_follows_from_small_einstein_residual():
    # whenever the fitted residual is below tolerance in the nu != 0
    # regime, the drift must fit r_00 = eta alpha^2 below tolerance too
    from kropina.forms import isotropy_fit

    rng = np.random.default_rng(40)
    cases = [
        (hopf_space(), HOPF_SHIFT),
        (gauss_space(), (0.2, -0.1, 0.3)),
        (twist_space(), (0.0, 0.0, 0.0)),
    ]
    checked = 0
    for space, shift in cases:
        x = np.asarray(shift) + 0.1 * rng.uniform(-1, 1, 3)
        fit = fit_theta_sigma(space, CFG_INF, x,
                              admissible_directions(space, x, rng, 9))
        if fit.residual < 1e-6:
            iso = isotropy_fit(space, x)
            assert iso.residual / max(1.0, iso.scale) < 1e-6
            checked += 1
    assert checked >= 2  # hopf and gaussian actually exercise the property


def test_report_round_trips_through_json():
    rng = np.random.default_rng(41)
    space = hopf_space()
    samples = checker_samples(space, rng, points=1, shift=HOPF_SHIFT)
    rep = thm44_check(space, CFG_INF, samples)
    doc = json.loads(json.dumps(rep.as_dict()))
    assert doc["theorem"] == "44"
    assert doc["verdict"] == "PASS"
    names = [c["name"] for c in doc["conditions"]]
    assert "isotropy" in names and "ricci-reduction" in names
    assert doc["points"] == 1
    assert doc["directions"] == 7


def test_reports_are_deterministic():
    def run():
        rng = np.random.default_rng(42)
        space = hopf_space()
        samples = checker_samples(space, rng, points=1, shift=HOPF_SHIFT)
        return thm44_check(space, CFG_INF, samples).as_dict()

    a, b = run(), run()
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
