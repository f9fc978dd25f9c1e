import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fogdc import convex, jcora, recompress as rc
from fogdc.jcora import Stage1Cache, classify, eta_local
from fogdc.model import Mode, SystemConfig, validate
from fogdc.recompress import Mode3Coefficients, Mode3Infeasible, PlaTable
from fogdc.scenario import ScenarioParams, generate_instance, make_user

TOY = Mode3Coefficients(nu0=1.0, g1t=1.0, g2=1.0, g3t=1.0, b_in=1.0, omega_f_min=0.5, omega_f_max=4.0)
FIXED = replace(TOY, omega_f_min=1.0, omega_f_max=1.0)
USER = make_user(ScenarioParams(), 2.1e9, 400.0)
CFG = SystemConfig()
ETA = 0.9


def _h0_ref(c, w, d):
    """Plain re-statement of the fog demand formula (inf where infeasible)."""
    den = c.nu0 * w * d - c.b_in
    return np.where(den > 0, w * d * (c.g1t * w ** c.g2 + c.g3t) / np.where(den > 0, den, 1.0), np.inf)


@pytest.fixture(scope="module")
def table_coeffs():
    s3 = convex.solve_p3(USER, CFG, ETA)
    return rc.mode3_coeffs(USER, CFG, ETA, s3)


# ------------------------------------------------------------ closed forms

def test_h0_examples():
    assert rc.h0(TOY, 1.0, 2.0) == 4.0
    big = rc.h0(TOY, 2.0, 1e12)
    assert big == pytest.approx(2.0 * (2.0 + 1.0) / 2.0, rel=1e-9)
    with pytest.raises(Mode3Infeasible):
        rc.h0(TOY, 1.0, 1.0)


def test_h1_and_inverse():
    assert rc.h1(TOY, 1.0) == pytest.approx(3.0)
    assert rc.h1(TOY, 2.0) == pytest.approx((2 * 2 + 1) / 4)
    assert rc.inv_h1(TOY, 3.0) == pytest.approx(1.0, rel=1e-10)
    # outside the range the inverse clips
    assert rc.inv_h1(TOY, 1e6) == TOY.omega_f_min
    assert rc.inv_h1(TOY, 1e-6) == TOY.omega_f_max
    with pytest.raises(ValueError):
        rc.inv_h1(replace(TOY, g2=-0.5), 3.0)


def test_dh0_dd_examples():
    assert rc.dh0_dd(FIXED, 1.0, 2.0) == pytest.approx(-2.0)
    assert rc.dh0_dd(FIXED, 1.0, 3.0) == pytest.approx(-0.5)
    assert -1e-20 < rc.dh0_dd(FIXED, 1.0, 1e12) < 0.0
    with pytest.raises(Mode3Infeasible):
        rc.dh0_dd(FIXED, 1.0, 1.0)


@pytest.mark.parametrize("scale", [0.1, 3.0, 1e4])
def test_dh0_dd_scaling(scale):
    # b_in -> c b_in with d -> c d keeps the denominator's shape; H2 -> H2 / c
    base = rc.dh0_dd(TOY, 1.5, 2.0)
    scaled = rc.dh0_dd(replace(TOY, b_in=scale), 1.5, 2.0 * scale)
    assert scaled == pytest.approx(base / scale, rel=1e-12)


def test_dh0_dd_matches_finite_difference(table_coeffs):
    c = table_coeffs
    for w in (3.4, 6.0, 11.2):
        d = 2.0 * c.b_in / (c.nu0 * w)
        h = d * 1e-6
        fd = (rc.h0(c, w, d + h) - rc.h0(c, w, d - h)) / (2 * h)
        assert rc.dh0_dd(c, w, d) == pytest.approx(fd, rel=1e-6)


def test_optimal_omega_cases():
    neg = replace(TOY, g2=-0.5)
    for d in (1.0, 5.0, 100.0):
        assert rc.optimal_omega_f(neg, d) == neg.omega_f_max
    d1, d2, d3 = rc.thresholds(TOY)
    assert d1 == pytest.approx(0.25)
    assert rc.optimal_omega_f(TOY, 0.5 * (d1 + d2)) == TOY.omega_f_max
    assert rc.optimal_omega_f(TOY, d3 * 1.5) == TOY.omega_f_min
    with pytest.raises(Mode3Infeasible):
        rc.optimal_omega_f(TOY, d1)


def test_interior_case_matches_scan():
    d1, d2, d3 = rc.thresholds(TOY)
    grid = np.linspace(TOY.omega_f_min, TOY.omega_f_max, 10_000)
    cell = grid[1] - grid[0]
    for d in np.linspace(d2, d3, 7)[1:-1]:
        w = rc.optimal_omega_f(TOY, d)
        scan = grid[np.argmin(_h0_ref(TOY, grid, d))]
        assert abs(w - scan) <= cell


_coeffs = st.builds(
    lambda nu0, g1, g2, g3, b, lo, span: Mode3Coefficients(nu0, g1, g2, g3, b, lo, lo * span),
    st.floats(0.05, 2.0), st.floats(0.0, 5.0), st.floats(-1.0, 2.0), st.floats(0.1, 5.0),
    st.floats(0.1, 10.0), st.floats(1.0, 4.0), st.floats(1.0, 4.0))


@settings(max_examples=1000)
@given(_coeffs, st.floats(1.001, 50.0), st.floats(0.0, 1.0))
def test_best_ratio_is_optimal(c, k, t):
    d = k * c.b_in / (c.nu0 * c.omega_f_max)
    w_star = rc.optimal_omega_f(c, d)
    w = c.omega_f_min + t * (c.omega_f_max - c.omega_f_min)
    if not c.nu0 * w * d > c.b_in:
        return
    assert rc.h0(c, w_star, d) <= rc.h0(c, w, d) * (1 + 1e-9)


def test_composed_gradient_increasing(table_coeffs):
    c = table_coeffs
    d1, _, d3 = rc.thresholds(c)
    ds = np.geomspace(d1 * 1.001, max(d3, d1 * 10) * 3, 200)
    g = [rc.composed_gradient(c, d) for d in ds]
    assert all(b > a for a, b in zip(g, g[1:]))
    assert all(x < 0 for x in g)


# ------------------------------------------------------------ price to rate

def test_d_of_lambda_examples():
    assert rc.d_of_lambda(FIXED, 0.5) == pytest.approx(3.0, rel=1e-12)
    assert rc.d_of_lambda(FIXED, 1e-12, d_cap=5.0) == 5.0
    assert rc.d_of_lambda(FIXED, 1e9, f_cap=100.0) is None
    assert rc.d_of_lambda(replace(FIXED, nu0=-1.0), 0.5) is None


@settings(max_examples=200)
@given(_coeffs, st.floats(-8.0, 3.0))
def test_d_of_lambda_is_root(c, log_lam):
    lam = 10.0 ** log_lam
    d = rc.d_of_lambda(c, lam)
    assert d is not None
    assert rc.composed_gradient(c, d) == pytest.approx(-lam, rel=1e-6)


# ------------------------------------------------------------ coefficients

def test_mode3_coeffs_zero_slack():
    s3 = convex.solve_p3(USER, CFG, ETA)
    tight = replace(USER, t_max=s3.t1)
    c = rc.mode3_coeffs(tight, CFG, s3.xi1, s3)
    fog_part = s3.t1 - rc.user_time(s3.decision, USER, CFG)
    assert c.nu0 == pytest.approx(fog_part - CFG.t_cloud, rel=1e-12)
    assert c.b_in == pytest.approx(USER.b_in / s3.decision.omega_u)
    fog = USER.comp_fog
    assert c.g1t == fog.gamma0 * fog.gamma1


def test_mode3_excluded_when_cloud_latency_dominates():
    s3 = convex.solve_p3(USER, CFG, ETA)
    with pytest.raises(Mode3Infeasible):
        rc.mode3_coeffs(USER, replace(CFG, t_cloud=10.0), ETA, s3)


@pytest.mark.parametrize("frac", [0.2, 0.5, 0.9])
def test_coefficients_reproduce_convex_engine(table_coeffs, frac):
    d = frac * convex.solve_p4(USER, CFG, ETA).resource
    ref = convex.solve_p_dk(USER, CFG, ETA, d).resource
    assert rc.least_fog(table_coeffs, d) == pytest.approx(ref, rel=0.05)


# ---------------------------------------------------------------- PLA

def test_pla_table_arithmetic():
    tab = PlaTable.from_points([1.0, 2.0], [10.0, 6.0])
    assert tab.slopes[0] == -4.0 and tab.intercepts[0] == 14.0
    assert tab.value(1.5) == 8.0
    with pytest.raises(ValueError):
        tab.value(3.0)
    with pytest.raises(ValueError):
        PlaTable.from_points([2.0, 1.0], [1.0, 1.0])


def test_pla_over_approximates():
    inst = generate_instance(3, 1)
    cache = Stage1Cache(inst)
    u = inst.users[0]
    d_rq = convex.solve_p4(u, inst.config, ETA).resource
    tab = rc.pla_table(cache, 0, ETA, 9, d_rq)
    assert np.all(np.diff(tab.f_values) <= 0)
    for d, f in zip(tab.breakpoints, tab.f_values):
        assert tab.value(d) == f
    rng = np.random.default_rng(0)
    for d in rng.uniform(tab.breakpoints[0], tab.breakpoints[-1], 100):
        true = convex.solve_p_dk(u, inst.config, ETA, d).resource
        assert tab.value(d) >= true * (1 - 1e-7)


def test_pla_needs_two_segments():
    with pytest.raises(ValueError):
        rc.pla_table(Stage1Cache(generate_instance(0, 1)), 0, ETA, 1, 1e6)


# ------------------------------------------------------------------ IUTS

def test_simplex_projection_example():
    out = rc.project_simplex([0.5, 0.8, 0.2])
    assert out == pytest.approx([1 / 3, 0.8 - 1 / 6, 1 / 30], rel=1e-12)


@given(st.lists(st.floats(-3, 3), min_size=1, max_size=6))
def test_simplex_projection_kkt(v):
    v = np.array(v)
    x = rc.project_simplex(v)
    assert x.sum() == pytest.approx(1.0) and np.all(x >= 0)
    # KKT: v - x is constant on the support and no larger off it
    shift = v - x
    on = x > 1e-12
    tau = shift[on].mean()
    assert np.allclose(shift[on], tau, atol=1e-9)
    assert np.all(v[~on] <= tau + 1e-9)


def test_simplex_projection_mask():
    out = rc.project_simplex([5.0, 0.1, 0.2], mask=[False, True, True])
    assert out[0] == 0.0 and out.sum() == pytest.approx(1.0)


def test_dual_update():
    assert rc.dual_update(1.0, 1.0, 0.6, 1.0) == pytest.approx(0.6)
    assert rc.dual_update(0.1, 1.0, 0.0, 1.0) == 0.0


# ----------------------------------------------------------- engines

@pytest.fixture(scope="module")
def tight():
    """Three users with scarce backhaul, where recompression pays off."""
    inst = generate_instance(3, 3, {"d_max": 5e6})
    eta = jcora.solve(inst).eta_star
    cache = Stage1Cache(inst)
    set_b = classify([eta_local(u) for u in inst.users], eta).set_b
    return inst, eta, cache, set_b


def _check_selection(inst, sel):
    assert sel is not None
    assert set(sel.options) == set(sel.decisions)
    assert sel.backhaul_total <= inst.config.d_max * (1 + 1e-9)
    totals = (sel.fog_total, sel.backhaul_total)
    for k, dec in sel.decisions.items():
        assert dec.mode == sel.options[k].mode
        assert validate(dec, inst.users[k], inst.config, totals, sel.eta, tol=1e-6).feasible


def test_engines_agree_at_fixed_bound(tight):
    inst, eta, cache, b = tight
    p9 = rc.pla_select(cache, b, eta, 9)
    p17 = rc.pla_select(cache, b, eta, 17)
    o5 = rc.osts_select(cache, b, eta, 5e-3, early_exit=False)
    o1 = rc.osts_select(cache, b, eta, 1e-3, early_exit=False)
    iu = rc.iuts_select(cache, b, eta, 500)
    for sel in (p9, p17, o5, o1, iu):
        _check_selection(inst, sel)
    assert any(o.mode == Mode.CLOUD_RECOMPRESSED for o in o1.options.values())
    assert p9.objective == pytest.approx(p17.objective, rel=0.01)
    assert o5.objective == pytest.approx(o1.objective, rel=0.02)
    assert o1.objective == pytest.approx(p17.objective, rel=0.05)
    assert iu.objective == pytest.approx(o1.objective, rel=0.05)
    # recompression only adds options
    base = jcora.verify_feasibility_b(cache, b, eta)
    for sel in (p9, p17, o5, o1, iu):
        assert sel.objective <= base.fog_total * (1 + 1e-9)


def test_osts_sweep_dominance(tight):
    inst, eta, cache, b = tight
    tsa = rc._Tsa(rc._Stage(cache, b, eta))
    lam_hi = rc.lambda_max(tsa, 1e-3)
    lams = np.linspace(0.0, 3.0 * lam_hi, 301)
    d_all, f_all = tsa.mode3_at(lams)
    costs, _, _ = rc._enumerate(*rc._tables(tsa, d_all, f_all), inst.config.d_max)
    best = np.minimum.accumulate(costs)
    assert np.all(np.diff(best) <= 0)
    # past the computed bound nothing improves
    assert best[-1] == best[lams <= lam_hi][-1]


def test_coarse_sweep_without_recompression_matches_pla(small_instance):
    eta = jcora.solve(small_instance).eta_star
    cache = Stage1Cache(small_instance)
    b = classify([eta_local(u) for u in small_instance.users], eta).set_b
    coarse = rc.osts_select(cache, b, eta, 1e3, early_exit=False)
    pla = rc.pla_select(cache, b, eta, 9)
    assert all(o.mode != Mode.CLOUD_RECOMPRESSED for o in coarse.options.values())
    assert coarse.objective == pytest.approx(pla.objective, rel=1e-9)


def test_extended_never_worse(tight):
    inst = tight[0]
    base = jcora.solve(inst)
    for algo, kw in (("osts", {}), ("iuts", {"max_iters": 100})):
        sol = rc.solve_ext(inst, 1e-3, algo, **kw)
        assert sol.eta_star <= base.eta_star + 1e-12
        assert sol.max_wedc <= sol.eta_star + 1e-3
        assert sol.fog_total <= inst.config.f_fog_max + 1e-6
        assert sol.backhaul_total <= inst.config.d_max + 1e-6
    assert sol.eta_star < base.eta_star * 0.99


@pytest.mark.parametrize("overrides", [
    {"fog_ratio": 1e6},  # recompression far too expensive
    {"fog_g1": 0.0, "fog_g3": 0.0, "omega_f_min": 1.0, "omega_f_max": 1.0},  # no-op recompressor
])
def test_dominated_recompression_matches_basic(overrides):
    inst = generate_instance(3, 3, overrides)
    assert rc.solve_ext(inst, 1e-3, "osts").eta_star == jcora.solve(inst).eta_star


def test_solve_ext_rejects_unknown_algo(small_instance):
    with pytest.raises(ValueError):
        rc.solve_ext(small_instance, 1e-3, "simplex")
    with pytest.raises(ValueError):
        rc.osts_select(Stage1Cache(small_instance), (0,), 1.0, 0.0)
    with pytest.raises(ValueError):
        rc.iuts_select(Stage1Cache(small_instance), (0,), 1.0, 0)
