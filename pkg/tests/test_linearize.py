import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blidext.blid import bump_to_blid, pointwise_c0_blid
from blidext.bump import BumpFunction
from blidext.errors import ConfigurationError
from blidext.funcspace import GridFunction
from blidext.linearize import (
    ConjugacyResult,
    HyperbolicLinear,
    LinearizationProblem,
    PerturbationSpec,
    blid_derivative_bounds,
    conjugacy_iterate,
    delta_halving,
    fit_beta,
    globalize_perturbation,
    koenigs_limit,
    operator_norm,
    perturbation,
    validation_residual,
    verify_condition_7_6,
)

import oracles

DELTA = 0.1
H2 = bump_to_blid(n=2)
H1 = bump_to_blid(n=1)


def scalar_F(y):
    """``2y + g~(y)`` for g(y) = y^2, globalized with the reference bump."""
    z = DELTA * oracles.bump(abs(y) / DELTA) * (y / DELTA)
    return 2.0 * y + z * z


@pytest.fixture(scope="module")
def scalar_solution():
    spec = perturbation("square", 1, 0.3, 1.0, DELTA)
    ft = globalize_perturbation(spec, H1)
    return ft, conjugacy_iterate(HyperbolicLinear([[2.0]]), ft, 0.25, 16001, tol=1e-13)


@pytest.fixture(scope="module")
def saddle_solution():
    spec = perturbation("quadratic_swap", 2, 0.3, 1.0, DELTA)
    ft = globalize_perturbation(spec, H2)
    return ft, conjugacy_iterate(HyperbolicLinear.diagonal([2.0, 0.5]), ft, 0.25, 201, tol=1e-12)


# --- linear part and perturbations ------------------------------------------------


def test_hyperbolic_split():
    L = HyperbolicLinear.diagonal([2.0, 0.5, -3.0])
    assert L.unstable_indices == (0, 2) and L.stable_indices == (1,)
    assert L.gap == pytest.approx(0.5)


def test_non_hyperbolic_rejected():
    with pytest.raises(ConfigurationError):
        HyperbolicLinear([[1.0, 0.0], [0.0, 2.0]])
    with pytest.raises(ConfigurationError):
        HyperbolicLinear([[1.0, 2.0]])


def test_perturbation_conditions_enforced():
    with pytest.raises(ConfigurationError):
        PerturbationSpec(lambda x: x + 1.0, 0.3, 1.0, 0.1, np.zeros(1))
    with pytest.raises(ConfigurationError):
        PerturbationSpec(lambda x: 0.5 * x, 0.3, 1.0, 0.1, np.zeros(1))
    with pytest.raises(ConfigurationError):
        perturbation("square", 1, alpha=1.5)
    with pytest.raises(ConfigurationError):
        perturbation("quadratic_swap", 3)


# --- globalization ---------------------------------------------------------------------


def test_globalized_values():
    ft = globalize_perturbation(perturbation("quadratic_swap", 2), H2)
    np.testing.assert_array_equal(ft(np.zeros(2)), [0.0, 0.0])
    x = np.array([0.03, -0.05])
    np.testing.assert_array_equal(ft(x), [0.05**2, 0.03**2])
    far = np.array([1e6 * DELTA, 0.0])
    assert np.linalg.norm(ft.inner(far)) <= DELTA * H2.bound_N
    np.testing.assert_array_equal(ft(far), [0.0, 0.0])


def test_globalization_needs_room():
    with pytest.raises(ConfigurationError):
        globalize_perturbation(perturbation("square", 1, domain_radius=0.1, delta=0.1), H1)


def test_globalization_needs_unit_identity_ball():
    with pytest.raises(ConfigurationError):
        globalize_perturbation(perturbation("square", 1), bump_to_blid(BumpFunction(0.5, 2.0), 1))


# --- derivative bounds -----------------------------------------------------------------


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_operator_norm_matches_svd(seed):
    J = np.random.default_rng(seed).normal(size=(3, 3))
    exact = np.linalg.norm(J, 2)
    est = operator_norm(J)
    assert est <= exact * (1 + 1e-12)
    assert est == pytest.approx(exact, rel=1e-6)


def test_c1_against_closed_form_oracle():
    b = blid_derivative_bounds(H2, 1000, 0)
    assert 1.0 <= b["c1"] <= oracles.BUMP_1_2_C1 * (1 + 1e-6)
    assert b["c1"] >= 0.99 * oracles.BUMP_1_2_C1
    assert b["c0"] <= oracles.BUMP_1_2_A + 1e-9


def test_c0_blid_derivative_vanishes_far_out():
    from blidext.diffcheck import directional_derivative

    H = pointwise_c0_blid(n=64)
    x = GridFunction.constant(10.0, n=64)
    v = GridFunction.constant(1.0, n=64)
    assert np.all(directional_derivative(H, x, v).samples == 0.0)


# --- condition (7.6) ----------------------------------------------------------------------


def test_zero_perturbation_condition():
    ft = globalize_perturbation(perturbation("zero", 2), H2)
    rep = verify_condition_7_6(ft, sample_budget=50)
    assert rep.global_sup == 0.0 and rep.holder_sup == 0.0 and rep.passed


def test_m_branches():
    ft = globalize_perturbation(perturbation("quadratic_swap", 2), H2)
    rep = verify_condition_7_6(ft, sample_budget=200)
    assert rep.m_large_branch <= rep.c0 / rep.epsilon
    assert rep.m_small_branch <= rep.c1 + 1e-9
    assert rep.m_small_branch == pytest.approx(1.0, abs=1e-12)


def test_saddle_condition_values():
    ft = globalize_perturbation(perturbation("quadratic_swap", 2), H2)
    rep = verify_condition_7_6(ft, sample_budget=300)
    assert np.isfinite(rep.global_sup) and np.isfinite(rep.holder_sup)
    assert rep.global_sup <= rep.delta_eta * rep.c1
    assert rep.holder_sup <= rep.holder_M * rep.c1 * rep.m_estimate**rep.alpha
    # f = (y2^2, y1^2): sup ||Df|| on the ball of radius delta*c0 is 2*delta*c0
    assert 0.98 * 2 * DELTA * rep.c0 <= rep.delta_eta <= 2 * DELTA * rep.c0 * (1 + 1e-9)
    assert 1.98 <= rep.holder_M <= 2.0 * (1 + 1e-9)
    json.dumps(rep.to_dict())


def test_delta_halving_trends():
    out = delta_halving(perturbation("quadratic_swap", 2), H2, 2, 100)
    g = [r["global_sup"] for r in out["rows"]]
    assert g[1] == pytest.approx(g[0] / 2, rel=1e-6)
    assert out["global_decreasing"] and out["holder_non_increasing"] and out["pass"]


# --- conjugacy --------------------------------------------------------------------------


def test_zero_perturbation_gives_identity():
    ft = globalize_perturbation(perturbation("zero", 2), H2)
    res = conjugacy_iterate(HyperbolicLinear.diagonal([2.0, 0.5]), ft, 0.25, 21)
    assert res.iterations == 0 and res.residual == 0.0
    assert np.all(res.phi_table == 0.0)
    assert fit_beta(res).indeterminate


def test_box_must_cover_support():
    ft = globalize_perturbation(perturbation("square", 1), H1)
    with pytest.raises(ConfigurationError):
        conjugacy_iterate(HyperbolicLinear([[2.0]]), ft, 0.1, 101)


def test_scalar_matches_koenigs_oracle(scalar_solution):
    _, res = scalar_solution
    xs = np.linspace(-0.1, 0.1, 801)
    ref = np.array([oracles.koenigs_orbit(scalar_F, 2.0, x, 0.2) for x in xs])
    assert np.max(np.abs(res.phi(xs[:, None])[:, 0] - ref)) <= 1e-6
    assert res.residual < 1e-8


def test_package_koenigs_agrees_with_oracle(scalar_solution):
    ft, _ = scalar_solution
    for x in (-0.09, -1e-3, 1e-5, 0.05):
        assert koenigs_limit(2.0, ft, x, 0.2) == pytest.approx(oracles.koenigs_orbit(scalar_F, 2.0, x, 0.2), abs=1e-15)


def test_koenigs_limit_is_not_tangent_to_identity():
    # the bounded conjugacy satisfies u(2x) = 2u(x) near 0, so (Phi(x) - x)/x is
    # log-periodic and does not vanish as x -> 0
    q = [oracles.koenigs_orbit(scalar_F, 2.0, x, 0.2) / x - 1.0 for x in (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)]
    assert min(abs(v) for v in q) > 0.05


def test_saddle_residual_and_origin(saddle_solution):
    _, res = saddle_solution
    assert res.converged and res.residual < 1e-8
    np.testing.assert_allclose(res.displacement(np.zeros(2)), 0.0, atol=1e-12)


def test_saddle_beta_positive(saddle_solution):
    _, res = saddle_solution
    fit = fit_beta(res)
    assert fit.beta_hat > 0.0 and fit.fit_residual is not None


def test_validation_residual_reported(saddle_solution):
    ft, res = saddle_solution
    assert np.isfinite(validation_residual(res, ft, [2.0, 0.5]))


@pytest.mark.xfail(strict=True, reason="multilinear tabulation error O(h^2) dominates 10*tol between nodes")
def test_validation_residual_within_ten_tol(saddle_solution):
    ft, res = saddle_solution
    assert validation_residual(res, ft, [2.0, 0.5]) <= 10 * res.tol


def test_origin_fixed_exactly(saddle_solution, scalar_solution):
    for _, res in (saddle_solution, scalar_solution):
        assert np.all(res.displacement(np.zeros(len(res.axes))) == 0.0)


def test_delta_halving_from_point_two():
    out = delta_halving(perturbation("quadratic_swap", 2, delta=0.2), H2, 2, 200)
    assert [r["delta"] for r in out["rows"]] == pytest.approx([0.2, 0.1, 0.05])
    assert out["global_decreasing"] and out["holder_non_increasing"]


def test_fit_on_exact_power_law():
    axes = [np.linspace(-1.0, 1.0, 2001)]
    table = (axes[0] ** 2)[:, None]
    res = ConjugacyResult(axes, table, 0, 0.0, [], True, (), (0,), 1.0, 1e-12)
    fit = fit_beta(res, radii=np.geomspace(0.01, 1.0, 9))  # two decades
    assert fit.beta_hat == pytest.approx(1.0, abs=1e-3)
    assert fit.fit_residual < 1e-3
    assert not fit.exceeds_alpha


def test_fit_flags_beta_above_alpha():
    axes = [np.linspace(-1.0, 1.0, 2001)]
    res = ConjugacyResult(axes, (np.abs(axes[0]) ** 3)[:, None], 0, 0.0, [], True, (), (0,), 1.0, 1e-12)
    fit = fit_beta(res, radii=np.geomspace(0.05, 1.0, 9), alpha=1.0)
    assert fit.exceeds_alpha


def test_conjugacy_csv(saddle_solution):
    _, res = saddle_solution
    text = res.table_csv()
    assert text.splitlines()[0] == "x1,x2,u1,u2"
    assert len(text.splitlines()) == 1 + 201**2
    json.dumps(res.to_dict())


def test_problem_config_validation():
    with pytest.raises(ConfigurationError, match="matrix"):
        LinearizationProblem.from_dict({"f_name": "square"})
    with pytest.raises(ConfigurationError, match="unknown"):
        LinearizationProblem.from_dict({"matrix": [[2.0]], "f_name": "square", "colour": 1})


def test_holder_quotient_is_delta_invariant_for_quadratic():
    # with u = x/delta, ||Df~(x)||/||x|| = 2 ||H(u)|| ||DH(u)|| / ||u|| for f = (x2^2, x1^2)
    out = delta_halving(perturbation("quadratic_swap", 2, delta=0.2), H2, 2, 200)
    q = [r["holder_sup"] for r in out["rows"]]
    assert q[1] == pytest.approx(q[0], rel=1e-9) and q[2] == pytest.approx(q[0], rel=1e-9)
