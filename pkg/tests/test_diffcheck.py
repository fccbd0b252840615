import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blidext.blid import bump_to_blid, jet_cq_blid, pointwise_c0_blid
from blidext.diffcheck import (
    DerivativeEstimate,
    check_bounded,
    check_chain_rule,
    check_compact,
    check_frechet,
    default_compact_sequences,
    default_directions,
    directional_derivative,
    reports_to_csv,
)
from blidext.funcspace import GridFunction, JetGridFunction
from blidext.germ import catalog_map, extend

N = 128
ZERO = GridFunction.constant(0.0, n=N)
C0 = pointwise_c0_blid(n=N)


def square(x):
    return x.with_samples(x.samples**2)


def test_directional_derivative_trivial_cases():
    v = default_directions(ZERO, 1)[0]
    np.testing.assert_allclose(directional_derivative(lambda x: x, ZERO, v).samples, v.samples, atol=1e-10)
    const = GridFunction.constant(3.0, n=N)
    assert np.all(directional_derivative(lambda x: const, ZERO, v).samples == 0.0)


def test_directional_derivative_of_square():
    one = GridFunction.constant(1.0, n=N)
    d = directional_derivative(square, one, one)
    np.testing.assert_allclose(d.samples, 2.0, atol=1e-8)


def test_schedule_validated():
    with pytest.raises(ValueError):
        DerivativeEstimate(ZERO, [GridFunction.constant(1.0, n=N)], [ZERO], (1e-2, 1e-1))
    with pytest.raises(ValueError):
        DerivativeEstimate(ZERO, [ZERO], [ZERO], (1e-1, 1e-2))


def test_linear_map_has_zero_remainder():
    rep = check_bounded(lambda x: x * 3.0, ZERO, default_directions(ZERO, 4))
    assert max(rep.max_ratios) <= 1e-10
    assert rep.verdict


def test_blid_at_zero_passes():
    rep = check_bounded(C0, ZERO, default_directions(ZERO, 8))
    assert rep.verdict and rep.slope >= 0.9


def test_abs_at_zero_fails():
    f = lambda x: x.with_samples(np.abs(x.samples))  # noqa: E731
    for rep in (
        check_bounded(f, ZERO, default_directions(ZERO, 8)),
        check_frechet(f, ZERO, sample_budget=8),
    ):
        assert not rep.verdict
        assert rep.to_dict()["verdict"] == "fail"


def test_constant_sequence_reduces_to_directional():
    dirs = default_directions(ZERO, 4)
    F = extend(catalog_map("square"), C0)
    seqs = [([h] * 6, h) for h in dirs]
    a = check_compact(F, ZERO, seqs)
    b = check_bounded(F, ZERO, dirs)
    assert a.max_ratios == pytest.approx(b.max_ratios, rel=1e-12)


def test_compact_with_converging_sequence_passes():
    dirs = default_directions(ZERO, 4)
    perts = default_directions(ZERO, 4, seed=99)
    F = extend(catalog_map("square"), C0)
    rep = check_compact(F, ZERO, default_compact_sequences(dirs, perts))
    assert rep.verdict


def test_alternating_sign_gives_same_verdict():
    dirs = default_directions(ZERO, 4)
    perts = default_directions(ZERO, 4, seed=99)
    F = extend(catalog_map("square"), C0)
    ts = [1e-1, -1e-2, 1e-3, -1e-4, 1e-5, -1e-6]
    seqs = default_compact_sequences(dirs, perts, [abs(t) for t in ts])
    assert check_compact(F, ZERO, seqs, ts).verdict == check_compact(F, ZERO, seqs).verdict


def test_frechet_extended_square_has_quadratic_remainder():
    F = extend(catalog_map("square"), C0)
    rep = check_frechet(F, ZERO, sample_budget=8)
    assert rep.verdict
    assert rep.slope == pytest.approx(1.0, abs=0.05)


def test_frechet_linear_map():
    rep = check_frechet(lambda x: x * 2.0, ZERO, sample_budget=4)
    assert max(rep.max_ratios) <= 1e-10


def test_frechet_kink_fails():
    F = extend(catalog_map("abs"), C0)
    assert not check_frechet(F, ZERO, sample_budget=8).verdict


def test_chain_rule_trivial_and_linear():
    dirs = default_directions(ZERO, 4)
    assert check_chain_rule(square, lambda x: x, GridFunction.constant(0.3, n=N), dirs).verdict
    assert check_chain_rule(lambda x: x * 2.0, lambda x: x * -1.5, ZERO, dirs).max_relative_error <= 1e-10


def test_chain_rule_germ_after_blid():
    x0 = JetGridFunction.zero(2, n=N)
    H = jet_cq_blid(2, n=N)
    f = catalog_map("expm1")
    rep = check_chain_rule(f, H, x0, default_directions(x0, 4))
    assert rep.max_relative_error <= 1e-6
    # DH(0) = id, so D(f o H)(0) v = Df(0) v = v for expm1
    v = default_directions(x0, 1)[0]
    d = directional_derivative(lambda y: f(H(y)), x0, v)
    assert np.max(np.abs(d.top.samples - v.top.samples)) <= 1e-8


def test_bounded_pass_implies_compact_pass_on_finite_dim():
    x0 = np.zeros(2)
    for name in ("quadratic_swap", "identity"):
        F = extend(catalog_map(name), bump_to_blid(n=2))
        dirs = default_directions(x0, 6)
        perts = default_directions(x0, 6, 50)
        b = check_bounded(F, x0, dirs)
        c = check_compact(F, x0, default_compact_sequences(dirs, perts))
        assert (not b.verdict) or c.verdict


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-2.5, 2.5), min_size=2, max_size=2))
def test_finite_dim_blid_derivative_matches_formula(p):
    # DH(x) v = h v + h'(r) (x.v / r) x
    H = bump_to_blid(n=2)
    x = np.array(p)
    r = np.linalg.norm(x)
    if r < 1e-3 or abs(r - H.bump.r_in) < 1e-3 or abs(r - H.bump.r_out) < 1e-3:
        return
    v = np.array([0.6, -0.8])
    exact = H.bump(r) * v + H.bump.deriv(r) * (x @ v / r) * x
    np.testing.assert_allclose(directional_derivative(H, x, v), exact, atol=1e-7)


def test_csv_table():
    rep = check_bounded(C0, ZERO, default_directions(ZERO, 2))
    text = reports_to_csv([rep])
    lines = text.strip().splitlines()
    assert lines[0] == "notion,direction_id,t,ratio"
    assert len(lines) == 1 + 2 * 6


def test_inf_slope_serializes():
    rep = check_bounded(lambda x: x, ZERO, default_directions(ZERO, 2))
    d = rep.to_dict()
    assert d["slope"] == "inf" or math.isfinite(d["slope"])
