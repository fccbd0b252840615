import numpy as np
import pytest

from blidext.blid import AMPLITUDES, blid_scale, jet_cq_blid, pointwise_c0_blid
from blidext.errors import ArgumentError, DomainFault
from blidext.funcspace import (
    GridFunction,
    JetGridFunction,
    NormFamilyDescriptor,
    NormKind,
    random_grid_function,
    random_jet,
    reconstruct,
)
from blidext.blid import blid_windowed_family
from blidext.germ import CATALOG, GlobalMap, LocalMap, catalog_map, compose_pointwise, extend, metric_norm

C0 = pointwise_c0_blid(n=256)


def test_local_map_guards_its_ball():
    f = catalog_map("square", 1.0)
    with pytest.raises(DomainFault):
        f(GridFunction.constant(1.0, n=16))


def test_extend_identity_gives_scaled_blid():
    f = catalog_map("identity", 1.0)
    F = extend(f, C0)
    assert F.inner.bound_N == 0.5
    x = GridFunction.constant(0.01, n=256)
    np.testing.assert_array_equal(F(x).samples, x.samples)
    assert F.inner == blid_scale(C0, 0.5)


def test_far_input_maps_to_f_of_zero():
    F = extend(catalog_map("square", 1.0), C0)
    assert np.all(F(GridFunction.constant(10.0, n=256)).samples == 0.0)


def test_small_input_agrees_with_local_map():
    f = catalog_map("square", 1.0)
    F = extend(f, C0)
    x = GridFunction.constant(0.05, n=256)
    np.testing.assert_allclose(F(x).samples, f(x).samples, atol=1e-12)
    np.testing.assert_allclose(F(x).samples, 0.0025, atol=1e-15)
    z = GridFunction.constant(0.0, n=256)
    assert np.all(F(z).samples == 0.0)


@pytest.mark.parametrize("name", ["square", "expm1", "integral_square"])
def test_fuzz_never_faults_c2(name):
    f = catalog_map(name, 1.0)
    F = extend(f, jet_cq_blid(2, n=128))
    for i in range(200):
        rng = np.random.default_rng(i)
        y = F(random_jet(rng, 2, AMPLITUDES[i % len(AMPLITUDES)], n=128))
        assert np.all(np.isfinite(y.top.samples))


def test_fuzz_never_faults_c0_at_1e6():
    F = extend(catalog_map("expm1", 1.0), C0)
    for i in range(1000):
        y = F(random_grid_function(np.random.default_rng(i), 1e6, n=256))
        assert np.all(np.isfinite(y.samples))


def test_image_must_fit():
    f = catalog_map("square", 1.0)
    with pytest.raises(ArgumentError):
        GlobalMap(C0, f)  # C0 reaches a ~ 1.18 > 1


def test_frechet_space_extension():
    d = NormFamilyDescriptor(NormKind.CINF_INTERVAL, 3, 20)
    fam = blid_windowed_family(d, n=128)
    f = LocalMap(0.5, CATALOG["square"].rule, metric_norm(d), "square")
    F = extend(f, fam, descriptor=d)
    assert F.inner.metric_radius == 0.25
    for i in range(20):
        F(random_jet(np.random.default_rng(i), 3, 1e4, n=128))
    with pytest.raises(ArgumentError):
        extend(f, fam)


def test_compose_pointwise_square_of_polynomial():
    x = JetGridFunction.polynomial([0.2, 0.5, -0.3], 2, n=256)
    y = compose_pointwise(lambda u, q: [u * u, 2 * u, 2 * np.ones_like(u)], x)
    t = y.top.nodes
    p, dp, ddp = 0.2 + 0.5 * t - 0.3 * t * t, 0.5 - 0.6 * t, -0.6
    np.testing.assert_allclose(y.jet, [0.04, 2 * 0.2 * 0.5], atol=1e-14)
    np.testing.assert_allclose(y.top.samples, 2 * (dp * dp + p * ddp), atol=1e-12)


def test_integral_square_matches_closed_form():
    x = JetGridFunction.polynomial([0.0, 1.0], 1, n=512)
    y = CATALOG["integral_square"].rule(x)
    np.testing.assert_allclose(reconstruct(y, 0).samples, y.top.nodes**3 / 3, atol=1e-6)


def test_unknown_catalog_name():
    with pytest.raises(ArgumentError):
        catalog_map("nope")
