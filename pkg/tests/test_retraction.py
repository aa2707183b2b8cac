import numpy as np
import pytest
from numpy.polynomial import polynomial as P

from extremal import gauge as G
from extremal import retraction as RT
from extremal.disc_space import DiscPoly, circle_points
from extremal.metrics import extremal_retraction


def interior(body, k, rng, rmax=0.95):
    Z = rng.standard_normal((k, body.dim)) + 1j * rng.standard_normal((k, body.dim))
    Z /= G.gauge_eval(body, Z)[:, None]
    return Z * (rmax * rng.random(k) ** (1 / (2 * body.dim)))[:, None]


def disc_points(k, rng, rmax=0.95):
    return rmax * np.sqrt(rng.random(k)) * np.exp(2j * np.pi * rng.random(k))


@pytest.fixture(scope="module")
def ball_axis():
    pair = RT.stationary_pair(DiscPoly([[0, 0], [1, 0]]), [[1, 0]])
    return RT.flattening_map(pair)


@pytest.fixture(scope="module")
def ellipsoid_flat():
    body = G.complex_ellipsoid(2, [1, 2])
    flat, lam, m = extremal_retraction(body, [0.2, 0.1j], [0.5, 0.4])
    return body, flat


@pytest.fixture(scope="module")
def ball3_flat():
    body = G.ball(3)
    flat, lam, m = extremal_retraction(body, [0.1, 0.2, 0], [0.3, 0, 0.5j])
    return body, flat


def bezout_residual(C, bz, M=512):
    z = circle_points(M)
    Ct = np.asarray(C) @ np.conj(bz.rotation).T
    j1, j2 = 0, 1   # the rotation puts the chosen pair first
    return np.abs(P.polyval(z, bz.g) * P.polyval(z, Ct[:, j1])
                  + P.polyval(z, bz.h) * P.polyval(z, Ct[:, j2]) - 1).max()


def test_bezout_unit_coordinate():
    bz = RT.bezout_pair(np.array([[1.0, 0.0, 0.0]]))
    np.testing.assert_allclose(P.polyval(0.3, bz.g), 1, atol=1e-14)
    np.testing.assert_allclose(P.polyval(0.3, bz.h), 0, atol=1e-14)
    assert bz.residual <= 1e-14


def test_bezout_constant_partner():
    C = np.array([[-2.0, 1.0], [1.0, 0.0]])       # (zeta - 2, 1)
    bz = RT.bezout_pair(C)
    assert bz.residual <= 1e-12
    assert bezout_residual(C, bz) <= 1e-12


def test_bezout_coprime_linear():
    C = np.array([[0.0, 1.0], [1.0, -0.5]])      # (zeta, 1 - zeta/2)
    bz = RT.bezout_pair(C)
    assert bezout_residual(C, bz) <= 1e-12
    # extended gcd gives g = 1/2, h = 1
    np.testing.assert_allclose(P.polyval(0.1, bz.g), 0.5, atol=1e-12)
    np.testing.assert_allclose(P.polyval(0.1, bz.h), 1.0, atol=1e-12)


def test_bezout_common_zero_rotated():
    # both coordinates vanish at 0.3; a third coordinate does not
    C = np.array([[-0.3, -0.6, 0.5], [1.0, 2.0, 0.0]])
    bz = RT.bezout_pair(C)
    assert bz.residual <= 1e-8
    assert bezout_residual(C, bz) <= 1e-8


def test_bezout_needs_two_coordinates():
    with pytest.raises(RT.RetractionError):
        RT.bezout_pair(np.array([[1.0]]))


def test_det_s_ball(ball_axis, rng):
    for _ in range(5):
        s = disc_points(1, rng)[0]
        z = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        assert RT.det_s(ball_axis, s, z) == pytest.approx(s - z[0], abs=1e-15)
    assert RT.det_s(ball_axis, 0, [0, 0]) == 0


def test_ball_explicit(ball_axis):
    z = np.array([0.3, 0.2])
    assert RT.locate_disc_param(ball_axis, z) == pytest.approx(0.3, abs=1e-14)
    np.testing.assert_allclose(RT.retract(ball_axis, z), [0.3, 0], atol=1e-14)
    np.testing.assert_allclose(RT.full_inverse(ball_axis, z), [0.3, 0.2], atol=1e-14)
    assert RT.caratheodory_candidate(ball_axis, [0.1 - 0.5j, 0.7]) == pytest.approx(0.1 - 0.5j, abs=1e-14)


def test_det_s_vanishes_on_disc(ellipsoid_flat, rng):
    _, flat = ellipsoid_flat
    for s in disc_points(20, rng):
        assert abs(RT.det_s(flat, s, flat.f(s))) < 1e-13


def test_identity_on_disc(ellipsoid_flat, rng):
    _, flat = ellipsoid_flat
    for s in disc_points(100, rng):
        z = flat.f(s)
        assert abs(RT.locate_disc_param(flat, z) - s) < 1e-10
        assert np.abs(RT.retract(flat, z) - z).max() < 1e-10
    assert abs(RT.locate_disc_param(flat, flat.f(0))) < 1e-12
    s = 0.3 + 0.1j
    assert abs(RT.caratheodory_candidate(flat, flat.f(s)) - s) < 1e-10


@pytest.mark.parametrize("name", ["ellipsoid_flat", "ball3_flat"])
def test_idempotent_and_bounded(name, rng, request):
    body, flat = request.getfixturevalue(name)
    for z in interior(body, 200, rng):
        c = RT.caratheodory_candidate(flat, z)
        assert abs(c) < 1
        g = RT.retract(flat, z)
        np.testing.assert_allclose(RT.retract(flat, g), g, atol=1e-9)


def test_winding_number(ellipsoid_flat, rng):
    body, flat = ellipsoid_flat
    assert all(flat.winding(z) == 1 for z in interior(body, 1000, rng, rmax=0.999))


def test_winding_outside(ellipsoid_flat):
    _, flat = ellipsoid_flat
    with pytest.raises(RT.RetractionError):
        RT.locate_disc_param(flat, [5.0, 5.0])


def test_boundary_sign(ellipsoid_flat, rng):
    body, flat = ellipsoid_flat
    for z in interior(body, 10, rng):
        assert RT.boundary_sign(flat, z) > 0


def test_candidate_holomorphic(ellipsoid_flat, rng):
    body, flat = ellipsoid_flat
    h = 1e-5
    for z in interior(body, 10, rng, rmax=0.8):
        for j in range(body.dim):
            e = np.zeros(body.dim)
            e[j] = h
            dx = (RT.caratheodory_candidate(flat, z + e) - RT.caratheodory_candidate(flat, z - e)) / (2 * h)
            dy = (RT.caratheodory_candidate(flat, z + 1j * e) - RT.caratheodory_candidate(flat, z - 1j * e)) / (2 * h)
            assert abs(0.5 * (dx + 1j * dy)) < 1e-6


@pytest.mark.parametrize("name", ["ellipsoid_flat", "ball3_flat"])
def test_full_inverse(name, rng, request):
    body, flat = request.getfixturevalue(name)
    for s in disc_points(5, rng):
        expected = np.zeros(body.dim, complex)
        expected[0] = s
        np.testing.assert_allclose(RT.full_inverse(flat, flat.f(s)), expected, atol=1e-10)
    for z in interior(body, 20, rng):
        zeta = RT.full_inverse(flat, z)
        np.testing.assert_allclose(flat.phi(zeta), z, atol=1e-9)


def test_dimension_one():
    body = G.ball(1)
    a, v = 0.3 - 0.2j, 0.5
    flat, lam, m = extremal_retraction(body, [a], [v])
    assert flat.bezout is None
    rng = np.random.default_rng(5)
    for z in disc_points(20, rng):
        # the disc is a Moebius map onto the whole disc, so the retraction is the identity
        np.testing.assert_allclose(RT.retract(flat, [z]), [z], atol=1e-10)


def test_rejects_nonconstant_pair():
    pair = RT.stationary_pair(DiscPoly([[0, 0], [1, 0], [0.5, 0]]), [[1, 0]])
    with pytest.raises(RT.RetractionError):
        RT.flattening_map(pair)


def test_near_boundary_point(ball_axis):
    z = [1 - 1e-8, 0]
    s, info = RT.locate_disc_param(ball_axis, z, with_info=True)
    assert info["reduced_precision"] and info["winding"] == 1
    assert s == pytest.approx(1 - 1e-8, abs=1e-14)
    s, info = RT.locate_disc_param(ball_axis, [0.5, 0.1], with_info=True)
    assert not info["reduced_precision"]
