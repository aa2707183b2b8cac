import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from extremal import gauge as G
from conftest import BODIES, random_points

# root of (0.5/x)^2 + (0.5/x)^4 = 1 by 200-step scalar bisection
ELLIPSOID_HALF_HALF = 0.6360098247570345


def test_ball_gauge():
    assert G.gauge_eval(G.ball(2), [0.3, 0.4]) == pytest.approx(0.5, abs=1e-15)


def test_polydisc_gauge():
    assert G.gauge_eval(G.polydisc(2), [0.5, -0.5j]) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("t", [0.3, -0.7, 0.2j, 1.5])
def test_ellipsoid_single_coordinate(t):
    body = G.complex_ellipsoid(2, [1, 2])
    assert G.gauge_eval(body, [t, 0]) == pytest.approx(abs(t), rel=1e-12)


def test_ellipsoid_mixed_point():
    body = G.complex_ellipsoid(2, [1, 2])
    assert G.gauge_eval(body, [0.5, 0.5]) == pytest.approx(ELLIPSOID_HALF_HALF, abs=1e-12)


def test_gauge_vectorised_matches_pointwise(body, rng):
    Z = random_points(rng, 20, body.dim)
    many = G.gauge_eval(body, Z)
    one = [G.gauge_eval(body, z) for z in Z]
    np.testing.assert_allclose(many, one, rtol=1e-13)


def test_dual_ball():
    assert G.dual_gauge_eval(G.ball(2), [0.6, 0.8j]) == pytest.approx(1.0, abs=1e-14)


def test_dual_polydisc():
    # torus brute force over 721 x 721 angles gives 3.0
    assert G.dual_gauge_eval(G.polydisc(2), [1, -2]) == pytest.approx(3.0, abs=1e-12)


def test_dual_zero(body):
    assert G.dual_gauge_eval(body, np.zeros(body.dim)) == 0.0


def test_dual_ellipsoid_against_sampling(rng):
    body = G.complex_ellipsoid(2, [1, 2])
    w = np.array([0.4 - 0.3j, 1.1j])
    Z = random_points(rng, 200000, 2)
    brute = np.max((Z @ w).real / G.gauge_eval(body, Z))
    exact = G.dual_gauge_eval(body, w)
    assert brute <= exact + 1e-9
    assert brute >= exact * (1 - 1e-2)


def test_supporting_functional_ball():
    sf = G.supporting_functional(G.ball(2), [0.5, 0])
    np.testing.assert_allclose(sf.w, [1, 0], atol=1e-15)


def test_supporting_functional_polydisc_tie_break():
    sf = G.supporting_functional(G.polydisc(2), [0.5, 0.5])
    np.testing.assert_allclose(sf.w, [1, 0], atol=1e-15)


def test_supporting_functional_quartic_disc():
    sf = G.supporting_functional(G.complex_ellipsoid(1, [2]), [0.4])
    np.testing.assert_allclose(sf.w, [1], atol=1e-12)


def test_supporting_functional_rejects_origin():
    with pytest.raises(G.GaugeError):
        G.supporting_functional(G.ball(2), [0, 0])


def test_support_identity(body, rng):
    Z = random_points(rng, 50, body.dim)
    for z in Z:
        sf = G.supporting_functional(body, z)
        assert np.real(z @ sf.w) == pytest.approx(G.gauge_eval(body, z), rel=1e-9)
        if body.is_smooth:
            assert G.dual_gauge_eval(body, sf.w) == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("body, z, expected", [
    (G.ball(1), [0.25], 0.75),
    (G.polydisc(2), [0.5, 0], 0.5),
    (G.ball(2), [0.6, 0.8], 0.0),
    (G.polydisc(2), [0.3, 1.0], 0.0),
])
def test_boundary_distance(body, z, expected):
    assert G.boundary_distance(body, z) == pytest.approx(expected, abs=1e-14)


def test_boundary_distance_outside():
    with pytest.raises(G.GaugeError):
        G.boundary_distance(G.ball(2), [1.0, 0.5])


def test_biduality_ball_polydisc(rng):
    for body in (G.ball(2), G.polydisc(2)):
        z = random_points(rng, 1, 2)[0]
        # random directions plus the phased coordinate axes (vertices of the polydisc polar)
        phases = np.exp(2j * np.pi * rng.random(5000))
        axes = np.concatenate([np.outer(phases, [1, 0]), np.outer(phases, [0, 1])])
        W = np.concatenate([random_points(rng, 20000, 2), axes])
        approx = np.max((W @ z).real / G.dual_gauge_eval(body, W))
        assert approx == pytest.approx(G.gauge_eval(body, z), rel=2e-2)
        assert approx <= G.gauge_eval(body, z) * (1 + 1e-12)


def test_body_roundtrip(body):
    back = G.body_from_dict(G.body_to_dict(body))
    assert back.kind == body.kind and back.dim == body.dim
    z = np.linspace(0.1, 0.4, body.dim) * (1 + 0.5j)
    assert G.gauge_eval(back, z) == pytest.approx(G.gauge_eval(body, z), rel=1e-14)


def test_oracle_body_matches_ball(rng):
    ob = G.oracle_body(2, lambda z: float(np.linalg.norm(z)), 1.0)
    w = random_points(rng, 1, 2)[0]
    assert G.dual_gauge_eval(ob, w) == pytest.approx(np.linalg.norm(w), rel=1e-4)


@pytest.mark.parametrize("bad", [lambda: G.polydisc(2, [1, -1]),
                                 lambda: G.complex_ellipsoid(2, [0.3, 1]),
                                 lambda: G.polyhedral([[1, 0], [0, 1]])])
def test_invalid_bodies(bad):
    with pytest.raises(G.GaugeError):
        bad()


# property checks; the acceptance suite runs the same axioms on 10^3 vectorised samples
cplx = st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False)
vec2 = st.lists(cplx, min_size=2, max_size=2).map(np.array)
vec3 = st.lists(cplx, min_size=3, max_size=3).map(np.array)
two_d = [k for k in sorted(BODIES) if BODIES[k]().dim == 2]


@pytest.mark.parametrize("name", two_d)
@settings(max_examples=150, deadline=None)
@given(x=vec2, y=vec2, t=st.floats(0, 50))
def test_gauge_axioms(name, x, y, t):
    body = BODIES[name]()
    px, py = G.gauge_eval(body, x), G.gauge_eval(body, y)
    assert G.gauge_eval(body, x + y) <= px + py + 1e-12 * (1 + px + py)
    assert G.gauge_eval(body, t * x) == pytest.approx(t * px, rel=1e-10, abs=1e-12)
    nx = np.linalg.norm(x)
    c = body.comparability_c
    assert nx / c - 1e-12 <= px * (1 + 1e-10) and px <= c * nx + 1e-12


@pytest.mark.parametrize("name", two_d)
@settings(max_examples=150, deadline=None)
@given(z=vec2, w=vec2)
def test_fenchel(name, z, w):
    body = BODIES[name]()
    lhs = np.real(z @ w)
    rhs = G.gauge_eval(body, z) * G.dual_gauge_eval(body, w)
    assert lhs <= rhs + 1e-9 * (1 + np.linalg.norm(z) * np.linalg.norm(w))


@settings(max_examples=100, deadline=None)
@given(z=vec3, theta=st.floats(0, 2 * np.pi))
def test_circled_rotation(z, theta):
    body = BODIES["polydisc_r"]()
    assert G.gauge_eval(body, np.exp(1j * theta) * z) == pytest.approx(G.gauge_eval(body, z), rel=1e-12, abs=1e-14)
