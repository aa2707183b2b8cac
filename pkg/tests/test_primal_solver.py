import numpy as np
import pytest

from extremal import gauge as G
from extremal.disc_space import DiscPoly, Divisor, JetData, disc_jet, jet_error
from extremal.primal_solver import PrimalError, flatness, solve_primal, sup_gauge


def jets2(a, v):
    return JetData((np.array([a, v], dtype=complex),))


def test_sup_gauge_half_disc():
    assert sup_gauge(G.ball(1), DiscPoly([0, 0.5]), 64) == pytest.approx(0.5, abs=1e-15)


def test_sup_gauge_polydisc_unimodular():
    f = DiscPoly([[0, 0], [1, 0], [0, 1]])
    assert sup_gauge(G.polydisc(2), f, 64) == pytest.approx(1.0, abs=1e-15)
    assert flatness(G.polydisc(2), f, 64) == pytest.approx(0.0, abs=1e-15)


def test_sup_gauge_ball_brute():
    f = DiscPoly([[0.3, 0], [0, 0.4]])
    # brute maximisation on 10^4 boundary points gives 0.5
    assert sup_gauge(G.ball(2), f, 256) == pytest.approx(0.5, abs=1e-15)


def test_sup_gauge_rejects_small_grid():
    with pytest.raises(PrimalError):
        sup_gauge(G.ball(1), DiscPoly(np.ones((10, 1))), 8)


def test_disc_two_point():
    div = Divisor.pair(0.5)
    sol = solve_primal(G.ball(1), div, JetData((np.array([[0]]), np.array([[0.25]]))), N=16)
    assert sol.value == pytest.approx(0.5, abs=1e-6)
    assert jet_error(sol.f, div, JetData((np.array([[0]]), np.array([[0.25]])))) < 1e-9


@pytest.mark.parametrize("v", [[0.3, 0.4j], [1.0, -2.0], [0.1 + 0.1j, 0]])
def test_ball_schwarz(v):
    v = np.array(v, dtype=complex)
    sol = solve_primal(G.ball(2), Divisor.origin(2), jets2([0, 0], v), N=16)
    assert sol.value == pytest.approx(np.linalg.norm(v), rel=1e-6)


@pytest.mark.parametrize("body", [G.ball(2), G.polydisc(2), G.complex_ellipsoid(2, [1, 2])])
def test_single_node_constant(body):
    a = np.array([0.2, -0.3j])
    sol = solve_primal(body, Divisor.origin(1), JetData((a[None],)), N=8)
    assert sol.value == pytest.approx(G.gauge_eval(body, a), abs=1e-15)
    np.testing.assert_allclose(sol.f(np.exp(1j * np.linspace(0, 6, 7))), np.tile(a, (7, 1)))


def test_jet_fidelity(body):
    div = Divisor(((0.0, 2), (0.4j, 1)))
    a = 0.1 * np.ones(body.dim)
    v = 0.2 * np.arange(1, body.dim + 1)
    b = -0.15j * np.ones(body.dim)
    jets = JetData((np.array([a, v]), b[None]))
    sol = solve_primal(body, div, jets, N=8, max_iter=300)
    assert jet_error(sol.f, div, jets) < 1e-9
    np.testing.assert_allclose(disc_jet(sol.f, 0.0, 1), [a, v], atol=1e-9)


def test_degree_monotone():
    body = G.complex_ellipsoid(2, [1, 2])
    jets = jets2([0.2, 0.1j], [0.5, 0.4])
    vals = [solve_primal(body, Divisor.origin(2), jets, N=N).value for N in (16, 32, 64)]
    tol = 1e-6
    assert vals[1] <= vals[0] + tol and vals[2] <= vals[1] + tol


def test_kelley_agrees_with_conic():
    body = G.complex_ellipsoid(2, [1, 2])
    jets = jets2([0.2, 0.1j], [0.5, 0.4])
    conic = solve_primal(body, Divisor.origin(2), jets, N=6, method="conic")
    kel = solve_primal(body, Divisor.origin(2), jets, N=6, method="kelley", tol=1e-7, max_iter=3000)
    assert kel.method == "kelley"
    assert kel.value == pytest.approx(conic.value, abs=1e-5)
    assert kel.lower_model <= conic.value + 1e-7


def test_oracle_body_uses_cutting_planes():
    body = G.oracle_body(2, lambda z: float(np.linalg.norm(z)), 1.0)
    v = np.array([0.3, 0.4])
    sol = solve_primal(body, Divisor.origin(2), jets2([0, 0], v), N=4, tol=1e-6, max_iter=2000)
    assert sol.method == "kelley"
    assert sol.value == pytest.approx(0.5, abs=1e-4)


def test_infeasible_degree():
    div = Divisor(((0.0, 3), (0.5, 2)))
    jets = JetData((np.zeros((3, 1)), np.ones((2, 1))))
    with pytest.raises(PrimalError):
        solve_primal(G.ball(1), div, jets, N=2)


def test_deterministic():
    body = G.polydisc(2)
    jets = jets2([0.1, 0], [0.3, 0.6j])
    s1 = solve_primal(body, Divisor.origin(2), jets, N=8, method="kelley", max_iter=200)
    s2 = solve_primal(body, Divisor.origin(2), jets, N=8, method="kelley", max_iter=200)
    assert np.array_equal(s1.f.coeffs, s2.f.coeffs)
