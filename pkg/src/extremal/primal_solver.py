"""The linear extremal problem ``m = inf P(f)`` over discs with prescribed jets.

Discs are parametrised as ``f = f0 + B q`` where ``f0`` is the Hermite
basepoint, ``B`` the divisor polynomial and ``q`` an arbitrary vector
polynomial of degree ``<= N - d``, so every iterate carries the jets exactly.
``P(f)`` is the maximum of the gauge over an ``M``-point circle grid.

Two engines solve the resulting minimax:

* a trust-region cutting-plane (Kelley) method. The linearisation of a
  gauge at ``z`` is ``Re(w.z)`` with ``w`` the supporting functional, and
  ``p(z') >= Re(w.z')`` holds globally, so every cut is valid everywhere.
  The master LP is kept warm in HiGHS. Works for any body, oracle included.
* an interior-point cone program for bodies whose gauge has an exact cone
  form (ball, polydisc, ellipsoid, polyhedral). Same discretised problem,
  far fewer iterations at large ``N``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import highspy
import numpy as np

from . import _conic
from . import gauge as G
from .disc_space import (DiscPoly, Divisor, JetData, affine_family_matrix, circle_points,
                         constant_disc, disc_from_q, divisor_poly, hermite_basepoint,
                         q_from_disc)

log = logging.getLogger(__name__)

DEFAULT_DEGREE = 32
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 5000
_MAX_AGE = 12
_BAND_K = 0.0


class PrimalError(ValueError):
    pass


@dataclass
class PrimalSolution:
    f: DiscPoly
    value: float
    flatness: float
    iterations: int
    converged: bool
    lower_model: float = float("nan")  # LP lower bound on the discretised optimum
    grid: int = 0
    history: list = field(default_factory=list, repr=False)
    method: str = "kelley"


def default_grid(N: int) -> int:
    return 8 * max(N, 1)


def sup_gauge(body: G.ConvexBody, f: DiscPoly, M: int) -> float:
    """Maximum of ``p(f)`` over the ``M``-point boundary grid."""
    if M < 2 * f.degree + 1:
        raise PrimalError(f"grid size {M} is below 2 * degree + 1")
    vals = f(circle_points(M))
    return float(np.max(G.gauge_eval(body, vals)))


def flatness(body: G.ConvexBody, f: DiscPoly, M: int) -> float:
    vals = G.gauge_eval(body, f(circle_points(M)))
    return float(vals.max() - vals.min())


class _Family:
    """Grid samples of the affine family ``f0 + B q``, realified in ``q``."""

    def __init__(self, f0: DiscPoly, B: np.ndarray, K: int, M: int):
        self.f0, self.B, self.K, self.M = f0, B, K, M
        self.n = f0.dim
        zeta = circle_points(M)
        self.E = affine_family_matrix(B, K, zeta)      # (M, K)
        self.F0 = f0(zeta)                              # (M, n)
        self.nx = 2 * K * self.n

    def unpack(self, x):
        K, n = self.K, self.n
        return x[: K * n].reshape(K, n) + 1j * x[K * n:].reshape(K, n)

    def pack(self, Q):
        return np.concatenate([Q.real.ravel(), Q.imag.ravel()])

    def values(self, x):
        return self.F0 + self.E @ self.unpack(x)

    def cut_rows(self, idx, W):
        """Rows ``g`` and offsets ``b`` with ``Re(w.f(zeta_i)) = g.x + b``."""
        C = self.E[idx][:, :, None] * W[:, None, :]    # (k, K, n)
        k = len(idx)
        g = np.concatenate([C.real.reshape(k, -1), -C.imag.reshape(k, -1)], axis=1)
        b = np.real(np.sum(W * self.F0[idx], axis=1))
        return g, b


def solve_primal(body: G.ConvexBody, div: Divisor, jets: JetData, N: int = DEFAULT_DEGREE,
                 M: int | None = None, tol: float = DEFAULT_TOL,
                 max_iter: int = DEFAULT_MAX_ITER, warm: DiscPoly | None = None,
                 method: str = "auto") -> PrimalSolution:
    """Minimise the grid sup of ``p(f)`` over polynomial discs of degree ``<= N``.

    Parameters
    ----------
    method : {"auto", "conic", "kelley"}
        ``"conic"`` hands the discretised problem to an interior-point cone
        solver (closed-form bodies only). ``"kelley"`` runs the trust-region
        cutting-plane iteration, which needs nothing beyond gauge values and
        supporting functionals. ``"auto"`` picks conic when available and
        falls back to Kelley if the cone solver fails.
    warm : DiscPoly, optional
        Any disc with the prescribed jets; seeds the Kelley iteration.

    Returns the best iterate; ``converged`` is False when the iteration ran
    out before the lower bound came within ``tol`` of the best value.
    """
    if method not in ("auto", "conic", "kelley"):
        raise PrimalError(f"unknown method {method!r}")
    jets.check(div)
    if jets.dim != body.dim:
        raise PrimalError("jet dimension does not match the body")
    d = div.degree
    if N < d - 1:
        raise PrimalError(f"infeasible: divisor degree {d} exceeds N + 1 = {N + 1}")
    if tol <= 0:
        raise PrimalError("tol must be positive")
    M = default_grid(N) if M is None else int(M)
    if M < 2 * N + 1:
        raise PrimalError("grid size must be at least 2N + 1")
    f0 = hermite_basepoint(div, jets)

    # single node of multiplicity one: the constant disc is optimal
    if d == 1:
        a = jets.values[0][0]
        f = constant_disc(a).padded(max(N, 0))
        val = float(G.gauge_eval(body, a))
        return PrimalSolution(f, val, 0.0, 0, True, lower_model=val, grid=M)

    K = N - d + 1
    B = divisor_poly(div)
    if K <= 0:
        f = f0.padded(max(N, f0.degree))
        val = sup_gauge(body, f, M)
        return PrimalSolution(f, val, flatness(body, f, M), 0, True, lower_model=val, grid=M)

    fam = _Family(f0, B, K, M)
    x0 = np.zeros(fam.nx)
    if warm is not None:
        x0 = fam.pack(q_from_disc(warm, f0, B, K))
    use_conic = method == "conic" or (method == "auto" and _conic.supports(body))
    x = None
    if use_conic:
        x, lb, it = _conic_solve(body, fam)
        hist = []
        used = "conic"
    if x is None:
        if method == "conic":
            raise PrimalError("cone solver failed")
        x, val, lb, it, ok, hist = _kelley(body, fam, x0, tol, max_iter)
        used = "kelley"
    f = disc_from_q(f0, B, fam.unpack(x)).padded(N) if N >= f0.degree else disc_from_q(f0, B, fam.unpack(x))
    vals = G.gauge_eval(body, fam.values(x))
    val = float(vals.max())
    if used == "conic":
        ok = val - lb <= tol
    return PrimalSolution(f, val, float(vals.max() - vals.min()), it, ok,
                          lower_model=lb, grid=M, history=hist, method=used)


def _conic_solve(body, fam):
    """Exact cone form of ``min t  s.t.  p(f(zeta_i)) <= t``; ``None`` on solver failure."""
    Lr, Li = _conic.realify(fam.E, fam.n)
    prog = _conic.ConicProgram(fam.nx + 1)
    _conic.add_gauge_epigraph(prog, body, fam.F0.real, fam.F0.imag, Lr, Li, fam.nx)
    res = prog.solve({fam.nx: 1.0})
    if not res.ok:
        log.warning("cone solver returned %s", res.status)
        return None, -np.inf, res.iterations
    return res.z[: fam.nx], res.dual, res.iterations


def _objective(body, fam, x):
    vals = fam.values(x)
    p = G.gauge_eval(body, vals)
    return vals, p


def _cuts_at(body, fam, vals, p, band=1e-9, peaks=True):
    """Cuts at the near-maximal bundle and, optionally, every local peak."""
    top = p.max()
    sel = p >= top - band
    if peaks:
        sel |= (p >= np.roll(p, 1)) & (p >= np.roll(p, -1))
    idx = np.flatnonzero(sel & (p > 0))
    if idx.size == 0:
        return None
    W = G.support_vectors(body, vals[idx])
    return fam.cut_rows(idx, W)


def _global_radius(body, fam, F):
    """Box ``|x_k| <= R`` holding every ``x`` with ``F(x) <= F``.

    ``|f| <= c p(f)`` on the circle, and ``q = (f - f0) / B`` is analytic,
    so its coefficients are bounded by its sup on the circle.
    """
    zeta = circle_points(max(4 * fam.M, 512))
    Bz = np.abs(np.polyval(fam.B[::-1], zeta))
    f0 = np.linalg.norm(fam.f0(zeta), axis=1).max()
    return 1.1 * (body.comparability_c * F + f0) / Bz.min()


class _Master:
    """Persistent cutting-plane LP ``min t  s.t.  g.x + b <= t`` in HiGHS.

    Rows are appended and aged out in place so each solve warm-starts from
    the previous basis.
    """

    def __init__(self, nx):
        self.nx = nx
        self.h = highspy.Highs()
        self.h.setOptionValue("output_flag", False)
        inf = highspy.kHighsInf
        self.h.addVars(nx + 1, np.full(nx + 1, -inf), np.full(nx + 1, inf))
        self.h.changeColCost(nx, 1.0)
        self._cols = np.arange(nx, dtype=np.int32)
        self.A = np.zeros((0, nx))
        self.b = np.zeros(0)
        self.age = np.zeros(0)

    def add(self, g, b):
        k = len(b)
        G_ = np.hstack([g, -np.ones((k, 1))])
        starts = np.arange(k, dtype=np.int32) * (self.nx + 1)
        idx = np.tile(np.arange(self.nx + 1, dtype=np.int32), k)
        self.h.addRows(k, np.full(k, -highspy.kHighsInf), -b, G_.size, starts, idx, G_.ravel())
        self.A = np.vstack([self.A, g])
        self.b = np.concatenate([self.b, b])
        self.age = np.concatenate([self.age, np.zeros(k)])

    def drop(self, mask):
        idx = np.flatnonzero(mask).astype(np.int32)
        if idx.size:
            self.h.deleteRows(idx.size, idx)
            keep = ~mask
            self.A, self.b, self.age = self.A[keep], self.b[keep], self.age[keep]

    def solve(self, lo, hi):
        self.h.changeColsBounds(self.nx, self._cols, lo, hi)
        # the HiGHS clock is cumulative over the object's lifetime
        self.h.setOptionValue("time_limit", self.h.getRunTime() + 20.0)
        self.h.run()
        if self.h.getModelStatus() != highspy.HighsModelStatus.kOptimal:
            return None
        z = np.asarray(self.h.getSolution().col_value)
        return z[:self.nx], float(z[-1])


def _band(F_new, F_c, model):
    return _BAND_K * max(F_c - model, 0.0) if np.isfinite(model) else np.inf


def _kelley(body, fam, x0, tol, max_iter):
    """Trust-region Kelley iteration on ``max_i p(f(zeta_i))``.

    The master LP lives inside a box that provably contains the optimum, so
    its value is a valid lower bound whenever no trust-region face binds.
    When the model predicts no decrease inside the trust region, the LP is
    re-solved on the full box to settle convergence. Cuts whose slack stays
    large are aged out.
    """
    x_c = x0.copy()
    vals, p = _objective(body, fam, x_c)
    F_c = float(p.max())
    hist = [F_c]
    if F_c <= 0:
        return x_c, F_c, F_c, 0, True, hist
    R = _global_radius(body, fam, F_c)
    lo_g = np.full(fam.nx, -R)
    hi_g = np.full(fam.nx, R)
    delta = 0.25 * R
    lp = _Master(fam.nx)
    lp.add(*_cuts_at(body, fam, vals, p, np.inf))  # seed with every point
    lb = -np.inf
    it = 0
    ok = False
    fails = 0
    for it in range(1, max_iter + 1):
        lo = np.maximum(x_c - delta, lo_g)
        hi = np.minimum(x_c + delta, hi_g)
        sol = lp.solve(lo, hi)
        if sol is not None:
            x_new, model = sol
            eps = 1e-9 * delta
            tr_active = bool(np.any(((x_new <= lo + eps) & (lo > lo_g))
                                    | ((x_new >= hi - eps) & (hi < hi_g))))
            if tr_active and F_c - model <= tol:
                # no progress predicted locally: bound on the full box
                sol = lp.solve(lo_g, hi_g)
                if sol is not None:
                    x_new, model = sol
                    tr_active = False
            if not tr_active:
                lb = max(lb, model)
            slack = model - (lp.A @ x_new + lp.b)
            lp.age = np.where(slack <= 1e-9 * max(1.0, abs(model)), 0, lp.age + 1)
            lp.drop(lp.age >= _MAX_AGE)
        else:
            fails += 1
            # degenerate master problem: Polyak subgradient step
            x_new = _polyak_step(body, fam, x_c, F_c, lb)
            model = -np.inf
            tr_active = True
        if F_c - lb <= tol:
            ok = True
            break
        pred = F_c - model
        vals, p = _objective(body, fam, x_new)
        F_new = float(p.max())
        hist.append(F_new)
        cut = _cuts_at(body, fam, vals, p, _band(F_new, F_c, model))
        if cut is not None:
            lp.add(*cut)
        if F_new < F_c - 0.1 * max(pred, 0.0) or (not np.isfinite(model) and F_new < F_c):
            x_c, F_c = x_new, F_new
            if tr_active:
                delta = min(2.0 * delta, R)
        else:
            delta = max(0.5 * delta, 1e-12 * R)
        if fails > 20:
            break
    return x_c, F_c, lb, it, ok, hist


def _polyak_step(body, fam, x, F, lb):
    vals, p = _objective(body, fam, x)
    i = int(np.argmax(p))
    W = G.support_vectors(body, vals[i:i + 1])
    g, _ = fam.cut_rows(np.array([i]), W)
    g = g[0]
    target = lb if np.isfinite(lb) else 0.99 * F
    step = (F - target) / max(float(g @ g), 1e-300)
    return x - step * g
