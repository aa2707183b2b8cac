"""Kobayashi metric and distance as certified brackets, Carathéodory lower bounds.

Metric. ``m(lam)`` is the optimal boundary sup of ``p(f)`` over discs with
``f(0) = a`` and ``f'(0) = lam v``; it is convex with ``m(0) = p(a)``, and
``K(a; v) = 1 / lam*`` at the root of ``m = 1``. One primal value ``mU >= m``
and one dual value ``mL <= m`` at ``lam`` bracket the root through convexity:

    lam * min(1, (1 - p(a)) / (mU - p(a))) <= lam* <= lam * max(1, (1 - p(a)) / (mL - p(a)))

The left side comes from the explicit disc ``(1 - s) a + s f``; the right
from the secant through ``(0, p(a))`` extended past ``lam``.

Distance. ``m(t)`` for ``f(0) = a, f(t) = b`` is nonincreasing in ``t``
(``f(s t / t')`` has the jets at ``t'``). A primal disc with ``mU <= 1`` at
``t_hi`` and a dual bound ``mL >= 1`` at ``t_lo`` give
``artanh t_lo <= d(a, b) <= artanh t_hi``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import gauge as G
from . import retraction as RT
from .disc_space import DiscPoly, Divisor, JetData, circle_points, constant_disc
from .dual_certificate import DualCertificate, DualError, StationaryError, solve_dual
from .primal_solver import PrimalError, solve_primal

log = logging.getLogger(__name__)

TOL_M = 1e-4
TOL_PARAM = 1e-6
MAX_DEGREE = 64
_FINE = 4          # grid refinement for the reported primal sup
_T_MAX = 0.99      # dual nodes stay inside this radius


class MetricError(ValueError):
    pass


@dataclass
class MetricResult:
    query: dict
    upper: float
    lower: float
    extremal_disc: DiscPoly | None = None
    certificate: DualCertificate | None = None
    bisection_trace: list = field(default_factory=list)
    iterations: int = 0
    wall_time: float = 0.0
    degree: int = 0
    flags: list = field(default_factory=list)

    @property
    def gap(self) -> float:
        return self.upper - self.lower

    @property
    def value(self) -> float:
        return 0.5 * (self.upper + self.lower)

    def to_dict(self) -> dict:
        return {"query": self.query, "lower": self.lower, "upper": self.upper, "gap": self.gap,
                "iterations": self.iterations, "wall_time": self.wall_time, "degree": self.degree,
                "flags": list(self.flags),
                "trace": [[float(x), float(y)] for x, y in self.bisection_trace]}


def poincare_distance(z1: complex, z2: complex) -> float:
    """``artanh |(z1 - z2) / (1 - conj(z1) z2)|``."""
    z1, z2 = complex(z1), complex(z2)
    if not (abs(z1) < 1 and abs(z2) < 1):
        raise MetricError("points must lie in the open unit disc")
    r = abs(z1 - z2) / abs(1 - z1.conjugate() * z2)
    return float(np.arctanh(min(r, 1.0)))


def _vec(x, n=None, name="point"):
    x = np.atleast_1d(np.asarray(x, dtype=complex)).ravel()
    if n is not None and x.size != n:
        raise MetricError(f"{name} has dimension {x.size}, body has {n}")
    if not np.all(np.isfinite(x)):
        raise MetricError(f"{name} is not finite")
    return x


def _inside(body, a, name="a"):
    pa = float(G.gauge_eval(body, a))
    if not pa < 1:
        raise MetricError(f"{name} is not inside the body (p = {pa:.6g})")
    return pa


def _fine_sup(body, f: DiscPoly, M: int) -> float:
    return float(G.gauge_eval(body, f(circle_points(_FINE * M))).max())


def _dual_lower(cert: DualCertificate) -> float:
    """Lower bound on ``m`` including the quadrature error of ``P*``."""
    if cert.lower_bound is None or not cert.converged:
        return -np.inf
    return 1.0 / (cert.dual_norm + cert.q_err)


# --------------------------------------------------------------------------
# infinitesimal metric


def kobayashi_metric(body: G.ConvexBody, a, v, tol: float = TOL_M, N: int = 32,
                     tol_primal: float = 1e-9, max_steps: int = 12,
                     max_degree: int = MAX_DEGREE, M: int | None = None) -> MetricResult:
    """Bracket ``K(a; v)`` between a dual lower and a primal upper bound.

    Parameters
    ----------
    tol : float
        Target for ``|m - 1|`` at the final parameter. Iteration continues
        (cheaply) until the parameter bracket is below ``1e-6`` relative.
    N : int
        Starting disc degree; doubled up to ``max_degree`` while the
        bracket stays wider than ``tol``.
    M : int, optional
        Boundary grid; ignored once it falls below ``8 N``.
    """
    t0 = time.perf_counter()
    n = body.dim
    a = _vec(a, n, "a")
    v = _vec(v, n, "v")
    pa = _inside(body, a)
    q = {"type": "metric", "a": a.tolist(), "v": v.tolist()}
    if not np.any(v):
        return MetricResult(q, 0.0, 0.0, constant_disc(a), None, [], 0,
                            time.perf_counter() - t0, 0, ["exact"])
    div = Divisor.origin(2)

    def jets(lam):
        return JetData((np.array([a, lam * v]),))

    trace = []
    best = None
    lam_lo, lam_hi = 0.0, np.inf
    iters = 0
    deg = N
    while True:
        lam = _metric_seed(body, v, pa) if best is None else best[0]
        pts = []
        for _ in range(max_steps):
            sol = solve_primal(body, div, jets(lam), N=deg, M=_grid(M, deg), tol=tol_primal)
            iters += 1
            mU = max(_fine_sup(body, sol.f, sol.grid), sol.value)
            trace.append((lam, mU))
            pts.append((lam, mU))
            lam_lo = max(lam_lo, lam * min(1.0, (1 - pa) / (mU - pa)) if mU > pa else lam)
            if best is None or abs(mU - 1) < abs(best[1] - 1) or best[3] != deg:
                best = (lam, mU, sol, deg)
            if abs(mU - 1) <= min(tol, 10 * tol_primal):
                break
            lam = _next_lambda(pts, pa)
            if abs(lam - pts[-1][0]) <= 1e-15 * lam:
                break
        lam, mU, sol, _ = best
        cert = solve_dual(body, div, jets(lam), K_dual=deg, tol=1e-10, primal_value=mU)
        mL = _dual_lower(cert)
        if mL > pa:
            lam_hi = min(lam_hi, lam * max(1.0, (1 - pa) / (mL - pa)))
        width = (lam_hi - lam_lo) / lam
        if width <= max(TOL_PARAM, 0.0) and abs(mU - 1) <= tol or deg >= max_degree:
            break
        deg = min(2 * deg, max_degree)
    flags = []
    if not np.isfinite(lam_hi):
        flags.append("no_dual_bound")
    if abs(best[1] - 1) > tol:
        flags.append("m_not_converged")
    if not _monotone(trace, increasing=True, tol=tol):
        flags.append("non_monotone_trace")
    upper = 1.0 / lam_lo if lam_lo > 0 else np.inf
    lower = 1.0 / lam_hi if np.isfinite(lam_hi) else 0.0
    return MetricResult(q, upper, lower, best[2].f, cert, trace, iters,
                        time.perf_counter() - t0, best[3], flags)


def _grid(M, N):
    return None if M is None or M < 8 * N else int(M)


def _metric_seed(body, v, pa):
    # first guess from the inscribed ball: |z| <= c p(z)
    nv = float(G.gauge_eval(body, v))
    return (1 - pa) / max(nv, 1e-300)


def _next_lambda(pts, pa):
    """Secant step on ``m(lam) - 1``; the first step anchors at ``(0, p(a))``."""
    if len(pts) == 1:
        lam, m = pts[0]
        return lam * (1 - pa) / (m - pa) if m > pa else 2 * lam
    (l1, m1), (l2, m2) = pts[-2], pts[-1]
    if m2 == m1:
        return l2
    nxt = l2 + (1 - m2) * (l2 - l1) / (m2 - m1)
    below = [l for l, m in pts if m < 1]
    above = [l for l, m in pts if m > 1]
    lo = max(below) if below else 0.0
    hi = min(above) if above else np.inf
    if not lo < nxt < hi:
        nxt = 0.5 * (lo + hi) if np.isfinite(hi) else 2 * max(lo, l2)
    return nxt


def _monotone(trace, increasing: bool, tol: float) -> bool:
    if len(trace) < 2:
        return True
    pts = sorted(trace)
    m = np.array([y for _, y in pts])
    d = np.diff(m)
    return bool(np.all(d >= -tol) if increasing else np.all(d <= tol))


# --------------------------------------------------------------------------
# integrated distance


def kobayashi_distance(body: G.ConvexBody, a, b, tol: float = TOL_M, N: int = 32,
                       tol_primal: float = 1e-9, max_steps: int = 60, M: int | None = None,
                       max_degree: int = MAX_DEGREE) -> MetricResult:
    """Bracket the Kobayashi (Lempert) distance between ``a`` and ``b``.

    Root of ``1/m(t) = 1`` by safeguarded regula falsi (Illinois); a trace
    that fails the monotonicity check switches to plain bisection. The disc
    degree is doubled up to ``max_degree`` while the bracket is wider than
    the parameter tolerance allows; brackets from all degrees are combined.
    """
    t0 = time.perf_counter()
    n = body.dim
    a = _vec(a, n, "a")
    b = _vec(b, n, "b")
    _inside(body, a, "a")
    _inside(body, b, "b")
    q = {"type": "distance", "a": a.tolist(), "b": b.tolist()}
    if np.array_equal(a, b):
        return MetricResult(q, 0.0, 0.0, constant_disc(a), None, [], 0,
                            time.perf_counter() - t0, 0, ["exact"])
    jets = JetData((a[None, :], b[None, :]))
    upper, lower = np.inf, 0.0
    trace, flags = [], []
    solves = 0
    t_init = 0.5
    deg = N
    disc = cert = None
    while True:
        p = _distance_pass(body, jets, deg, M, tol, tol_primal, max_steps, t_init)
        trace += p["trace"]
        solves += p["solves"]
        flags += [f for f in p["flags"] if f not in flags]
        if p["upper"] < upper:
            upper, disc = p["upper"], p["disc"]
        if p["lower"] > lower:
            lower, cert = p["lower"], p["cert"]
        t_init = p["t_star"]
        if upper - lower <= 10 * TOL_PARAM / (1 - t_init ** 2) or deg >= max_degree:
            break
        deg = min(2 * deg, max_degree)
    if np.isfinite(upper):
        flags = [f for f in flags if f != "no_primal_bound"]
    if lower > 0:
        flags = [f for f in flags if f != "no_dual_bound"]
    return MetricResult(q, upper, lower, disc, cert, trace, solves,
                        time.perf_counter() - t0, deg, flags)


def _distance_pass(body, jets, N, M, tol, tol_primal, max_steps, t_init):
    cache = {}

    def solve(t):
        if t not in cache:
            sol = solve_primal(body, Divisor.pair(t), jets, N=N, M=_grid(M, N), tol=tol_primal)
            cache[t] = (max(_fine_sup(body, sol.f, sol.grid), sol.value), sol)
        return cache[t]

    trace = []

    def g(t):
        m = solve(t)[0]
        trace.append((t, m))
        return 1.0 / m - 1.0

    flags = []
    # bracket: g increases with t
    lo = hi = t_init
    g_lo = g_hi = g(t_init)
    while g_lo > 0:
        lo = lo / 2
        g_lo = g(lo)
        if lo < 1e-8:
            raise MetricError("could not bracket the distance from below")
    while g_hi < 0:
        hi = 1 - (1 - hi) / 2
        if hi > _T_MAX:
            hi = _T_MAX
            g_hi = g(hi)
            if g_hi < 0:
                raise MetricError(f"distance exceeds the supported range (t > {_T_MAX})")
            break
        g_hi = g(hi)
    bisect = False
    side = 0
    for _ in range(max_steps):
        if hi - lo <= TOL_PARAM * 0.25:
            break
        if not bisect and not _monotone(trace, increasing=False, tol=tol):
            bisect = True
            flags.append("non_monotone_trace")
        if bisect or g_hi == g_lo:
            t = 0.5 * (lo + hi)
        else:
            t = hi - g_hi * (hi - lo) / (g_hi - g_lo)
            t = min(max(t, lo + 1e-3 * (hi - lo)), hi - 1e-3 * (hi - lo))
        gt = g(t)
        if gt == 0:
            lo = hi = t
            break
        if gt < 0:
            lo, g_lo = t, gt
            if side == -1:
                g_hi *= 0.5
            side = -1
        else:
            hi, g_hi = t, gt
            if side == 1:
                g_lo *= 0.5
            side = 1
        if abs(gt) <= 1e-12:
            break
    t_star = 0.5 * (lo + hi)
    # certified ends around the root
    width = max(TOL_PARAM / 4, 2 * (hi - lo))
    t_hi = t_lo = None
    cert = None
    delta = width
    for _ in range(12):
        th = min(t_star + delta, _T_MAX)
        if solve(th)[0] <= 1.0:
            t_hi = th
            break
        delta *= 4
    delta = width
    for _ in range(12):
        tl = max(t_star - delta, 1e-12)
        c = solve_dual(body, Divisor.pair(tl), jets, K_dual=N, tol=1e-10)
        if _dual_lower(c) >= 1.0:
            t_lo, cert = tl, c
            break
        delta *= 4
    if t_hi is None:
        flags.append("no_primal_bound")
    if t_lo is None:
        flags.append("no_dual_bound")
    sol = solve(t_hi if t_hi is not None else hi)[1]
    return {"upper": float(np.arctanh(t_hi)) if t_hi is not None else np.inf,
            "lower": float(np.arctanh(t_lo)) if t_lo is not None else 0.0,
            "disc": sol.f, "cert": cert, "trace": trace, "solves": len(cache),
            "flags": flags, "t_star": t_star}


# --------------------------------------------------------------------------
# Carathéodory side


def _boundary_sample(body, k, rng):
    n = body.dim
    U = rng.standard_normal((k, n)) + 1j * rng.standard_normal((k, n))
    return U / G.gauge_eval(body, U)[:, None]


def _interior_sample(body, k, rng, rmax=0.999):
    Z = _boundary_sample(body, k, rng)
    r = rmax * rng.random(k) ** (1.0 / (2 * body.dim))
    return Z * r[:, None]


def linear_candidates(body: G.ConvexBody, a, v, samples: int = 256, seed: int = 0) -> float:
    """Best lower bound from maps ``z -> Moebius(z . w)`` over sampled functionals.

    Each ``w`` is normalised to ``p*(w) = 1`` so ``Re(z . w) < 1`` on the
    body. On circled bodies ``|z . w| < 1`` as well and the disc
    normalisation applies; otherwise the half plane ``Re u < 1`` is mapped
    to the disc. Every candidate is checked on a boundary sample first.
    """
    n = body.dim
    a = _vec(a, n, "a")
    v = _vec(v, n, "v")
    if not np.any(v):
        return 0.0
    rng = np.random.default_rng(seed)
    pts = [np.eye(n, dtype=complex), v[None, :]]
    if np.any(a):
        pts.append(a[None, :])
    pts.append(_boundary_sample(body, samples, rng))
    Zs = np.concatenate(pts)
    W = G.support_vectors(body, Zs / G.gauge_eval(body, Zs)[:, None])
    W = np.concatenate([W, np.conj(np.eye(n)), np.conj(v)[None, :]])
    W = W / G.dual_gauge_eval(body, W)[:, None]
    check = _boundary_sample(body, 512, rng)
    circled = body.is_circled
    best = 0.0
    for w in W:
        u = check @ w
        la, lv = complex(a @ w), complex(v @ w)
        if np.all(u.real <= 1 + 1e-12) and la.real < 1:
            best = max(best, abs(lv) / (2 * (1 - la.real)))
        if circled and np.all(np.abs(u) <= 1 + 1e-12) and abs(la) < 1:
            best = max(best, abs(lv) / (1 - abs(la) ** 2))
    return float(best)


def retraction_candidate(body: G.ConvexBody, flat: RT.FlatteningMap, a, v, samples: int = 200,
                         seed: int = 0, h: float = 1e-5):
    """Poincaré length of ``dc(a) v`` for the candidate of ``flat``.

    Returns ``(value, max |c|)`` over an interior sample; ``value`` is NaN
    when a sample point leaves the disc or cannot be located.
    """
    a = _vec(a, body.dim, "a")
    v = _vec(v, body.dim, "v")
    rng = np.random.default_rng(seed)
    Z = _interior_sample(body, samples, rng)
    cmax = 0.0
    for z in Z:
        try:
            cmax = max(cmax, abs(RT.caratheodory_candidate(flat, z)))
        except RT.RetractionError:
            return float("nan"), float("inf")
    if not cmax < 1:
        return float("nan"), cmax
    ca = RT.caratheodory_candidate(flat, a)
    step = h / max(np.abs(v).max(), 1e-300)
    d = (RT.caratheodory_candidate(flat, a + step * v) - RT.caratheodory_candidate(flat, a - step * v)) / (2 * step)
    return float(abs(d) / (1 - abs(ca) ** 2)), cmax


def caratheodory_lower(body: G.ConvexBody, a, v, retraction: RT.FlatteningMap | None = None,
                       samples: int = 256, seed: int = 0) -> float:
    """Certified lower bound for the Carathéodory metric ``C(a; v)``."""
    n = body.dim
    a = _vec(a, n, "a")
    v = _vec(v, n, "v")
    _inside(body, a)
    if not np.any(v):
        return 0.0
    best = linear_candidates(body, a, v, samples, seed)
    if retraction is not None:
        val, _ = retraction_candidate(body, retraction, a, v, seed=seed)
        if np.isfinite(val):
            best = max(best, val)
    return best


@dataclass
class CKReport:
    query: dict
    K_upper: float
    K_lower: float
    C_lower: float
    C_exact: float          # 1/lam of the disc behind the retraction
    max_abs_c: float
    boundary_value: float   # p on f(circle) for that disc, >= 1
    weak: bool
    passed: bool
    tol: float
    message: str = ""

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def verify_ck_equality(body: G.ConvexBody, a, v, tol: float = 1e-3, N: int = 32,
                       samples: int = 200, seed: int = 0, M: int | None = None) -> CKReport:
    """Compare the Kobayashi bracket with a Carathéodory lower bound from the retraction.

    The retraction is built from an extremal disc at a parameter where the
    disc's boundary value is at least 1, so the candidate is defined on the
    whole body. Falls back to linear candidates (``weak``) when no
    stationary pair is available.
    """
    n = body.dim
    a = _vec(a, n, "a")
    v = _vec(v, n, "v")
    q = {"type": "ck_check", "a": a.tolist(), "v": v.tolist()}
    K = kobayashi_metric(body, a, v, N=N, M=M)
    if not np.any(v):
        return CKReport(q, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, False, True, tol, "v = 0")
    msg = ""
    C = np.nan
    c_exact = np.nan
    cmax = np.nan
    mval = np.nan
    try:
        flat, lam, mval = extremal_retraction(body, a, v, K, N)
        c_exact = 1.0 / lam
        C, cmax = retraction_candidate(body, flat, a, v, samples, seed)
        if not np.isfinite(C):
            msg = f"candidate left the disc on the sample (max |c| = {cmax:.6g})"
    except (StationaryError, RT.RetractionError, PrimalError, DualError) as exc:
        msg = f"retraction unavailable: {exc}"
    weak = not np.isfinite(C)
    if weak:
        C = linear_candidates(body, a, v, seed=seed)
    passed = bool(K.upper - C <= tol and C <= K.upper + tol)
    return CKReport(q, K.upper, K.lower, float(C), float(c_exact), float(cmax), float(mval),
                    weak, passed, tol, msg)


def extremal_retraction(body: G.ConvexBody, a, v, K: MetricResult | None = None, N: int = 32):
    """Flattening map of an extremal disc through ``a`` in direction ``v``.

    The disc is taken at a parameter where its boundary value is at least
    1, so the resulting candidate is defined on the whole body. Returns
    ``(flat, lam, boundary value)``.
    """
    if not body.is_smooth:
        raise StationaryError("no stationary pair for a nonsmooth body")
    a = _vec(a, body.dim, "a")
    v = _vec(v, body.dim, "v")
    if K is None:
        K = kobayashi_metric(body, a, v, N=N)
    div = Divisor.origin(2)
    lam = 1.0 / K.lower if K.lower > 0 else 1.0 / K.upper
    deg = max(N, K.degree)
    last = None
    for _ in range(8):
        jets = JetData((np.array([a, lam * v]),))
        try:
            sol = solve_primal(body, div, jets, N=deg, tol=1e-10)
            pair, m = RT.extremal_pair(body, div, jets, sol.f)
        except StationaryError as exc:
            last = exc
            if deg < MAX_DEGREE:
                deg = min(2 * deg, MAX_DEGREE)
                continue
            raise
        if m >= 1.0:
            return RT.flattening_map(pair), lam, m
        # the disc reaches m < 1: move past the root
        lam *= 1.0 + 2 * (1.0 - m) + 1e-9
    raise StationaryError(f"no stationary disc with boundary value >= 1 ({last})")


def boundary_profiles(body: G.ConvexBody, f: DiscPoly, levels: int = 12, angles: int = 128) -> dict:
    """Growth profiles of a disc near the circle, report only.

    On radii ``1 - 2^-k`` computes ``dist(f, bdry) / (1 - |s|)`` and
    ``|f'| (1 - |s|) / dist^(1/2)``. A constant disc is degenerate and
    reports zeros.
    """
    coeffs = f.coeffs
    if f.degree == 0 or not np.any(coeffs[1:]):
        return {"radii": [], "distance_ratio": [], "derivative_ratio": [],
                "max_distance_ratio": 0.0, "max_derivative_ratio": 0.0, "degenerate": True}
    r = 1.0 - 2.0 ** -np.arange(1, levels + 1)
    th = circle_points(angles)
    fp = f.derivative()
    dr, gr = [], []
    for rk in r:
        Z = f(rk * th)
        dist = np.array([_safe_distance(body, z) for z in Z])
        dr.append(float(dist.max() / (1 - rk)))
        d = np.linalg.norm(fp(rk * th), axis=1) * (1 - rk)
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(dist > 0, d / np.sqrt(dist), np.inf)
        gr.append(float(q.max()))
    return {"radii": r.tolist(), "distance_ratio": dr, "derivative_ratio": gr,
            "max_distance_ratio": max(dr), "max_derivative_ratio": max(gr), "degenerate": False}


def _safe_distance(body, z):
    try:
        return G.boundary_distance(body, z)
    except G.GaugeError:
        return 0.0      # the disc may overshoot the boundary by solver tolerance
