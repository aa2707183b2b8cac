"""Minkowski gauges of bounded convex domains in C^n.

A body is described by its gauge ``p`` (``Omega = {p < 1}``), the dual gauge
``p*(w) = sup Re(z.w) / p(z)`` under the *bilinear* pairing
``z.w = sum_j z_j w_j`` (no conjugation), and supporting functionals.

All evaluators accept a single point of shape ``(n,)`` or a stack of shape
``(..., n)`` and broadcast over the leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize
from scipy.spatial import ConvexHull, HalfspaceIntersection

KINDS = ("ball", "polydisc", "complex_ellipsoid", "polyhedral", "oracle")

TOL_GAUGE = 1e-9


class GaugeError(ValueError):
    """Invalid body description or gauge query."""


class GaugeConvergenceError(RuntimeError):
    """The numerical dual gauge of an oracle body did not converge."""


@dataclass(frozen=True, eq=False)
class ConvexBody:
    """Bounded convex domain containing the origin.

    Use the constructors :func:`ball`, :func:`polydisc`,
    :func:`complex_ellipsoid`, :func:`polyhedral` and :func:`oracle_body`
    rather than instantiating directly.
    """

    kind: str
    dim: int
    radii: Optional[np.ndarray] = None
    exponents: Optional[np.ndarray] = None
    functionals: Optional[np.ndarray] = None
    comparability_c: float = 1.0
    oracle: Optional[Callable[[np.ndarray], float]] = None
    # polyhedral only: vertices of the body, used for p* and its argmax
    vertices: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def is_smooth(self) -> bool:
        if self.kind == "ball":
            return True
        if self.kind == "complex_ellipsoid":
            return bool(np.all(self.exponents > 0.5))
        return False

    @property
    def is_circled(self) -> bool:
        """True when ``e^{i t} Omega = Omega`` for all real ``t``."""
        return self.kind in ("ball", "polydisc", "complex_ellipsoid")

    def __call__(self, z):
        return gauge_eval(self, z)


def ball(n: int) -> ConvexBody:
    """Unit Euclidean ball in C^n."""
    _check_dim(n)
    return ConvexBody("ball", int(n), comparability_c=1.0)


def polydisc(n: int, radii=None) -> ConvexBody:
    _check_dim(n)
    r = np.ones(n) if radii is None else np.asarray(radii, dtype=float).reshape(-1)
    if r.shape != (n,) or np.any(~np.isfinite(r)) or np.any(r <= 0):
        raise GaugeError("polydisc radii must be n positive numbers")
    c = max(np.sqrt(n) * r.max(), 1.0 / r.min())
    return ConvexBody("polydisc", int(n), radii=r, comparability_c=float(c))


def complex_ellipsoid(n: int, exponents, radii=None) -> ConvexBody:
    """``{sum_j |z_j / r_j|^(2 m_j) < 1}`` with ``m_j >= 1/2``."""
    _check_dim(n)
    m = np.asarray(exponents, dtype=float).reshape(-1)
    r = np.ones(n) if radii is None else np.asarray(radii, dtype=float).reshape(-1)
    if m.shape != (n,) or r.shape != (n,):
        raise GaugeError("exponents and radii must have length n")
    if np.any(~np.isfinite(m)) or np.any(m < 0.5):
        raise GaugeError("ellipsoid exponents must satisfy m_j >= 1/2")
    if np.any(~np.isfinite(r)) or np.any(r <= 0):
        raise GaugeError("ellipsoid radii must be positive")
    # polydisc(r) contains the body, the l1-type body sum |z_j|/r_j < 1 is inside
    c = max(np.sqrt(n) * r.max(), np.sqrt(n) / r.min())
    return ConvexBody("complex_ellipsoid", int(n), radii=r, exponents=m,
                      comparability_c=float(c))


def polyhedral(functionals) -> ConvexBody:
    """``{z : Re(z.w_i) < 1 for all i}``; rejected unless bounded."""
    W = np.atleast_2d(np.asarray(functionals, dtype=complex))
    if W.ndim != 2 or not np.all(np.isfinite(W)):
        raise GaugeError("functionals must be a finite (k, n) complex array")
    n = W.shape[1]
    _check_dim(n)
    What = _realify_functionals(W)
    # dense sphere sample: a bounded body has p > 0 in every direction
    rng = np.random.default_rng(12345)
    X = rng.standard_normal((4096, 2 * n))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    if np.min(np.max(X @ What.T, axis=1)) <= 0:
        raise GaugeError("polyhedral body is unbounded")
    try:
        hull = ConvexHull(What)
    except Exception as exc:  # qhull raises its own error type
        raise GaugeError(f"polyhedral body is unbounded ({exc})") from None
    offsets = hull.equations[:, -1]
    if np.any(offsets >= -1e-12):
        raise GaugeError("polyhedral body is unbounded (origin not interior to the polar)")
    inradius_polar = float(np.min(-offsets))
    c = max(1.0 / inradius_polar, float(np.max(np.linalg.norm(What, axis=1))))
    halfspaces = np.hstack([What, -np.ones((What.shape[0], 1))])
    verts = HalfspaceIntersection(halfspaces, np.zeros(2 * n)).intersections
    verts = _unique_rows(verts)
    V = verts[:, :n] + 1j * verts[:, n:]
    return ConvexBody("polyhedral", n, functionals=W, comparability_c=float(c),
                      vertices=V)


def oracle_body(n: int, gauge: Callable[[np.ndarray], float], comparability_c: float) -> ConvexBody:
    """Body known only through a gauge evaluator ``gauge(z) -> float``."""
    _check_dim(n)
    if not callable(gauge):
        raise GaugeError("oracle gauge must be callable")
    if not comparability_c > 0:
        raise GaugeError("comparability constant must be positive")
    return ConvexBody("oracle", int(n), comparability_c=float(comparability_c), oracle=gauge)


def _check_dim(n):
    if int(n) != n or n < 1:
        raise GaugeError(f"dimension must be a positive integer, got {n!r}")


def _unique_rows(X, decimals=10):
    _, idx = np.unique(np.round(X, decimals), axis=0, return_index=True)
    return X[np.sort(idx)]


def _realify_functionals(W):
    # Re(z.w) = x.Re(w) - y.Im(w) for z = x + iy
    return np.hstack([W.real, -W.imag])


def _as_points(body: ConvexBody, z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    if z.ndim == 0 and body.dim == 1:
        z = z.reshape(1)
    if z.shape[-1] != body.dim:
        raise GaugeError(f"dimension mismatch: body has dim {body.dim}, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise GaugeError("non-finite input")
    return z


def _scalar(out):
    return float(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# gauge p
# --------------------------------------------------------------------------

def gauge_eval(body: ConvexBody, z):
    """Minkowski gauge ``p(z) = inf{lam > 0 : z in lam * Omega}``."""
    z = _as_points(body, z)
    kind = body.kind
    if kind == "ball":
        out = np.linalg.norm(z, axis=-1)
    elif kind == "polydisc":
        out = np.max(np.abs(z) / body.radii, axis=-1)
    elif kind == "complex_ellipsoid":
        out = _ellipsoid_gauge(np.abs(z) / body.radii, body.exponents)
    elif kind == "polyhedral":
        out = np.max((z @ body.functionals.T).real, axis=-1)
    else:
        flat = z.reshape(-1, body.dim)
        out = np.array([float(body.oracle(p)) for p in flat]).reshape(z.shape[:-1])
    return _scalar(out)


def _ellipsoid_gauge(u, m, rtol=1e-12):
    """Solve ``sum_j (u_j / lam)^(2 m_j) = 1`` for ``lam``, vectorised.

    ``phi(s) = log sum_j u_j^(2m_j) e^(-2 m_j s)`` with ``s = log lam`` is convex
    and decreasing, so Newton started left of the root is monotone. The
    bracket ``max u <= lam <= sum u`` seeds a few bisection steps first.
    """
    u = np.asarray(u, dtype=float)
    shape = u.shape[:-1]
    u = u.reshape(-1, u.shape[-1])
    lam = np.zeros(u.shape[0])
    nz = np.any(u > 0, axis=1)
    if np.all(m == 1.0):
        lam = np.sqrt(np.sum(u * u, axis=1))
        return lam.reshape(shape)
    uu = u[nz]
    lo = uu.max(axis=1)
    hi = uu.sum(axis=1)

    def resid(s):
        with np.errstate(divide="ignore"):
            logu = np.log(uu)
        e = 2.0 * m * (logu - s[:, None])
        e = np.where(uu > 0, e, -np.inf)
        emax = e.max(axis=1)
        w = np.exp(e - emax[:, None])
        tot = w.sum(axis=1)
        phi = emax + np.log(tot)
        dphi = -np.sum(2.0 * m * w, axis=1) / tot
        return phi, dphi

    slo, shi = np.log(lo), np.log(hi)
    for _ in range(8):
        mid = 0.5 * (slo + shi)
        phi, _ = resid(mid)
        left = phi >= 0
        slo = np.where(left, mid, slo)
        shi = np.where(left, shi, mid)
    s = slo
    for _ in range(60):
        phi, dphi = resid(s)
        step = -phi / dphi
        s_new = np.clip(s + step, slo, shi)
        done = np.abs(s_new - s) <= rtol * 0.1
        s = s_new
        if np.all(done):
            break
    lam[nz] = np.exp(s)
    return lam.reshape(shape)


# --------------------------------------------------------------------------
# dual gauge p*
# --------------------------------------------------------------------------

def dual_gauge_eval(body: ConvexBody, w):
    """Dual gauge ``p*(w) = sup_{z != 0} Re(z.w) / p(z)``, defined on all of C^n."""
    value, _ = _dual_gauge_and_argmax(body, _as_points(body, w))
    return _scalar(value)


def dual_support_point(body: ConvexBody, w):
    """A point ``z`` with ``p(z) = 1`` and ``Re(z.w) = p*(w)``.

    This is a subgradient of ``p*`` at ``w`` (a maximiser of the pairing over
    the closed body); the zero vector is returned for ``w = 0``.
    """
    _, z = _dual_gauge_and_argmax(body, _as_points(body, w))
    return z


def _phase(w):
    # conj(w)/|w| with the convention 0 -> 0
    a = np.abs(w)
    with np.errstate(invalid="ignore", divide="ignore"):
        ph = np.where(a > 0, np.conj(w) / np.where(a > 0, a, 1.0), 0.0)
    return ph


def _dual_gauge_and_argmax(body, w):
    kind = body.kind
    if kind == "ball":
        val = np.linalg.norm(w, axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            z = np.where(val[..., None] > 0, np.conj(w) / np.where(val > 0, val, 1.0)[..., None], 0.0)
        return val, z
    if kind == "polydisc":
        r = body.radii
        val = np.sum(r * np.abs(w), axis=-1)
        z = r * _phase(w)
        z = np.where(val[..., None] > 0, z, 0.0)
        return val, z
    if kind == "complex_ellipsoid":
        return _ellipsoid_dual(body, w)
    if kind == "polyhedral":
        scores = (w @ body.vertices.T).real
        k = np.argmax(scores, axis=-1)
        val = np.take_along_axis(scores, k[..., None], axis=-1)[..., 0]
        z = body.vertices[k]
        zero = np.all(w == 0, axis=-1)
        val = np.where(zero, 0.0, val)
        z = np.where(zero[..., None], 0.0, z)
        return val, z
    return _oracle_dual(body, w)


def _ellipsoid_dual(body, w):
    """Maximise ``sum_j c_j t_j`` over ``sum_j t_j^(2 m_j) <= 1, t >= 0``.

    ``c_j = r_j |w_j|``. Coordinates with ``m_j > 1/2`` follow the Lagrange
    condition ``t_j = (c_j / (2 m_j mu))^(1/(2 m_j - 1))``; coordinates with
    ``m_j = 1/2`` enter linearly, so either ``mu`` exceeds their largest
    ``c_j`` and they vanish, or ``mu`` equals it and they absorb the slack.
    """
    m, r = body.exponents, body.radii
    shape = w.shape[:-1]
    W = w.reshape(-1, body.dim)
    C = r * np.abs(W)
    lin = m <= 0.5 + 1e-15
    if not np.any(lin):
        T = _ellipsoid_dual_smooth(C, m)
        vals = np.sum(C * T, axis=1)
        Z = r * T * _phase(W)
        return vals.reshape(shape), Z.reshape(w.shape)
    cur = ~lin
    T = np.zeros_like(C)
    vals = np.zeros(W.shape[0])
    for row in range(W.shape[0]):
        c = C[row]
        if not np.any(c > 0):
            continue
        c_lin = c[lin].max() if np.any(lin) else 0.0

        def t_of(mu):
            t = np.zeros_like(c)
            e = 1.0 / (2.0 * m[cur] - 1.0)
            t[cur] = (c[cur] / (2.0 * m[cur] * mu)) ** e
            return t

        def g(mu):
            t = t_of(mu)
            return np.sum(t[cur] ** (2.0 * m[cur])) - 1.0

        t = np.zeros_like(c)
        if np.any(cur) and np.any(c[cur] > 0) and (c_lin == 0 or g(c_lin) > 0):
            # root in mu > c_lin; g is decreasing, work in log mu
            lo = np.log(max(c_lin, 1e-300)) if c_lin > 0 else None
            hi = np.log(c[cur].max() + 1.0)
            while g(np.exp(hi)) > 0:
                hi += 2.0
            if lo is None:
                lo = hi - 2.0
                while g(np.exp(lo)) < 0:
                    lo -= 2.0
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if g(np.exp(mid)) > 0:
                    lo = mid
                else:
                    hi = mid
                if hi - lo < 1e-15:
                    break
            t = t_of(np.exp(0.5 * (lo + hi)))
            # renormalise onto the constraint surface
            s = np.sum(t ** (2.0 * m))
            t = t / s ** (1.0 / (2.0 * m))
        else:
            if np.any(cur):
                t = t_of(c_lin) if c_lin > 0 else t
                t[~cur] = 0.0
            slack = 1.0 - np.sum(t[cur] ** (2.0 * m[cur]))
            j = np.flatnonzero(lin)[np.argmax(c[lin])]
            t[j] = max(slack, 0.0)
        T[row] = t
        vals[row] = np.dot(c, t)
    Z = r * T * _phase(W)
    return vals.reshape(shape), Z.reshape(w.shape)


def _ellipsoid_dual_smooth(C, m):
    # t_j = (c_j / (2 m_j mu))^(1/(2m_j - 1)); in s = log mu the constraint
    # residual phi(s) = log sum_j t_j^(2 m_j) is convex and decreasing.
    T = np.zeros_like(C)
    nz = np.any(C > 0, axis=1)
    Cn = C[nz]
    e = 2.0 * m / (2.0 * m - 1.0)
    with np.errstate(divide="ignore"):
        ell = np.where(Cn > 0, np.log(Cn / (2.0 * m)), -np.inf)

    def resid(s):
        x = e * (ell - s[:, None])
        xmax = x.max(axis=1)
        wts = np.exp(x - xmax[:, None])
        tot = wts.sum(axis=1)
        return xmax + np.log(tot), -np.sum(e * wts, axis=1) / tot

    slo = ell.max(axis=1)
    shi = np.max(np.where(np.isfinite(ell), ell + np.log(len(m)) / e, -np.inf), axis=1) + 1e-12
    for _ in range(8):
        mid = 0.5 * (slo + shi)
        phi, _ = resid(mid)
        slo = np.where(phi >= 0, mid, slo)
        shi = np.where(phi >= 0, shi, mid)
    s = slo
    for _ in range(60):
        phi, dphi = resid(s)
        s_new = np.clip(s - phi / dphi, slo, shi)
        done = np.abs(s_new - s) <= 1e-15 * np.maximum(1.0, np.abs(s))
        s = s_new
        if np.all(done):
            break
    with np.errstate(divide="ignore"):
        Tn = np.where(Cn > 0, np.exp((ell - s[:, None]) / (2.0 * m - 1.0)), 0.0)
    tot = np.sum(Tn ** (2.0 * m), axis=1, keepdims=True)
    Tn = Tn / tot ** (1.0 / (2.0 * m))
    T[nz] = Tn
    return T


def _oracle_dual(body, w, starts=8, rtol=1e-6):
    shape = w.shape[:-1]
    W = w.reshape(-1, body.dim)
    n = body.dim
    vals = np.zeros(W.shape[0])
    Z = np.zeros_like(W)
    rng = np.random.default_rng(0)
    for row, wv in enumerate(W):
        if not np.any(wv != 0):
            continue
        what = np.concatenate([wv.real, -wv.imag])

        def neg_ratio(x):
            z = x[:n] + 1j * x[n:]
            pz = float(body.oracle(z))
            if pz <= 0:
                return 0.0
            return -float(x @ what) / pz

        x0s = [what / np.linalg.norm(what)]
        x0s += [rng.standard_normal(2 * n) for _ in range(starts - 1)]
        best = []
        for x0 in x0s:
            res = minimize(neg_ratio, x0, method="Nelder-Mead",
                           options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 4000 * n})
            best.append((res.fun, res.x))
        best.sort(key=lambda item: item[0])
        fvals = np.array([b[0] for b in best])
        top = -fvals[0]
        agree = np.sum(np.abs(fvals - fvals[0]) <= rtol * max(abs(top), 1e-300))
        if agree < 2:
            raise GaugeConvergenceError(
                f"oracle dual gauge did not converge (multistart spread "
                f"{fvals[1] - fvals[0]:.3e})")
        x = best[0][1]
        z = x[:n] + 1j * x[n:]
        z = z / float(body.oracle(z))
        vals[row] = top
        Z[row] = z
    return vals.reshape(shape), Z.reshape(w.shape)


# --------------------------------------------------------------------------
# supporting functionals
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SupportFunctional:
    """``w`` with ``p*(w) = 1`` and ``Re(at.w) = p(at)``."""

    w: np.ndarray
    at: np.ndarray
    slack: float


def supporting_functional(body: ConvexBody, z) -> SupportFunctional:
    """Supporting functional of the level set ``{p = p(z)}`` at ``z``.

    For nonsmooth gauges (polydisc, polyhedral, linear ellipsoid coordinates)
    the member of the subdifferential with the lowest active index is chosen.
    """
    z = _as_points(body, z)
    if z.ndim != 1:
        raise GaugeError("supporting_functional takes a single point")
    w = support_vectors(body, z[None, :])[0]
    slack = abs(float(np.real(z @ w)) - gauge_eval(body, z))
    return SupportFunctional(w=w, at=z.copy(), slack=slack)


def support_vectors(body: ConvexBody, Z) -> np.ndarray:
    """Vectorised supporting functionals for a stack ``Z`` of nonzero points.

    This is the subgradient oracle of the primal solver: for each row
    ``w = 2 dp/dz`` in the bilinear convention, so ``Re(dz.w) = dp``.
    """
    Z = _as_points(body, Z)
    Z2 = Z.reshape(-1, body.dim)
    if np.any(np.all(Z2 == 0, axis=1)):
        raise GaugeError("no supporting direction at z = 0")
    kind = body.kind
    if kind == "ball":
        W = np.conj(Z2) / np.linalg.norm(Z2, axis=1, keepdims=True)
    elif kind == "polydisc":
        r = body.radii
        s = np.abs(Z2) / r
        j = np.argmax(s, axis=1)  # argmax picks the lowest index on ties
        W = np.zeros_like(Z2)
        rows = np.arange(Z2.shape[0])
        zj = Z2[rows, j]
        W[rows, j] = np.conj(zj) / np.abs(zj) / r[j]
    elif kind == "complex_ellipsoid":
        W = _ellipsoid_gradient(body, Z2)
    elif kind == "polyhedral":
        i = np.argmax((Z2 @ body.functionals.T).real, axis=1)
        W = body.functionals[i].copy()
    else:
        W = np.array([_oracle_gradient(body, z) for z in Z2])
    return W.reshape(Z.shape)


def _ellipsoid_gradient(body, Z):
    m, r = body.exponents, body.radii
    lam = _ellipsoid_gauge(np.abs(Z) / r, m)[:, None]
    u = np.abs(Z) / r
    q = u / lam
    a = q ** (2.0 * m)
    S = np.sum(m * a, axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        mag = m * np.where(u > 0, q ** (2.0 * m - 1.0), 0.0) / (r * S)
    return mag * _phase(Z)


def _oracle_gradient(body, z, h=1e-6):
    n = body.dim
    x = np.concatenate([z.real, z.imag])
    scale = max(np.linalg.norm(x), 1.0)
    g = np.zeros(2 * n)
    for k in range(2 * n):
        e = np.zeros(2 * n)
        e[k] = h * scale
        zp = (x + e)[:n] + 1j * (x + e)[n:]
        zm = (x - e)[:n] + 1j * (x - e)[n:]
        g[k] = (float(body.oracle(zp)) - float(body.oracle(zm))) / (2 * h * scale)
    w = g[:n] - 1j * g[n:]
    pz = float(body.oracle(z))
    pair = float(np.real(z @ w))
    if pair > 0:
        w = w * (pz / pair)
    return w


# --------------------------------------------------------------------------
# geometry helpers
# --------------------------------------------------------------------------

def boundary_distance(body: ConvexBody, z) -> float:
    """Euclidean distance from ``z`` to the boundary.

    Exact for ball, polydisc and polyhedral bodies. For the other kinds this
    is the first-order estimate ``(1 - p(z)) / |grad p(z)|`` along the ray,
    which is within a bounded factor of the true distance.
    """
    z = _as_points(body, z)
    if z.ndim != 1:
        raise GaugeError("boundary_distance takes a single point")
    pz = gauge_eval(body, z)
    if pz > 1.0 + 1e-12:
        raise GaugeError("point lies outside the closed body")
    if pz >= 1.0:
        return 0.0
    kind = body.kind
    if kind == "ball":
        return 1.0 - pz
    if kind == "polydisc":
        return float(np.min(body.radii - np.abs(z)))
    if kind == "polyhedral":
        W = body.functionals
        return float(np.min((1.0 - (W @ z).real) / np.linalg.norm(W, axis=1)))
    if np.all(z == 0):
        # inradius estimated from a direction sample
        rng = np.random.default_rng(7)
        U = rng.standard_normal((512, body.dim)) + 1j * rng.standard_normal((512, body.dim))
        U /= np.linalg.norm(U, axis=1, keepdims=True)
        return float(1.0 / np.max(gauge_eval(body, U)))
    w = support_vectors(body, z[None, :])[0]
    return float((1.0 - pz) / np.linalg.norm(w))


def body_to_dict(body: ConvexBody) -> dict:
    """Serialisable description (not available for oracle bodies)."""
    if body.kind == "oracle":
        raise GaugeError("oracle bodies cannot be serialised")
    out = {"kind": body.kind, "dim": body.dim, "comparability_c": body.comparability_c}
    if body.radii is not None:
        out["radii"] = body.radii.tolist()
    if body.exponents is not None:
        out["exponents"] = body.exponents.tolist()
    if body.functionals is not None:
        out["functionals"] = [[[w.real, w.imag] for w in row] for row in body.functionals]
    return out


def body_from_dict(d: dict) -> ConvexBody:
    try:
        kind = d["kind"]
        n = int(d["dim"])
    except (KeyError, TypeError, ValueError) as exc:
        raise GaugeError(f"body spec needs 'kind' and 'dim' ({exc})") from None
    if kind == "ball":
        return ball(n)
    if kind == "polydisc":
        return polydisc(n, d.get("radii"))
    if kind == "complex_ellipsoid":
        if "exponents" not in d:
            raise GaugeError("complex_ellipsoid needs 'exponents'")
        return complex_ellipsoid(n, d["exponents"], d.get("radii"))
    if kind == "polyhedral":
        rows = d.get("functionals")
        if not rows:
            raise GaugeError("polyhedral needs 'functionals'")
        W = np.array([[complex(re, im) for re, im in row] for row in rows])
        if W.shape[1] != n:
            raise GaugeError("functional length does not match dim")
        return polyhedral(W)
    raise GaugeError(f"unknown body kind {kind!r}")
