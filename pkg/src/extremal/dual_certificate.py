"""Dual extremal problem, duality certificates and the stationary map.

A dual candidate is ``h(zeta) = zeta q(zeta) / (B(zeta) den(zeta))`` with
``B`` the divisor polynomial and ``den`` zero-free on the closed disc, so
``h`` has poles of order at most ``d_alpha`` at the nodes and nowhere else
in the disc. Such ``h`` annihilates every disc with vanishing jets, and its
pairing with a disc ``f``,

    h(f) = (1/2 pi) int f . h dtheta = sum of residues of f h / zeta,

depends on the jets of ``f`` only. Weak duality reads ``P(f) P*(h) >= 1``
whenever ``Re h(f) = 1``.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from math import factorial

import clarabel
import highspy
import numpy as np
from numpy.polynomial import polynomial as P
from scipy.special import comb

from . import _conic
from . import gauge as G
from .disc_space import (DiscPoly, Divisor, JetData, affine_family_matrix, circle_points,
                         disc_from_q, divisor_poly, hermite_basepoint, jets_of, q_from_disc,
                         reflected_divisor_poly, series_reciprocal, taylor_shift)

log = logging.getLogger(__name__)

MAX_NODE_RADIUS = 0.99


class DualError(ValueError):
    pass


class StationaryError(DualError):
    pass


@dataclass(frozen=True, eq=False)
class DualElement:
    """``h = zeta q / (B den)``.

    ``q`` has shape ``(K + 1, n)``; ``den`` holds ascending coefficients of a
    scalar polynomial without zeros on the closed disc (default ``1``).
    """

    div: Divisor
    q: np.ndarray
    den: np.ndarray = field(default_factory=lambda: np.array([1.0 + 0j]))

    def __post_init__(self):
        q = np.asarray(self.q, dtype=complex)
        if q.ndim == 1:
            q = q[:, None]
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "den", np.atleast_1d(np.asarray(self.den, dtype=complex)))

    @property
    def dim(self) -> int:
        return self.q.shape[1]

    @property
    def K(self) -> int:
        return self.q.shape[0] - 1

    def __call__(self, zeta):
        zeta = np.asarray(zeta, dtype=complex)
        scal = zeta / (P.polyval(zeta, divisor_poly(self.div)) * P.polyval(zeta, self.den))
        qv = np.stack([P.polyval(zeta, self.q[:, j]) for j in range(self.dim)], axis=-1)
        return scal[..., None] * qv

    def scaled(self, c: complex) -> "DualElement":
        return DualElement(self.div, self.q * c, self.den)

    def to_dict(self) -> dict:
        return {"div": self.div.to_dict(),
                "q": [[[c.real, c.imag] for c in row] for row in self.q],
                "den": [[c.real, c.imag] for c in self.den]}

    @classmethod
    def from_dict(cls, d) -> "DualElement":
        q = np.array([[complex(re, im) for re, im in row] for row in d["q"]])
        den = np.array([complex(re, im) for re, im in d["den"]])
        return cls(Divisor.from_dict(d["div"]), q, den)


@dataclass
class DualCertificate:
    h: DualElement
    dual_norm: float
    pairing: complex
    lower_bound: float | None
    gap: float = float("nan")
    alignment_residual: float = float("nan")
    flatness_residual: float = float("nan")
    q_err: float = 0.0
    grid: int = 0
    converged: bool = True
    method: str = "conic"


@dataclass
class CertifyReport:
    """Residuals of the optimality conditions for a primal/dual pair."""

    primal_value: float
    dual_norm: float
    gap: float
    flatness: float
    alignment: float
    alignment_normalized: float
    pairing_mismatch: float
    q_err: float
    grid: int
    tol_gap: float
    tol_flat: float
    tol_align: float
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        width = max(len(k) for k in self.to_dict())
        return "\n".join(f"{k:<{width}} : {v}" for k, v in self.to_dict().items())


def _check_nodes(div: Divisor):
    if np.any(np.abs(div.points) > MAX_NODE_RADIUS):
        raise DualError(f"divisor node closer than {1 - MAX_NODE_RADIUS:g} to the unit circle")


def _trapezoid(body, h, M):
    return float(np.mean(G.dual_gauge_eval(body, h(circle_points(M)))))


def dual_norm(body: G.ConvexBody, h: DualElement, M: int | None = None, with_error: bool = False):
    """Trapezoid value of ``(1/2 pi) int p*(h) dtheta`` on ``M`` points.

    With ``with_error`` the pair ``(value, |T_M - T_2M|)`` is returned; the
    second entry is the reported quadrature error.
    """
    _check_nodes(h.div)
    need = 8 * (h.K + h.div.degree)
    M = need if M is None else int(M)
    if M < need:
        raise DualError(f"grid size {M} is below 8 (deg q + d) = {need}")
    val = _trapezoid(body, h, M)
    if not with_error:
        return val
    return val, abs(val - _trapezoid(body, h, 2 * M))


def _taylor_coeffs(jets: JetData, div: Divisor):
    return [v / np.array([factorial(b) for b in range(v.shape[0])])[:, None] for v in jets.values]


def pairing_matrix(div: Divisor, jets: JetData, K: int, den=None) -> np.ndarray:
    """``R`` with ``h(f) = sum_kj q_kj R_kj`` for every ``f`` carrying ``jets``.

    Residue of ``f q / (B den)`` at each node, from Taylor expansions of the
    analytic cofactor; no quadrature involved.
    """
    jets.check(div)
    den = np.array([1.0 + 0j]) if den is None else np.asarray(den, dtype=complex)
    n = jets.dim
    R = np.zeros((K + 1, n), dtype=complex)
    k = np.arange(K + 1)
    for (za, da), T in zip(div.nodes, _taylor_coeffs(jets, div)):
        others = [(z, m) for z, m in div.nodes if z != za]
        cof = den.copy()
        for z, m in others:
            for _ in range(m):
                cof = P.polymul(cof, [-z, 1.0])
        # series of 1 / cof(za + s) and of (za + s)^k up to order da - 1
        inv = series_reciprocal(taylor_shift(cof, za), da)
        mm = np.arange(da)
        with np.errstate(invalid="ignore"):
            powk = comb(k[:, None], mm[None, :]) * np.where(
                k[:, None] >= mm[None, :], complex(za) ** np.maximum(k[:, None] - mm[None, :], 0), 0)
        Gk = np.array([[np.dot(powk[kk, : l + 1], inv[l::-1]) for l in range(da)] for kk in k])
        # residue picks the s^(da - 1) coefficient of f(za + s) q(za + s) / cof
        for beta in range(da):
            R += Gk[:, da - 1 - beta][:, None] * T[beta][None, :]
    return R


def jet_pairing(h: DualElement, div: Divisor, jets: JetData) -> complex:
    """``h(f)`` for any disc ``f`` with the given jets, by residues."""
    if h.div != div:
        raise DualError("dual element and jets live on different divisors")
    R = pairing_matrix(div, jets, h.K, h.den)
    return complex(np.sum(h.q * R))


def _dual_basis(div, den, K, M):
    zeta = circle_points(M)
    scal = zeta / (P.polyval(zeta, divisor_poly(div)) * P.polyval(zeta, den))
    return scal[:, None] * zeta[:, None] ** np.arange(K + 1)[None, :]


def solve_dual(body: G.ConvexBody, div: Divisor, jets: JetData, K_dual: int = 32,
               M: int | None = None, tol: float = 1e-6, den=None, method: str = "auto",
               max_iter: int = 500, primal_value: float | None = None) -> DualCertificate:
    """Minimise the discretised ``P*(h)`` subject to ``Re h(f0) = 1``.

    Parameters
    ----------
    K_dual : int
        Degree of the numerator ``q``.
    den : array, optional
        Extra denominator; defaults to ``prod (1 - conj(zeta_a) zeta)^d_a``,
        which is ``1`` for divisors at the origin.
    method : {"auto", "conic", "kelley"}
        Cone program for closed-form bodies, cutting planes otherwise.
    primal_value : float, optional
        Fills in ``gap`` when given.
    """
    jets.check(div)
    _check_nodes(div)
    if jets.dim != body.dim:
        raise DualError("jet dimension does not match the body")
    if method not in ("auto", "conic", "kelley"):
        raise DualError(f"unknown method {method!r}")
    den = reflected_divisor_poly(div) if den is None else np.asarray(den, dtype=complex)
    need = 8 * (K_dual + div.degree)
    M = need if M is None else int(M)
    if M < need:
        raise DualError(f"grid size {M} is below 8 (K_dual + d) = {need}")
    n = body.dim
    R = pairing_matrix(div, jets, K_dual, den)
    if not np.any(np.abs(R) > 1e-14):
        raise DualError("jets are zero: the normalisation Re h(f0) = 1 is infeasible")
    H = _dual_basis(div, den, K_dual, M)
    a = np.concatenate([R.real.ravel(), -R.imag.ravel()])
    use_conic = method == "conic" or (method == "auto" and _conic.supports(body))
    x, ok, used = None, False, "kelley"
    if use_conic:
        x, ok = _dual_conic(body, H, a, n, M, tol)
        used = "conic"
    if x is None:
        if method == "conic":
            raise DualError("cone solver failed")
        x, ok = _dual_kelley(body, H, a, n, M, tol, max_iter)
        used = "kelley"
    Kn = (K_dual + 1) * n
    Q = x[:Kn].reshape(K_dual + 1, n) + 1j * x[Kn:].reshape(K_dual + 1, n)
    h = DualElement(div, Q, den)
    pair = complex(np.sum(Q * R))
    if not pair.real > 0:
        ok = False
    else:
        h = h.scaled(1.0 / pair.real)
        pair = pair / pair.real
    norm, qerr = dual_norm(body, h, M, with_error=True)
    cert = DualCertificate(h, norm, pair, 1.0 / norm if ok and norm > 0 else None,
                           q_err=qerr, grid=M, converged=ok, method=used)
    if primal_value is not None:
        cert.gap = primal_value * norm - 1.0
    return cert


def _dual_conic(body, H, a, n, M, tol):
    Lr, Li = _conic.realify(H, n)
    nx = Lr.shape[-1]
    prog = _conic.ConicProgram(nx)
    s = prog.var(M)
    zeros = np.zeros((M, n))
    _conic.add_dual_epigraph(prog, body, zeros, zeros, Lr, Li, s)
    prog.constrain([-1.0], clarabel.ZeroConeT(1), a[None, :])
    res = prog.solve({int(i): 1.0 / M for i in s}, tol=min(tol, 1e-9))
    if not res.ok:
        log.warning("cone solver returned %s", res.status)
        return None, False
    return res.z[:nx], True


def _dual_kelley(body, H, a, n, M, tol, max_iter):
    """Cutting planes for ``min mean_i p*(h_i)``; each ``z`` in the body gives ``s_i >= Re(z.h_i)``."""
    Lr, Li = _conic.realify(H, n)
    nx = Lr.shape[-1]
    inf = highspy.kHighsInf
    hs = highspy.Highs()
    hs.setOptionValue("output_flag", False)
    nv = nx + M
    hs.addVars(nv, np.full(nv, -inf), np.full(nv, inf))
    hs.changeColsCost(M, np.arange(nx, nv, dtype=np.int32), np.full(M, 1.0 / M))
    hs.addRow(1.0, 1.0, nx, np.arange(nx, dtype=np.int32), a)

    def add_cuts(Z):
        # s_i - Re(z_i . h_i(x)) >= 0
        g = np.einsum("ij,ijz->iz", Z.real, Lr) - np.einsum("ij,ijz->iz", Z.imag, Li)
        rows = np.hstack([-g, np.zeros((M, M))])
        rows[np.arange(M), nx + np.arange(M)] = 1.0
        starts = np.arange(M, dtype=np.int32) * nv
        idx = np.tile(np.arange(nv, dtype=np.int32), M)
        hs.addRows(M, np.zeros(M), np.full(M, inf), rows.size, starts, idx, rows.ravel())

    # the inscribed ball of radius 1/c bounds the model from below
    c = body.comparability_c
    for j in range(n):
        for ph in (1, -1, 1j, -1j):
            Z = np.zeros((M, n), dtype=complex)
            Z[:, j] = ph / c
            add_cuts(Z)
    x = None
    best, best_x = np.inf, None
    ok = False
    for _ in range(max_iter):
        hs.run()
        if hs.getModelStatus() != highspy.HighsModelStatus.kOptimal:
            break
        z = np.asarray(hs.getSolution().col_value)
        x = z[:nx]
        model = float(np.mean(z[nx:]))
        hv = np.einsum("ijz,z->ij", Lr, x) + 1j * np.einsum("ijz,z->ij", Li, x)
        val, Z = G._dual_gauge_and_argmax(body, hv)
        true = float(np.mean(val))
        if true < best:
            best, best_x = true, x
        if best - model <= tol * max(1.0, abs(best)):
            ok = True
            break
        add_cuts(np.asarray(Z))
    return best_x, ok


def certify(body: G.ConvexBody, f: DiscPoly, cert: DualCertificate, tol_gap: float = 1e-3,
            tol_flat: float | None = None, tol_align: float = 1e-3, M: int | None = None) -> CertifyReport:
    """Gap, flatness and alignment residuals of ``(f, h)`` on the grid.

    ``alignment`` is the raw residual ``|Re(f.h) - p(f) p*(h)|``;
    ``alignment_normalized`` divides it by ``p*(h)`` pointwise, which makes it
    invariant under positive multipliers of ``h``. ``tol_flat`` defaults to
    ``tol_gap`` times the primal value.
    """
    h = cert.h
    M = max(cert.grid, 8 * (h.K + h.div.degree), 2 * f.degree + 1) if M is None else int(M)
    zeta = circle_points(M)
    fv = f(zeta)
    hv = h(zeta)
    pf = G.gauge_eval(body, fv)
    ph = G.dual_gauge_eval(body, hv)
    value = float(pf.max())
    norm = float(ph.mean())
    res = np.abs(np.sum(fv * hv, axis=1).real - pf * ph)
    with np.errstate(invalid="ignore", divide="ignore"):
        res_n = np.where(ph > 0, res / np.where(ph > 0, ph, 1.0), 0.0)
    pair = jet_pairing(h, h.div, jets_of(f, h.div))
    gap = value * norm - 1.0
    flat = float(pf.max() - pf.min())
    if tol_flat is None:
        tol_flat = tol_gap * value
    rep = CertifyReport(value, norm, gap, flat, float(res.max()), float(res_n.max()),
                        float(abs(pair - cert.pairing)), cert.q_err, M, tol_gap, tol_flat, tol_align,
                        False)
    rep.passed = bool(gap <= tol_gap and flat <= tol_flat and rep.alignment <= tol_align
                      and rep.pairing_mismatch <= 1e-8 * max(1.0, abs(cert.pairing)))
    cert.gap = gap
    cert.alignment_residual = rep.alignment
    cert.flatness_residual = flat
    return rep


@dataclass
class StationaryPair:
    """``f`` with ``f~ = num / den`` normalised so that ``f' . f~ = 1``."""

    f: DiscPoly
    num: np.ndarray        # (deg + 1, n)
    den: np.ndarray
    h: DualElement         # rescaled dual element, f~ = zeta h
    constancy: float       # max relative deviation of f' . f~ on the grid

    def ftilde(self, zeta):
        zeta = np.asarray(zeta, dtype=complex)
        num = np.stack([P.polyval(zeta, self.num[:, j]) for j in range(self.num.shape[1])], axis=-1)
        return num / P.polyval(zeta, self.den)[..., None]

    def ftilde_poly(self, degree: int | None = None) -> DiscPoly:
        """Taylor polynomial of ``f~`` (exact when ``den`` is constant)."""
        L = self.num.shape[0] if degree is None else degree + 1
        if len(self.den) == 1:
            return DiscPoly(self.num / self.den[0])
        inv = series_reciprocal(self.den, L)
        out = np.array([np.convolve(self.num[:, j], inv)[:L] for j in range(self.num.shape[1])]).T
        return DiscPoly(out)


def _deflate(c, z):
    """Synthetic division of ``c`` by ``(zeta - z)``: quotient and remainder."""
    c = np.asarray(c, dtype=complex)
    q = np.zeros(len(c) - 1, dtype=complex)
    acc = 0j
    for k in range(len(c) - 1, 0, -1):
        acc = c[k] + acc * z
        q[k - 1] = acc
    return q, c[0] + acc * z


def build_stationary(f: DiscPoly, h: DualElement, M: int = 512, tol: float = 1e-6) -> StationaryPair:
    """``f~ = zeta h`` after cancelling the divisor poles, scaled to ``f'.f~ = 1``.

    Raises :class:`StationaryError` when a pole of ``f~`` survives inside the
    disc or when ``f' . f~`` is not constant to ``tol`` (relative).
    """
    # f~ = zeta h = zeta^2 q / (B den); cancel the roots of B from zeta^2 q
    num = np.array([np.convolve([0, 0, 1], h.q[:, j]) for j in range(h.dim)]).T
    scale = max(np.abs(num).max(), 1e-300)
    for z, m in h.div.nodes:
        for _ in range(m):
            quo = []
            for j in range(h.dim):
                qj, rj = _deflate(num[:, j], z)
                if abs(rj) > 1e-9 * scale:
                    raise StationaryError(f"f~ keeps a pole at {z}")
                quo.append(qj)
            num = np.array(quo).T
    den = np.asarray(h.den, dtype=complex)
    zeta = circle_points(M)
    fp = f.derivative()(zeta)
    ft = np.stack([P.polyval(zeta, num[:, j]) for j in range(h.dim)], axis=-1) / P.polyval(zeta, den)[:, None]
    c = np.sum(fp * ft, axis=1)
    c0 = c.mean()
    if abs(c0) == 0:
        raise StationaryError("f' . f~ vanishes")
    dev = float(np.abs(c - c0).max() / abs(c0))
    if dev > tol:
        raise StationaryError(f"f' . f~ deviates from a constant by {dev:.2e}")
    return StationaryPair(f, num / c0, den, h.scaled(1.0 / c0), dev)


@dataclass
class PolishResult:
    f: DiscPoly
    ftilde: np.ndarray     # (L + 1, n) coefficients, scale fixed by f'(0).f~(0) = 1
    value: float           # common boundary value of p(f)
    residual: float        # max stationarity residual on the grid
    iterations: int
    converged: bool


def _unit_dirs(body, Z):
    W = G.support_vectors(body, Z)
    U = np.concatenate([W.real, W.imag], axis=-1)
    return U / np.linalg.norm(U, axis=-1, keepdims=True)


def _ftilde_seed(U, zeta, L, n):
    """Least-squares f~ with conj(zeta) f~(zeta) parallel to the unit fields ``U``."""
    Zk = zeta[:, None] ** (np.arange(L + 1)[None, :] - 1)
    Ar, Ai = _conic.realify(Zk, n)
    X = np.concatenate([Ar, Ai], axis=1)                     # (M, 2n, nc)
    X = X - U[:, :, None] * np.einsum("ir,irc->ic", U, X)[:, None, :]
    _, _, Vt = np.linalg.svd(X.reshape(-1, X.shape[-1]), full_matrices=False)
    return Vt[-1], np.concatenate([Ar, Ai], axis=1)


def polish_stationary(body: G.ConvexBody, div: Divisor, jets: JetData, f: DiscPoly,
                      L: int | None = None, M: int | None = None, max_iter: int = 30,
                      tol: float = 1e-12, accept: float = 1e-8) -> PolishResult:
    """Newton refinement of a near-extremal disc together with its stationary map.

    Unknowns are the free coefficients of ``f`` (jets stay exact), the
    coefficients of ``f~`` and the boundary value ``m``. On every grid point
    ``p(f) = m`` and ``conj(zeta) f~`` must be a real multiple of the
    supporting functional of ``f``. Only meaningful on smooth bodies.

    The residual floor is set by the truncation degree; ``converged`` means
    it fell below ``accept``.
    """
    if not body.is_smooth:
        raise StationaryError("stationary polishing needs a smooth body")
    N = f.degree
    L = N if L is None else int(L)
    M = 8 * max(N, L) if M is None else int(M)
    n = body.dim
    zeta = circle_points(M)
    f0 = hermite_basepoint(div, jets)
    B = divisor_poly(div)
    K = N - div.degree + 1
    if K <= 0:
        raise StationaryError("no free coefficients to polish")
    E = affine_family_matrix(B, K, zeta)
    F0 = f0(zeta)
    Lr, Li = _conic.realify(E, n)
    nx = Lr.shape[-1]
    Qc = q_from_disc(f, f0, B, K)
    x = np.concatenate([Qc.real.ravel(), Qc.imag.ravel()])

    def fvals(x):
        return F0 + np.einsum("ijz,z->ij", Lr, x) + 1j * np.einsum("ijz,z->ij", Li, x)

    Fv = fvals(x)
    U = _unit_dirs(body, Fv)
    c, Xc = _ftilde_seed(U, zeta, L, n)
    c = c / np.linalg.norm(c)
    m = float(G.gauge_eval(body, Fv).max())
    nc = c.size
    cref = c.copy()
    eps = 1e-7
    res_max = np.inf
    it = 0
    ok = False
    small_step = False
    for it in range(1, max_iter + 2):
        Fv = fvals(x)
        pv = G.gauge_eval(body, Fv)
        W = G.support_vectors(body, Fv)
        U = _unit_dirs(body, Fv)
        X = np.einsum("irc,c->ir", Xc, c)
        XU = np.sum(X * U, axis=1)
        rA = pv - m
        rB = X - XU[:, None] * U
        rN = np.array([cref @ c - 1.0])
        r = np.concatenate([rA, rB.ravel(), rN])
        res_max = float(np.abs(r).max())
        if res_max <= tol or small_step or it > max_iter:
            break
        # d p / d x: Re(w . dz)
        JA = np.einsum("ij,ijz->iz", W.real, Lr) - np.einsum("ij,ijz->iz", W.imag, Li)
        # d U / d(Re z_j, Im z_j) by central differences
        dB = np.zeros((M, 2 * n, nx))
        for j in range(n):
            for part, Lpart in ((1.0, Lr), (1j, Li)):
                dz = np.zeros(n, dtype=complex)
                dz[j] = part * eps
                dU = (_unit_dirs(body, Fv + dz) - _unit_dirs(body, Fv - dz)) / (2 * eps)
                drB = -(np.sum(X * dU, axis=1)[:, None] * U + XU[:, None] * dU)
                dB += drB[:, :, None] * Lpart[:, j, None, :]
        JBc = Xc - U[:, :, None] * np.einsum("ir,irc->ic", U, Xc)[:, None, :]
        J = np.zeros((M + 2 * n * M + 1, nx + nc + 1))
        J[:M, :nx] = JA
        J[:M, -1] = -1.0
        J[M:M + 2 * n * M, :nx] = dB.reshape(M * 2 * n, nx)
        J[M:M + 2 * n * M, nx:nx + nc] = JBc.reshape(M * 2 * n, nc)
        J[-1, nx:nx + nc] = cref
        step = np.linalg.lstsq(J, -r, rcond=None)[0]
        x = x + step[:nx]
        c = c + step[nx:nx + nc]
        m = m + step[-1]
        small_step = np.abs(step).max() <= 1e-14 * max(1.0, np.abs(x).max())
    Q = x[: nx // 2].reshape(K, n) + 1j * x[nx // 2:].reshape(K, n)
    fN = disc_from_q(f0, B, Q)
    C = c[: nc // 2].reshape(L + 1, n) + 1j * c[nc // 2:].reshape(L + 1, n)
    k0 = complex(fN.derivative()(np.array([0.0]))[0] @ C[0])
    if k0 == 0:
        raise StationaryError("f'(0) . f~(0) vanishes")
    # f'.f~ is a positive constant for a stationary pair; the seed's sign is arbitrary
    C = C / k0
    ok = res_max <= accept and abs(k0.imag) <= 1e-6 * abs(k0)
    ft = np.stack([P.polyval(zeta, C[:, j]) for j in range(n)], axis=-1) / zeta[:, None]
    if np.min(np.sum(np.concatenate([ft.real, ft.imag], axis=1) * _unit_dirs(body, fN(zeta)), axis=1)) <= 0:
        ok = False
    return PolishResult(fN, C, float(m), res_max, it, ok)


def certificate_from_polish(body: G.ConvexBody, pol: PolishResult, M: int | None = None) -> DualCertificate:
    """Dual certificate ``h = f~ / zeta`` on ``[0]^2``, normalised by ``Re h(f) = 1``."""
    div = Divisor.origin(2)
    h = DualElement(div, pol.ftilde)
    pair = jet_pairing(h, div, jets_of(pol.f, div))
    h = h.scaled(1.0 / pair.real)
    pair = pair / pair.real
    M = max(8 * (h.K + 2), 2 * pol.f.degree + 1) if M is None else int(M)
    norm, qerr = dual_norm(body, h, M, with_error=True)
    return DualCertificate(h, norm, pair, 1.0 / norm, q_err=qerr, grid=M,
                           converged=pol.converged, method="polish")


@dataclass
class Multiplier:
    """Scalar ``phi = U / V`` positive on the circle, taking ``div`` duals to ``div2`` duals.

    ``U = prod (zeta - z) * U_out`` over the removed nodes ``z`` and
    ``V = prod (zeta - p) * V_out`` over the added poles ``p``; ``V_out`` has
    no zeros in the closed disc.
    """

    div: Divisor
    div2: Divisor
    zeros: list
    poles: list
    U_out: np.ndarray
    V_out: np.ndarray

    @property
    def U(self):
        out = self.U_out
        for z in self.zeros:
            out = P.polymul(out, [-z, 1.0])
        return out

    @property
    def V(self):
        out = self.V_out
        for p in self.poles:
            out = P.polymul(out, [-p, 1.0])
        return out

    def __call__(self, zeta):
        zeta = np.asarray(zeta, dtype=complex)
        return P.polyval(zeta, self.U) / P.polyval(zeta, self.V)

    def grid_min(self, M: int) -> float:
        v = self(circle_points(M))
        return float(v.real.min())

    def transfer(self, h: DualElement) -> DualElement:
        """``phi h`` written over the divisor ``div2``."""
        if h.div != self.div:
            raise DualError("dual element lives on a different divisor")
        q = np.array([np.convolve(h.q[:, j], self.U_out) for j in range(h.dim)]).T
        return DualElement(self.div2, q, P.polymul(h.den, self.V_out))


def divisor_multiplier(div: Divisor, div2: Divisor, M: int = 1024) -> Multiplier:
    """Positive multiplier in ``div / div2`` built from two generator shapes.

    An added pole ``p`` paired with a removed node ``z`` contributes
    ``(zeta - z)(1 - conj(z) zeta) / ((zeta - p)(1 - conj(p) zeta))``, equal to
    ``|zeta - z|^2 / |zeta - p|^2`` on the circle. An unpaired added pole
    contributes ``3 + m + 1/m`` with ``m`` the disc automorphism moving ``p``
    to ``0``, which is at least ``1`` on the circle.
    """
    mult = {z: m for z, m in div.nodes}
    mult2 = {z: m for z, m in div2.nodes}
    poles, zeros = [], []
    for z in set(mult) | set(mult2):
        d = mult2.get(z, 0) - mult.get(z, 0)
        (poles if d > 0 else zeros).extend([z] * abs(d))
    if div2.degree < div.degree or len(poles) < len(zeros):
        raise DualError("the target divisor must have at least as many new poles as removed nodes")
    # deterministic order: sort by modulus then argument
    key = lambda z: (abs(z), np.angle(z))
    poles.sort(key=key)
    zeros.sort(key=key)
    U_out = np.array([1.0 + 0j])
    V_out = np.array([1.0 + 0j])
    for i, p in enumerate(poles):
        b = np.array([1.0, -np.conj(p)])
        if i < len(zeros):
            z = zeros[i]
            U_out = P.polymul(U_out, [1.0, -np.conj(z)])
            V_out = P.polymul(V_out, b)
        else:
            a = np.array([-p, 1.0])
            # 3 + a/b + b/a = (a^2 + 3ab + b^2) / (ab)
            U_out = P.polymul(U_out, P.polyadd(P.polyadd(P.polymul(a, a), 3 * P.polymul(a, b)),
                                               P.polymul(b, b)))
            V_out = P.polymul(V_out, b)
    phi = Multiplier(div, div2, zeros, poles, U_out, V_out)
    vals = phi(circle_points(M))
    if vals.real.min() <= 0 or np.abs(vals.imag).max() > 1e-9 * np.abs(vals).max():
        raise DualError("multiplier is not positive on the circle")
    return phi


def transfer_certificate(body: G.ConvexBody, f: DiscPoly, cert: DualCertificate, div2: Divisor,
                         M: int | None = None) -> DualCertificate:
    """Move a certificate for ``f`` to the divisor ``div2`` through a positive multiplier."""
    phi = divisor_multiplier(cert.h.div, div2)
    h2 = phi.transfer(cert.h)
    pair = jet_pairing(h2, div2, jets_of(f, div2))
    if not pair.real > 0:
        raise DualError("transferred pairing is not positive")
    h2 = h2.scaled(1.0 / pair.real)
    pair = pair / pair.real
    M = max(8 * (h2.K + div2.degree), cert.grid) if M is None else int(M)
    norm, qerr = dual_norm(body, h2, M, with_error=True)
    return DualCertificate(h2, norm, pair, 1.0 / norm, q_err=qerr, grid=M,
                           converged=cert.converged, method=cert.method)
