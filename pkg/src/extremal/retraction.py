"""Holomorphic retraction of a convex body onto an extremal disc.

Given a stationary pair ``(f, f~)`` with ``f' . f~ = 1`` the flattening map

    z1 = f1(s) - t2 f~2(s) - g(s) S,   z2 = f2(s) + t2 f~1(s) - h(s) S,
    za = fa(s) + ta  (a >= 3),         S = sum_{a>=3} ta f~a(s)

straightens ``f(D)`` to the first axis. Here ``g f~1 + h f~2 = 1``. The
disc parameter of a point ``z`` is the unique zero of
``det S(s) = (f(s) - z) . f~(s)`` in the unit disc, found by the argument
principle. ``c(z) = s`` is a holomorphic map into the disc with
``c(f(s)) = s``, and ``G = f o c`` retracts the body onto ``f(D)``.

Coordinates 1 and 2 above are any pair of coordinates of ``f~`` without
common zeros on the closed disc, after an optional unitary change of
coordinates; results are always reported in the original coordinates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from numpy.polynomial import polynomial as P

from . import gauge as G
from .disc_space import DiscPoly, Divisor, JetData, circle_points
from .dual_certificate import (DualElement, StationaryError, StationaryPair, polish_stationary)

log = logging.getLogger(__name__)

CONSTANCY_TOL = 1e-6
BEZOUT_TOL = 1e-8
CONTOUR_RADIUS = 1.0 - 1e-6


class RetractionError(RuntimeError):
    pass


def _polyval_vec(zeta, C):
    zeta = np.asarray(zeta, dtype=complex)
    return np.stack([P.polyval(zeta, C[:, j]) for j in range(C.shape[1])], axis=-1)


def stationary_pair(f: DiscPoly, ftilde, M: int = 1024) -> StationaryPair:
    """Wrap polynomial ``f, f~`` as a :class:`StationaryPair`.

    ``f~`` is rescaled so that ``f'(0) . f~(0) = 1``; ``constancy`` is the
    grid max of ``|f' . f~ - 1|``.
    """
    C = ftilde.coeffs if isinstance(ftilde, DiscPoly) else np.asarray(ftilde, dtype=complex)
    if C.ndim == 1:
        C = C[:, None]
    if C.shape[1] != f.dim:
        raise StationaryError("f~ dimension does not match f")
    k0 = complex(f.coeffs[1] @ C[0]) if f.degree >= 1 else 0j
    if k0 == 0:
        raise StationaryError("f'(0) . f~(0) vanishes")
    C = C / k0
    zeta = circle_points(max(M, 4 * (f.degree + C.shape[0])))
    dev = float(np.abs(np.sum(f.derivative()(zeta) * _polyval_vec(zeta, C), axis=1) - 1).max())
    h = DualElement(Divisor.origin(2), C)
    return StationaryPair(f, C, np.array([1.0 + 0j]), h, dev)


def extremal_pair(body: G.ConvexBody, div: Divisor, jets: JetData, f: DiscPoly,
                  tol: float = CONSTANCY_TOL) -> tuple[StationaryPair, float]:
    """Polish ``f`` on a smooth body and return ``(pair, boundary value)``."""
    pol = polish_stationary(body, div, jets, f)
    pair = stationary_pair(pol.f, pol.ftilde)
    if pair.constancy > tol:
        raise StationaryError(f"stationary pair constancy {pair.constancy:.2e} above {tol:.0e}")
    return pair, pol.value


@dataclass
class BezoutPair:
    """Scalar polynomials with ``g f~[j1] + h f~[j2] = 1`` on the closed disc.

    ``rotation`` is the unitary ``R`` in which the identity holds: the
    coordinates used are those of ``R z`` and ``conj(R) f~``.
    """

    indices: tuple
    g: np.ndarray
    h: np.ndarray
    residual: float
    rotation: np.ndarray
    separation: float = 1.0     # min over the closed disc of |(f~j1, f~j2)| / max |f~|


def _disc_samples(nr=48, nt=256):
    r = np.sqrt(np.linspace(0.0, 1.0, nr))
    t = 2 * np.pi * np.arange(nt) / nt
    return (r[:, None] * np.exp(1j * t)[None, :]).ravel()


def _pair_separation(F):
    """``min |(F_j1, F_j2)|`` over disc samples for every coordinate pair."""
    scale = np.abs(F).max()
    out = {}
    for j1, j2 in combinations(range(F.shape[1]), 2):
        out[(j1, j2)] = float(np.sqrt(np.abs(F[:, j1]) ** 2 + np.abs(F[:, j2]) ** 2).min() / scale)
    return out


def _solve_bezout(a, b, degree, M):
    """Least squares ``g a + h b = 1`` on the circle, ``deg g, h <= degree``."""
    zeta = circle_points(M)
    A = P.polyval(zeta, a)
    B = P.polyval(zeta, b)
    V = zeta[:, None] ** np.arange(degree + 1)[None, :]
    X = np.concatenate([A[:, None] * V, B[:, None] * V], axis=1)
    sol = np.linalg.lstsq(X, np.ones(M, dtype=complex), rcond=1e-14)[0]
    g, h = sol[: degree + 1], sol[degree + 1:]
    # the identity is polynomial, so its error on the disc peaks on the circle
    zf = circle_points(4 * M)
    res = float(np.abs(P.polyval(zf, g) * P.polyval(zf, a) + P.polyval(zf, h) * P.polyval(zf, b) - 1).max())
    return _trim(g), _trim(h), res


def _trim(c, tol=1e-15):
    c = np.asarray(c, dtype=complex)
    c = np.where(np.abs(c) < tol * max(np.abs(c).max(), 1.0), 0, c)
    k = len(c)
    while k > 1 and c[k - 1] == 0:
        k -= 1
    return c[:k]


def bezout_pair(ftilde, min_separation: float = 1e-6, seed: int = 0, max_degree: int | None = None) -> BezoutPair:
    """Pick two coordinates of ``f~`` without common zeros and solve the Bézout identity.

    Parameters
    ----------
    ftilde : DiscPoly or array of shape (L + 1, n)
    min_separation : float
        A pair qualifies when ``|(f~j1, f~j2)|`` stays above this fraction
        of ``max |f~|`` on the closed disc.

    ``g, h`` are fitted by least squares on the circle with increasing
    degree. Coprime polynomials admit an exact solution of degree below
    their own; zeros shared only outside the disc are handled too, at the
    price of a higher degree.
    """
    C = ftilde.coeffs if isinstance(ftilde, DiscPoly) else np.atleast_2d(np.asarray(ftilde, dtype=complex))
    n = C.shape[1]
    if n < 2:
        raise RetractionError("a Bézout pair needs at least two coordinates")
    Z = _disc_samples()
    rng = np.random.default_rng(seed)
    R = np.eye(n, dtype=complex)
    for attempt in range(8):
        Ct = C @ np.conj(R).T
        seps = _pair_separation(_polyval_vec(Z, Ct))
        (j1, j2), sep = max(seps.items(), key=lambda kv: kv[1])
        if sep >= min_separation:
            break
        # random unitary change of coordinates
        Xr = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        R, _ = np.linalg.qr(Xr)
    else:
        raise RetractionError(f"every coordinate pair of f~ nearly shares a zero "
                              f"(best separation {sep:.2e})")
    a, b = _trim(Ct[:, j1]), _trim(Ct[:, j2])
    # zeros shared outside the disc inflate the degree beyond the Sylvester bound
    deg_cap = max(len(a) + len(b), 64) if max_degree is None else max_degree
    best = None
    for deg in sorted({0, 1, 2, 4, 8, 16, 32, 64, deg_cap}):
        if deg > deg_cap:
            continue
        M = max(64, 4 * (deg + len(a) + len(b)))
        g, h, res = _solve_bezout(a, b, deg, M)
        if best is None or res < best[2]:
            best = (g, h, res)
        if res <= 1e-12:
            break
    g, h, res = best
    if res > BEZOUT_TOL:
        raise RetractionError(f"Bézout residual {res:.2e} above {BEZOUT_TOL:.0e} "
                              f"(pair separation {sep:.2e})")
    # put the chosen pair first
    perm = [j1, j2] + [j for j in range(n) if j not in (j1, j2)]
    Pm = np.eye(n)[perm]
    return BezoutPair((j1, j2), g, h, res, Pm @ R, sep)


@dataclass
class FlatteningMap:
    stationary: StationaryPair
    bezout: BezoutPair | None      # None in dimension one
    contour: int = 1024

    def __post_init__(self):
        self.f = self.stationary.f
        self.ft = self.stationary.ftilde_poly()
        self.fp = self.f.derivative()
        self.ftp = self.ft.derivative() if self.ft.degree >= 1 else DiscPoly(np.zeros((1, self.f.dim)))
        n = self.f.dim
        R = np.eye(n, dtype=complex) if self.bezout is None else self.bezout.rotation
        self.R = R
        # flattened coordinates: f' = R f, f~' = conj(R) f~
        self._fr = self.f.coeffs @ R.T
        self._ftr = self.ft.coeffs @ np.conj(R).T
        deg = self.f.degree + self.ft.degree
        self.contour = max(self.contour, 16 * max(deg, 1))
        self._zc = CONTOUR_RADIUS * circle_points(self.contour)
        self._fc = self.f(self._zc)
        self._ftc = self.ft(self._zc)
        self._fpc = self.fp(self._zc)
        self._ftpc = self.ftp(self._zc)

    @property
    def dim(self) -> int:
        return self.f.dim

    def phi(self, zeta) -> np.ndarray:
        """Evaluate the flattening map at ``(s, t2, ..., tn)``."""
        zeta = np.asarray(zeta, dtype=complex)
        s = zeta[..., 0]
        n = self.dim
        fr = _polyval_vec(s, self._fr)
        if n == 1:
            return fr
        ftr = _polyval_vec(s, self._ftr)
        g = P.polyval(s, self.bezout.g)
        h = P.polyval(s, self.bezout.h)
        S = np.sum(zeta[..., 2:] * ftr[..., 2:], axis=-1)
        out = fr.copy()
        out[..., 0] = fr[..., 0] - zeta[..., 1] * ftr[..., 1] - g * S
        out[..., 1] = fr[..., 1] + zeta[..., 1] * ftr[..., 0] - h * S
        out[..., 2:] = fr[..., 2:] + zeta[..., 2:]
        return out @ np.conj(self.R)     # back to original coordinates (R unitary)

    def winding(self, z) -> int:
        D = np.sum((self._fc - np.asarray(z, dtype=complex)) * self._ftc, axis=1)
        dtheta = np.angle(np.roll(D, -1) / D)
        return int(np.rint(dtheta.sum() / (2 * np.pi)))


def flattening_map(pair: StationaryPair, seed: int = 0) -> FlatteningMap:
    if pair.constancy > CONSTANCY_TOL:
        raise RetractionError(f"stationary pair constancy {pair.constancy:.2e} above {CONSTANCY_TOL:.0e}")
    if len(pair.den) != 1:
        raise RetractionError("f~ must be polynomial")
    bez = None if pair.f.dim == 1 else bezout_pair(pair.ftilde_poly(), seed=seed)
    return FlatteningMap(pair, bez)


def det_s(flat: FlatteningMap, zeta1, z) -> complex:
    """``(f(s) - z) . f~(s)``."""
    zeta1 = np.asarray(zeta1, dtype=complex)
    out = np.sum((flat.f(zeta1) - np.asarray(z, dtype=complex)) * flat.ft(zeta1), axis=-1)
    return out[()] if out.ndim == 0 else out


def boundary_sign(flat: FlatteningMap, z, M: int = 1024) -> float:
    """Grid minimum of ``Re(det S(s) / s)`` on the unit circle."""
    zeta = circle_points(M)
    return float(np.min((det_s(flat, zeta, z) / zeta).real))


def _contour_data(flat, radius):
    if radius == CONTOUR_RADIUS:
        return flat._zc, flat._fc, flat._ftc, flat._fpc, flat._ftpc
    zc = radius * circle_points(flat.contour)
    return zc, flat.f(zc), flat.ft(zc), flat.fp(zc), flat.ftp(zc)


def _winding(D):
    return int(np.rint(np.angle(np.roll(D, -1) / D).sum() / (2 * np.pi)))


def locate_disc_param(flat: FlatteningMap, z, newton_tol: float = 1e-12, with_info: bool = False):
    """The unique zero of ``det S(., z)`` in the unit disc.

    Winding number first (must be 1), then the first moment
    ``(1/2 pi i) \\oint s D'(s)/D(s) ds`` on the circle of radius
    ``1 - 1e-6``, then Newton.

    Near the boundary the zero may sit outside that circle. The contour is
    then moved out to radius ``1 - 1e-12`` (``Re(det S / s) > 0`` on the unit
    circle for interior points), and the result is flagged as reduced
    precision. ``with_info=True`` returns ``(s, info)``.
    """
    z = np.asarray(z, dtype=complex)
    info = {"radius": CONTOUR_RADIUS, "winding": None, "reduced_precision": False}
    for radius in (CONTOUR_RADIUS, 1.0 - 1e-12):
        zc, fc, ftc, fpc, ftpc = _contour_data(flat, radius)
        D = np.sum((fc - z) * ftc, axis=1)
        if np.any(D == 0):
            raise RetractionError("det S vanishes on the contour")
        w = _winding(D)
        info.update(radius=radius, winding=w)
        if w == 1:
            break
        if w != 0:
            break
    if w != 1:
        raise RetractionError(f"winding number of det S is {w}, expected 1 "
                              "(point outside the body or too close to its boundary)")
    if radius != CONTOUR_RADIUS:
        info["reduced_precision"] = True
        log.warning("zero of det S lies within 1e-6 of the circle; reduced precision")
    Dp = np.sum(fpc * ftc + (fc - z) * ftpc, axis=1)
    s = complex(np.mean(zc ** 2 * Dp / D))
    for _ in range(50):
        val = complex(np.sum((flat.f(s) - z) * flat.ft(s)))
        der = complex(np.sum(flat.fp(s) * flat.ft(s) + (flat.f(s) - z) * flat.ftp(s)))
        if der == 0:
            break
        step = val / der
        s -= step
        if abs(step) <= newton_tol * max(1.0, abs(s)):
            break
    if not abs(s) < 1:
        raise RetractionError(f"located parameter {s} is outside the disc")
    return (s, info) if with_info else s


def caratheodory_candidate(flat: FlatteningMap, z) -> complex:
    """``c(z)``: holomorphic on the body, ``c(f(s)) = s``."""
    return locate_disc_param(flat, z)


def retract(flat: FlatteningMap, z) -> np.ndarray:
    """Holomorphic retraction onto ``f(D)``."""
    return flat.f(locate_disc_param(flat, z))


def full_inverse(flat: FlatteningMap, z, tol: float = 1e-9) -> np.ndarray:
    """All flattened coordinates ``(s, t2, ..., tn)`` of ``z``."""
    z = np.asarray(z, dtype=complex)
    s = locate_disc_param(flat, z)
    n = flat.dim
    out = np.zeros(n, dtype=complex)
    out[0] = s
    if n >= 2:
        zr = flat.R @ z
        fr = _polyval_vec(s, flat._fr)
        ftr = _polyval_vec(s, flat._ftr)
        out[2:] = zr[2:] - fr[2:]
        S = np.sum(out[2:] * ftr[2:])
        g = P.polyval(s, flat.bezout.g)
        h = P.polyval(s, flat.bezout.h)
        # t2 from whichever equation has the larger coefficient
        if abs(ftr[1]) >= abs(ftr[0]):
            out[1] = (fr[0] - zr[0] - g * S) / ftr[1]
        else:
            out[1] = (zr[1] - fr[1] + h * S) / ftr[0]
    err = float(np.abs(flat.phi(out) - z).max())
    if err > tol * max(1.0, np.abs(z).max()):
        raise RetractionError(f"round trip residual {err:.2e} above {tol:.0e}")
    return out
