"""Divisors, jet data and polynomial discs ``D -> C^n``.

Polynomials are stored in ascending powers. Scalar polynomials are plain
1-D complex arrays handled with :mod:`numpy.polynomial.polynomial`; vector
polynomials (discs) carry a ``(degree + 1, n)`` coefficient array.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial
from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.special import comb


class DiscSpaceError(ValueError):
    pass


class IllConditionedError(DiscSpaceError):
    """Hermite interpolation could not reproduce the jets to 1e-8."""


@dataclass(frozen=True)
class Divisor:
    """Interpolation nodes ``zeta_alpha`` in the unit disc with multiplicities."""

    nodes: tuple

    def __post_init__(self):
        clean = []
        for item in self.nodes:
            zeta, mult = item
            zeta = complex(zeta)
            if int(mult) != mult or mult < 1:
                raise DiscSpaceError(f"multiplicity must be a positive integer, got {mult!r}")
            if not np.isfinite(zeta) or abs(zeta) >= 1:
                raise DiscSpaceError(f"node {zeta} is not inside the unit disc")
            clean.append((zeta, int(mult)))
        pts = [z for z, _ in clean]
        if len(set(pts)) != len(pts):
            raise DiscSpaceError("divisor nodes must be distinct")
        if not clean:
            raise DiscSpaceError("empty divisor")
        object.__setattr__(self, "nodes", tuple(clean))

    @classmethod
    def origin(cls, mult: int = 2) -> "Divisor":
        """``[0]^mult``."""
        return cls(((0.0, mult),))

    @classmethod
    def pair(cls, t: complex) -> "Divisor":
        """``[0][t]``."""
        return cls(((0.0, 1), (t, 1)))

    @property
    def degree(self) -> int:
        return sum(m for _, m in self.nodes)

    @property
    def points(self) -> np.ndarray:
        return np.array([z for z, _ in self.nodes], dtype=complex)

    @property
    def multiplicities(self) -> list:
        return [m for _, m in self.nodes]

    def to_dict(self) -> dict:
        return {"nodes": [[[z.real, z.imag], m] for z, m in self.nodes]}

    @classmethod
    def from_dict(cls, d) -> "Divisor":
        return cls(tuple((complex(re, im), m) for (re, im), m in d["nodes"]))


@dataclass(frozen=True, eq=False)
class JetData:
    """Prescribed derivatives ``f^(beta)(zeta_alpha) = values[alpha][beta]``.

    ``values[alpha]`` has shape ``(d_alpha, n)``; entries are derivatives,
    not Taylor coefficients.
    """

    values: tuple

    def __post_init__(self):
        vals = tuple(np.atleast_2d(np.asarray(v, dtype=complex)) for v in self.values)
        if not vals:
            raise DiscSpaceError("empty jet data")
        n = vals[0].shape[1]
        if any(v.ndim != 2 or v.shape[1] != n for v in vals):
            raise DiscSpaceError("all jet vectors must share the ambient dimension")
        if not all(np.all(np.isfinite(v)) for v in vals):
            raise DiscSpaceError("non-finite jet data")
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return self.values[0].shape[1]

    def check(self, div: Divisor) -> None:
        if len(self.values) != len(div.nodes):
            raise DiscSpaceError("jet data does not match the divisor's node count")
        for (z, m), v in zip(div.nodes, self.values):
            if v.shape[0] != m:
                raise DiscSpaceError(f"node {z} needs {m} jet vectors, got {v.shape[0]}")

    def is_zero(self) -> bool:
        return all(not np.any(v) for v in self.values)

    def to_dict(self) -> dict:
        return {"values": [[[[c.real, c.imag] for c in row] for row in v] for v in self.values]}

    @classmethod
    def from_dict(cls, d) -> "JetData":
        return cls(tuple(np.array([[complex(re, im) for re, im in row] for row in v])
                         for v in d["values"]))


@dataclass(frozen=True, eq=False)
class DiscPoly:
    """Polynomial disc ``f(zeta) = sum_k c_k zeta^k`` with ``c_k`` in C^n."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim == 1:
            c = c[:, None]
        if c.ndim != 2 or c.shape[0] < 1:
            raise DiscSpaceError("coefficients must have shape (degree + 1, n)")
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.coeffs.shape[1]

    def __call__(self, zeta):
        """Evaluate at scalar or array ``zeta``; result has a trailing axis ``n``."""
        zeta = np.asarray(zeta, dtype=complex)
        out = np.zeros(zeta.shape + (self.dim,), dtype=complex)
        for c in self.coeffs[::-1]:
            out = out * zeta[..., None] + c
        return out

    def derivative(self, order: int = 1) -> "DiscPoly":
        c = self.coeffs
        for _ in range(order):
            if c.shape[0] == 1:
                return DiscPoly(np.zeros((1, self.dim), dtype=complex))
            c = c[1:] * np.arange(1, c.shape[0])[:, None]
        return DiscPoly(c)

    def padded(self, degree: int) -> "DiscPoly":
        if degree < self.degree:
            raise DiscSpaceError("cannot pad to a lower degree")
        c = np.zeros((degree + 1, self.dim), dtype=complex)
        c[: self.degree + 1] = self.coeffs
        return DiscPoly(c)

    def __add__(self, other: "DiscPoly") -> "DiscPoly":
        deg = max(self.degree, other.degree)
        return DiscPoly(self.padded(deg).coeffs + other.padded(deg).coeffs)

    def __sub__(self, other: "DiscPoly") -> "DiscPoly":
        deg = max(self.degree, other.degree)
        return DiscPoly(self.padded(deg).coeffs - other.padded(deg).coeffs)

    def scaled_argument(self, s: complex) -> "DiscPoly":
        """The disc ``zeta -> f(s * zeta)``."""
        return DiscPoly(self.coeffs * (s ** np.arange(self.degree + 1))[:, None])

    def to_dict(self) -> dict:
        return {"dim": self.dim, "degree": self.degree,
                "coefficients": [[[c.real, c.imag] for c in row] for row in self.coeffs]}

    @classmethod
    def from_dict(cls, d) -> "DiscPoly":
        c = np.array([[complex(re, im) for re, im in row] for row in d["coefficients"]])
        if c.shape != (d["degree"] + 1, d["dim"]):
            raise DiscSpaceError("disc coefficients do not match 'dim'/'degree'")
        return cls(c)


def constant_disc(a) -> DiscPoly:
    return DiscPoly(np.asarray(a, dtype=complex).reshape(1, -1))


def divisor_poly(div: Divisor) -> np.ndarray:
    """Monic ``B(zeta) = prod_alpha (zeta - zeta_alpha)^(d_alpha)``."""
    roots = np.concatenate([np.full(m, z, dtype=complex) for z, m in div.nodes])
    return P.polyfromroots(roots).astype(complex)


def reflected_divisor_poly(div: Divisor) -> np.ndarray:
    """``prod_alpha (1 - conj(zeta_alpha) zeta)^(d_alpha)``, zero-free on the closed disc."""
    out = np.array([1.0 + 0j])
    for z, m in div.nodes:
        for _ in range(m):
            out = P.polymul(out, np.array([1.0, -np.conj(z)]))
    return out


def taylor_shift(c: np.ndarray, z0: complex) -> np.ndarray:
    """Coefficients of ``p(z0 + s)`` in powers of ``s`` (works on trailing axes)."""
    c = np.asarray(c, dtype=complex)
    deg = c.shape[0] - 1
    j = np.arange(deg + 1)
    binom = comb(j[None, :], j[:, None])  # binom[k, j] = C(j, k)
    with np.errstate(invalid="ignore"):
        pw = np.where(j[None, :] >= j[:, None], complex(z0) ** np.maximum(j[None, :] - j[:, None], 0), 0)
    return np.tensordot(binom * pw, c, axes=(1, 0))


def series_reciprocal(c: np.ndarray, length: int) -> np.ndarray:
    """First ``length`` power-series coefficients of ``1 / c(s)`` (``c[0] != 0``)."""
    c = np.asarray(c, dtype=complex)
    if c[0] == 0:
        raise DiscSpaceError("series has no reciprocal (zero constant term)")
    out = np.zeros(length, dtype=complex)
    out[0] = 1.0 / c[0]
    for k in range(1, length):
        m = min(k, c.shape[0] - 1)
        out[k] = -np.dot(c[1: m + 1], out[k - 1::-1][:m]) / c[0]
    return out


def hermite_basepoint(div: Divisor, jets: JetData) -> DiscPoly:
    """Coordinatewise Hermite interpolant of degree ``<= d - 1`` through the jets."""
    jets.check(div)
    d = div.degree
    A = np.zeros((d, d), dtype=complex)
    rhs = np.zeros((d, jets.dim), dtype=complex)
    row = 0
    k = np.arange(d)
    for (z, m), vals in zip(div.nodes, jets.values):
        for beta in range(m):
            fall = np.array([factorial(kk) / factorial(kk - beta) if kk >= beta else 0.0
                             for kk in k])
            with np.errstate(divide="ignore", invalid="ignore"):
                powers = np.where(k >= beta, z ** np.maximum(k - beta, 0), 0.0)
            A[row] = fall * powers
            rhs[row] = vals[beta]
            row += 1
    try:
        coeffs = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        raise IllConditionedError("confluent Vandermonde system is singular") from None
    f0 = DiscPoly(coeffs)
    err = jet_error(f0, div, jets)
    scale = max(1.0, max(np.abs(v).max() for v in jets.values))
    if err > 1e-8 * scale:
        raise IllConditionedError(f"Hermite basepoint reproduces jets only to {err:.2e}")
    return f0


def disc_jet(f: DiscPoly, zeta: complex, order: int) -> list:
    """``[f(zeta), f'(zeta), ..., f^(order)(zeta)]``, exact via the Taylor shift."""
    if order < 0:
        raise DiscSpaceError("order must be nonnegative")
    shifted = taylor_shift(f.coeffs, complex(zeta))
    out = []
    for beta in range(order + 1):
        if beta < shifted.shape[0]:
            out.append(shifted[beta] * factorial(beta))
        else:
            out.append(np.zeros(f.dim, dtype=complex))
    return out


def jet_error(f: DiscPoly, div: Divisor, jets: JetData) -> float:
    """Largest deviation of the jets of ``f`` from the prescribed ones."""
    err = 0.0
    for (z, m), vals in zip(div.nodes, jets.values):
        got = np.array(disc_jet(f, z, m - 1))
        err = max(err, float(np.abs(got - vals).max()))
    return err


def jets_of(f: DiscPoly, div: Divisor) -> JetData:
    """Jet data of ``f`` along ``div``."""
    return JetData(tuple(np.array(disc_jet(f, z, m - 1)) for z, m in div.nodes))


def circle_points(M: int) -> np.ndarray:
    return np.exp(2j * np.pi * np.arange(M) / M)


def boundary_grid(f: DiscPoly, M: int) -> np.ndarray:
    """Values of ``f`` at ``exp(2 pi i k / M)``, shape ``(M, n)``, via an FFT."""
    if M < 2 * f.degree + 1:
        raise DiscSpaceError(f"grid size {M} is below 2 * degree + 1 = {2 * f.degree + 1}")
    return _grid_values(f.coeffs, M)


def _grid_values(coeffs, M):
    # f(w^k) = sum_j c_j w^(jk) = M * ifft(c)[k]; fold coefficients beyond M
    c = np.asarray(coeffs, dtype=complex)
    if c.shape[0] > M:
        folded = np.zeros((M,) + c.shape[1:], dtype=complex)
        for j in range(c.shape[0]):
            folded[j % M] += c[j]
        c = folded
    return np.fft.ifft(c, n=M, axis=0) * M


def affine_family_matrix(B: np.ndarray, K: int, zeta: np.ndarray) -> np.ndarray:
    """``E[i, k] = B(zeta_i) zeta_i^k`` for ``k < K``: the map ``q -> B q`` on samples."""
    Bz = P.polyval(zeta, B)
    return Bz[:, None] * zeta[:, None] ** np.arange(K)[None, :]


def disc_from_q(f0: DiscPoly, B: np.ndarray, Q: np.ndarray) -> DiscPoly:
    """``f0 + B * q`` with ``q`` given by coefficients ``Q`` of shape ``(K, n)``."""
    n = f0.dim
    prod = np.array([np.convolve(B, Q[:, j]) for j in range(n)]).T
    return f0 + DiscPoly(prod)


def q_from_disc(f: DiscPoly, f0: DiscPoly, B: np.ndarray, K: int) -> np.ndarray:
    """Invert :func:`disc_from_q` for a disc sharing the jets of ``f0``."""
    diff = (f - f0).coeffs
    Q = np.zeros((K, f.dim), dtype=complex)
    for j in range(f.dim):
        quo, rem = P.polydiv(diff[:, j], B)
        quo = np.atleast_1d(quo)[:K]
        Q[: quo.shape[0], j] = quo
    return Q
