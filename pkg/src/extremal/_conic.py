"""Exact cone representations of ``p`` and ``p*`` for the closed-form bodies.

Used by the primal and dual solvers to hand the discretised extremal
problems to an interior-point conic solver (Clarabel). Oracle bodies have
no such representation; callers fall back to cutting planes.

Affine complex fields are passed realified: ``y = (Cr + Lr z) + i (Ci + Li z)``
with ``C*`` of shape ``(M, n)`` and ``L*`` of shape ``(M, n, nz)``, ``nz``
counting the leading solver variables.
"""

from __future__ import annotations

from dataclasses import dataclass

import clarabel
import numpy as np
import scipy.sparse as sp

from . import gauge as G

CONIC_KINDS = ("ball", "polydisc", "complex_ellipsoid", "polyhedral")


@dataclass
class ConicResult:
    z: np.ndarray
    primal: float
    dual: float
    status: str
    iterations: int

    @property
    def ok(self) -> bool:
        return self.status in ("Solved", "AlmostSolved")


def supports(body: G.ConvexBody) -> bool:
    return body.kind in CONIC_KINDS


class ConicProgram:
    """``min c.z  s.t.  const + L z`` in a product of cones, built row block by block."""

    def __init__(self, nvar: int):
        self.nvar = int(nvar)
        self._blocks = []   # (rows, cols, vals, const, cones)

    def var(self, k: int = 1) -> np.ndarray:
        idx = self.nvar + np.arange(k)
        self.nvar += k
        return idx

    def constrain(self, const, cones, dense=None, triplets=None):
        """Append rows ``const + L z`` lying in ``cones`` (one cone or a list).

        ``L`` is the sum of a dense block on the leading columns and sparse
        ``(rows, cols, vals)`` triplets.
        """
        const = np.asarray(const, dtype=float).ravel()
        R = len(const)
        parts = []
        if dense is not None:
            D = sp.coo_matrix(np.asarray(dense).reshape(R, -1))
            parts.append((D.row, D.col, D.data))
        if triplets is not None:
            parts.append(tuple(np.asarray(x).ravel() for x in triplets))
        r, c, v = (np.concatenate(x) for x in zip(*parts))
        cones = cones if isinstance(cones, list) else [cones]
        self._blocks.append((r, c, v, const, cones))

    def solve(self, cost: dict | np.ndarray, tol: float = 1e-10, max_iter: int = 200) -> ConicResult:
        q = np.zeros(self.nvar)
        if isinstance(cost, dict):
            for k, v in cost.items():
                q[k] += v
        else:
            q[: len(cost)] = cost
        rows, cols, data, b, cones = [], [], [], [], []
        off = 0
        for r, c, v, const, cn in self._blocks:
            rows.append(r + off)
            cols.append(c)
            data.append(-v)
            b.append(const)
            cones.extend(cn)
            off += len(const)
        A = sp.csc_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(off, self.nvar))
        P = sp.csc_matrix((self.nvar, self.nvar))
        st = clarabel.DefaultSettings()
        st.verbose = False
        st.max_iter = max_iter
        st.tol_gap_abs = tol
        st.tol_gap_rel = tol
        st.tol_feas = tol
        st.time_limit = 60.0
        sol = clarabel.DefaultSolver(P, q, A, np.concatenate(b), cones, st).solve()
        return ConicResult(np.asarray(sol.x), float(sol.obj_val), float(sol.obj_val_dual),
                           str(sol.status), int(sol.iterations))


def realify(E: np.ndarray, n: int):
    """Realified matrices of ``y_ij = sum_k E_ik Q_kj`` in the packing ``[Re Q, Im Q]``."""
    M, K = E.shape
    Lr = np.zeros((M, n, 2 * K * n))
    Li = np.zeros((M, n, 2 * K * n))
    for j in range(n):
        re = np.arange(K) * n + j
        im = K * n + re
        Lr[:, j, re] = E.real
        Lr[:, j, im] = -E.imag
        Li[:, j, re] = E.imag
        Li[:, j, im] = E.real
    return Lr, Li


def _soc3(prog, head, Yr, Yi, cr, ci, scale=1.0):
    """Cones ``head_k >= scale |y_k|`` for scalar complex ``y_k``; ``head`` are variable indices."""
    R = len(head)
    nz = Yr.shape[-1]
    D = np.zeros((R, 3, nz))
    D[:, 1] = scale * Yr
    D[:, 2] = scale * Yi
    const = np.column_stack([np.zeros(R), scale * cr, scale * ci])
    trip = (3 * np.arange(R), head, np.ones(R))
    prog.constrain(const, [clarabel.SecondOrderConeT(3)] * R, D, trip)


def _socn(prog, head, Lr, Li, Cr, Ci):
    """Cones ``head_i >= |y_i|`` for vector ``y_i`` in ``C^n``."""
    M, n = Cr.shape
    nz = Lr.shape[-1]
    D = np.zeros((M, 1 + 2 * n, nz))
    D[:, 1:1 + n] = Lr
    D[:, 1 + n:] = Li
    const = np.column_stack([np.zeros(M), Cr, Ci])
    trip = ((1 + 2 * n) * np.arange(M), head, np.ones(M))
    prog.constrain(const, [clarabel.SecondOrderConeT(1 + 2 * n)] * M, D, trip)


def _pow3(prog, x, y, z, alpha):
    """Cones ``x^alpha y^(1-alpha) >= |z|``."""
    R = len(x)
    rows = (3 * np.arange(R)[:, None] + np.arange(3)).ravel()
    cols = np.column_stack([x, y, z]).ravel()
    prog.constrain(np.zeros(3 * R), [clarabel.PowerConeT(float(alpha))] * R,
                   triplets=(rows, cols, np.ones(3 * R)))


def _rowsum(prog, cols, vals, cone):
    """Rows ``sum_k vals_k z[cols_ik]`` in ``cone``."""
    M, k = cols.shape
    rows = np.repeat(np.arange(M), k)
    prog.constrain(np.zeros(M), cone(M), triplets=(rows, cols.ravel(), np.tile(vals, M)))


def add_gauge_epigraph(prog: ConicProgram, body: G.ConvexBody, Cr, Ci, Lr, Li, t: int):
    """Constrain ``p(y_i) <= z[t]`` at every row ``i``."""
    M, n = Cr.shape
    nz = Lr.shape[-1]
    kind = body.kind
    T = np.full(M, t)
    if kind == "ball":
        _socn(prog, T, Lr, Li, Cr, Ci)
        return
    if kind == "polydisc":
        for j in range(n):
            # r_j t >= |y_ij|
            _soc3(prog, T, Lr[:, j], Li[:, j], Cr[:, j], Ci[:, j], 1.0 / body.radii[j])
        return
    if kind == "complex_ellipsoid":
        m, r = body.exponents, body.radii
        s = prog.var(M * n).reshape(M, n)
        u = prog.var(M * n).reshape(M, n)
        for j in range(n):
            _soc3(prog, s[:, j], Lr[:, j], Li[:, j], Cr[:, j], Ci[:, j], 1.0 / r[j])
            if m[j] == 0.5:
                # linear coordinate: the term is s itself
                _rowsum(prog, np.column_stack([u[:, j], s[:, j]]), np.array([1.0, -1.0]), clarabel.ZeroConeT)
            else:
                _pow3(prog, u[:, j], T, s[:, j], 1.0 / (2.0 * m[j]))
        _rowsum(prog, np.column_stack([T, u]), np.concatenate([[1.0], -np.ones(n)]),
                clarabel.NonnegativeConeT)
        return
    if kind == "polyhedral":
        W = body.functionals
        k = len(W)
        # t - Re(y_i . w_k) >= 0
        Lre = np.einsum("ijz,kj->ikz", Lr, W.real) - np.einsum("ijz,kj->ikz", Li, W.imag)
        Cre = Cr @ W.real.T - Ci @ W.imag.T
        prog.constrain(-Cre.ravel(), clarabel.NonnegativeConeT(M * k), -Lre.reshape(M * k, nz),
                       (np.arange(M * k), np.full(M * k, t), np.ones(M * k)))
        return
    raise G.GaugeError(f"no cone representation for kind {kind!r}")


def add_dual_epigraph(prog: ConicProgram, body: G.ConvexBody, Cr, Ci, Lr, Li, s) -> None:
    """Constrain ``p*(y_i) <= z[s_i]`` at every row ``i``."""
    M, n = Cr.shape
    nz = Lr.shape[-1]
    kind = body.kind
    s = np.asarray(s)
    if kind == "ball":
        _socn(prog, s, Lr, Li, Cr, Ci)
        return
    if kind in ("polydisc", "complex_ellipsoid"):
        r = body.radii
        a = prog.var(M * n).reshape(M, n)
        for j in range(n):
            _soc3(prog, a[:, j], Lr[:, j], Li[:, j], Cr[:, j], Ci[:, j], r[j])
        if kind == "polydisc":
            _rowsum(prog, np.column_stack([s, a]), np.concatenate([[1.0], -np.ones(n)]),
                    clarabel.NonnegativeConeT)
            return
        # support function of {sum t_j^(2 m_j) <= 1, t >= 0} at a:
        # min over mu > 0 of mu + sum_j c_j a_j^q' mu^(1 - q'), q = 2 m_j
        m = body.exponents
        mu = prog.var(M)
        v = prog.var(M * n).reshape(M, n)
        coef = np.zeros(n)
        for j in range(n):
            if m[j] == 0.5:
                _rowsum(prog, np.column_stack([mu, a[:, j]]), np.array([1.0, -1.0]),
                        clarabel.NonnegativeConeT)
                _rowsum(prog, v[:, j:j + 1], np.array([1.0]), clarabel.ZeroConeT)
            else:
                q = 2.0 * m[j]
                coef[j] = (1.0 - 1.0 / q) * q ** (-1.0 / (q - 1.0))
                _pow3(prog, v[:, j], mu, a[:, j], 1.0 - 1.0 / q)
        _rowsum(prog, np.column_stack([s, mu, v]), np.concatenate([[1.0, -1.0], -coef]),
                clarabel.NonnegativeConeT)
        return
    if kind == "polyhedral":
        V = body.vertices
        k = len(V)
        Lre = np.einsum("ijz,kj->ikz", Lr, V.real) - np.einsum("ijz,kj->ikz", Li, V.imag)
        Cre = Cr @ V.real.T - Ci @ V.imag.T
        prog.constrain(-Cre.ravel(), clarabel.NonnegativeConeT(M * k), -Lre.reshape(M * k, nz),
                       (np.arange(M * k), np.repeat(s, k), np.ones(M * k)))
        return
    raise G.GaugeError(f"no cone representation for kind {kind!r}")
