"""Matrix-free conjugate gradient for graph-Laplacian quadratic forms."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

DEFAULT_TOL = 1e-12


class SolverError(RuntimeError):
    pass


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    residual: float
    converged: bool


def conjugate_gradient(apply, b, x0=None, tol=DEFAULT_TOL, maxiter=None, project=None,
                       precond=None):
    """Solve ``A x = b`` for symmetric positive semi-definite ``A``.

    Parameters
    ----------
    apply : callable
        Matrix-vector product.
    b : ndarray
        Right-hand side; projected with ``project`` first when given.
    tol : float
        Relative residual ``|b - A x| / |b|`` at which to stop.
    maxiter : int, optional
        Iteration cap, default ``10 * len(b)``.
    project : callable, optional
        Orthogonal projection onto the range of ``A`` (kernel removal).
    precond : ndarray, optional
        Inverse diagonal for Jacobi preconditioning.
    """
    P = project if project is not None else (lambda v: v)
    b = P(np.asarray(b, dtype=float))
    n = b.size
    maxiter = 10 * max(n, 1) if maxiter is None else maxiter
    x = np.zeros(n) if x0 is None else P(np.asarray(x0, dtype=float).copy())
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return CGResult(np.zeros(n), 0, 0.0, True)
    M = (lambda v: v) if precond is None else (lambda v: precond * v)
    r = b - P(apply(x))
    z = M(r)
    p = z.copy()
    rz = r @ z
    it = 0
    while np.linalg.norm(r) > tol * bnorm and it < maxiter:
        Ap = P(apply(p))
        pAp = p @ Ap
        if pAp <= 0:
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = M(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
        it += 1
    x = P(x)
    # recompute the true residual to guard against drift
    res = np.linalg.norm(b - P(apply(x))) / bnorm
    return CGResult(x, it, float(res), bool(res <= max(tol, 10 * tol)))


class EdgeSystem:
    """Quadratic form ``½ Σ_e ω_e (s_e + w[dst_e] − w[src_e])²`` on ``n`` nodes.

    The Hessian is the weighted graph Laplacian ``Σ ω (e_dst − e_src)(e_dst − e_src)ᵀ``;
    its kernel is spanned by indicators of connected components, which the
    solver projects out.
    """

    def __init__(self, n: int, src, dst, weight):
        self.n = int(n)
        self.src = np.asarray(src, dtype=np.int64)
        self.dst = np.asarray(dst, dtype=np.int64)
        self.weight = np.asarray(weight, dtype=float)

    def apply(self, w):
        f = self.weight * (w[self.dst] - w[self.src])
        return np.bincount(self.dst, f, self.n) - np.bincount(self.src, f, self.n)

    def load(self, s):
        """Right-hand side ``−Σ ω s (e_dst − e_src)`` of the normal equations."""
        f = self.weight * s
        return np.bincount(self.src, f, self.n) - np.bincount(self.dst, f, self.n)

    @cached_property
    def components(self):
        active = self.weight > 0
        g = coo_matrix((np.ones(active.sum()), (self.src[active], self.dst[active])),
                       shape=(self.n, self.n))
        ncomp, labels = connected_components(g, directed=False)
        return ncomp, labels

    @cached_property
    def _sizes(self):
        ncomp, labels = self.components
        return np.bincount(labels, minlength=ncomp).astype(float)

    def project(self, v):
        _, labels = self.components
        means = np.bincount(labels, v, len(self._sizes)) / self._sizes
        return v - means[labels]

    @cached_property
    def diagonal(self):
        return (np.bincount(self.dst, self.weight, self.n)
                + np.bincount(self.src, self.weight, self.n))

    def solve(self, rhs, tol=DEFAULT_TOL, maxiter=None) -> CGResult:
        diag = self.diagonal
        inv = np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 0.0)
        res = conjugate_gradient(self.apply, rhs, tol=tol, maxiter=maxiter, project=self.project,
                                 precond=inv)
        if not res.converged:
            raise SolverError(f"CG stopped at relative residual {res.residual:.3e}")
        return res

    def minimize(self, s, tol=DEFAULT_TOL) -> CGResult:
        """Minimiser of the quadratic form with offsets ``s`` (defined up to component constants)."""
        return self.solve(self.load(s), tol=tol)

    def energy(self, w, s=0.0):
        return 0.5 * float(np.sum(self.weight * (s + w[self.dst] - w[self.src]) ** 2))

    def dense(self):
        """Dense Hessian, for oracles and small problems."""
        A = np.zeros((self.n, self.n))
        np.add.at(A, (self.dst, self.dst), self.weight)
        np.add.at(A, (self.src, self.src), self.weight)
        np.add.at(A, (self.dst, self.src), -self.weight)
        np.add.at(A, (self.src, self.dst), -self.weight)
        return A

    def with_weight(self, weight) -> "EdgeSystem":
        out = EdgeSystem.__new__(EdgeSystem)
        out.n, out.src, out.dst = self.n, self.src, self.dst
        out.weight = np.asarray(weight, dtype=float)
        return out


def dense_minimize(system: EdgeSystem, s):
    """Least-squares oracle for ``EdgeSystem.minimize``."""
    x, *_ = np.linalg.lstsq(system.dense(), system.load(s), rcond=None)
    return system.project(x)
