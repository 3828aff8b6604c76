"""Sparse constraint matrices and the inexact normal-equation solver.

Everything downstream funnels linear algebra through ``NormalEquations``,
which represents M = A^T diag(d) A for a fixed constraint matrix A and
positive row weights d.  Desk-scale systems use a direct factorization
(equilibrated dense Cholesky below a size cutoff, sparse LU above it); a
Jacobi-preconditioned conjugate gradient backend with warm starting is
available for larger instances or by request.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._threads import ensure_single_thread_blas
from .errors import InvalidShape, NoConvergence, SingularSystem

# Below this column count the normal matrix is assembled densely and solved
# with LAPACK; above it, sparse LU with COLAMD ordering.
DENSE_CUTOFF = 1024
# Direct backend is the default up to this size; beyond it CG takes over.
DIRECT_MAX_N = 4096

RANK_TOL = 1e-12


class Backend(enum.Enum):
    DIRECT = "direct"
    CG = "cg"


@dataclass
class SolveReceipt:
    """Solution of A^T D A v = q together with solve diagnostics."""

    solution: np.ndarray
    rel_residual: float
    iterations: int
    backend: Backend


class SparseMat:
    """m x n real sparse matrix in triplet/compressed-column form.

    Duplicate (i, j) entries are merged and explicit zeros dropped.  For LP
    use the matrix must have full column rank; this is asserted at
    construction for matrices small enough to check cheaply and detected at
    factorization time otherwise.
    """

    def __init__(self, m, n, rows, cols, vals, check_rank=True):
        if m <= 0 or n <= 0:
            raise InvalidShape(f"need positive dimensions, got {m}x{n}")
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=float)
        if not (rows.size == cols.size == vals.size):
            raise InvalidShape("triplet arrays must have equal length")
        if rows.size and (rows.min() < 0 or rows.max() >= m):
            raise InvalidShape("row index out of range")
        if cols.size and (cols.min() < 0 or cols.max() >= n):
            raise InvalidShape("column index out of range")
        csc = sp.coo_matrix((vals, (rows, cols)), shape=(int(m), int(n))).tocsc()
        csc.sum_duplicates()
        csc.eliminate_zeros()
        self.csc = csc
        self.m = int(m)
        self.n = int(n)
        self._dense = None
        if check_rank:
            self._assert_full_column_rank()

    @classmethod
    def from_dense(cls, arr, check_rank=True) -> "SparseMat":
        arr = np.asarray(arr, dtype=float)
        if arr.ndim != 2:
            raise InvalidShape("expected a 2-d array")
        rows, cols = np.nonzero(arr)
        return cls(arr.shape[0], arr.shape[1], rows, cols, arr[rows, cols], check_rank)

    @classmethod
    def from_scipy(cls, mat, check_rank=True) -> "SparseMat":
        coo = sp.coo_matrix(mat)
        return cls(coo.shape[0], coo.shape[1], coo.row, coo.col, coo.data, check_rank)

    @property
    def nnz(self) -> int:
        return self.csc.nnz

    def dense(self) -> np.ndarray:
        if self._dense is None:
            self._dense = self.csc.toarray()
        return self._dense

    def matvec(self, v: np.ndarray) -> np.ndarray:
        if self.n <= DENSE_CUTOFF and self.m * self.n <= 4_000_000:
            return self.dense() @ v
        return self.csc @ v

    def rmatvec(self, v: np.ndarray) -> np.ndarray:
        if self.n <= DENSE_CUTOFF and self.m * self.n <= 4_000_000:
            return self.dense().T @ v
        return self.csc.T @ v

    def _assert_full_column_rank(self):
        if self.m * self.n > 4_000_000:
            return  # too big to check eagerly; factorization will detect it
        # Equilibrated Cholesky of A^T A succeeds iff A has full column rank
        # (up to the pivot tolerance used throughout this module).
        gram = self.dense().T @ self.dense()
        s = np.sqrt(np.diag(gram))
        if np.any(s <= 0.0) or not np.all(np.isfinite(s)):
            raise SingularSystem("constraint matrix has a zero column")
        gs = gram / np.outer(s, s)
        try:
            chol = np.linalg.cholesky(gs)
        except np.linalg.LinAlgError:
            raise SingularSystem("constraint matrix is column rank deficient")
        piv = np.diag(chol) ** 2
        if piv.min() < RANK_TOL * piv.max():
            raise SingularSystem("constraint matrix is column rank deficient")


class NormalEquations:
    """Factored view of M = A^T diag(d) A with d > 0.

    The instance is immutable; one factorization serves any number of
    solves and leverage-score computations against the same (A, d).
    """

    def __init__(self, A: SparseMat, d: np.ndarray, backend: Backend | None = None):
        d = np.asarray(d, dtype=float)
        if d.shape != (A.m,):
            raise InvalidShape(f"expected {A.m} row weights, got shape {d.shape}")
        if not np.all(np.isfinite(d)) or np.any(d <= 0):
            raise InvalidShape("row weights must be finite and strictly positive")
        self.A = A
        self.d = d
        if A.n <= DENSE_CUTOFF:
            ensure_single_thread_blas()
        if backend is None:
            backend = Backend.DIRECT if A.n <= DIRECT_MAX_N else Backend.CG
        self.backend = backend
        self._chol = None  # Cholesky factor of the equilibrated dense normal matrix
        self._scale = None  # equilibration diagonal
        self._lu = None  # sparse LU
        self._jacobi = None
        self._weighted = None

    # -- factorizations -------------------------------------------------
    def _normal_dense(self) -> np.ndarray:
        Ad = self.A.dense()
        return Ad.T @ (Ad * self.d[:, None])

    def _normal_sparse(self) -> sp.csc_matrix:
        D = sp.diags(self.d)
        return (self.A.csc.T @ D @ self.A.csc).tocsc()

    def _ensure_direct(self):
        if self._chol is not None or self._lu is not None:
            return
        if self.A.n <= DENSE_CUTOFF and self.A.m * self.A.n <= 4_000_000:
            M = self._normal_dense()
            dm = np.diag(M).copy()
            if np.any(dm <= 0) or not np.all(np.isfinite(dm)):
                raise SingularSystem("normal matrix has nonpositive diagonal")
            s = 1.0 / np.sqrt(dm)
            Ms = M * s[:, None] * s[None, :]
            try:
                chol = np.linalg.cholesky(Ms)
            except np.linalg.LinAlgError:
                raise SingularSystem("normal matrix not positive definite")
            piv = np.diag(chol) ** 2
            if piv.min() < RANK_TOL * piv.max():
                raise SingularSystem("normal matrix rank deficient beyond tolerance")
            self._chol = chol
            self._scale = s
        else:
            M = self._normal_sparse()
            try:
                self._lu = spla.splu(M)
            except RuntimeError as exc:
                raise SingularSystem(f"sparse factorization failed: {exc}")
            diag_u = np.abs(self._lu.U.diagonal())
            if diag_u.min() < RANK_TOL * diag_u.max():
                raise SingularSystem("normal matrix rank deficient beyond tolerance")

    def _direct_solve(self, q: np.ndarray) -> np.ndarray:
        self._ensure_direct()
        if self._chol is not None:
            y = sla.solve_triangular(self._chol, self._scale * q, lower=True)
            z = sla.solve_triangular(self._chol.T, y, lower=False)
            return self._scale * z
        return self._lu.solve(q)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return self.A.rmatvec(self.d * self.A.matvec(v))

    # -- public API ------------------------------------------------------
    def solve(self, q, eps_s=1e-10, hint=None) -> SolveReceipt:
        """Solve M v = q to relative accuracy eps_s in the M-energy norm."""
        q = np.asarray(q, dtype=float)
        if q.shape != (self.A.n,):
            raise InvalidShape(f"rhs must have length {self.A.n}")
        if self.backend is Backend.DIRECT:
            v = self._direct_solve(q)
            rel = self._rel_residual(v, q)
            refinements = 0
            while (not np.isfinite(rel) or rel > eps_s) and refinements < 3:
                r = q - self.matvec(v)
                v = v + self._direct_solve(r)
                rel = self._rel_residual(v, q)
                refinements += 1
            return SolveReceipt(v, rel, 1 + refinements, Backend.DIRECT)
        return self._cg_solve(q, eps_s, hint)

    def _rel_residual(self, v, q) -> float:
        # ||Mv - q|| relative to ||q||, both in the M^{-1} norm when a direct
        # factorization is available (exact up to roundoff), in the Jacobi
        # norm as a proxy otherwise.
        r = self.matvec(v) - q
        if self._chol is not None or self._lu is not None:
            rr = float(r @ self._direct_solve(r))
            qq = float(q @ self._direct_solve(q))
        else:
            jac = self._jacobi_diag()
            rr = float(r @ (r / jac))
            qq = float(q @ (q / jac))
        if qq <= 0:
            return 0.0 if rr <= 0 else np.inf
        return float(np.sqrt(max(rr, 0.0) / qq))

    def _jacobi_diag(self) -> np.ndarray:
        if self._jacobi is None:
            A2 = self.A.csc.multiply(self.A.csc)
            diag = np.asarray(A2.T @ self.d).ravel()
            self._jacobi = np.maximum(diag, 1e-300)
        return self._jacobi

    def _cg_solve(self, q, eps_s, hint) -> SolveReceipt:
        jac = self._jacobi_diag()
        M_pre = spla.LinearOperator((self.A.n,) * 2, matvec=lambda v: v / jac)
        op = spla.LinearOperator((self.A.n,) * 2, matvec=self.matvec)
        x0 = None if hint is None else np.asarray(hint, dtype=float)
        iters = 0

        def _count(_):
            nonlocal iters
            iters += 1

        maxiter = max(200, 20 * self.A.n)
        v, info = spla.cg(
            op, q, x0=x0, rtol=max(eps_s / 8.0, 1e-14), atol=0.0,
            maxiter=maxiter, M=M_pre, callback=_count,
        )
        if info > 0:
            # Fall back to the direct factorization when feasible.
            if self.A.n <= DIRECT_MAX_N:
                vd = self._direct_solve(q)
                return SolveReceipt(vd, self._rel_residual(vd, q), iters, Backend.DIRECT)
            raise NoConvergence(f"CG did not converge in {maxiter} iterations")
        if info < 0:
            raise SingularSystem("CG reported an illegal input or breakdown")
        return SolveReceipt(v, self._rel_residual(v, q), iters, Backend.CG)

    def weighted_rows(self) -> np.ndarray:
        """Dense sqrt(d)-scaled rows of A (only for n below the dense cutoff)."""
        if self._weighted is None:
            self._weighted = self.A.dense() * np.sqrt(self.d)[:, None]
        return self._weighted

    def leverage_exact(self) -> np.ndarray:
        """Leverage scores sigma_i = d_i a_i^T M^{-1} a_i for all rows."""
        self._ensure_direct()
        if self._chol is not None:
            T = sla.solve_triangular(
                self._chol, self._scale[:, None] * self.weighted_rows().T, lower=True
            )
            return np.einsum("ij,ij->j", T, T)
        # Sparse path: block solves against the sqrt(D)-scaled rows.
        B = self.A.csc.multiply(np.sqrt(self.d)[:, None]).tocsr()
        sigma = np.empty(self.A.m)
        block = 256
        for start in range(0, self.A.m, block):
            rows = B[start:start + block].toarray()
            sol = self._lu.solve(rows.T)
            sigma[start:start + block] = np.einsum("ij,ji->i", rows, sol)
        return sigma

    def leverage_sketched(self, theta: float, seed: int) -> np.ndarray:
        """Rademacher-probe estimate of the leverage scores.

        Uses k = ceil(24 ln(m) / theta^2) probes; probe j draws its sign
        vector from a generator seeded with seed + j, so a parallel
        evaluation reproduces the sequential one probe-for-probe.
        """
        if not (0.0 < theta < 1.0):
            raise InvalidShape(f"theta must lie in (0, 1), got {theta}")
        m = self.A.m
        k = int(np.ceil(24.0 * np.log(max(m, 2)) / theta**2))
        sq = np.sqrt(self.d)
        est = np.zeros(m)
        direct = self.backend is Backend.DIRECT
        if direct:
            self._ensure_direct()
        for j in range(k):
            rng = np.random.default_rng(seed + j)
            r = rng.integers(0, 2, size=m).astype(float) * 2.0 - 1.0
            y = self.A.rmatvec(sq * r)
            v = self._direct_solve(y) if direct else self.solve(y, eps_s=1e-12).solution
            t = sq * self.A.matvec(v)
            est += t * t
        return est / k


def solve_normal(A: SparseMat, d, q, eps_s=1e-10, hint=None, backend=None) -> SolveReceipt:
    """One-shot solve of (A^T diag(d) A) v = q."""
    return NormalEquations(A, d, backend=backend).solve(q, eps_s=eps_s, hint=hint)


def leverage_scores_exact(A: SparseMat, d) -> np.ndarray:
    return NormalEquations(A, d).leverage_exact()


def leverage_scores_approx(A: SparseMat, d, theta: float, seed: int) -> np.ndarray:
    return NormalEquations(A, d).leverage_sketched(theta, seed)


def apply_pxw(A: SparseMat, phi2, w, v, eps_s=1e-10) -> np.ndarray:
    """Apply the weighted projection P = I - W^{-1}A_x(A_x^T W^{-1} A_x)^{-1}A_x^T.

    Here A_x = diag(phi2)^{-1/2} A; the projection is orthogonal in the
    W-inner product onto the kernel of A_x^T.
    """
    phi2 = np.asarray(phi2, dtype=float)
    w = np.asarray(w, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(phi2 <= 0) or np.any(w <= 0):
        raise InvalidShape("phi2 and w must be strictly positive")
    ne = NormalEquations(A, 1.0 / (w * phi2))
    rhs = A.rmatvec(v / np.sqrt(phi2))
    sol = ne.solve(rhs, eps_s=eps_s).solution
    return v - A.matvec(sol) / (w * np.sqrt(phi2))
