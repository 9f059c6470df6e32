"""Sparse symmetric matrices, constrained solves, dense generalized eigensolver.

The constrained solve handles symmetric positive-semidefinite systems whose
kernel is a single known direction: the system is reduced by an elimination
map (Dirichlet-type trace conditions), deflated along the kernel, solved by
Jacobi-preconditioned conjugate gradients with every iterate projected onto
the mean-constraint hyperplane, and falls back to a dense LU factorization
of the bordered system when CG stalls.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import _kernels
from .errors import (
    DimensionMismatchError,
    IncompatibleRhsError,
    InvalidArgumentError,
    NoConvergenceError,
    NotPositiveDefiniteError,
    SingularSystemError,
)

log = logging.getLogger(__name__)

DENSE_FALLBACK_MAX_DIM = 5000
DEFAULT_TOL = 1e-12
KERNEL_RHS_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    """Square CSR matrix with int64 indexing.

    Attributes: dimension ``n``, row offsets ``indptr`` (n+1), sorted column
    indices per row, and float64 ``data``.  ``symmetric`` records intent and
    is checked by :meth:`symmetry_defect` in tests.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        indptr = np.ascontiguousarray(self.indptr, dtype=np.int64)
        indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if indptr.shape != (self.n + 1,):
            raise InvalidArgumentError("indptr must have length n+1")
        if np.any(np.diff(indptr) < 0):
            raise InvalidArgumentError("indptr must be nondecreasing")
        if indices.size and (indices.min() < 0 or indices.max() >= self.n):
            raise InvalidArgumentError("column index out of range")
        # strictly increasing columns within each row
        if indices.size > 1:
            not_row_start = np.ones(indices.size, dtype=bool)
            starts = indptr[1:-1]
            not_row_start[starts[starts < indices.size]] = False
            if np.any(np.diff(indices)[not_row_start[1:]] <= 0):
                raise InvalidArgumentError("columns must be strictly increasing per row")
        for arr, name in ((indptr, "indptr"), (indices, "indices"), (data, "data")):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_coo(cls, n, rows, cols, vals, symmetric=False):
        """Build from COO triplets, summing duplicates; deterministic order."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        keys = rows * n + cols
        uniq, inverse = np.unique(keys, return_inverse=True)
        summed = np.zeros(len(uniq))
        np.add.at(summed, inverse, vals)
        urows = uniq // n
        ucols = uniq % n
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, urows + 1, 1)
        indptr = np.cumsum(indptr)
        return cls(n, indptr, ucols, summed, symmetric=symmetric)

    @classmethod
    def from_scipy(cls, mat, symmetric=False):
        mat = sp.csr_matrix(mat)
        mat.sort_indices()
        return cls(mat.shape[0], mat.indptr, mat.indices, mat.data, symmetric=symmetric)

    @classmethod
    def identity(cls, n):
        return cls(n, np.arange(n + 1, dtype=np.int64), np.arange(n, dtype=np.int64),
                   np.ones(n), symmetric=True)

    def to_scipy(self):
        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=(self.n, self.n))

    def to_dense(self):
        return self.to_scipy().toarray()

    def diagonal(self):
        return self.to_scipy().diagonal()

    def apply(self, x):
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise DimensionMismatchError(f"vector of length {x.shape} against matrix of dimension {self.n}")
        return _kernels.csr_matvec(self.indptr, self.indices, self.data, x)

    def symmetry_defect(self):
        a = self.to_scipy()
        d = a - a.T
        scale = np.max(np.abs(self.data)) if self.data.size else 0.0
        return float(np.max(np.abs(d.data)) if d.nnz else 0.0), scale


def apply(a: CsrMatrix, x):
    """Sparse matrix-vector product."""
    return a.apply(x)


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """Dirichlet-type elimination map plus an optional mean-constraint vector.

    The elimination map sends each eliminated index to a weighted combination
    of retained indices (here always a single (index, weight) pair realizing
    a nodal trace identity).  ``mean_vector`` is a dense functional c with
    the solution required to satisfy c.x = 0; ``kernel`` is the known kernel
    direction of the operator on the unconstrained space.
    """

    n: int
    elim_index: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    elim_target: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    elim_weight: np.ndarray = field(default_factory=lambda: np.empty(0))
    mean_vector: np.ndarray | None = None
    kernel: np.ndarray | None = None

    def __post_init__(self):
        elim = np.asarray(self.elim_index, dtype=np.int64)
        targ = np.asarray(self.elim_target, dtype=np.int64)
        if set(elim.tolist()) & set(targ.tolist()):
            raise InvalidArgumentError("eliminated and retained index sets overlap")
        if self.mean_vector is not None and not np.any(self.mean_vector):
            raise InvalidArgumentError("mean-constraint vector must be nonzero")

    @property
    def has_elimination(self):
        return self.elim_index.size > 0

    def retained(self):
        mask = np.ones(self.n, dtype=bool)
        mask[self.elim_index] = False
        return np.flatnonzero(mask)

    def reduction_matrix(self):
        """R with x_full = R x_red (retained identity + elimination rows)."""
        retained = self.retained()
        n_red = retained.size
        red_of_full = np.full(self.n, -1, dtype=np.int64)
        red_of_full[retained] = np.arange(n_red)
        rows = list(retained)
        cols = list(range(n_red))
        vals = [1.0] * n_red
        for e, t, w in zip(self.elim_index, self.elim_target, self.elim_weight):
            rows.append(int(e))
            cols.append(int(red_of_full[t]))
            vals.append(float(w))
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n, n_red))


@dataclass
class ConstrainedSolution:
    x: np.ndarray
    iterations: int
    residual: float
    method: str


class _Reduced:
    """Constraint-reduced view of (A, b): matrices, functionals, expansion."""

    def __init__(self, a: CsrMatrix, cs: ConstraintSet | None):
        if cs is None:
            cs = ConstraintSet(n=a.n)
        if cs.n != a.n:
            raise DimensionMismatchError(f"constraints built for n={cs.n}, matrix has n={a.n}")
        self.cs = cs
        if cs.has_elimination:
            self.r = cs.reduction_matrix()
            a_red = (self.r.T @ a.to_scipy() @ self.r).tocsr()
            a_red.sort_indices()
        else:
            self.r = None
            a_red = a.to_scipy()
        self.a_red = a_red
        self.n_red = a_red.shape[0]
        self.c_red = None if cs.mean_vector is None else self._pullback(cs.mean_vector)
        self.k_red = None if cs.kernel is None else self._restrict(cs.kernel)

    def _pullback(self, vec):
        # functionals transform by R^T
        return vec.copy() if self.r is None else self.r.T @ vec

    def _restrict(self, vec):
        # the kernel direction restricts to retained entries (R k_red = k)
        return vec.copy() if self.r is None else vec[self.cs.retained()]

    def reduce_rhs(self, b):
        return b.copy() if self.r is None else self.r.T @ b

    def expand(self, x_red):
        return x_red if self.r is None else self.r @ x_red

    def check_kernel(self):
        if self.k_red is None:
            return
        if self.c_red is None:
            raise SingularSystemError("operator has a kernel but no mean constraint was given")
        ck = float(self.c_red @ self.k_red)
        scale = np.linalg.norm(self.c_red) * np.linalg.norm(self.k_red)
        if abs(ck) <= 1e-12 * scale:
            raise SingularSystemError(
                "kernel direction is annihilated by the constraint functional "
                f"(c.k = {ck:.3e})")


def solve_constrained(a: CsrMatrix, b, cs: ConstraintSet | None, tol=DEFAULT_TOL,
                      maxiter=None, method="auto", kernel_rhs_tol=KERNEL_RHS_TOL):
    """Solve A x = b subject to the constraint set.

    Returns a ConstrainedSolution whose ``x`` satisfies the elimination map
    exactly, c.x = 0, and a reduced relative residual at most ``tol`` (CG
    path) or machine-level (dense path).
    """
    b = np.ascontiguousarray(b, dtype=np.float64)
    if b.shape != (a.n,):
        raise DimensionMismatchError(f"rhs length {b.shape} against matrix dimension {a.n}")
    red = _Reduced(a, cs)
    red.check_kernel()
    b_red = red.reduce_rhs(b)
    bnorm = np.linalg.norm(b_red)
    if red.k_red is not None and bnorm > 0:
        kb = float(red.k_red @ b_red)
        rel = abs(kb) / (np.linalg.norm(red.k_red) * bnorm)
        if rel > kernel_rhs_tol:
            raise IncompatibleRhsError(
                f"rhs has kernel component {rel:.3e} (tolerance {kernel_rhs_tol:.1e}); "
                "project the sources first")
    if method not in ("auto", "cg", "dense"):
        raise InvalidArgumentError(f"unknown method {method!r}")
    if red.c_red is not None and red.k_red is None:
        # the CG projection needs the kernel direction; without it the mean
        # constraint is only enforceable through the bordered system
        if method == "cg":
            raise InvalidArgumentError(
                "mean constraint without a kernel direction requires the dense path")
        method = "dense"

    if method in ("auto", "cg"):
        if maxiter is None:
            maxiter = 20 * red.n_red
        diag = red.a_red.diagonal().copy()
        diag[diag <= 0] = 1.0
        cvec = red.c_red if red.c_red is not None else np.empty(0)
        kdir = red.k_red if red.k_red is not None else np.empty(0)
        x_red, iters, relres = _kernels.pcg(
            red.a_red.indptr.astype(np.int64), red.a_red.indices.astype(np.int64),
            np.ascontiguousarray(red.a_red.data, dtype=np.float64),
            1.0 / diag, b_red,
            np.ascontiguousarray(cvec, dtype=np.float64),
            np.ascontiguousarray(kdir, dtype=np.float64),
            float(tol), int(maxiter))
        if relres <= tol:
            x_red = _project_mean(x_red, red)
            return ConstrainedSolution(red.expand(x_red), int(iters), float(relres), "cg")
        if method == "cg":
            raise NoConvergenceError(
                f"CG stalled at relative residual {relres:.3e} after {iters} iterations")
        log.info("CG stalled at %.3e after %d iterations; dense fallback", relres, iters)

    if red.n_red > DENSE_FALLBACK_MAX_DIM:
        raise NoConvergenceError(
            f"CG failed and reduced dimension {red.n_red} exceeds the dense fallback limit")
    x_red = _solve_bordered_dense(red, b_red)
    res = np.linalg.norm(red.a_red @ x_red - b_red) / (bnorm if bnorm > 0 else 1.0)
    return ConstrainedSolution(red.expand(x_red), 0, float(res), "dense-lu")


def _project_mean(x_red, red):
    # final oblique projection onto {c.x = 0} along the kernel direction
    if red.c_red is None or red.k_red is None:
        return x_red
    ck = float(red.c_red @ red.k_red)
    return x_red - (float(red.c_red @ x_red) / ck) * red.k_red


def _solve_bordered_dense(red, b_red):
    ad = red.a_red.toarray()
    if red.c_red is None:
        try:
            return np.linalg.solve(ad, b_red)
        except np.linalg.LinAlgError:
            raise SingularSystemError("dense solve failed: singular reduced system") from None
    n = red.n_red
    big = np.zeros((n + 1, n + 1))
    big[:n, :n] = ad
    big[:n, n] = red.c_red
    big[n, :n] = red.c_red
    rhs = np.concatenate([b_red, [0.0]])
    try:
        sol = np.linalg.solve(big, rhs)
    except np.linalg.LinAlgError:
        raise SingularSystemError("bordered system is singular") from None
    return sol[:n]


class FactorizedConstrainedSolver:
    """Bordered-LU factorization reused across many right-hand sides."""

    def __init__(self, a: CsrMatrix, cs: ConstraintSet | None):
        self.red = _Reduced(a, cs)
        self.red.check_kernel()
        n = self.red.n_red
        if self.red.c_red is None:
            big = self.red.a_red.toarray()
        else:
            big = np.zeros((n + 1, n + 1))
            big[:n, :n] = self.red.a_red.toarray()
            big[:n, n] = self.red.c_red
            big[n, :n] = self.red.c_red
        self.lu, self.piv = sla.lu_factor(big)
        self.n = n

    def solve(self, b_full):
        b_red = self.red.reduce_rhs(np.asarray(b_full, dtype=np.float64))
        if self.red.c_red is None:
            x_red = sla.lu_solve((self.lu, self.piv), b_red)
        else:
            rhs = np.concatenate([b_red, [0.0]])
            x_red = sla.lu_solve((self.lu, self.piv), rhs)[: self.n]
        return self.red.expand(x_red)

    def solve_many(self, b_cols):
        """Solve for every column of a full-space right-hand-side matrix."""
        b_cols = np.asarray(b_cols, dtype=np.float64)
        b_red = b_cols if self.red.r is None else self.red.r.T @ b_cols
        if self.red.c_red is None:
            x_red = sla.lu_solve((self.lu, self.piv), b_red)
        else:
            rhs = np.vstack([b_red, np.zeros((1, b_red.shape[1]))])
            x_red = sla.lu_solve((self.lu, self.piv), rhs)[: self.n, :]
        return x_red if self.red.r is None else self.red.r @ x_red


def eig_dense_generalized(a, m, k):
    """Smallest k eigenpairs of A v = lambda M v (A symmetric, M SPD).

    Cholesky-reduces M = L L^T to a standard symmetric problem; returns
    eigenvalues ascending and M-orthonormal eigenvectors as columns.
    """
    a = np.asarray(a, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n) or m.shape != (n, n):
        raise DimensionMismatchError("A and M must be square and of equal size")
    if not 1 <= k <= n:
        raise InvalidArgumentError(f"k must be in [1, {n}], got {k}")
    try:
        ell = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError("M is not positive definite (Cholesky failed)") from None
    y = sla.solve_triangular(ell, a, lower=True)
    c = sla.solve_triangular(ell, y.T, lower=True)
    c = 0.5 * (c + c.T)
    w, vw = sla.eigh(c, subset_by_index=[0, k - 1])
    v = sla.solve_triangular(ell.T, vw, lower=False)
    return w, v
