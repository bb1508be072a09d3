"""Minimal sparse linear algebra: CSR matrices and a Jacobi-preconditioned CG.

Storage is delegated to ``scipy.sparse``; the solver is written out so its
failure mode (last residual norm) and tolerances are explicit.
"""

import numpy as np
import scipy.sparse as sp


class LinearSolverError(Exception):
    """Conjugate gradients did not reach the requested tolerance.

    Attributes
    ----------
    residual_norm : float
        Euclidean norm of the last residual.
    iterations : int
        Number of iterations performed.
    """

    def __init__(self, message, residual_norm, iterations):
        super().__init__(message)
        self.residual_norm = residual_norm
        self.iterations = iterations


class SparseMatrix:
    """Square or rectangular sparse matrix in row-compressed storage."""

    def __init__(self, csr, symmetric=False):
        self.csr = sp.csr_matrix(csr)
        self.csr.sum_duplicates()
        self.csr.sort_indices()
        self.symmetric = symmetric
        if symmetric and __debug__:
            diff = abs(self.csr - self.csr.T)
            scale = abs(self.csr).max() if self.csr.nnz else 0.0
            if self.csr.nnz and diff.max() > 1e-12 * scale:
                raise ValueError("matrix flagged symmetric is not")

    @property
    def shape(self):
        return self.csr.shape

    def matvec(self, x):
        return self.csr @ np.asarray(x, dtype=float)

    def diagonal(self):
        return self.csr.diagonal()

    def toarray(self):
        return self.csr.toarray()

    def __matmul__(self, x):
        return self.matvec(x)


def assemble(triplets, shape, symmetric=False):
    """Assemble a sparse matrix from (row, col, value) triplets.

    Duplicate entries are summed.  Entries are stored in deterministic
    (row-major, sorted column) order.

    Parameters
    ----------
    triplets : iterable of (int, int, float) or tuple of three arrays
    shape : (nrows, ncols)

    Raises
    ------
    ValueError
        If any index is out of range.
    """
    if isinstance(triplets, tuple) and len(triplets) == 3:
        rows, cols, vals = triplets
    else:
        triplets = list(triplets)
        if triplets:
            rows, cols, vals = zip(*triplets)
        else:
            rows, cols, vals = (), (), ()
    rows = np.asarray(rows, dtype=int)
    cols = np.asarray(cols, dtype=int)
    vals = np.asarray(vals, dtype=float)
    if rows.size:
        if rows.min() < 0 or rows.max() >= shape[0]:
            raise ValueError("row index out of range")
        if cols.min() < 0 or cols.max() >= shape[1]:
            raise ValueError("column index out of range")
    coo = sp.coo_matrix((vals, (rows, cols)), shape=shape)
    return SparseMatrix(coo.tocsr(), symmetric=symmetric)


def _pcg(matvec, diag, b, rel_tol, max_iter):
    """Core preconditioned conjugate gradient loop with Jacobi scaling."""
    b = np.asarray(b, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    inv_diag = np.where(np.abs(diag) > 0.0, 1.0 / np.where(diag == 0.0, 1.0, diag), 1.0)

    x = np.zeros_like(b)
    r = b.copy()
    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    rnorm = bnorm
    for it in range(1, max_iter + 1):
        Ap = matvec(p)
        pAp = p @ Ap
        if pAp <= 0.0:
            raise LinearSolverError(
                "breakdown: operator is not positive definite", rnorm, it
            )
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        rnorm = np.linalg.norm(r)
        if rnorm <= rel_tol * bnorm:
            return x
        z = inv_diag * r
        rz_new = r @ z
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p
    raise LinearSolverError(
        "no convergence in %d iterations (residual %.3e, target %.3e)"
        % (max_iter, rnorm, rel_tol * bnorm),
        rnorm,
        max_iter,
    )


def solve_spd(A, b, rel_tol=1e-12, max_iter=None):
    """Solve ``A x = b`` for symmetric positive definite ``A``.

    Preconditioned conjugate gradients with a diagonal (Jacobi)
    preconditioner.  Returns ``x`` with ``||A x - b|| <= rel_tol ||b||``.
    ``b = 0`` returns the zero vector immediately.

    Raises
    ------
    LinearSolverError
        On non-convergence within ``max_iter`` (default ``20 n``) or on a
        positive-definiteness breakdown; carries the last residual norm.
    """
    n = A.shape[0]
    if max_iter is None:
        max_iter = 20 * n
    return _pcg(A.matvec, A.diagonal(), b, rel_tol, max_iter)


def solve_spd_operator(matvec, diag, b, rel_tol=1e-12, max_iter=None):
    """Same as :func:`solve_spd` for an operator given by its matvec.

    ``diag`` supplies the Jacobi preconditioner.  Used for sparse-plus-rank-one
    operators that are never materialised.
    """
    b = np.asarray(b, dtype=float)
    if max_iter is None:
        max_iter = 20 * b.size
    return _pcg(matvec, np.asarray(diag, dtype=float), b, rel_tol, max_iter)
