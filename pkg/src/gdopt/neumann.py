"""Penalized gradient schemes for the pure Neumann diffusion problem.

The weak problem ``-div(A grad psi) = F`` with a no-flux boundary and a
zero-mean state is discretised by replacing functions and gradients with the
reconstructions of a gradient discretisation.  The zero-mean constraint is
enforced by a quadratic penalty ``rho * mean(psi) * mean(test)``, which is
equivalent to the constrained scheme for any ``rho > 0``.
"""

import warnings

import numpy as np
import scipy.sparse as sp

from .linalg import SparseMatrix, solve_spd_operator


class DiffusionField:
    """Symmetric matrix-valued diffusion coefficient with ellipticity bounds.

    Parameters
    ----------
    func : callable (n, 2) -> (n, 2, 2)
        Pointwise symmetric diffusion matrices.
    lower, upper : float
        Caller-supplied uniform ellipticity bounds (trusted).
    """

    def __init__(self, func, lower, upper):
        self.func = func
        self.lower = float(lower)
        self.upper = float(upper)

    @classmethod
    def isotropic(cls, c):
        """Constant scalar diffusion ``c * Id``."""
        c = float(c)

        def func(points):
            n = np.asarray(points).shape[0]
            out = np.zeros((n, 2, 2))
            out[:, 0, 0] = c
            out[:, 1, 1] = c
            return out

        return cls(func, c, c)

    @classmethod
    def constant(cls, matrix):
        """Constant symmetric matrix diffusion."""
        matrix = np.asarray(matrix, dtype=float)
        if matrix.shape != (2, 2) or abs(matrix[0, 1] - matrix[1, 0]) > 1e-14:
            raise ValueError("diffusion matrix must be symmetric 2x2")
        eigs = np.linalg.eigvalsh(matrix)

        def func(points):
            n = np.asarray(points).shape[0]
            return np.broadcast_to(matrix, (n, 2, 2)).copy()

        return cls(func, eigs.min(), eigs.max())

    def evaluate(self, points):
        """Entries (a11, a12, a22) at the given points; checks symmetry."""
        A = np.asarray(self.func(points), dtype=float)
        if np.max(np.abs(A[:, 0, 1] - A[:, 1, 0])) > 1e-12 * max(np.max(np.abs(A)), 1.0):
            raise ValueError("diffusion matrix is not symmetric at a sample point")
        return A[:, 0, 0], A[:, 0, 1], A[:, 1, 1]


class NeumannProblem:
    """Data of one penalized pure Neumann solve.

    Parameters
    ----------
    gd : GradientDiscretisation
    diffusion : DiffusionField
    source : callable or (nq,) array
        Source term, sampled on the quadrature layout at assembly.  Its mean
        should vanish; a warning is issued when it exceeds ``1e-8`` of the
        source norm.
    rho : float
        Penalty weight, any positive value.
    """

    def __init__(self, gd, diffusion, source, rho=1.0):
        if rho <= 0.0:
            raise ValueError("penalty weight must be positive")
        self.gd = gd
        self.diffusion = diffusion
        self.rho = float(rho)
        if callable(source):
            self.source = np.asarray(source(gd.qpoints), dtype=float)
        else:
            self.source = np.asarray(source, dtype=float)
        if self.source.shape != gd.qweights.shape:
            raise ValueError("source must be sampled at the quadrature points")
        norm = gd.norm_l2(self.source)
        mean = (gd.qweights @ self.source) / gd.domain_measure
        if norm > 0.0 and abs(mean) > 1e-8 * norm:
            warnings.warn(
                "source mean %.3e exceeds 1e-8 of its norm %.3e; "
                "the compatible (mean-free) part is what the scheme sees"
                % (mean, norm),
                stacklevel=2,
            )


def assemble_stiffness(gd, diffusion):
    """Stiffness matrix of the diffusion form on the unknown basis."""
    a11, a12, a22 = diffusion.evaluate(gd.qpoints)
    w = gd.qweights
    Gx, Gy = gd.Gx, gd.Gy
    K = Gx.T @ sp.diags(w * a11) @ Gx
    K = K + Gx.T @ sp.diags(w * a12) @ Gy
    K = K + Gy.T @ sp.diags(w * a12) @ Gx
    K = K + Gy.T @ sp.diags(w * a22) @ Gy
    K = K.tocsr()
    return SparseMatrix((K + K.T) * 0.5, symmetric=True)


class PenaltyRankOne:
    """The rank-one penalty form ``rho * m m^T`` kept in factored form.

    ``m`` is the mean-value functional of the reconstruction; materialising
    the outer product would be dense, so only the factors are stored.
    """

    def __init__(self, gd, rho):
        self.m = gd.avg_vector
        self.rho = float(rho)

    @property
    def shape(self):
        return (self.m.size, self.m.size)

    def matvec(self, x):
        return self.rho * self.m * (self.m @ x)

    def diagonal(self):
        return self.rho * self.m ** 2

    def toarray(self):
        return self.rho * np.outer(self.m, self.m)


def assemble_penalty(gd, rho):
    """Penalty form enforcing the zero mean; see :class:`PenaltyRankOne`."""
    return PenaltyRankOne(gd, rho)


def load_vector(gd, values):
    """Load vector of a source sampled at the quadrature points."""
    return gd.Pi.T @ (gd.qweights * np.asarray(values, dtype=float))


def solve_neumann(problem, rel_tol=1e-12, max_iter=None):
    """Solve the penalized gradient scheme of a pure Neumann problem.

    The incompatible (mean) part of the source is projected out before
    assembly, so the returned unknowns reconstruct to a function with
    vanishing mean regardless of ``rho``.  The SPD system is solved by
    preconditioned conjugate gradients at ``rel_tol``.

    Returns the vector of unknowns.
    """
    gd = problem.gd
    K = assemble_stiffness(gd, problem.diffusion)
    pen = assemble_penalty(gd, problem.rho)
    mean = (gd.qweights @ problem.source) / gd.domain_measure
    rhs = load_vector(gd, problem.source - mean)

    def matvec(x):
        return K.matvec(x) + pen.matvec(x)

    diag = K.diagonal() + pen.diagonal()
    return solve_spd_operator(matvec, diag, rhs, rel_tol=rel_tol,
                              max_iter=max_iter)


def shift_to_average(gd, v, target):
    """Translate unknowns so the reconstructed mean hits ``target``.

    The reconstructed gradient is unchanged.
    """
    return np.asarray(v, dtype=float) - (gd.average(v) - target) * gd.one


def error_norms(gd, v, exact, exact_grad):
    """L2 and H1-seminorm distances of a discrete solution to a smooth field.

    Parameters
    ----------
    exact : callable (n, 2) -> (n,)
    exact_grad : callable (n, 2) -> (n, 2)
    """
    vals = gd.reconstruct(v) - exact(gd.qpoints)
    l2 = gd.norm_l2(vals)
    g = gd.reconstruct_gradient(v) - exact_grad(gd.qpoints)
    h1 = np.sqrt(gd.qweights @ (g ** 2).sum(axis=1))
    return float(l2), float(h1)
