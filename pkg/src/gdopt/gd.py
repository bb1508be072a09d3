"""Gradient discretisations: discrete space, reconstruction operators, norms.

A gradient discretisation bundles a finite-dimensional unknown space with two
sparse reconstruction operators sampled on a quadrature layout: ``Pi`` maps a
vector of unknowns to function values at the quadrature points and
``Gx``/``Gy`` map it to the two components of a reconstructed gradient.  The
special vector ``one`` reconstructs the constant 1 with zero gradient and
spans the nullspace of the pure Neumann problem.

The layout uses the 3-point edge-midpoint rule on triangles (exact for
quadratics); polygonal cells are fanned into triangles from the cell point
and the rule applied per sub-triangle.
"""

import numpy as np
import scipy.sparse as sp

from .linalg import solve_spd, solve_spd_operator, SparseMatrix


class GradientDiscretisation:
    """The triple (unknown space, function and gradient reconstructions).

    Parameters
    ----------
    mesh : Mesh
    kind : str
        One of ``"p1"``, ``"ncp1"``, ``"mlncp1"``, ``"hmm"``; drives the
        choice of post-processing interpolant.
    ndof : int
    qpoints, qweights, qcell : quadrature layout
        Points (nq, 2), positive weights (nq,), owning cell per point.
    Pi, Gx, Gy : (nq, ndof) sparse matrices
        Function values and gradient components at the quadrature points.
    qface : (nq,) int array or None
        Owning face for layouts organised by half-diamonds.
    """

    def __init__(self, mesh, kind, ndof, qpoints, qweights, qcell, Pi, Gx, Gy,
                 qface=None):
        self.mesh = mesh
        self.kind = kind
        self.ndof = ndof
        self.qpoints = np.asarray(qpoints, dtype=float)
        self.qweights = np.asarray(qweights, dtype=float)
        self.qcell = np.asarray(qcell, dtype=int)
        self.qface = None if qface is None else np.asarray(qface, dtype=int)
        self.Pi = sp.csr_matrix(Pi)
        self.Gx = sp.csr_matrix(Gx)
        self.Gy = sp.csr_matrix(Gy)
        self.one = np.ones(ndof)
        self.domain_measure = mesh.domain_measure
        self._cache = {}

    # -- reconstructions ---------------------------------------------------

    def _check_size(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.ndof,):
            raise ValueError(
                "vector of length %s does not match %d unknowns"
                % (v.shape, self.ndof)
            )
        return v

    def reconstruct(self, v):
        """Values of the reconstructed function at the quadrature points."""
        return self.Pi @ self._check_size(v)

    def reconstruct_gradient(self, v):
        """Reconstructed gradient at the quadrature points, shape (nq, 2)."""
        v = self._check_size(v)
        return np.column_stack([self.Gx @ v, self.Gy @ v])

    def average(self, v):
        """Mean value of the reconstructed function over the domain."""
        return (self.qweights @ self.reconstruct(v)) / self.domain_measure

    def discrete_norm(self, v):
        """Norm combining the gradient seminorm with the mean value."""
        v = self._check_size(v)
        gx = self.Gx @ v
        gy = self.Gy @ v
        grad2 = self.qweights @ (gx ** 2 + gy ** 2)
        return np.sqrt(grad2 + self.average(v) ** 2)

    def norm_l2(self, values):
        """Quadrature L2 norm of a field sampled at the quadrature points."""
        return np.sqrt(self.qweights @ np.asarray(values) ** 2)

    # -- assembled forms (cached) -------------------------------------------

    @property
    def mass_matrix(self):
        """Gram matrix of the function reconstruction."""
        if "mass" not in self._cache:
            W = sp.diags(self.qweights)
            M = (self.Pi.T @ W @ self.Pi).tocsr()
            self._cache["mass"] = SparseMatrix((M + M.T) * 0.5, symmetric=True)
        return self._cache["mass"]

    @property
    def grad_gram(self):
        """Gram matrix of the gradient reconstruction."""
        if "grad_gram" not in self._cache:
            W = sp.diags(self.qweights)
            S = (self.Gx.T @ W @ self.Gx + self.Gy.T @ W @ self.Gy).tocsr()
            self._cache["grad_gram"] = SparseMatrix((S + S.T) * 0.5, symmetric=True)
        return self._cache["grad_gram"]

    @property
    def avg_vector(self):
        """Vector m with m @ v = average of the reconstruction of v."""
        if "avg" not in self._cache:
            self._cache["avg"] = (self.Pi.T @ self.qweights) / self.domain_measure
        return self._cache["avg"]

    @property
    def cell_average_matrix(self):
        """Sparse (ncells, ndof) map to cellwise averages of reconstructions."""
        if "cellavg" not in self._cache:
            nq = self.qpoints.shape[0]
            agg = sp.csr_matrix(
                (self.qweights, (self.qcell, np.arange(nq))),
                shape=(self.mesh.num_cells, nq),
            )
            B = sp.diags(1.0 / self.mesh.cell_measures) @ agg @ self.Pi
            self._cache["cellavg"] = sp.csr_matrix(B)
        return self._cache["cellavg"]

    # -- validation ----------------------------------------------------------

    def check(self, tol=1e-12):
        """Verify the defining identities; raises AssertionError on failure."""
        assert np.all(self.qweights > 0.0), "quadrature weights must be positive"
        per_cell = np.zeros(self.mesh.num_cells)
        np.add.at(per_cell, self.qcell, self.qweights)
        assert np.allclose(per_cell, self.mesh.cell_measures, rtol=1e-12, atol=0.0), \
            "per-cell quadrature weights must sum to the cell measure"
        ones = self.reconstruct(self.one)
        assert np.max(np.abs(ones - 1.0)) <= tol, "reconstruction of one != 1"
        g = self.reconstruct_gradient(self.one)
        assert np.max(np.abs(g)) <= tol, "gradient of one != 0"
        return True


def _norm_gram_matvec(gd):
    """Matvec and diagonal of the Gram matrix of the discrete norm.

    The matrix is the gradient Gram plus the rank-one term of the squared
    mean value; the rank-one part is never materialised.
    """
    S = gd.grad_gram
    m = gd.avg_vector

    def matvec(x):
        return S.matvec(x) + m * (m @ x)

    diag = S.diagonal() + m ** 2
    return matvec, diag


def coercivity_constant(gd, max_iter=200, tol=1e-10, seed=0):
    """Largest ratio of the L2 norm of reconstructions to the discrete norm.

    Computed by power iteration on the generalized eigenproblem between the
    two Gram matrices; each step solves with the norm Gram matrix.
    """
    M = gd.mass_matrix
    matvec, diag = _norm_gram_matvec(gd)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(gd.ndof)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iter):
        y = M.matvec(x)
        x = solve_spd_operator(matvec, diag, y, rel_tol=1e-12)
        nx = np.linalg.norm(x)
        if nx == 0.0:
            raise ValueError("mass form vanished during power iteration")
        x /= nx
        num = x @ M.matvec(x)
        den = x @ matvec(x)
        lam_new = num / den
        if abs(lam_new - lam) <= tol * max(lam_new, 1e-300):
            lam = lam_new
            break
        lam = lam_new
    return float(np.sqrt(lam))


def interpolation_error(gd, phi, grad_phi):
    """Best-approximation defect of a smooth function in the discretisation.

    Minimises the least-squares functional combining the function and
    gradient misfits and reports the sum of the two norms at the minimiser
    (an upper bound of the true min-of-sums within a factor sqrt(2)).

    Parameters
    ----------
    phi : callable (n, 2) -> (n,)
    grad_phi : callable (n, 2) -> (n, 2)
    """
    W = sp.diags(gd.qweights)
    phi_q = phi(gd.qpoints)
    g_q = grad_phi(gd.qpoints)
    A = SparseMatrix(
        (gd.mass_matrix.csr + gd.grad_gram.csr).tocsr(), symmetric=True
    )
    rhs = gd.Pi.T @ (gd.qweights * phi_q)
    rhs += gd.Gx.T @ (gd.qweights * g_q[:, 0])
    rhs += gd.Gy.T @ (gd.qweights * g_q[:, 1])
    w = solve_spd(A, rhs, rel_tol=1e-12)
    err_pi = gd.norm_l2(gd.reconstruct(w) - phi_q)
    gw = gd.reconstruct_gradient(w)
    err_grad = np.sqrt(gd.qweights @ ((gw - g_q) ** 2).sum(axis=1))
    return float(err_pi + err_grad)


def limit_conformity_defect(gd, flux, flux_div):
    """Dual norm of the discrete integration-by-parts residual of a flux.

    Parameters
    ----------
    flux : callable (n, 2) -> (n, 2)
        A vector field with vanishing normal trace on the boundary.
    flux_div : callable (n, 2) -> (n,)
        Its divergence.
    """
    div_q = flux_div(gd.qpoints)
    f_q = flux(gd.qpoints)
    L = gd.Pi.T @ (gd.qweights * div_q)
    L += gd.Gx.T @ (gd.qweights * f_q[:, 0])
    L += gd.Gy.T @ (gd.qweights * f_q[:, 1])
    matvec, diag = _norm_gram_matvec(gd)
    x = solve_spd_operator(matvec, diag, L, rel_tol=1e-12)
    return float(np.sqrt(max(L @ x, 0.0)))


def quality_measures(gd, phi, grad_phi, flux, flux_div):
    """Coercivity constant, interpolation error and limit-conformity defect.

    ``flux`` is the diffusive flux of ``phi`` (for identity diffusion, its
    gradient); it must have zero normal trace on the boundary for the defect
    to be meaningful.
    """
    cd = coercivity_constant(gd)
    sd = interpolation_error(gd, phi, grad_phi)
    wd = limit_conformity_defect(gd, flux, flux_div)
    return cd, sd, wd
