"""Distributed optimal control with box-and-zero-mean control constraints.

The control is piecewise constant on the mesh cells.  The coupled optimality
system (state equation, adjoint equation, variational inequality) is solved
by a modified active-set iteration whose adjoint equation carries a lagged
mean-correction term; at convergence the adjoint satisfies the zero-mean
projection condition that makes the control a simple clamped cell average of
the rescaled adjoint.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .neumann import DiffusionField, assemble_stiffness, load_vector


class GammaBracketError(Exception):
    """No sign change found when bracketing the root of the clamp integral."""


class ActiveSetNonConvergence(Exception):
    """The active-set iteration exhausted its iteration budget.

    Attributes
    ----------
    history : list of (float, float)
        Relative max-norm changes of the control and of the reconstructed
        adjoint, one entry per iteration.
    """

    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


def clamp(s, a, b):
    """Cut off to the interval [a, b]; bounds may be infinite."""
    return np.minimum(b, np.maximum(a, s))


def proj_mesh(gd, g):
    """Cellwise mean values of a field: the projection on piecewise constants.

    ``g`` may be a callable on points, an array sampled at the quadrature
    points, or a vector of unknowns (whose reconstruction is projected).
    """
    if callable(g):
        vals = np.asarray(g(gd.qpoints), dtype=float)
    else:
        g = np.asarray(g, dtype=float)
        if g.shape == gd.qweights.shape:
            vals = g
        elif g.shape == (gd.ndof,):
            vals = gd.reconstruct(g)
        else:
            raise ValueError("cannot interpret field of shape %s" % (g.shape,))
    out = np.zeros(gd.mesh.num_cells)
    np.add.at(out, gd.qcell, gd.qweights * vals)
    return out / gd.mesh.cell_measures


def gamma(c, values, weights, a, b):
    """Weighted integral of the clamped shifted field, Gamma(c)."""
    return float(weights @ clamp(np.asarray(values) + c, a, b))


def find_cstar(values, weights, a, b, tol=1e-12, max_bisect=200):
    """Unique root of ``Gamma`` for a field with admissible mean zero.

    Brackets the root starting from ``[a - max(values), b - min(values)]``
    (geometric expansion from +-1 when a bound is infinite), then bisects
    until ``|Gamma(c)| <= tol * |Omega| * max(|a|, |b|, 1)``.

    Raises
    ------
    GammaBracketError
        If no sign change is found after expansion.
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if not (a < 0.0 < b):
        raise ValueError("bounds must satisfy a < 0 < b")
    omega = weights.sum()
    scale = omega * max(abs(a) if np.isfinite(a) else 1.0,
                        abs(b) if np.isfinite(b) else 1.0, 1.0)

    lo = a - values.max() if np.isfinite(a) else -1.0
    hi = b - values.min() if np.isfinite(b) else 1.0
    glo = gamma(lo, values, weights, a, b)
    ghi = gamma(hi, values, weights, a, b)
    for _ in range(200):
        if glo <= 0.0:
            break
        lo = lo * 2.0 if lo < 0.0 else -1.0
        glo = gamma(lo, values, weights, a, b)
    for _ in range(200):
        if ghi >= 0.0:
            break
        hi = hi * 2.0 if hi > 0.0 else 1.0
        ghi = gamma(hi, values, weights, a, b)
    if glo > 0.0 or ghi < 0.0:
        raise GammaBracketError(
            "no sign change on [%.3e, %.3e]: Gamma = [%.3e, %.3e]"
            % (lo, hi, glo, ghi)
        )
    mid = 0.5 * (lo + hi)
    for _ in range(max_bisect):
        mid = 0.5 * (lo + hi)
        gmid = gamma(mid, values, weights, a, b)
        if abs(gmid) <= tol * scale:
            return mid
        if gmid < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16 * max(1.0, abs(mid)):
            break
    return mid


def in_admissible(u, cell_measures, a, b, tol=1e-12):
    """Whether a piecewise-constant control lies in the admissible set."""
    u = np.asarray(u, dtype=float)
    if np.any(u < a - tol) or np.any(u > b + tol):
        return False
    mean = (cell_measures @ u) / cell_measures.sum()
    return abs(mean) <= tol


@dataclass
class ControlProblem:
    """Data of one box-and-zero-mean distributed control problem.

    ``source`` and ``desired_state`` are callables on points; both should
    have zero mean (a warning is issued past ``1e-8`` of their norms).
    Bounds must satisfy ``a < 0 < b`` and may be infinite.
    """

    gd: object
    diffusion: DiffusionField
    source: object
    desired_state: object
    a: float
    b: float
    alpha: float = 1.0
    rho: float = 1e-4
    tol: float = 1e-10
    max_outer: int = 100

    def __post_init__(self):
        if not (self.a < 0.0 < self.b):
            raise ValueError("bounds must satisfy a < 0 < b")
        if self.alpha <= 0.0 or self.rho <= 0.0:
            raise ValueError("alpha and rho must be positive")
        gd = self.gd
        self.f_q = np.asarray(self.source(gd.qpoints), dtype=float)
        self.yd_q = np.asarray(self.desired_state(gd.qpoints), dtype=float)
        for name, vals in (("source", self.f_q), ("desired state", self.yd_q)):
            norm = gd.norm_l2(vals)
            mean = (gd.qweights @ vals) / gd.domain_measure
            if norm > 0.0 and abs(mean) > 1e-8 * norm:
                warnings.warn(
                    "%s mean %.3e exceeds 1e-8 of its norm; averages of the "
                    "computed control will carry this quadrature defect"
                    % (name, mean),
                    stacklevel=2,
                )


@dataclass
class KKTSolution:
    """Converged optimality-system iterate.

    The adjoint is returned in its proper translation: the clamped cell
    averages of the rescaled adjoint have zero mean.
    """

    y: np.ndarray
    p: np.ndarray
    u: np.ndarray
    iterations: int
    active_a: np.ndarray
    active_b: np.ndarray
    inactive: np.ndarray
    cstar_shift: float
    control_average: float = 0.0
    state_average: float = 0.0
    history: list = field(default_factory=list)


def shift_adjoint_proper(p, problem):
    """Translate the adjoint so its clamped projected rescaling has zero mean.

    Returns ``p - alpha * cstar * one`` with ``cstar`` the root of the clamp
    integral of the cellwise averages of ``-p / alpha``.
    """
    gd = problem.gd
    phi = proj_mesh(gd, np.asarray(p) / (-problem.alpha))
    cstar = find_cstar(phi, gd.mesh.cell_measures, problem.a, problem.b)
    return np.asarray(p) - problem.alpha * cstar * gd.one, cstar


def control_from_adjoint(p, problem):
    """Clamped cell averages of the rescaled adjoint.

    For a proper adjoint this reproduces the optimal control.
    """
    gd = problem.gd
    return clamp(proj_mesh(gd, np.asarray(p) / (-problem.alpha)),
                 problem.a, problem.b)


def _assemble_blocks(problem):
    gd = problem.gd
    K = assemble_stiffness(gd, problem.diffusion).csr
    M = gd.mass_matrix.csr
    m = gd.avg_vector
    B = gd.cell_average_matrix
    load_f = load_vector(gd, problem.f_q)
    load_yd = load_vector(gd, problem.yd_q)
    return K, M, m, B, load_f, load_yd


def active_set_solve(problem):
    """Modified active-set iteration for the discrete optimality system.

    Starting from zero control and multiplier, each step fixes the active
    cells from the previous control-plus-multiplier, eliminates the control,
    and solves the coupled state/adjoint system in one monolithic sparse
    solve.  The zero-mean penalties are kept sparse through two auxiliary
    mean unknowns, and the adjoint equation carries the lagged correction
    that steers the iterates towards the proper adjoint translation.

    Stops when the relative max-norm changes of both the control and the
    reconstructed adjoint drop below ``problem.tol``.

    Raises
    ------
    ActiveSetNonConvergence
        After ``problem.max_outer`` iterations; carries the change history.
    """
    gd = problem.gd
    mesh = gd.mesh
    alpha, rho = problem.alpha, problem.rho
    K, M, m, B, load_f, load_yd = _assemble_blocks(problem)
    n = gd.ndof
    cellw = mesh.cell_measures
    omega = gd.domain_measure
    mcol = sp.csr_matrix((rho * m).reshape(n, 1))
    mrow = sp.csr_matrix(m.reshape(1, n))
    minus_one = sp.csr_matrix(np.array([[-1.0]]))

    u = np.zeros(mesh.num_cells)
    mu = np.zeros(mesh.num_cells)
    p = np.zeros(n)
    pi_p = np.zeros(gd.qweights.size)
    history = []

    for it in range(1, problem.max_outer + 1):
        utest = u + mu
        active_a = utest < problem.a
        active_b = utest > problem.b
        inactive = ~(active_a | active_b)

        u_fix = np.zeros(mesh.num_cells)
        u_fix[active_a] = problem.a
        u_fix[active_b] = problem.b

        # lagged mean correction: mean of (adjoint - clamped projection)
        phi_prev = clamp(proj_mesh(gd, pi_p / (-alpha)), problem.a, problem.b)
        c_corr = (m @ p) - (cellw @ phi_prev) / omega

        DI = sp.diags(np.where(inactive, cellw, 0.0))
        G = (B.T @ DI @ B) / alpha
        A = sp.bmat(
            [
                [K, G, mcol, None],
                [-M, K, None, mcol],
                [mrow, None, minus_one, None],
                [None, mrow, None, minus_one],
            ],
            format="csc",
        )
        rhs = np.concatenate(
            [
                load_f + B.T @ (cellw * u_fix),
                -load_yd + rho * c_corr * m,
                [0.0, 0.0],
            ]
        )
        sol = spla.spsolve(A, rhs)
        if not np.all(np.isfinite(sol)):
            raise ActiveSetNonConvergence(
                "monolithic solve produced non-finite values at iteration %d" % it,
                history,
            )
        y, p_new = sol[:n], sol[n:2 * n]

        pi_p_new = gd.Pi @ p_new
        u_new = u_fix.copy()
        bp = B @ p_new
        u_new[inactive] = -bp[inactive] / alpha

        du = np.max(np.abs(u_new - u)) / max(np.max(np.abs(u)), 1e-14)
        dp = np.max(np.abs(pi_p_new - pi_p)) / max(np.max(np.abs(pi_p)), 1e-14)
        history.append((du, dp))

        u, p, pi_p = u_new, p_new, pi_p_new
        mu = -(bp / alpha + u)

        if max(du, dp) <= problem.tol:
            p_proper, cstar = shift_adjoint_proper(p, problem)
            return KKTSolution(
                y=y,
                p=p_proper,
                u=u,
                iterations=it,
                active_a=active_a,
                active_b=active_b,
                inactive=inactive,
                cstar_shift=cstar,
                control_average=float(cellw @ u) / omega,
                state_average=float(m @ y),
                history=history,
            )

    raise ActiveSetNonConvergence(
        "active-set iteration did not converge in %d steps "
        "(last changes: control %.3e, adjoint %.3e)"
        % (problem.max_outer, history[-1][0], history[-1][1]),
        history,
    )


def kkt_residual(sol, problem):
    """Residuals of the converged optimality system.

    Returns
    -------
    state_res, adjoint_res : float
        Max-norm basis residuals of the penalized state and adjoint
        equations (the adjoint in its converged zero-mean-projection form).
    vi_res : float
        Most negative admissible directional derivative of the objective
        over mass-preserving exchanges between cells (0 if none): with
        ``g = cell averages of the adjoint + alpha u``, mass may move from a
        cell above the lower bound to a cell below the upper bound; the
        variational inequality holds iff no such exchange has negative
        derivative ``g(up) - g(down)``.
    """
    gd = problem.gd
    mesh = gd.mesh
    alpha, rho = problem.alpha, problem.rho
    K, M, m, B, load_f, load_yd = _assemble_blocks(problem)
    cellw = mesh.cell_measures
    omega = gd.domain_measure
    y, p, u = sol.y, sol.p, sol.u

    r_state = K @ y + rho * m * (m @ y) - load_f - B.T @ (cellw * u)
    s_clamp = (cellw @ clamp(proj_mesh(gd, p / (-alpha)), problem.a, problem.b)) / omega
    r_adj = K @ p + rho * s_clamp * m - M @ y + load_yd
    state_res = float(np.max(np.abs(r_state)))
    adjoint_res = float(np.max(np.abs(r_adj)))

    g = B @ p + alpha * u
    raisable = u < problem.b
    lowerable = u > problem.a
    if not raisable.any() or not lowerable.any():
        vi_res = 0.0
    else:
        d = g[raisable].min() - g[lowerable].max()
        vi_res = float(min(d, 0.0))
    return state_res, adjoint_res, vi_res
