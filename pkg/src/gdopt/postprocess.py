"""Post-processed controls, scheme-dependent interpolants and error reports.

For piecewise-linear reconstructions the reference interpolant of a smooth
field is the field itself; for piecewise-constant reconstructions it is the
field frozen at the cell centroids (HMM) or at the face midpoints on the
diamonds (mass-lumped nonconforming P1).  Post-processing clamps the rescaled
adjoint pointwise, which restores second-order accuracy of the control.
"""

from dataclasses import dataclass, field

import numpy as np

from .control import clamp, find_cstar


def eoc(errors, hs):
    """Experimental orders of convergence between consecutive rows.

    ``orders[i] = log(e_i / e_{i+1}) / log(h_i / h_{i+1})``; a row pair with
    a vanishing error yields ``nan``.
    """
    errors = np.asarray(errors, dtype=float)
    hs = np.asarray(hs, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return list(np.log(errors[:-1] / errors[1:]) / np.log(hs[:-1] / hs[1:]))


def fine_quadrature(n=512, domain=(0.0, 0.0, 1.0, 1.0)):
    """Midpoint-rule quadrature on an n-by-n grid of the rectangle.

    Used for the one-off computations on the exact fields: the control
    translation constant and the norm denominators.
    """
    x0, y0, x1, y1 = domain
    hx = (x1 - x0) / n
    hy = (y1 - y0) / n
    xs = x0 + hx * (np.arange(n) + 0.5)
    ys = y0 + hy * (np.arange(n) + 0.5)
    xx, yy = np.meshgrid(xs, ys, indexing="xy")
    points = np.column_stack([xx.ravel(), yy.ravel()])
    weights = np.full(points.shape[0], hx * hy)
    return points, weights


def interpolant_w_mesh(w, gd):
    """Scheme-dependent reference interpolant sampled on the quadrature layout.

    Identity sampling for the finite element kinds; cell-centroid freezing
    for HMM; face-midpoint freezing on diamonds for the mass-lumped scheme.
    """
    if gd.kind in ("p1", "ncp1"):
        return np.asarray(w(gd.qpoints), dtype=float)
    if gd.kind == "hmm":
        cell_vals = np.asarray(w(gd.mesh.cell_centroids), dtype=float)
        return cell_vals[gd.qcell]
    if gd.kind == "mlncp1":
        face_vals = np.asarray(w(gd.mesh.face_midpoints), dtype=float)
        return face_vals[gd.qface]
    raise ValueError("unknown discretisation kind %r" % gd.kind)


def postprocessed_controls(p_exact_shifted, p_proper, problem):
    """Clamped rescaled adjoints: exact and discrete post-processed controls.

    Parameters
    ----------
    p_exact_shifted : callable
        The exact adjoint, already translated so its mean matches the mean
        of the reconstructed discrete adjoint.
    p_proper : array
        Discrete adjoint unknowns in the proper translation.

    Returns
    -------
    (u_tilde, u_tilde_h) sampled at the quadrature points.
    """
    gd = problem.gd
    a, b, alpha = problem.a, problem.b, problem.alpha
    u_tilde = clamp(-interpolant_w_mesh(p_exact_shifted, gd) / alpha, a, b)
    u_tilde_h = clamp(-gd.reconstruct(p_proper) / alpha, a, b)
    return u_tilde, u_tilde_h


@dataclass
class ExactSolution:
    """Exact optimum of a manufactured control problem.

    ``control_shift`` is the constant making the clamped rescaled adjoint
    have zero mean; the exact control is
    ``clamp(-p / alpha + control_shift)``.
    """

    state: object
    grad_state: object
    adjoint: object
    grad_adjoint: object
    a: float
    b: float
    alpha: float = 1.0
    control_shift: float = 0.0
    fine_n: int = 512
    domain: tuple = (0.0, 0.0, 1.0, 1.0)

    def __post_init__(self):
        pts, wts = fine_quadrature(self.fine_n, self.domain)
        self._fine = (pts, wts)
        omega = wts.sum()
        self.mean_adjoint = float(wts @ self.adjoint(pts)) / omega
        self.norm_state = float(np.sqrt(wts @ self.state(pts) ** 2))
        self.norm_grad_state = float(
            np.sqrt(wts @ (self.grad_state(pts) ** 2).sum(axis=1))
        )
        self.norm_adjoint = float(np.sqrt(wts @ self.adjoint(pts) ** 2))
        self.norm_grad_adjoint = float(
            np.sqrt(wts @ (self.grad_adjoint(pts) ** 2).sum(axis=1))
        )
        self.norm_control = float(np.sqrt(wts @ self.control(pts) ** 2))

    @classmethod
    def with_zero_mean_control(cls, state, grad_state, adjoint, grad_adjoint,
                               a, b, alpha=1.0, fine_n=512,
                               domain=(0.0, 0.0, 1.0, 1.0)):
        """Determine the control shift by bisection on a fine quadrature."""
        pts, wts = fine_quadrature(fine_n, domain)
        phi = -np.asarray(adjoint(pts), dtype=float) / alpha
        shift = find_cstar(phi, wts, a, b)
        return cls(state, grad_state, adjoint, grad_adjoint, a, b,
                   alpha=alpha, control_shift=shift, fine_n=fine_n,
                   domain=domain)

    def control(self, points):
        return clamp(
            -np.asarray(self.adjoint(points)) / self.alpha + self.control_shift,
            self.a, self.b,
        )


@dataclass
class ReportRow:
    """One mesh of a convergence study."""

    h: float
    err_y: float
    err_grad_y: float
    err_p: float
    err_grad_p: float
    err_u: float
    err_post_u: float
    u_avg: float
    f_avg: float
    y_avg: float
    iterations: int
    cstar: float
    failed: bool = False
    message: str = ""


@dataclass
class ConvergenceReport:
    """Relative errors, their observed orders and the run diagnostics."""

    rows: list = field(default_factory=list)
    orders: dict = field(default_factory=dict)

    ERROR_FIELDS = ("err_y", "err_grad_y", "err_p", "err_grad_p",
                    "err_u", "err_post_u")

    def compute_orders(self):
        ok = [r for r in self.rows if not r.failed]
        hs = [r.h for r in ok]
        for name in self.ERROR_FIELDS:
            self.orders[name] = eoc([getattr(r, name) for r in ok], hs)
        return self.orders


def centroid_average(mesh, func):
    """Mean value by the one-point centroid rule (the table diagnostic)."""
    vals = np.asarray(func(mesh.cell_centroids), dtype=float)
    return float(mesh.cell_measures @ vals) / mesh.domain_measure


def _rel(num, den):
    return num / den if den > 0.0 else num


def error_row(solution, exact, problem, nominal_h, source):
    """All six relative errors plus diagnostics for one converged run."""
    gd = problem.gd
    w = gd.qweights

    # exact adjoint translated to the mean of the discrete one
    shift = gd.average(solution.p) - exact.mean_adjoint
    p_shifted = lambda x: np.asarray(exact.adjoint(x)) + shift

    y_m = interpolant_w_mesh(exact.state, gd)
    err_y = np.sqrt(w @ (gd.reconstruct(solution.y) - y_m) ** 2)
    gy = gd.reconstruct_gradient(solution.y) - exact.grad_state(gd.qpoints)
    err_gy = np.sqrt(w @ (gy ** 2).sum(axis=1))

    p_m = interpolant_w_mesh(p_shifted, gd)
    err_p = np.sqrt(w @ (gd.reconstruct(solution.p) - p_m) ** 2)
    gp = gd.reconstruct_gradient(solution.p) - exact.grad_adjoint(gd.qpoints)
    err_gp = np.sqrt(w @ (gp ** 2).sum(axis=1))

    u_q = solution.u[gd.qcell]
    err_u = np.sqrt(w @ (u_q - exact.control(gd.qpoints)) ** 2)

    u_tilde, u_tilde_h = postprocessed_controls(p_shifted, solution.p, problem)
    err_pu = np.sqrt(w @ (u_tilde_h - u_tilde) ** 2)

    return ReportRow(
        h=nominal_h,
        err_y=_rel(err_y, exact.norm_state),
        err_grad_y=_rel(err_gy, exact.norm_grad_state),
        err_p=_rel(err_p, exact.norm_adjoint),
        err_grad_p=_rel(err_gp, exact.norm_grad_adjoint),
        err_u=_rel(err_u, exact.norm_control),
        err_post_u=_rel(err_pu, exact.norm_control),
        u_avg=solution.control_average,
        f_avg=centroid_average(gd.mesh, source),
        y_avg=solution.state_average,
        iterations=solution.iterations,
        cstar=exact.control_shift,
    )


def error_report(runs, exact):
    """Assemble the convergence report for a refinement family.

    Parameters
    ----------
    runs : list of (nominal_h, KKTSolution or None, ControlProblem, source, message)
        Failed rows pass ``None`` and a message.
    exact : ExactSolution
    """
    report = ConvergenceReport()
    for nominal_h, solution, problem, source, message in runs:
        if solution is None:
            report.rows.append(ReportRow(
                h=nominal_h, err_y=np.nan, err_grad_y=np.nan, err_p=np.nan,
                err_grad_p=np.nan, err_u=np.nan, err_post_u=np.nan,
                u_avg=np.nan, f_avg=centroid_average(problem.gd.mesh, source),
                y_avg=np.nan, iterations=-1, cstar=exact.control_shift,
                failed=True, message=message,
            ))
        else:
            report.rows.append(error_row(solution, exact, problem, nominal_h,
                                         source))
    report.compute_orders()
    return report
