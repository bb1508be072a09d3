"""Builders for the four gradient discretisations.

* conforming P1 finite elements (vertex unknowns, continuous piecewise
  linear reconstruction),
* nonconforming P1 / Crouzeix-Raviart (face-midpoint unknowns, broken
  gradient),
* its mass-lumped variant (same broken gradient, piecewise-constant
  reconstruction on face diamonds),
* the hybrid mimetic mixed (HMM) scheme (cell and face unknowns,
  piecewise-constant reconstruction, consistent gradient plus a
  stabilisation that is constant on half-diamonds).

Unknown ordering is deterministic: vertices, faces and cells in mesh index
order; HMM stacks all cell unknowns before all face unknowns.
"""

import numpy as np

from .gd import GradientDiscretisation
from .linalg import assemble
from .mesh import MeshError

SQRT2 = np.sqrt(2.0)  # sqrt(d) with d = 2; this module is 2D only

# interior 3-point rule, exact for quadratics, weights |K|/3.  The interior
# variant (not the edge-midpoint one) is used because edge midpoints are
# superconvergence points of the nonconforming schemes and sampling errors
# there under-reports them.
BARY3 = np.array([
    [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
])


def _require_triangular(mesh, scheme):
    if not mesh.is_triangular:
        raise MeshError("%s requires a triangular mesh" % scheme)


def _p1_cell_gradients(mesh):
    """Barycentric-coordinate gradients per triangle, shape (nc, 3, 2)."""
    tris = mesh.triangles
    p = mesh.vertices[tris]
    area = mesh.cell_measures
    g = np.empty((tris.shape[0], 3, 2))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        g[:, i, 0] = p[:, j, 1] - p[:, k, 1]
        g[:, i, 1] = p[:, k, 0] - p[:, j, 0]
    g /= (2.0 * area)[:, None, None]
    return g


def _triangle_rule(mesh):
    """Degree-2 quadrature per triangle: points (3 nc, 2), weights, cells."""
    tris = mesh.triangles
    p = mesh.vertices[tris]
    qpoints = (BARY3 @ p).reshape(-1, 2)
    qweights = np.repeat(mesh.cell_measures / 3.0, 3)
    qcell = np.repeat(np.arange(mesh.num_cells), 3)
    return qpoints, qweights, qcell


def _half_diamond_rule(mesh):
    """Degree-2 quadrature on the fan of half-diamonds of every cell.

    Each (cell, face) incidence contributes the triangle spanned by the cell
    point and the face; returns points, weights, owning cell and owning face
    per quadrature point.
    """
    xa = mesh.vertices[mesh.face_vertices[mesh.inc_face, 0]]
    xb = mesh.vertices[mesh.face_vertices[mesh.inc_face, 1]]
    xk = mesh.cell_points[mesh.inc_cell]
    sub_area = 0.5 * mesh.face_measures[mesh.inc_face] * mesh.inc_d
    corners = np.stack([xk, xa, xb], axis=1)
    qpoints = np.einsum("ij,njd->nid", BARY3, corners).reshape(-1, 2)
    qweights = np.repeat(sub_area / 3.0, 3)
    qcell = np.repeat(mesh.inc_cell, 3)
    qface = np.repeat(mesh.inc_face, 3)
    return qpoints, qweights, qcell, qface


def build_conforming_p1(mesh):
    """Conforming P1 finite elements: one unknown per vertex."""
    _require_triangular(mesh, "conforming P1")
    tris = mesh.triangles
    nc = mesh.num_cells
    ndof = mesh.num_vertices
    qpoints, qweights, qcell = _triangle_rule(mesh)
    nq = qpoints.shape[0]

    # quadrature point 3k+i has barycentric coordinates BARY3[i] in cell k
    rows = np.repeat(np.arange(nq), 3)
    cols = tris[qcell].ravel()
    vals = np.tile(BARY3.ravel(), nc)
    Pi = assemble((rows, cols, vals), (nq, ndof)).csr

    grads = _p1_cell_gradients(mesh)
    rows = np.repeat(np.arange(nq), 3)
    cols = tris[qcell].ravel()
    gx = grads[qcell][:, :, 0].ravel()
    gy = grads[qcell][:, :, 1].ravel()
    Gx = assemble((rows, cols, gx), (nq, ndof)).csr
    Gy = assemble((rows, cols, gy), (nq, ndof)).csr
    return GradientDiscretisation(mesh, "p1", ndof, qpoints, qweights, qcell,
                                  Pi, Gx, Gy)


def _cell_face_table(mesh):
    """(nc, 3) face indices in loop order; triangular meshes only."""
    return mesh.inc_face.reshape(mesh.num_cells, 3)


def build_nonconforming_p1(mesh):
    """Nonconforming P1 elements: one unknown per face midpoint."""
    _require_triangular(mesh, "nonconforming P1")
    tris = mesh.triangles
    faces = _cell_face_table(mesh)
    nc = mesh.num_cells
    ndof = mesh.num_faces
    qpoints, qweights, qcell = _triangle_rule(mesh)
    nq = qpoints.shape[0]

    # basis of local face j (between vertices j, j+1) is 1 - 2 lambda_{j+2}
    phi = 1.0 - 2.0 * BARY3[:, [2, 0, 1]]
    rows = np.repeat(np.arange(nq), 3)
    cols = faces[qcell].ravel()
    vals = np.tile(phi.ravel(), nc)
    Pi = assemble((rows, cols, vals), (nq, ndof)).csr

    # basis attached to the face opposite vertex i has gradient -2 grad(lambda_i)
    grads = -2.0 * _p1_cell_gradients(mesh)
    opp = faces[:, [1, 2, 0]]
    rows = np.repeat(np.arange(nq), 3)
    cols = opp[qcell].ravel()
    gx = grads[qcell][:, :, 0].ravel()
    gy = grads[qcell][:, :, 1].ravel()
    Gx = assemble((rows, cols, gx), (nq, ndof)).csr
    Gy = assemble((rows, cols, gy), (nq, ndof)).csr
    return GradientDiscretisation(mesh, "ncp1", ndof, qpoints, qweights, qcell,
                                  Pi, Gx, Gy)


def build_mass_lumped_ncp1(mesh):
    """Mass-lumped nonconforming P1: same broken gradient, reconstruction
    piecewise constant on the face diamonds."""
    _require_triangular(mesh, "mass-lumped nonconforming P1")
    faces = _cell_face_table(mesh)
    ndof = mesh.num_faces
    qpoints, qweights, qcell, qface = _half_diamond_rule(mesh)
    nq = qpoints.shape[0]

    Pi = assemble((np.arange(nq), qface, np.ones(nq)), (nq, ndof)).csr

    grads = -2.0 * _p1_cell_gradients(mesh)
    opp = faces[:, [1, 2, 0]]
    rows = np.repeat(np.arange(nq), 3)
    cols = opp[qcell].ravel()
    gx = grads[qcell][:, :, 0].ravel()
    gy = grads[qcell][:, :, 1].ravel()
    Gx = assemble((rows, cols, gx), (nq, ndof)).csr
    Gy = assemble((rows, cols, gy), (nq, ndof)).csr
    return GradientDiscretisation(mesh, "mlncp1", ndof, qpoints, qweights,
                                  qcell, Pi, Gx, Gy, qface=qface)


def build_hmm(mesh):
    """Hybrid mimetic mixed scheme on a (possibly polygonal) mesh.

    Unknowns are one value per cell followed by one value per face.  The
    reconstruction is the cell value on each cell.  On the half-diamond of a
    face the gradient is the consistent cell gradient built from the face
    values plus a stabilisation proportional to the first-order Taylor
    remainder between the face and cell values.
    """
    nc = mesh.num_cells
    nf = mesh.num_faces
    ndof = nc + nf
    qpoints, qweights, qcell, qface = _half_diamond_rule(mesh)
    nq = qpoints.shape[0]

    Pi = assemble((np.arange(nq), qcell, np.ones(nq)), (nq, ndof)).csr

    rows = []
    cols = []
    vals_x = []
    vals_y = []
    for k in range(nc):
        sl = slice(mesh.inc_offsets[k], mesh.inc_offsets[k + 1])
        kfaces = mesh.inc_face[sl]
        normals = mesh.inc_normal[sl]
        dks = mesh.inc_d[sl]
        lengths = mesh.face_measures[kfaces]
        area = mesh.cell_measures[k]
        xk = mesh.cell_points[k]
        mids = mesh.face_midpoints[kfaces]
        nfk = kfaces.size

        # consistent gradient coefficients: |sigma'| n_{K,sigma'} / |K|
        base = lengths[:, None] * normals / area          # (nfk, 2)
        stab = SQRT2 / dks                                 # (nfk,)

        for s in range(nfk):
            n_s = normals[s]
            # gradient on the half-diamond of local face s
            coeff = np.zeros((nfk + 1, 2))
            coeff[:nfk] = base
            coeff[:nfk] -= np.outer(stab[s] * (base @ (mids[s] - xk)), n_s)
            coeff[s] += stab[s] * n_s
            coeff[nfk] = -stab[s] * n_s                    # cell unknown
            qrows = 3 * (mesh.inc_offsets[k] + s) + np.arange(3)
            dof_ids = np.concatenate([nc + kfaces, [k]])
            rows.append(np.repeat(qrows, nfk + 1))
            cols.append(np.tile(dof_ids, 3))
            vals_x.append(np.tile(coeff[:, 0], 3))
            vals_y.append(np.tile(coeff[:, 1], 3))

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    Gx = assemble((rows, cols, np.concatenate(vals_x)), (nq, ndof)).csr
    Gy = assemble((rows, cols, np.concatenate(vals_y)), (nq, ndof)).csr
    return GradientDiscretisation(mesh, "hmm", ndof, qpoints, qweights, qcell,
                                  Pi, Gx, Gy, qface=qface)


BUILDERS = {
    "p1": build_conforming_p1,
    "ncp1": build_nonconforming_p1,
    "mlncp1": build_mass_lumped_ncp1,
    "hmm": build_hmm,
}


def build_scheme(kind, mesh):
    """Build the gradient discretisation named by ``kind``."""
    try:
        builder = BUILDERS[kind]
    except KeyError:
        raise ValueError("unknown scheme %r (choose from %s)"
                         % (kind, sorted(BUILDERS))) from None
    return builder(mesh)
