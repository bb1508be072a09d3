"""2D polytopal meshes with the geometry needed by gradient discretisations.

A mesh is a partition of a polygonal domain into simple polygons given as
counter-clockwise vertex loops.  Faces (edges) are derived from the cell
loops, never stored in files.  Every cell carries one interior point ``x_K``
(the centroid by default) and the geometry used by the schemes: measures,
centroids, face midpoints, outward unit normals and the orthogonal distance
``d(K, sigma)`` from ``x_K`` to each face.
"""

import io

import numpy as np


class MeshError(Exception):
    """Raised when mesh data violates a construction invariant."""


def _polygon_area_centroid(points):
    """Signed area and centroid of a polygon given as an (k, 2) loop."""
    x = points[:, 0]
    y = points[:, 1]
    xn = np.roll(x, -1)
    yn = np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    if abs(area) < 1e-300:
        raise MeshError("degenerate cell with zero area")
    cx = ((x + xn) * cross).sum() / (6.0 * area)
    cy = ((y + yn) * cross).sum() / (6.0 * area)
    return area, np.array([cx, cy])


class Mesh:
    """Conforming polytopal mesh of a 2D domain.

    Parameters
    ----------
    vertices : (nv, 2) array
        Vertex coordinates.
    cells : sequence of int sequences
        One counter-clockwise vertex loop per cell.
    cell_points : (nc, 2) array, optional
        Interior point of each cell; defaults to the centroid.  Each cell
        must be strictly star-shaped with respect to its point.

    Attributes
    ----------
    cell_measures, cell_centroids, cell_diameters : per-cell geometry
    face_vertices : (nf, 2) int array of endpoint indices
    face_cells : (nf, 2) int array of adjacent cells, -1 on the boundary side
    face_measures, face_midpoints : per-face geometry
    h : float
        Largest cell diameter.
    """

    def __init__(self, vertices, cells, cell_points=None):
        self.vertices = np.asarray(vertices, dtype=float)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshError("vertices must be an (nv, 2) array")
        self.cells = [np.asarray(c, dtype=int) for c in cells]
        self.num_vertices = self.vertices.shape[0]
        self.num_cells = len(self.cells)
        for c in self.cells:
            if len(c) < 3:
                raise MeshError("cells need at least 3 vertices")
            if c.min() < 0 or c.max() >= self.num_vertices:
                raise MeshError("cell refers to a vertex out of range")

        self._build_cell_geometry()
        if cell_points is None:
            self.cell_points = self.cell_centroids.copy()
        else:
            self.cell_points = np.asarray(cell_points, dtype=float)
            if self.cell_points.shape != (self.num_cells, 2):
                raise MeshError("cell_points must be an (nc, 2) array")
        self._build_faces()
        self._validate()

    def _build_cell_geometry(self):
        areas = np.empty(self.num_cells)
        centroids = np.empty((self.num_cells, 2))
        diameters = np.empty(self.num_cells)
        for k, loop in enumerate(self.cells):
            pts = self.vertices[loop]
            area, centroid = _polygon_area_centroid(pts)
            if area <= 0.0:
                raise MeshError(
                    "cell %d is not counter-clockwise (signed area %g)" % (k, area)
                )
            areas[k] = area
            centroids[k] = centroid
            diff = pts[:, None, :] - pts[None, :, :]
            diameters[k] = np.sqrt((diff ** 2).sum(axis=2)).max()
        self.cell_measures = areas
        self.cell_centroids = centroids
        self.cell_diameters = diameters
        self.domain_measure = areas.sum()
        self.h = diameters.max()

    def _build_faces(self):
        face_of = {}
        face_vertices = []
        face_cells = []
        # flattened (cell, local face) incidence, in loop order per cell
        inc_face = []
        inc_cell = []
        offsets = [0]
        for k, loop in enumerate(self.cells):
            nk = len(loop)
            for j in range(nk):
                a = int(loop[j])
                b = int(loop[(j + 1) % nk])
                key = (a, b) if a < b else (b, a)
                f = face_of.get(key)
                if f is None:
                    f = len(face_vertices)
                    face_of[key] = f
                    face_vertices.append((a, b))
                    face_cells.append([k, -1])
                else:
                    if face_cells[f][1] != -1:
                        raise MeshError("face shared by more than two cells")
                    face_cells[f][1] = k
                inc_face.append(f)
                inc_cell.append(k)
            offsets.append(len(inc_face))

        self.face_vertices = np.array(face_vertices, dtype=int)
        self.face_cells = np.array(face_cells, dtype=int)
        self.num_faces = self.face_vertices.shape[0]
        pa = self.vertices[self.face_vertices[:, 0]]
        pb = self.vertices[self.face_vertices[:, 1]]
        self.face_measures = np.sqrt(((pb - pa) ** 2).sum(axis=1))
        self.face_midpoints = 0.5 * (pa + pb)

        self.inc_offsets = np.array(offsets, dtype=int)
        self.inc_face = np.array(inc_face, dtype=int)
        self.inc_cell = np.array(inc_cell, dtype=int)

        # outward normals and orthogonal distances per (cell, face) incidence
        starts = np.concatenate([loop for loop in self.cells])
        ends = np.concatenate([np.roll(loop, -1) for loop in self.cells])
        t = self.vertices[ends] - self.vertices[starts]
        lengths = np.sqrt((t ** 2).sum(axis=1))
        if np.any(lengths < 1e-300):
            raise MeshError("zero-length face")
        normals = np.column_stack([t[:, 1], -t[:, 0]]) / lengths[:, None]
        self.inc_normal = normals
        mid = self.face_midpoints[self.inc_face]
        xk = self.cell_points[self.inc_cell]
        self.inc_d = ((mid - xk) * normals).sum(axis=1)

    def _validate(self):
        if np.any(self.inc_d <= 0.0):
            bad = int(self.inc_cell[np.argmin(self.inc_d)])
            raise MeshError(
                "cell %d is not strictly star-shaped about its point" % bad
            )
        # closed-polygon identity per cell
        weighted = self.inc_normal * self.face_measures[self.inc_face][:, None]
        for k in range(self.num_cells):
            s = slice(self.inc_offsets[k], self.inc_offsets[k + 1])
            resultant = weighted[s].sum(axis=0)
            perimeter = self.face_measures[self.inc_face[s]].sum()
            if np.any(np.abs(resultant) > 1e-12 * perimeter):
                raise MeshError("closed-polygon identity fails on cell %d" % k)

    def cell_faces(self, k):
        """Face indices of cell ``k`` in loop order."""
        return self.inc_face[self.inc_offsets[k]:self.inc_offsets[k + 1]]

    def geometry(self, k):
        """All cached geometry of one cell.

        Returns
        -------
        (measure, centroid, faces) where ``faces`` is a list of tuples
        ``(face measure, midpoint, outward unit normal, orthogonal distance)``
        in loop order.
        """
        s = slice(self.inc_offsets[k], self.inc_offsets[k + 1])
        faces = [
            (
                self.face_measures[f],
                self.face_midpoints[f],
                self.inc_normal[i],
                self.inc_d[i],
            )
            for i, f in zip(range(s.start, s.stop), self.inc_face[s])
        ]
        return self.cell_measures[k], self.cell_centroids[k], faces

    @property
    def is_triangular(self):
        return all(len(c) == 3 for c in self.cells)

    @property
    def triangles(self):
        """Cell connectivity as an (nc, 3) array; triangular meshes only."""
        if not self.is_triangular:
            raise MeshError("mesh has non-triangular cells")
        return np.vstack(self.cells)


def regularity_eta(mesh):
    """Mesh regularity: the largest ratio diam(K) / rho_K over all cells.

    ``rho_K`` is the radius of the largest ball centred at the cell centroid
    and contained in the cell, computed as the minimum distance from the
    centroid to the boundary segments.
    """
    eta = 0.0
    for k, loop in enumerate(mesh.cells):
        pts = mesh.vertices[loop]
        nxt = np.roll(pts, -1, axis=0)
        c = mesh.cell_centroids[k]
        seg = nxt - pts
        seglen2 = (seg ** 2).sum(axis=1)
        t = np.clip(((c - pts) * seg).sum(axis=1) / seglen2, 0.0, 1.0)
        foot = pts + t[:, None] * seg
        rho = np.sqrt(((c - foot) ** 2).sum(axis=1)).min()
        eta = max(eta, mesh.cell_diameters[k] / rho)
    return eta


def diamond_measures(mesh):
    """Half-diamond and diamond measures attached to the faces.

    The half-diamond ``D(K, sigma)`` is the triangle spanned by the face and
    the cell point ``x_K``; its measure is ``|sigma| d(K, sigma) / 2``.

    Returns
    -------
    half : array over (cell, face) incidences, aligned with ``mesh.inc_face``
    full : (nf,) array, the diamond measure of each face
    """
    half = 0.5 * mesh.face_measures[mesh.inc_face] * mesh.inc_d
    full = np.zeros(mesh.num_faces)
    np.add.at(full, mesh.inc_face, half)
    return half, full


def build_uniform_triangular(n, domain=(0.0, 0.0, 1.0, 1.0)):
    """Uniform criss-cross triangulation of an axis-aligned rectangle.

    The rectangle is split into ``n x n`` squares, each cut into two
    triangles.  The diagonal direction alternates in a checkerboard pattern,
    which makes the mesh mirror-symmetric about both midlines for even ``n``.

    Parameters
    ----------
    n : int
        Subdivisions per side, ``n >= 1``.
    domain : (x0, y0, x1, y1)
        Rectangle corners.

    Returns
    -------
    Mesh with ``2 n**2`` triangles and ``(n + 1)**2`` vertices.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    x0, y0, x1, y1 = domain
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    xx, yy = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    cells = []
    for j in range(n):
        for i in range(n):
            v00 = vid(i, j)
            v10 = vid(i + 1, j)
            v11 = vid(i + 1, j + 1)
            v01 = vid(i, j + 1)
            if (i + j) % 2 == 0:
                cells.append((v00, v10, v11))
                cells.append((v00, v11, v01))
            else:
                cells.append((v00, v10, v01))
                cells.append((v10, v11, v01))
    mesh = Mesh(vertices, cells)
    expected = abs((x1 - x0) * (y1 - y0))
    if abs(mesh.domain_measure - expected) > 1e-12 * expected:
        raise MeshError("generated mesh does not tile the rectangle")
    return mesh


def write_mesh(mesh, path_or_file):
    """Write a mesh in the plain ASCII format (see :func:`read_mesh`)."""
    own = isinstance(path_or_file, (str, bytes))
    fh = open(path_or_file, "w") if own else path_or_file
    try:
        fh.write("gdm-mesh 2d\n")
        fh.write("vertices %d\n" % mesh.num_vertices)
        for x, y in mesh.vertices:
            fh.write("%.17g %.17g\n" % (x, y))
        fh.write("cells %d\n" % mesh.num_cells)
        for loop in mesh.cells:
            fh.write("%d %s\n" % (len(loop), " ".join(str(int(v)) for v in loop)))
        if not np.allclose(mesh.cell_points, mesh.cell_centroids):
            fh.write("cellpoints %d\n" % mesh.num_cells)
            for x, y in mesh.cell_points:
                fh.write("%.17g %.17g\n" % (x, y))
    finally:
        if own:
            fh.close()


def read_mesh(path_or_file):
    """Read a mesh from the plain ASCII format.

    The format is line oriented: a header ``gdm-mesh 2d``, a block
    ``vertices N`` followed by ``N`` lines ``x y``, a block ``cells M``
    followed by ``M`` lines ``k i0 ... i(k-1)`` with counter-clockwise vertex
    indices, and an optional ``cellpoints M`` block of interior points.
    Faces are always derived from the cell loops.
    """
    own = isinstance(path_or_file, (str, bytes))
    fh = open(path_or_file, "r") if own else path_or_file
    try:
        lines = [ln.strip() for ln in fh if ln.strip()]
    finally:
        if own:
            fh.close()
    if not lines or lines[0] != "gdm-mesh 2d":
        raise MeshError("missing 'gdm-mesh 2d' header")
    pos = 1

    def expect_block(name):
        nonlocal pos
        parts = lines[pos].split()
        if len(parts) != 2 or parts[0] != name:
            raise MeshError("expected '%s N' block at line %d" % (name, pos + 1))
        pos += 1
        return int(parts[1])

    nv = expect_block("vertices")
    vertices = np.array(
        [[float(t) for t in lines[pos + i].split()] for i in range(nv)]
    )
    pos += nv
    nc = expect_block("cells")
    cells = []
    for i in range(nc):
        parts = [int(t) for t in lines[pos + i].split()]
        if parts[0] != len(parts) - 1:
            raise MeshError("cell line %d has wrong vertex count" % (pos + i + 1))
        cells.append(parts[1:])
    pos += nc
    cell_points = None
    if pos < len(lines):
        m = expect_block("cellpoints")
        if m != nc:
            raise MeshError("cellpoints block must list one point per cell")
        cell_points = np.array(
            [[float(t) for t in lines[pos + i].split()] for i in range(m)]
        )
    return Mesh(vertices, cells, cell_points=cell_points)


def mesh_to_string(mesh):
    """The ASCII representation of a mesh as a string."""
    buf = io.StringIO()
    write_mesh(mesh, buf)
    return buf.getvalue()
