"""Mesh data model and mesh-level queries.

A SimplexMesh is a flat container: vertex coordinates, cell connectivity and
one constraint tag per vertex (free, fixed, or sliding in a plane). All cells
must be positively oriented; loaders repair orientation, `validate` only
reports it.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from . import tetrahedra, triangles
from .errors import NonPlanarPatch

# Per-vertex constraint kinds.
FREE, FIXED, SLIDE = 0, 1, 2

# Boundary classification policies.
FIX_ALL = "fix-all"
SLIDE_PLANAR = "slide-planar"

# Quality threshold used for the "poor element" count in reports.
POOR_QUALITY_THRESHOLD = 0.3
HISTOGRAM_BINS = 20

# Facets opposite each vertex, oriented outward for a positive cell.
_TRI_FACETS = ((1, 2), (2, 0), (0, 1))
_TET_FACETS = ((1, 2, 3), (0, 3, 2), (0, 1, 3), (0, 2, 1))


class SimplexMesh:
    """Triangle (dim=2) or tetrahedral (dim=3) mesh with vertex constraints."""

    def __init__(self, vertices, cells, constraint_kind=None, slide_normals=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.cells = np.ascontiguousarray(cells, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] not in (2, 3):
            raise ValueError("vertices must be (n, 2) or (n, 3)")
        if self.cells.ndim != 2 or self.cells.shape[1] != self.vertices.shape[1] + 1:
            raise ValueError("cells must be (m, dim + 1)")
        n = self.vertices.shape[0]
        if constraint_kind is None:
            constraint_kind = np.zeros(n, dtype=np.int8)
        if slide_normals is None:
            slide_normals = np.zeros_like(self.vertices)
        self.constraint_kind = np.ascontiguousarray(constraint_kind, dtype=np.int8)
        self.slide_normals = np.ascontiguousarray(slide_normals, dtype=float)
        if self.constraint_kind.shape != (n,) or self.slide_normals.shape != self.vertices.shape:
            raise ValueError("constraint arrays do not match the vertex count")

    @property
    def dim(self):
        return self.vertices.shape[1]

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_cells(self):
        return self.cells.shape[0]

    def cell_points(self):
        """Vertex coordinates gathered per cell, shape (n_cells, dim+1, dim)."""
        return self.vertices[self.cells]

    def fixed_mask(self):
        return self.constraint_kind == FIXED

    def free_mask(self):
        """Vertices with at least one movable direction (free or sliding)."""
        return self.constraint_kind != FIXED

    def slide_mask(self):
        return self.constraint_kind == SLIDE

    def copy(self):
        return SimplexMesh(
            self.vertices.copy(),
            self.cells.copy(),
            self.constraint_kind.copy(),
            self.slide_normals.copy(),
        )

    def with_vertices(self, vertices):
        """Same connectivity and constraints on new coordinates."""
        return SimplexMesh(
            np.asarray(vertices, dtype=float),
            self.cells,
            self.constraint_kind,
            self.slide_normals,
        )

    def signed_measures(self):
        pts = self.cell_points()
        if self.dim == 2:
            return triangles.signed_area(pts)
        return tetrahedra.signed_volume(pts)

    def radius_ratios(self):
        pts = self.cell_points()
        if self.dim == 2:
            return triangles.radius_ratio(pts)
        return tetrahedra.radius_ratio(pts)

    def mean_edge_length(self):
        i, j = _edge_index_pairs(self.dim)
        e = self.vertices[self.cells[:, j]] - self.vertices[self.cells[:, i]]
        return float(np.linalg.norm(e, axis=2).mean())


def _edge_index_pairs(dim):
    if dim == 2:
        pairs = [(0, 1), (1, 2), (2, 0)]
    else:
        pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    arr = np.array(pairs, dtype=np.int64)
    return arr[:, 0], arr[:, 1]


@dataclass(frozen=True)
class Violation:
    """One failed mesh invariant, tied to a cell or vertex index."""

    rule: str
    index: int
    detail: str

    def __str__(self):
        return f"{self.rule}[{self.index}]: {self.detail}"


def validate(mesh):
    """Check mesh invariants; returns a list of Violations (empty when valid)."""
    out = []
    nv = mesh.n_vertices
    if not np.all(np.isfinite(mesh.vertices)):
        for v in np.flatnonzero(~np.isfinite(mesh.vertices).all(axis=1)):
            out.append(Violation("non-finite-coordinate", int(v), "vertex has nan/inf"))
    bad_index = (mesh.cells < 0) | (mesh.cells >= nv)
    for c in np.flatnonzero(bad_index.any(axis=1)):
        out.append(
            Violation("index-out-of-range", int(c), f"cell references vertex >= {nv}")
        )
    ok = ~bad_index.any(axis=1)
    srt = np.sort(mesh.cells[ok], axis=1)
    repeated = (np.diff(srt, axis=1) == 0).any(axis=1)
    for c in np.flatnonzero(ok)[repeated]:
        out.append(Violation("repeated-vertex", int(c), "cell lists a vertex twice"))
    if out:
        return out
    meas = mesh.signed_measures()
    scale = 1e-14 * (
        triangles.diameters(mesh.cell_points()) ** mesh.dim
        if mesh.dim == 2
        else tetrahedra.diameters(mesh.cell_points()) ** mesh.dim
    )
    for c in np.flatnonzero(meas <= scale):
        out.append(
            Violation(
                "non-positive-orientation",
                int(c),
                f"signed measure {meas[c]:.3e}",
            )
        )
    return out


def repair_orientation(vertices, cells):
    """Swap the last two vertices of negatively oriented cells.

    Returns (cells, repaired_indices); zero-measure cells are left alone
    for validate to report.
    """
    cells = np.array(cells, dtype=np.int64, copy=True)
    pts = np.asarray(vertices, dtype=float)[cells]
    meas = triangles.signed_area(pts) if cells.shape[1] == 3 else tetrahedra.signed_volume(pts)
    flipped = np.flatnonzero(meas < 0)
    if flipped.size:
        cells[np.ix_(flipped, [cells.shape[1] - 2, cells.shape[1] - 1])] = cells[
            np.ix_(flipped, [cells.shape[1] - 1, cells.shape[1] - 2])
        ]
    return cells, flipped


def boundary_facets(mesh):
    """Outward-oriented boundary facets (those owned by exactly one cell).

    Returns (facets, owner_cells): facets is (m, dim) vertex indices in the
    outward orientation inherited from the positive cell.
    """
    local = _TRI_FACETS if mesh.dim == 2 else _TET_FACETS
    all_facets = np.concatenate([mesh.cells[:, list(f)] for f in local], axis=0)
    owners = np.tile(np.arange(mesh.n_cells), len(local))
    key = np.sort(all_facets, axis=1)
    _, inverse, counts = np.unique(
        key, axis=0, return_inverse=True, return_counts=True
    )
    on_boundary = counts[inverse] == 1
    return all_facets[on_boundary], owners[on_boundary]


def facet_normals(mesh, facets):
    """Unit outward normals of oriented boundary facets."""
    p = mesh.vertices[facets]
    if mesh.dim == 2:
        d = p[:, 1] - p[:, 0]
        n = np.stack([d[:, 1], -d[:, 0]], axis=1)
    else:
        n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    return n / np.linalg.norm(n, axis=1, keepdims=True)


def _facet_adjacency(facets):
    """Pairs of boundary facets sharing a sub-facet (edge in 3D, vertex in 2D)."""
    m, k = facets.shape
    if k == 2:
        subs = facets.reshape(-1, 1)
        owner = np.repeat(np.arange(m), 2)
    else:
        subs = np.concatenate([facets[:, [0, 1]], facets[:, [1, 2]], facets[:, [2, 0]]])
        subs = np.sort(subs, axis=1)
        owner = np.tile(np.arange(m), 3)
    order = np.lexsort(subs.T[::-1])
    subs, owner = subs[order], owner[order]
    same = np.all(subs[1:] == subs[:-1], axis=1)
    return np.stack([owner[:-1][same], owner[1:][same]], axis=1)


def classify_boundary(mesh, policy, angle_tol_deg=1.0, crease_angle_deg=60.0):
    """Assign vertex constraints from the boundary structure.

    fix-all pins every boundary vertex. slide-planar groups boundary facets
    into planar patches (normals within angle_tol_deg across shared
    sub-facets); vertices interior to one patch may slide in its plane,
    vertices on patch seams are fixed. A facet whose every neighbor deviates
    by more than the tolerance but less than crease_angle_deg signals a
    discretized curved boundary, which this policy does not support.
    """
    if policy not in (FIX_ALL, SLIDE_PLANAR):
        raise ValueError(f"unknown boundary policy {policy!r}")
    facets, _ = boundary_facets(mesh)
    kind = np.zeros(mesh.n_vertices, dtype=np.int8)
    normals_out = np.zeros_like(mesh.vertices)
    boundary_verts = np.unique(facets)

    if policy == FIX_ALL:
        kind[boundary_verts] = FIXED
        return SimplexMesh(mesh.vertices, mesh.cells, kind, normals_out)

    normals = facet_normals(mesh, facets)
    pairs = _facet_adjacency(facets)
    cosine = np.einsum("ij,ij->i", normals[pairs[:, 0]], normals[pairs[:, 1]])
    angle = np.degrees(np.arccos(np.clip(cosine, -1.0, 1.0)))

    m = facets.shape[0]
    has_neighbor = np.zeros(m, dtype=bool)
    has_coplanar = np.zeros(m, dtype=bool)
    min_angle = np.full(m, 180.0)
    for col in (0, 1):
        np.minimum.at(min_angle, pairs[:, col], angle)
        has_neighbor[pairs[:, col]] = True
        np.logical_or.at(has_coplanar, pairs[:, col], angle <= angle_tol_deg)
    curved = has_neighbor & ~has_coplanar & (min_angle < crease_angle_deg)
    if np.any(curved):
        f = int(np.flatnonzero(curved)[0])
        raise NonPlanarPatch(
            f"boundary facet {f} deviates {min_angle[f]:.2f} deg from every "
            f"neighbor (tolerance {angle_tol_deg} deg): boundary appears curved"
        )

    # Planar patches: components of the facet graph restricted to coplanar pairs.
    coplanar = pairs[angle <= angle_tol_deg]
    adj = sparse.coo_matrix(
        (np.ones(len(coplanar)), (coplanar[:, 0], coplanar[:, 1])), shape=(m, m)
    )
    n_patches, patch = connected_components(adj, directed=False)

    patch_normal = np.zeros((n_patches, mesh.dim))
    np.add.at(patch_normal, patch, normals)
    patch_normal /= np.linalg.norm(patch_normal, axis=1, keepdims=True)

    vert_patches = {}
    for fi, f in enumerate(facets):
        for v in f:
            vert_patches.setdefault(int(v), set()).add(int(patch[fi]))
    for v in boundary_verts:
        ps = vert_patches[int(v)]
        if len(ps) == 1:
            kind[v] = SLIDE
            normals_out[v] = patch_normal[next(iter(ps))]
        else:
            kind[v] = FIXED
    return SimplexMesh(mesh.vertices, mesh.cells, kind, normals_out)


@dataclass
class QualityStats:
    """Distribution of per-element quality q = 1/mu over a mesh."""

    n_cells: int
    min_q: float
    max_q: float
    mean_q: float
    histogram: np.ndarray = field(repr=False)
    below_threshold_count: int

    def format_table(self):
        lines = [
            f"cells                {self.n_cells}",
            f"min quality          {self.min_q:.6f}",
            f"mean quality         {self.mean_q:.6f}",
            f"max quality          {self.max_q:.6f}",
            f"count q < {POOR_QUALITY_THRESHOLD}        {self.below_threshold_count}",
            "histogram (20 uniform bins on [0, 1]):",
        ]
        width = max(int(c) for c in self.histogram) or 1
        for b, count in enumerate(self.histogram):
            lo, hi = b / HISTOGRAM_BINS, (b + 1) / HISTOGRAM_BINS
            bar = "#" * int(np.ceil(40 * count / width)) if count else ""
            lines.append(f"  [{lo:.2f},{hi:.2f}) {int(count):7d} {bar}")
        return "\n".join(lines)


def quality_stats(mesh):
    """Per-element quality statistics; degenerate cells raise with their index."""
    q = 1.0 / mesh.radius_ratios()
    # Roundoff can push q a few ulp past 1; clamp so no cell falls out of
    # the histogram range.
    hist, _ = np.histogram(np.clip(q, 0.0, 1.0), bins=HISTOGRAM_BINS, range=(0.0, 1.0))
    return QualityStats(
        n_cells=mesh.n_cells,
        min_q=float(q.min()),
        max_q=float(q.max()),
        mean_q=float(q.mean()),
        histogram=hist,
        below_threshold_count=int((q < POOR_QUALITY_THRESHOLD).sum()),
    )


def _min_positive_root(coeffs, lam_star):
    """Smallest positive root of one polynomial (highest degree first)."""
    scale = np.abs(coeffs).max()
    trimmed = np.where(np.abs(coeffs) > 1e-13 * scale, coeffs, 0.0)
    nz = np.flatnonzero(trimmed)
    if nz.size == 0 or nz[0] == len(trimmed) - 1:
        return np.inf
    trimmed = trimmed[nz[0] :]
    roots = np.roots(trimmed)
    real = roots[np.abs(roots.imag) <= 1e-8 * np.abs(roots)].real
    pos = real[real > 1e-13]
    if pos.size == 0:
        return np.inf
    lam = pos.min()
    # A couple of Newton polish steps on the untrimmed polynomial.
    full = np.asarray(coeffs, dtype=float)
    deriv = np.polyder(full)
    for _ in range(2):
        dp = np.polyval(deriv, lam)
        if dp == 0.0:
            break
        lam -= np.polyval(full, lam) / dp
    return float(lam * lam_star) if lam > 0 else np.inf


def max_step_before_inversion(mesh, direction):
    """Largest lam such that vertices + t*direction keeps every cell positive
    for all t in [0, lam).

    The signed measure of each cell is a polynomial of degree dim in t; the
    bound is the smallest positive root over all cells (inf when none, e.g.
    a zero direction).
    """
    direction = np.asarray(direction, dtype=float)
    if direction.shape != mesh.vertices.shape:
        raise ValueError("direction must match the vertex array shape")
    if not np.any(direction):
        return np.inf
    cp = mesh.cell_points()
    cu = direction[mesh.cells]
    e = cp[:, 1:] - cp[:, :1]
    f = cu[:, 1:] - cu[:, :1]

    # Dimensionless time scale so the polynomial coefficients are comparable.
    e_norm = np.linalg.norm(e, axis=(1, 2))
    f_norm = np.linalg.norm(f, axis=(1, 2))
    moving = f_norm > 0
    lam_star = np.ones(mesh.n_cells)
    lam_star[moving] = e_norm[moving] / f_norm[moving]
    ls = lam_star[:, None, None]

    if mesh.dim == 2:
        def cr(a, b):
            return a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]

        e1, e2 = e[:, 0], e[:, 1]
        f1, f2 = (f * ls)[:, 0], (f * ls)[:, 1]
        coeffs = np.stack(
            [cr(f1, f2), cr(f1, e2) + cr(e1, f2), cr(e1, e2)], axis=1
        )
    else:
        def det(a, b, c):
            return np.einsum("ij,ij->i", a, np.cross(b, c))

        e1, e2, e3 = e[:, 0], e[:, 1], e[:, 2]
        fs = f * ls
        f1, f2, f3 = fs[:, 0], fs[:, 1], fs[:, 2]
        coeffs = np.stack(
            [
                det(f1, f2, f3),
                det(f1, f2, e3) + det(f1, e2, f3) + det(e1, f2, f3),
                det(f1, e2, e3) + det(e1, f2, e3) + det(e1, e2, f3),
                det(e1, e2, e3),
            ],
            axis=1,
        )

    lam = np.inf
    for c in np.flatnonzero(moving):
        lam = min(lam, _min_positive_root(coeffs[c], lam_star[c]))
    return lam


def vertex_adjacency(mesh):
    """Sparse symmetric vertex adjacency induced by the cells."""
    i, j = _edge_index_pairs(mesh.dim)
    rows = mesh.cells[:, i].ravel()
    cols = mesh.cells[:, j].ravel()
    n = mesh.n_vertices
    ones = np.ones(rows.size)
    adj = sparse.coo_matrix((ones, (rows, cols)), shape=(n, n))
    return (adj + adj.T).tocsr()


def is_connected(mesh):
    n_comp, _ = connected_components(vertex_adjacency(mesh), directed=False)
    return n_comp == 1


def constraint_projector(mesh):
    """Function projecting a (n_vertices, dim) field onto the constraints.

    Fixed rows are zeroed exactly; sliding rows lose their normal component.
    """
    fixed = mesh.fixed_mask()
    slide = mesh.slide_mask()
    normals = mesh.slide_normals

    def project(field):
        out = np.array(field, dtype=float, copy=True)
        out[fixed] = 0.0
        if np.any(slide):
            comp = np.einsum("ij,ij->i", out[slide], normals[slide])
            out[slide] -= comp[:, None] * normals[slide]
        return out

    return project
