"""Global energy, sparse block gradient and the reduced SPD preconditioner.

The energy of a mesh is the mean element radius ratio. Its gradient with
respect to the stacked coordinate vector V = [X; Y(; Z)] is G_F @ V where
G_F has one symmetric diagonal block A repeated per coordinate and
antisymmetric off-diagonal blocks::

    2D: [[A, B], [-B, A]]          3D: [[A, B2, B1], [-B2, A, B0], [-B1, -B0, A]]

Assembly scatter-adds per-element contributions in cell order, so identical
meshes produce bit-identical results.
"""

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from . import tetrahedra, triangles
from .errors import DisconnectedMesh, NoFixedVertices
from .mesh import is_connected


def field_to_vec(field):
    """(n_vertices, dim) array -> stacked [X; Y(; Z)] vector."""
    return np.asarray(field).T.ravel()


def vec_to_field(vec, n_vertices, dim):
    """Stacked [X; Y(; Z)] vector -> (n_vertices, dim) array."""
    return np.asarray(vec).reshape(dim, n_vertices).T


@dataclass
class GlobalGradientSystem:
    """Energy, stacked coordinates, sparse blocks and the assembled gradient.

    ``gradient`` comes from scatter-adding per-element gradient vectors;
    :meth:`gradient_matvec` recomputes it from the sparse blocks as G_F @ V.
    The two must agree to roundoff.
    """

    F: float
    V: np.ndarray
    A: sparse.csr_matrix
    B_blocks: tuple
    gradient: np.ndarray
    n_vertices: int
    dim: int

    def gradient_matvec(self):
        nv = self.n_vertices
        X = self.V[:nv]
        Y = self.V[nv : 2 * nv]
        A = self.A
        if self.dim == 2:
            (B,) = self.B_blocks
            return np.concatenate([A @ X + B @ Y, -(B @ X) + A @ Y])
        Z = self.V[2 * nv :]
        B0, B1, B2 = self.B_blocks
        return np.concatenate(
            [
                A @ X + B2 @ Y + B1 @ Z,
                -(B2 @ X) + A @ Y + B0 @ Z,
                -(B1 @ X) - (B0 @ Y) + A @ Z,
            ]
        )

    def gradient_field(self):
        return vec_to_field(self.gradient, self.n_vertices, self.dim)

    def gradient_matrix(self):
        """The full (dim n_v)^2 sparse G_F, mainly for debugging dumps."""
        A = self.A
        if self.dim == 2:
            (B,) = self.B_blocks
            return sparse.bmat([[A, B], [-B, A]], format="csr")
        B0, B1, B2 = self.B_blocks
        return sparse.bmat(
            [[A, B2, B1], [-B2, A, B0], [-B1, -B0, A]], format="csr"
        )


def _scatter_square(cells, local, n):
    """Sum (m, k, k) local matrices into an n x n CSR matrix."""
    k = cells.shape[1]
    rows = np.broadcast_to(cells[:, :, None], (len(cells), k, k))
    cols = np.broadcast_to(cells[:, None, :], (len(cells), k, k))
    mat = sparse.coo_matrix(
        (local.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n)
    )
    mat.sum_duplicates()
    return mat.tocsr()


def assemble(mesh):
    """Assemble energy, gradient and sparse blocks for the current geometry.

    Raises DegenerateElement (with the offending cell index) if any element
    is inverted or collapsed.
    """
    pts = mesh.cell_points()
    nv = mesh.n_vertices
    nc = mesh.n_cells
    w = 1.0 / nc

    if mesh.dim == 2:
        mu, A_loc, B_loc = triangles.local_blocks(pts)
        _, grads = triangles.radius_ratio_gradient(pts)
        A = _scatter_square(mesh.cells, w * A_loc, nv)
        B_blocks = (_scatter_square(mesh.cells, w * B_loc, nv),)
    else:
        mu, A_loc, B0, B1, B2 = tetrahedra.local_blocks(pts)
        _, grads = tetrahedra.radius_ratio_gradient(pts)
        scale = (w * mu)[:, None, None]
        A = _scatter_square(mesh.cells, scale * A_loc, nv)
        B_blocks = tuple(
            _scatter_square(mesh.cells, scale * Bi, nv) for Bi in (B0, B1, B2)
        )

    grad_field = np.zeros((nv, mesh.dim))
    np.add.at(grad_field, mesh.cells, w * grads)
    return GlobalGradientSystem(
        F=float(mu.mean()),
        V=field_to_vec(mesh.vertices),
        A=A,
        B_blocks=B_blocks,
        gradient=field_to_vec(grad_field),
        n_vertices=nv,
        dim=mesh.dim,
    )


def energy_gradient(mesh):
    """Energy and scatter-added gradient field without sparse assembly.

    Cheaper than :func:`assemble` for line-search trial points.
    """
    pts = mesh.cell_points()
    if mesh.dim == 2:
        mu, grads = triangles.radius_ratio_gradient(pts)
    else:
        mu, grads = tetrahedra.radius_ratio_gradient(pts)
    grad_field = np.zeros((mesh.n_vertices, mesh.dim))
    np.add.at(grad_field, mesh.cells, grads / mesh.n_cells)
    return float(mu.mean()), grad_field


@dataclass
class Preconditioner:
    """Reduced SPD matrix over non-fixed vertices, applied per coordinate.

    ``active`` lists the vertex indices kept; ``index_of`` maps a vertex
    index to its row in P (-1 for fixed vertices).
    """

    P: sparse.csr_matrix
    active: np.ndarray
    index_of: np.ndarray

    @property
    def n(self):
        return self.P.shape[0]

    def restrict(self, per_vertex):
        return np.asarray(per_vertex)[self.active]

    def expand(self, reduced, n_vertices):
        out = np.zeros(n_vertices)
        out[self.active] = reduced
        return out


def assemble_preconditioner(mesh):
    """Build the reduced SPD preconditioner for the current geometry.

    In 2D the scalar block A is already a Laplacian with negative
    off-diagonals, so it is reduced directly. In 3D the abs-clamped local
    matrices are assembled instead, which keeps every row weakly diagonally
    dominant. Rows/columns of fixed vertices are removed; positive
    definiteness then needs a connected mesh and at least one fixed vertex.
    """
    fixed = mesh.fixed_mask()
    if not fixed.any():
        raise NoFixedVertices(
            "the reduced matrix is only positive semi-definite without "
            "at least one fixed vertex"
        )
    if not is_connected(mesh):
        raise DisconnectedMesh("mesh vertex graph has multiple components")

    pts = mesh.cell_points()
    nv = mesh.n_vertices
    w = 1.0 / mesh.n_cells
    if mesh.dim == 2:
        _, A_loc, _ = triangles.local_blocks(pts)
        local = w * A_loc
    else:
        mu = tetrahedra.radius_ratio(pts)
        local = (w * mu)[:, None, None] * tetrahedra.abs_local_matrix(pts)
    A_abs = _scatter_square(mesh.cells, local, nv)

    active = np.flatnonzero(~fixed)
    index_of = np.full(nv, -1, dtype=np.int64)
    index_of[active] = np.arange(active.size)
    P = A_abs[active][:, active].tocsr()
    P.sort_indices()
    return Preconditioner(P=P, active=active, index_of=index_of)


@dataclass
class SpdAuditReport:
    """Structural evidence that P is SPD: symmetry, dominance, connectivity."""

    n_rows: int
    matrix_norm: float
    symmetry_residual: float
    min_row_margin: float
    weakly_dominant: bool
    strictly_dominant_rows: int
    n_components: int

    def lines(self):
        return [
            f"rows                    {self.n_rows}",
            f"max |entry|             {self.matrix_norm:.6e}",
            f"symmetry residual       {self.symmetry_residual:.3e}",
            f"min row dominance       {self.min_row_margin:.3e}",
            f"weakly dominant         {self.weakly_dominant}",
            f"strictly dominant rows  {self.strictly_dominant_rows}",
            f"graph components        {self.n_components}",
        ]


def spd_audit(precond):
    """Audit symmetry, row diagonal dominance and graph connectivity of P."""
    P = precond.P
    norm = float(np.abs(P.data).max()) if P.nnz else 0.0
    diff = (P - P.T).tocoo()
    sym = float(np.abs(diff.data).max()) if diff.nnz else 0.0
    diag = P.diagonal()
    off = np.asarray(np.abs(P).sum(axis=1)).ravel() - np.abs(diag)
    margin = np.abs(diag) - off
    tol = 1e-12 * norm
    n_comp, _ = connected_components(P, directed=False)
    return SpdAuditReport(
        n_rows=P.shape[0],
        matrix_norm=norm,
        symmetry_residual=sym,
        min_row_margin=float(margin.min()) if margin.size else 0.0,
        weakly_dominant=bool(np.all(margin >= -tol)),
        strictly_dominant_rows=int(np.sum(margin > tol)),
        n_components=int(n_comp),
    )


def write_matrix_market(mat, path):
    """Dump a sparse matrix in Matrix Market coordinate text format."""
    coo = sparse.coo_matrix(mat)
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i + 1} {j + 1} {v:.17g}\n")
