import numpy as np
import pytest

from rrsmooth import mesh as m
from rrsmooth.errors import NonPlanarPatch
from rrsmooth.generate import (
    CUBE,
    EQUILATERAL,
    SQUARE,
    GeneratorSpec,
    PlantSliver,
    RandomJitter,
    VertexDisplace,
    gen_mesh,
    perturb_mesh,
)


def unit_square_two_tris():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    cells = np.array([[0, 1, 2], [0, 2, 3]])
    return m.SimplexMesh(verts, cells)


class TestValidate:
    def test_valid_mesh_has_no_violations(self):
        assert m.validate(unit_square_two_tris()) == []

    def test_swapped_cell_reports_orientation(self):
        bad = unit_square_two_tris()
        bad.cells[0] = bad.cells[0][[0, 2, 1]]
        v = m.validate(bad)
        assert len(v) == 1
        assert v[0].rule == "non-positive-orientation"
        assert v[0].index == 0

    def test_out_of_range_index(self):
        bad = unit_square_two_tris()
        bad.cells[1, 2] = 4
        v = m.validate(bad)
        assert any(x.rule == "index-out-of-range" and x.index == 1 for x in v)

    def test_repeated_vertex(self):
        bad = unit_square_two_tris()
        bad.cells[1, 2] = bad.cells[1, 0]
        v = m.validate(bad)
        assert any(x.rule == "repeated-vertex" for x in v)

    def test_repair_orientation(self):
        bad = unit_square_two_tris()
        bad.cells[0] = bad.cells[0][[0, 2, 1]]
        fixed, repaired = m.repair_orientation(bad.vertices, bad.cells)
        assert list(repaired) == [0]
        assert m.validate(m.SimplexMesh(bad.vertices, fixed)) == []


class TestGenerators:
    @pytest.mark.parametrize(
        "kind,n", [(EQUILATERAL, 4), (SQUARE, 3), (CUBE, 2)]
    )
    def test_generated_meshes_validate(self, kind, n):
        mesh = gen_mesh(GeneratorSpec(kind, n))
        assert m.validate(mesh) == []

    def test_equilateral_quality_is_one(self):
        mesh = gen_mesh(GeneratorSpec(EQUILATERAL, 4))
        stats = m.quality_stats(mesh)
        assert stats.n_cells == 32
        assert stats.min_q == pytest.approx(1.0, abs=1e-12)
        assert stats.max_q == pytest.approx(1.0, abs=1e-12)

    def test_square_grid_quality(self):
        mesh = gen_mesh(GeneratorSpec(SQUARE, 2))
        assert mesh.n_cells == 8
        stats = m.quality_stats(mesh)
        assert stats.min_q == pytest.approx(1.0 / 1.2071067811865475, rel=1e-10)
        assert stats.min_q == pytest.approx(stats.max_q)

    def test_cube_counts_and_volume(self):
        mesh = gen_mesh(GeneratorSpec(CUBE, 2))
        assert mesh.n_cells == 48
        vols = mesh.signed_measures()
        assert np.all(vols > 0)
        assert vols.sum() == pytest.approx(1.0, rel=1e-12)

    def test_invalid_spec(self):
        from rrsmooth.errors import InvalidSpec

        with pytest.raises(InvalidSpec):
            gen_mesh(GeneratorSpec(CUBE, 0))
        with pytest.raises(InvalidSpec):
            gen_mesh(GeneratorSpec("pyramid", 2))


class TestQualityStats:
    def test_histogram_sums_to_cell_count(self):
        mesh = gen_mesh(GeneratorSpec(SQUARE, 4))
        stats = m.quality_stats(mesh)
        assert stats.histogram.sum() == mesh.n_cells
        assert stats.min_q <= stats.mean_q <= stats.max_q

    def test_histogram_keeps_cells_with_roundoff_above_one(self):
        # Equilateral elements evaluate to q = 1 + a few ulp; they must land
        # in the top bin, not fall out of range.
        mesh = gen_mesh(GeneratorSpec(EQUILATERAL, 8))
        stats = m.quality_stats(mesh)
        assert stats.max_q >= 1.0
        assert stats.histogram.sum() == mesh.n_cells
        assert stats.histogram[-1] == mesh.n_cells

    def test_cell_order_permutation_invariant(self):
        mesh = gen_mesh(GeneratorSpec(SQUARE, 4))
        shuffled = m.SimplexMesh(mesh.vertices, mesh.cells[::-1].copy())
        a, b = m.quality_stats(mesh), m.quality_stats(shuffled)
        assert a.min_q == b.min_q and a.max_q == b.max_q
        assert np.array_equal(a.histogram, b.histogram)

    def test_planted_sliver_counts_below_threshold(self):
        mesh = gen_mesh(GeneratorSpec(CUBE, 4))
        slivered = perturb_mesh(mesh, PlantSliver(count=1, eps=0.01))
        stats = m.quality_stats(slivered)
        assert stats.below_threshold_count >= 1
        assert stats.min_q < 0.05


class TestClassifyBoundary:
    def test_fix_all_square(self):
        mesh = gen_mesh(GeneratorSpec(SQUARE, 4))
        tagged = m.classify_boundary(mesh, m.FIX_ALL)
        boundary = np.unique(m.boundary_facets(mesh)[0])
        assert np.array_equal(np.flatnonzero(tagged.fixed_mask()), boundary)
        # 4 sides of 3 interior vertices each plus 4 corners on the n=4 grid.
        assert tagged.fixed_mask().sum() == 16
        assert (~tagged.fixed_mask()).sum() == 9

    def test_slide_planar_cube(self):
        mesh = gen_mesh(GeneratorSpec(CUBE, 3))
        tagged = m.classify_boundary(mesh, m.SLIDE_PLANAR)
        kind = tagged.constraint_kind
        grid = np.round(mesh.vertices * 3).astype(int)
        on_face = (grid == 0) | (grid == 3)
        n_extreme = on_face.sum(axis=1)
        assert np.all(kind[n_extreme >= 2] == m.FIXED)
        face_interior = n_extreme == 1
        assert np.all(kind[face_interior] == m.SLIDE)
        assert np.all(kind[n_extreme == 0] == m.FREE)
        # Slide normals align with the face axis.
        for v in np.flatnonzero(face_interior):
            axis = np.flatnonzero(on_face[v])[0]
            assert abs(tagged.slide_normals[v, axis]) == pytest.approx(1.0)

    def test_sphere_surface_raises_non_planar(self):
        # Tet fan over an icosahedron: boundary is the curved surface.
        phi = (1 + np.sqrt(5)) / 2
        ico = np.array(
            [
                [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
                [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
                [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
            ],
            dtype=float,
        )
        faces = np.array(
            [
                [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
                [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
                [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
                [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
            ]
        )
        verts = np.vstack([ico, [[0.0, 0.0, 0.0]]])
        center = 12
        cells = np.array([[f[0], f[1], f[2], center] for f in faces])
        cells, _ = m.repair_orientation(verts, cells)
        sphere = m.SimplexMesh(verts, cells)
        assert m.validate(sphere) == []
        with pytest.raises(NonPlanarPatch):
            m.classify_boundary(sphere, m.SLIDE_PLANAR)


class TestStepBound:
    def test_zero_direction_is_unbounded(self):
        mesh = unit_square_two_tris()
        assert m.max_step_before_inversion(mesh, np.zeros_like(mesh.vertices)) == np.inf

    def test_single_triangle_height_bound(self):
        tri = m.SimplexMesh(
            np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 0.8]]), np.array([[0, 1, 2]])
        )
        d = np.zeros((3, 2))
        d[2, 1] = -1.0  # apex straight down at unit speed, inverts at its height
        lam = m.max_step_before_inversion(tri, d)
        assert lam == pytest.approx(0.8, rel=1e-12)

    def test_random_directions_keep_measures_positive(self, rng):
        mesh = gen_mesh(GeneratorSpec(CUBE, 2))
        for trial in range(10):
            d = rng.normal(size=mesh.vertices.shape)
            lam = m.max_step_before_inversion(mesh, d)
            assert np.isfinite(lam)
            moved = mesh.with_vertices(mesh.vertices + 0.999 * lam * d)
            assert np.all(moved.signed_measures() > 0)

    def test_bound_is_tight(self, rng):
        mesh = gen_mesh(GeneratorSpec(SQUARE, 3))
        for trial in range(10):
            d = rng.normal(size=mesh.vertices.shape)
            lam = m.max_step_before_inversion(mesh, d)
            moved = mesh.with_vertices(mesh.vertices + 1.01 * lam * d)
            assert np.any(moved.signed_measures() <= 0)


class TestPerturb:
    def test_jitter_zero_amplitude_is_identity(self):
        mesh = gen_mesh(GeneratorSpec(SQUARE, 4))
        out = perturb_mesh(mesh, RandomJitter(amplitude=0.0, seed=7))
        np.testing.assert_array_equal(out.vertices, mesh.vertices)

    def test_jitter_deterministic_and_valid(self):
        mesh = gen_mesh(GeneratorSpec(CUBE, 3))
        a = perturb_mesh(mesh, RandomJitter(amplitude=0.2, seed=11))
        b = perturb_mesh(mesh, RandomJitter(amplitude=0.2, seed=11))
        np.testing.assert_array_equal(a.vertices, b.vertices)
        assert m.validate(a) == []
        assert not np.array_equal(a.vertices, mesh.vertices)

    def test_jitter_leaves_boundary_alone(self):
        mesh = gen_mesh(GeneratorSpec(SQUARE, 4))
        out = perturb_mesh(mesh, RandomJitter(amplitude=0.3, seed=3))
        boundary = np.unique(m.boundary_facets(mesh)[0])
        np.testing.assert_array_equal(out.vertices[boundary], mesh.vertices[boundary])

    def test_displace_two_lattice_vertices(self):
        mesh = gen_mesh(GeneratorSpec(EQUILATERAL, 8))
        interior = np.flatnonzero(
            ~np.isin(np.arange(mesh.n_vertices), np.unique(m.boundary_facets(mesh)[0]))
        )
        a, b = interior[len(interior) // 3], interior[2 * len(interior) // 3]
        # 0.3 edge lengths, halfway between two lattice neighbor directions.
        d = (0.3 * np.cos(np.pi / 6), 0.3 * np.sin(np.pi / 6))
        moved = perturb_mesh(
            mesh, VertexDisplace(((int(a), d), (int(b), (-d[0], -d[1]))))
        )
        assert m.validate(moved) == []
        assert m.quality_stats(moved).min_q < 0.9

    def test_displace_across_facet_raises(self):
        tri = m.SimplexMesh(
            np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 0.8]]), np.array([[0, 1, 2]])
        )
        from rrsmooth.errors import WouldInvert

        with pytest.raises(WouldInvert):
            perturb_mesh(tri, VertexDisplace(((2, (0.0, -1.0)),)))

    def test_plant_slivers_deterministic(self):
        mesh = gen_mesh(GeneratorSpec(CUBE, 4))
        a = perturb_mesh(mesh, PlantSliver(count=2, eps=0.01))
        b = perturb_mesh(mesh, PlantSliver(count=2, eps=0.01))
        np.testing.assert_array_equal(a.vertices, b.vertices)
        assert m.validate(a) == []
        assert m.quality_stats(a).below_threshold_count >= 2


class TestXorShift:
    def test_deterministic_stream(self):
        from rrsmooth.generate import XorShift64Star

        a = XorShift64Star(12345)
        b = XorShift64Star(12345)
        seq_a = [a.next_float() for _ in range(100)]
        seq_b = [b.next_float() for _ in range(100)]
        assert seq_a == seq_b
        assert all(0.0 <= v < 1.0 for v in seq_a)
        assert len(set(seq_a)) == len(seq_a)

    def test_zero_seed_is_usable(self):
        from rrsmooth.generate import XorShift64Star

        r = XorShift64Star(0)
        vals = [r.next_symmetric() for _ in range(10)]
        assert any(v != vals[0] for v in vals)
        assert all(-1.0 <= v < 1.0 for v in vals)


class TestConstraintProjector:
    def test_projection_rules(self):
        mesh = gen_mesh(GeneratorSpec(CUBE, 2))
        tagged = m.classify_boundary(mesh, m.SLIDE_PLANAR)
        project = m.constraint_projector(tagged)
        field = np.ones_like(tagged.vertices)
        out = project(field)
        assert np.all(out[tagged.fixed_mask()] == 0.0)
        slide = tagged.slide_mask()
        dots = np.einsum("ij,ij->i", out[slide], tagged.slide_normals[slide])
        np.testing.assert_allclose(dots, 0.0, atol=1e-14)
        free = tagged.constraint_kind == m.FREE
        np.testing.assert_array_equal(out[free], field[free])
