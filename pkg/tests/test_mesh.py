import numpy as np
import pytest

from g2duct.errors import GeometryError, MeshFormatError
from g2duct.mesh import (CROSSED, INLET, OUTLET, RIGHT, TAGS, WALL_BUFFER, WALL_CONTRACTION,
                         DuctGeometry, build_base_mesh, build_rectangle_mesh, duct_mesh,
                         mark_points, read_mesh, refine_boundary, refine_points,
                         refine_uniform, write_mesh)


def interior_edge_counts(mesh):
    e = np.sort(mesh.cells[:, [[1, 2], [0, 2], [0, 1]]].reshape(-1, 2), axis=1)
    _, counts = np.unique(e, axis=0, return_counts=True)
    return counts


def assert_valid(mesh, geom=None):
    assert mesh.check()
    assert np.all(mesh.signed_areas() > 0)
    assert interior_edge_counts(mesh).max() <= 2
    bnd = {tuple(map(int, e)) for e in mesh.boundary_edges}
    assert bnd == set(mesh.facet_tags)
    assert set(mesh.facet_tags.values()) <= set(TAGS)
    if geom is not None:
        assert mesh.area() == pytest.approx(geom.area, abs=1e-12)
        for i, j in mesh.edges_with_tag(WALL_CONTRACTION):
            xs = mesh.vertices[[i, j], 0]
            assert xs.min() >= -1e-12 and xs.max() <= geom.L + 1e-12
            ys = np.abs(mesh.vertices[[i, j], 1])
            assert np.allclose(ys, geom.half_height(xs), atol=1e-12)


class TestGeometry:
    def test_area_formula(self, geom):
        assert geom.area == pytest.approx(2 * 1 + 1 * 1.5 + 2 * 0.5 * 1)

    @pytest.mark.parametrize("kw", [dict(H=0.0), dict(H=1.5), dict(b_i=0.0), dict(L=-1.0),
                                    dict(b_o=0.0)])
    def test_rejects_degenerate(self, kw):
        with pytest.raises(GeometryError):
            DuctGeometry(**kw)

    def test_half_height(self, geom):
        assert geom.half_height(-0.5) == 1.0
        assert geom.half_height(0.5) == pytest.approx(0.75)
        assert geom.half_height(1.5) == 0.5

    def test_chamfer_area(self):
        g = DuctGeometry(chamfer=0.05)
        m = build_base_mesh(g, 2, CROSSED)
        assert_valid(m)
        assert m.area() == pytest.approx(g.area, abs=1e-12)
        assert g.area > DuctGeometry().area


class TestBaseMesh:
    def test_right_split_counts(self, right_mesh, geom):
        # every quad becomes two triangles
        assert_valid(right_mesh, geom)
        assert right_mesh.split_kind == RIGHT
        assert right_mesh.provenance == (0, 0, 0)

    def test_crossed_area(self, base_mesh, geom):
        assert_valid(base_mesh, geom)
        assert base_mesh.area() == pytest.approx(4.5, abs=1e-12)

    def test_crossed_unit_square(self):
        m = build_rectangle_mesh(0, 1, 0, 1, 32, CROSSED)
        assert m.n_cells == 4 * 32**2
        assert_valid(m)
        r = build_rectangle_mesh(0, 1, 0, 1, 8, RIGHT)
        assert r.n_cells == 2 * 8**2

    def test_tags(self, base_mesh, geom):
        v = base_mesh.vertices
        for tag, x in ((INLET, -geom.b_i), (OUTLET, geom.L + geom.b_o)):
            e = base_mesh.edges_with_tag(tag)
            assert len(e) > 0
            assert np.allclose(v[e.ravel(), 0], x)
        assert len(base_mesh.edges_with_tag(WALL_BUFFER)) > 0
        assert len(base_mesh.edges_with_tag(WALL_CONTRACTION)) > 0

    def test_rectangle_wall_tag(self):
        m = build_rectangle_mesh(0, 1, -1, 1, 2, wall_tag=WALL_CONTRACTION)
        assert set(m.facet_tags.values()) == {INLET, OUTLET, WALL_CONTRACTION}
        with pytest.raises(GeometryError):
            build_rectangle_mesh(0, 1, -1, 1, 2, wall_tag="nope")

    def test_corners_are_vertices(self, base_mesh, geom):
        for c in geom.corners():
            assert np.min(np.linalg.norm(base_mesh.vertices - c, axis=1)) < 1e-12


class TestRefinement:
    def test_uniform_counts(self, base_mesh, geom):
        m = refine_uniform(base_mesh)
        assert m.n_cells == 4 * base_mesh.n_cells
        assert len(m.boundary_edges) == 2 * len(base_mesh.boundary_edges)
        assert m.provenance == (1, 0, 0)
        assert m.diameters().max() == pytest.approx(base_mesh.diameters().max() / 2, abs=1e-12)
        assert_valid(m, geom)
        m2 = refine_uniform(m)
        assert m2.n_cells == 16 * base_mesh.n_cells

    def test_uniform_inherits_tags(self, base_mesh):
        m = refine_uniform(base_mesh)
        for tag in TAGS:
            old = sum(np.linalg.norm(np.diff(base_mesh.vertices[e], axis=0))
                      for e in base_mesh.edges_with_tag(tag))
            new = sum(np.linalg.norm(np.diff(m.vertices[e], axis=0))
                      for e in m.edges_with_tag(tag))
            assert new == pytest.approx(old, abs=1e-12)
            assert len(m.edges_with_tag(tag)) == 2 * len(base_mesh.edges_with_tag(tag))

    def test_boundary_refinement(self, base_mesh, geom):
        m = refine_boundary(base_mesh, geom)
        assert m.provenance == (0, 1, 0)
        assert_valid(m, geom)

        def longest(mesh):
            e = mesh.edges_with_tag(WALL_CONTRACTION)
            return np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1).max()

        assert longest(m) < longest(base_mesh)

    def test_boundary_refinement_empty_marks(self, base_mesh, geom):
        m = refine_boundary(base_mesh, geom, centers=((50.0, 50.0),))
        assert m.provenance == (0, 1, 0)
        assert np.array_equal(m.cells, base_mesh.cells)
        assert np.array_equal(m.vertices, base_mesh.vertices)

    def test_point_refinement(self, base_mesh, geom):
        corner = np.array([geom.L, geom.H])

        def smallest_at_corner(mesh):
            cells = mark_points(mesh, [corner])
            return mesh.diameters()[cells].min()

        ring = mark_points(base_mesh, [corner])
        assert len(ring) >= 2
        m = base_mesh
        for _ in range(3):
            new = refine_points(m, geom)
            assert_valid(new, geom)
            assert smallest_at_corner(new) <= 0.5 * smallest_at_corner(m) + 1e-12
            m = new
        assert m.provenance == (0, 0, 3)

    def test_sequence_invariants(self, geom):
        m = duct_mesh(geom, 2, CROSSED, r_u=1, r_b=2, r_p=3)
        assert m.provenance == (1, 2, 3)
        assert_valid(m, geom)

    def test_right_split_refines(self, right_mesh, geom):
        m = refine_points(refine_boundary(right_mesh, geom), geom)
        assert_valid(m, geom)


class TestIO:
    def test_round_trip(self, tmp_path, geom):
        m = duct_mesh(geom, 2, CROSSED, 0, 2, 2)
        p = tmp_path / "m.txt"
        write_mesh(m, p)
        assert p.read_text().splitlines()[0] == "g2duct-mesh v1"
        back = read_mesh(p)
        assert np.array_equal(back.vertices, m.vertices)
        assert np.array_equal(back.cells, m.cells)
        assert back.facet_tags == m.facet_tags

    def test_bad_header(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("not a mesh\n")
        with pytest.raises(MeshFormatError):
            read_mesh(p)

    def test_bad_tag_and_numbers(self, tmp_path, base_mesh):
        p = tmp_path / "m.txt"
        write_mesh(base_mesh, p)
        text = p.read_text()
        (tmp_path / "t.txt").write_text(text.replace("inlet", "sideways", 1))
        with pytest.raises(MeshFormatError):
            read_mesh(tmp_path / "t.txt")
        lines = text.splitlines()
        lines[2] = "x y"
        (tmp_path / "n.txt").write_text("\n".join(lines))
        with pytest.raises(MeshFormatError):
            read_mesh(tmp_path / "n.txt")
