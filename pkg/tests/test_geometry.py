import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from imagescc.data import FIXTURES, fixture_paths, load_fixture
from imagescc.errors import DegenerateTriangle, InvalidMesh, ParseError
from imagescc.geometry import (OUTSIDE, TriangulationMesh, barycentric, lattice_grid, load_mesh, mesh_stats,
                               save_mesh, square_mesh)

from oracles import bary_cramer

coord = st.floats(-5, 5, allow_nan=False)
point = st.tuples(coord, coord)


def _area(c):
    return 0.5 * abs((c[1][0] - c[0][0]) * (c[2][1] - c[0][1]) - (c[2][0] - c[0][0]) * (c[1][1] - c[0][1]))


@given(st.tuples(point, point, point), point)
def test_barycentric_reconstructs_point(corners, z):
    c = np.array(corners)
    longest = max(np.linalg.norm(c[i] - c[j]) for i, j in ((0, 1), (1, 2), (0, 2)))
    assume(_area(c) > 1e-3 * max(longest, 1e-9) ** 2)
    b = barycentric(c, np.array(z))
    assert abs(b.sum() - 1) < 1e-9
    np.testing.assert_allclose(b @ c, z, atol=1e-8 * (1 + np.abs(c).max()))
    np.testing.assert_allclose(b, bary_cramer(c, z), atol=1e-7)


def test_barycentric_degenerate_raises():
    with pytest.raises(DegenerateTriangle):
        barycentric([[0, 0], [1, 1], [2, 2]], [0.5, 0.5])


def test_vertices_have_unit_coordinates():
    c = np.array([[0.0, 0.0], [2.0, 0.1], [0.3, 1.7]])
    np.testing.assert_allclose(barycentric(c, c), np.eye(3), atol=1e-14)


@given(pts=st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=30))
def test_locate_finds_a_containing_triangle(pts, four_triangles):
    pts = np.array(pts)
    tri = four_triangles.locate(pts)
    for z, t in zip(pts, tri):
        inside = [k for k in range(4) if bary_cramer(four_triangles.corners[k], z).min() >= -1e-10]
        if inside:
            assert t == min(inside)
        else:
            assert t == OUTSIDE


def test_shared_edge_goes_to_lowest_index(two_triangles):
    assert two_triangles.locate([[0.5, 0.5]])[0] == 0
    assert two_triangles.locate([[2.0, 2.0]])[0] == OUTSIDE


def test_mesh_properties(two_triangles):
    m = two_triangles
    assert m.area == pytest.approx(1.0)
    assert len(m.interior_edges) == 1 and len(m.boundary_edges) == 4
    assert m.boundary_polygon_area() == pytest.approx(1.0)
    assert len(m.boundary_loops()) == 1


@pytest.mark.parametrize("verts,tris,msg", [
    ([[0, 0], [1, 0], [2, 0]], [[0, 1, 2]], "degenerate"),
    ([[0, 0], [1, 0], [0, 1]], [[0, 1, 3]], "out of range"),
    ([[0, 0], [1, 0], [0, 1]], [[0, 1, 1]], "repeated"),
    ([[0, 0], [1, 0], [0, 1], [0, 0]], [[0, 1, 2], [3, 1, 2]], "duplicate"),
    ([[0, 0], [1, 0], [0, 1], [1, 1], [-1, -1]], [[0, 1, 2], [1, 2, 3], [1, 2, 4]], "more than two"),
    ([[0, np.nan], [1, 0], [0, 1]], [[0, 1, 2]], "finite"),
])
def test_invalid_meshes(verts, tris, msg):
    with pytest.raises(InvalidMesh, match=msg):
        TriangulationMesh(verts, tris)


def test_csv_round_trip(tmp_path, four_triangles):
    v, t = tmp_path / "v.csv", tmp_path / "t.csv"
    save_mesh(four_triangles, v, t)
    back = load_mesh(v, t)
    assert back.structurally_equal(four_triangles)


@pytest.mark.parametrize("vtext,ttext,line", [
    ("id,z1,z2\n0,0,0\n1,1,0\n2,0,x\n", "id,v1,v2,v3\n0,0,1,2\n", 4),
    ("id,z1,z2\n0,0,0\n2,1,0\n", "id,v1,v2,v3\n0,0,1,2\n", 3),
    ("id,z1\n0,0\n", "id,v1,v2,v3\n0,0,1,2\n", 1),
    ("id,z1,z2\n0,0,0\n1,1,0\n2,0,1\n", "id,v1,v2,v3\n0,0,1\n", 2),
])
def test_parse_errors_carry_line_numbers(tmp_path, vtext, ttext, line):
    v, t = tmp_path / "v.csv", tmp_path / "t.csv"
    v.write_text(vtext)
    t.write_text(ttext)
    with pytest.raises(ParseError) as info:
        load_mesh(v, t)
    assert info.value.line == line


def test_fixture_meshes():
    expected = {"brain_d1": (49, 38), "brain_d2": (80, 54), "brain_d3": (144, 87), "square_4": (32, 25)}
    areas = []
    for name in FIXTURES:
        m = load_fixture(name)
        assert (m.n_triangles, m.n_vertices) == expected[name]
        assert all(p.exists() for p in fixture_paths(name))
        if name.startswith("brain"):
            areas.append(m.area)
    np.testing.assert_allclose(areas, areas[0], rtol=1e-12)
    assert mesh_stats(load_fixture("brain_d3"))["size"] < mesh_stats(load_fixture("brain_d1"))["size"]


def test_fixture_pixel_counts():
    m = load_fixture("brain_d1")
    assert lattice_grid(m, 40).n == 921
    assert lattice_grid(m, 79).n == 3682


def test_lattice_grid_image_round_trip(square4):
    g = lattice_grid(square4, 7, 5)
    assert g.n == 35 and g.shape == (5, 7)
    img = g.to_image(np.arange(g.n))
    assert img[0, 0] == 0 and img[0, 6] == 6 and img[1, 0] == 7


def test_square_mesh_area():
    for k in (1, 3):
        m = square_mesh(k, -1, 2)
        assert m.area == pytest.approx(9.0)
        assert m.n_triangles == 2 * k * k
