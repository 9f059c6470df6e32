import math

import numpy as np
import pytest

from bse import mesh
from bse.errors import InvalidArgumentError, InvariantViolationError, ParseError


def polygon_area(n):
    return (n / 2.0) * math.sin(2.0 * math.pi / n)


def polygon_perimeter(n):
    return 2.0 * n * math.sin(math.pi / n)


def test_disk_8_measures_match_polygon_formulas():
    m = mesh.generate_disk(8, 0)
    assert m.n_surface == 8
    mm = mesh.measures(m)
    assert mm.area == pytest.approx(polygon_area(8), rel=1e-12)
    assert mm.perimeter == pytest.approx(polygon_perimeter(8), rel=1e-12)
    assert mm.perimeter == pytest.approx(6.1229349, abs=1e-6)
    assert mm.area == pytest.approx(2.8284271, abs=1e-6)


@pytest.mark.parametrize("n,r", [(8, 0), (8, 3), (16, 2), (64, 1)])
def test_surface_count_doubles_per_refinement(n, r):
    assert mesh.generate_disk(n, r).n_surface == n * 2 ** r


def test_disk_64_refine2_close_to_circle():
    mm = mesh.measures(mesh.generate_disk(64, 2))
    assert abs(mm.area / math.pi - 1) < 1e-3
    assert abs(mm.perimeter / (2 * math.pi) - 1) < 1e-3


def test_refined_measures_match_polygon_formulas():
    # refined boundary is again an inscribed regular polygon
    mm = mesh.measures(mesh.generate_disk(16, 2))
    assert mm.perimeter == pytest.approx(polygon_perimeter(64), rel=1e-12)


def test_square_small_counts():
    m = mesh.generate_square(2)
    assert m.n_vertices == 9
    assert m.n_triangles == 8
    assert m.n_surface == 8
    mm = mesh.measures(m)
    assert mm.area == 1.0
    assert mm.perimeter == 4.0


def test_square_exact_measures_any_n():
    for n in (2, 3, 7, 16):
        mm = mesh.measures(mesh.generate_square(n))
        assert mm.area == pytest.approx(1.0, abs=1e-15)
        assert mm.perimeter == pytest.approx(4.0, abs=1e-15)


def test_square_4_euler_counts():
    m = mesh.generate_square(4)
    assert m.n_vertices == 25
    assert m.n_triangles == 32
    edges = set()
    for t in m.triangles:
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            edges.add((min(a, b), max(a, b)))
    assert len(edges) == 56
    assert 25 - 56 + 32 == 1


def test_single_reference_triangle_measures():
    m = mesh.Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
                  np.array([[0, 1, 2]]), np.array([0, 1, 2]))
    assert mesh.measures(m).area == pytest.approx(0.5, abs=1e-15)


def test_generator_argument_validation():
    with pytest.raises(InvalidArgumentError):
        mesh.generate_disk(7, 0)
    with pytest.raises(InvalidArgumentError):
        mesh.generate_disk(8, -1)
    with pytest.raises(InvalidArgumentError):
        mesh.generate_square(1)


def test_roundtrip_identity(tmp_path):
    m = mesh.generate_disk(16, 0)
    path = tmp_path / "disk.txt"
    mesh.write_mesh(m, path)
    m2 = mesh.read_mesh(path)
    np.testing.assert_array_equal(m.vertices, m2.vertices)
    np.testing.assert_array_equal(m.triangles, m2.triangles)
    np.testing.assert_array_equal(m.surface_nodes, m2.surface_nodes)


def test_read_rejects_zero_area_triangle(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text(
        "bse-mesh 1\nvertices 3\n0 0\n1 0\n2 0\ntriangles 1\n0 1 2\nsurface 3\n0\n1\n2\n")
    with pytest.raises(InvariantViolationError, match="area"):
        mesh.read_mesh(path)


def test_read_rejects_two_boundary_loops(tmp_path):
    # two disjoint triangles cannot form a single closed boundary cycle
    path = tmp_path / "two.txt"
    path.write_text(
        "bse-mesh 1\nvertices 6\n0 0\n1 0\n0 1\n5 5\n6 5\n5 6\n"
        "triangles 2\n0 1 2\n3 4 5\nsurface 6\n0\n1\n2\n3\n4\n5\n")
    with pytest.raises(InvariantViolationError):
        mesh.read_mesh(path)


def test_read_bad_header_reports_line(tmp_path):
    path = tmp_path / "hdr.txt"
    path.write_text("not-a-mesh\n")
    with pytest.raises(ParseError, match="line 1"):
        mesh.read_mesh(path)


def test_read_bad_float_reports_line(tmp_path):
    path = tmp_path / "f.txt"
    path.write_text("bse-mesh 1\nvertices 1\n0 zap\ntriangles 0\nsurface 0\n")
    with pytest.raises(ParseError, match="line 3"):
        mesh.read_mesh(path)


@pytest.mark.parametrize("n", [16, 64])
def test_aspect_ratio_bounded_across_refinement(n):
    base = mesh.triangle_aspect_ratios(mesh.generate_disk(n, 0)).max()
    for r in (1, 2):
        ratio = mesh.triangle_aspect_ratios(mesh.generate_disk(n, r)).max()
        assert ratio <= 1.25 * base


def test_trace_map_bijection_roundtrip():
    m = mesh.generate_disk(32, 1)
    inv = m.trace_inverse()
    for i, b in enumerate(m.trace_map):
        assert inv[int(b)] == i
    boundary = {int(v) for e in m.surface_edges for v in e}
    assert boundary == set(int(b) for b in m.trace_map)


def test_mesh_arrays_immutable():
    m = mesh.generate_disk(8, 0)
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 5.0


def test_surface_arclength_monotone():
    m = mesh.generate_disk(16, 0)
    s = m.surface_arclength()
    assert s[0] == 0.0
    assert np.all(np.diff(s) > 0)
    total = s[-1] + m.surface_lengths()[-1]
    assert total == pytest.approx(mesh.measures(m).perimeter, rel=1e-13)
