"""Triangulated 2D domains with an extracted closed boundary polyline.

A mesh couples the bulk triangulation of a planar domain with the induced
surface mesh (the boundary cycle) and the trace map between surface node
numbering and bulk vertex numbering.  Meshes are immutable after
construction and validated against the structural invariants below.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay

from .errors import InvalidArgumentError, InvariantViolationError, ParseError

log = logging.getLogger(__name__)

MESH_FORMAT_HEADER = "bse-mesh 1"


@dataclass(frozen=True)
class Measures:
    """Discrete measures of the domain: triangulated area and boundary length."""

    area: float
    perimeter: float


@dataclass(frozen=True, eq=False)
class Mesh:
    """Bulk triangulation plus its boundary polyline.

    Attributes
    ----------
    vertices : (nv, 2) float array
        Bulk vertex coordinates.
    triangles : (nt, 3) int array
        Counterclockwise vertex index triples.
    surface_nodes : (ns,) int array
        Bulk vertex indices along the boundary, in cycle order.  Entry ``i``
        is the bulk index of surface node ``i`` (the trace map).
    """

    vertices: np.ndarray
    triangles: np.ndarray
    surface_nodes: np.ndarray
    _measures: Measures = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        vertices = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        triangles = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.int64))
        surface = np.ascontiguousarray(np.asarray(self.surface_nodes, dtype=np.int64))
        for arr, name in ((vertices, "vertices"), (triangles, "triangles"), (surface, "surface_nodes")):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        _validate(vertices, triangles, surface)
        object.__setattr__(self, "_measures", _compute_measures(vertices, triangles, surface))

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    @property
    def n_surface(self):
        return self.surface_nodes.shape[0]

    @property
    def surface_edges(self):
        """Boundary edges as (ns, 2) bulk-index pairs in cycle order."""
        s = self.surface_nodes
        return np.column_stack([s, np.roll(s, -1)])

    @property
    def trace_map(self):
        """surface index -> bulk vertex index (alias of surface_nodes)."""
        return self.surface_nodes

    def trace_inverse(self):
        """bulk vertex index -> surface index as a dict."""
        return {int(b): i for i, b in enumerate(self.surface_nodes)}

    def surface_lengths(self):
        """Length of each boundary edge, in cycle order."""
        e = self.surface_edges
        d = self.vertices[e[:, 1]] - self.vertices[e[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def surface_arclength(self):
        """Cumulative arclength coordinate of each surface node (starts at 0)."""
        ell = self.surface_lengths()
        return np.concatenate(([0.0], np.cumsum(ell[:-1])))


def measures(mesh: Mesh) -> Measures:
    """Triangulated area |Omega_h| and boundary length |Gamma_h|."""
    return mesh._measures


def _signed_areas(vertices, triangles):
    p0 = vertices[triangles[:, 0]]
    p1 = vertices[triangles[:, 1]]
    p2 = vertices[triangles[:, 2]]
    return 0.5 * ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
                  - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1]))


def _compute_measures(vertices, triangles, surface):
    area = float(np.sum(_signed_areas(vertices, triangles)))
    d = vertices[np.roll(surface, -1)] - vertices[surface]
    perimeter = float(np.sum(np.hypot(d[:, 0], d[:, 1])))
    return Measures(area=area, perimeter=perimeter)


def _edge_counts(triangles):
    """Map undirected edge -> number of incident triangles."""
    edges = {}
    for tri in triangles:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (int(a), int(b)) if a < b else (int(b), int(a))
            edges[key] = edges.get(key, 0) + 1
    return edges


def _validate(vertices, triangles, surface):
    nv = vertices.shape[0]
    if triangles.size and (triangles.min() < 0 or triangles.max() >= nv):
        raise InvariantViolationError("triangle index out of range")
    if surface.size and (surface.min() < 0 or surface.max() >= nv):
        raise InvariantViolationError("surface index out of range")
    areas = _signed_areas(vertices, triangles)
    if np.any(areas <= 0.0):
        bad = int(np.argmin(areas))
        raise InvariantViolationError(
            f"triangle {bad} has non-positive signed area {areas[bad]:.3e}")
    if len(np.unique(surface)) != len(surface):
        raise InvariantViolationError("surface cycle visits a node twice")
    edges = _edge_counts(triangles)
    if any(c > 2 for c in edges.values()):
        raise InvariantViolationError("non-manifold edge (more than two incident triangles)")
    boundary_edges = {e for e, c in edges.items() if c == 1}
    cycle_edges = set()
    ns = len(surface)
    for i in range(ns):
        a, b = int(surface[i]), int(surface[(i + 1) % ns])
        cycle_edges.add((a, b) if a < b else (b, a))
    if len(cycle_edges) != ns:
        raise InvariantViolationError("surface cycle has a repeated edge")
    if cycle_edges != boundary_edges:
        raise InvariantViolationError(
            "surface cycle does not match the triangulation boundary; "
            "boundary must be a single closed cycle")
    boundary_vertices = {v for e in boundary_edges for v in e}
    if boundary_vertices != set(int(s) for s in surface):
        raise InvariantViolationError("trace map is not a bijection onto the boundary vertices")
    # Euler relation for a triangulated disk-like domain
    euler = nv - len(edges) + triangles.shape[0]
    if euler != 1:
        raise InvariantViolationError(f"Euler characteristic V-E+T = {euler}, expected 1")


def triangle_aspect_ratios(mesh: Mesh):
    """Per-triangle aspect ratio: longest edge over twice the inradius."""
    v = mesh.vertices
    t = mesh.triangles
    a = np.linalg.norm(v[t[:, 1]] - v[t[:, 2]], axis=1)
    b = np.linalg.norm(v[t[:, 2]] - v[t[:, 0]], axis=1)
    c = np.linalg.norm(v[t[:, 0]] - v[t[:, 1]], axis=1)
    s = 0.5 * (a + b + c)
    area = _signed_areas(v, t)
    inradius = area / s
    return np.maximum(np.maximum(a, b), c) / (2.0 * inradius)


def max_edge_length(mesh: Mesh) -> float:
    v = mesh.vertices
    t = mesh.triangles
    lengths = [np.linalg.norm(v[t[:, i]] - v[t[:, j]], axis=1) for i, j in ((0, 1), (1, 2), (2, 0))]
    return float(np.max(lengths))


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------

def generate_disk(n_boundary: int, refine: int = 0) -> Mesh:
    """Quasi-uniform triangulation of the unit disk.

    The boundary is the regular inscribed ``n_boundary``-gon.  Interior
    nodes sit on concentric rings spaced to match the boundary edge length;
    each refinement level quadrisects every triangle and projects new
    boundary midpoints back onto the unit circle, doubling the surface
    node count.
    """
    if n_boundary < 8:
        raise InvalidArgumentError(f"n_boundary must be >= 8, got {n_boundary}")
    if refine < 0:
        raise InvalidArgumentError(f"refine must be >= 0, got {refine}")
    # ring spacing ~1.9x the boundary edge keeps dense-eigensolver dimensions
    # tractable while the max-angle condition preserves O(h^2) convergence
    n_rings = max(1, round(n_boundary / 12.0))
    pts = [(0.0, 0.0)]
    ring_counts = []
    for j in range(1, n_rings + 1):
        radius = j / n_rings
        count = n_boundary if j == n_rings else max(6, round(n_boundary * j / n_rings))
        ring_counts.append(count)
        offset = 0.5 * (j % 2)  # stagger alternate rings for triangle quality
        ang = 2.0 * np.pi * (np.arange(count) + offset) / count
        pts.extend(zip(radius * np.cos(ang), radius * np.sin(ang)))
    points = np.array(pts)
    tri = Delaunay(points)
    triangles = _orient_ccw(points, tri.simplices.astype(np.int64))
    surface = np.arange(len(points) - n_boundary, len(points), dtype=np.int64)
    mesh = Mesh(points, triangles, surface)
    for _ in range(refine):
        mesh = _refine(mesh, project_unit_circle=True)
    return mesh


def generate_square(n_per_side: int) -> Mesh:
    """Structured right-triangle grid on the unit square [0,1]^2."""
    if n_per_side < 2:
        raise InvalidArgumentError(f"n_per_side must be >= 2, got {n_per_side}")
    n = n_per_side
    xs = np.linspace(0.0, 1.0, n + 1)
    xv, yv = np.meshgrid(xs, xs, indexing="xy")
    vertices = np.column_stack([xv.ravel(), yv.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    triangles = []
    for j in range(n):
        for i in range(n):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            # consistent diagonal direction keeps refinements nested
            triangles.append((v00, v10, v11))
            triangles.append((v00, v11, v01))
    surface = (
        [vid(i, 0) for i in range(n)]
        + [vid(n, j) for j in range(n)]
        + [vid(i, n) for i in range(n, 0, -1)]
        + [vid(0, j) for j in range(n, 0, -1)]
    )
    return Mesh(vertices, np.array(triangles, dtype=np.int64), np.array(surface, dtype=np.int64))


def _orient_ccw(vertices, triangles):
    areas = _signed_areas(vertices, triangles)
    flipped = triangles.copy()
    neg = areas < 0
    flipped[neg, 1], flipped[neg, 2] = triangles[neg, 2], triangles[neg, 1]
    return flipped


def _refine(mesh: Mesh, project_unit_circle: bool = False) -> Mesh:
    """Quadrisect every triangle; optionally re-project boundary midpoints."""
    verts = list(map(tuple, mesh.vertices))
    boundary_edges = {tuple(sorted(e)) for e in mesh.surface_edges.tolist()}
    midpoint = {}

    def mid(a, b):
        key = (a, b) if a < b else (b, a)
        idx = midpoint.get(key)
        if idx is None:
            p = 0.5 * (mesh.vertices[a] + mesh.vertices[b])
            if project_unit_circle and key in boundary_edges:
                p = p / np.hypot(p[0], p[1])
            idx = len(verts)
            verts.append((float(p[0]), float(p[1])))
            midpoint[key] = idx
        return idx

    new_tris = []
    for i0, i1, i2 in mesh.triangles.tolist():
        m01, m12, m20 = mid(i0, i1), mid(i1, i2), mid(i2, i0)
        new_tris.extend([(i0, m01, m20), (m01, i1, m12), (m20, m12, i2), (m01, m12, m20)])

    new_surface = []
    s = mesh.surface_nodes.tolist()
    for i in range(len(s)):
        a, b = s[i], s[(i + 1) % len(s)]
        new_surface.append(a)
        new_surface.append(midpoint[(a, b) if a < b else (b, a)])
    return Mesh(np.array(verts), np.array(new_tris, dtype=np.int64),
                np.array(new_surface, dtype=np.int64))


# ---------------------------------------------------------------------------
# Plain-text mesh files
# ---------------------------------------------------------------------------

def write_mesh(mesh: Mesh, path):
    """Write the text format: header, vertices, triangles, surface cycle."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{MESH_FORMAT_HEADER}\n")
        fh.write(f"vertices {mesh.n_vertices}\n")
        for x, y in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g}\n")
        fh.write(f"triangles {mesh.n_triangles}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"{i} {j} {k}\n")
        fh.write(f"surface {mesh.n_surface}\n")
        for i in mesh.surface_nodes:
            fh.write(f"{i}\n")


def read_mesh(path) -> Mesh:
    """Parse the text format; raises ParseError with a line number on bad input."""
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    pos = 0

    def next_line():
        nonlocal pos
        while pos < len(lines) and not lines[pos].strip():
            pos += 1
        if pos >= len(lines):
            raise ParseError("unexpected end of file", line=len(lines))
        pos += 1
        return lines[pos - 1].strip(), pos

    header, ln = next_line()
    if header != MESH_FORMAT_HEADER:
        raise ParseError(f"expected header '{MESH_FORMAT_HEADER}'", line=ln)

    def section(name):
        text, ln = next_line()
        parts = text.split()
        if len(parts) != 2 or parts[0] != name:
            raise ParseError(f"expected '{name} N'", line=ln)
        try:
            return int(parts[1])
        except ValueError:
            raise ParseError(f"bad count in '{name}' section", line=ln) from None

    nv = section("vertices")
    vertices = np.empty((nv, 2))
    for i in range(nv):
        text, ln = next_line()
        parts = text.split()
        if len(parts) != 2:
            raise ParseError("expected 'x y'", line=ln)
        try:
            vertices[i] = [float(parts[0]), float(parts[1])]
        except ValueError:
            raise ParseError("bad float in vertex line", line=ln) from None

    nt = section("triangles")
    triangles = np.empty((nt, 3), dtype=np.int64)
    for i in range(nt):
        text, ln = next_line()
        parts = text.split()
        if len(parts) != 3:
            raise ParseError("expected 'i j k'", line=ln)
        try:
            triangles[i] = [int(p) for p in parts]
        except ValueError:
            raise ParseError("bad index in triangle line", line=ln) from None

    ns = section("surface")
    surface = np.empty(ns, dtype=np.int64)
    for i in range(ns):
        text, ln = next_line()
        try:
            surface[i] = int(text)
        except ValueError:
            raise ParseError("bad index in surface line", line=ln) from None

    return Mesh(vertices, triangles, surface)
