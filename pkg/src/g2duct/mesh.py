"""Contracting-duct geometry, structured triangulations and local refinement.

The duct is the union of an inlet buffer ``[-b_i, 0] x [-1, 1]``, a linear
contraction ``0 <= x <= L`` narrowing from half-height 1 to ``H``, and an
outlet buffer ``[L, L + b_o] x [-H, H]``.  Base meshes are structured quad
grids mapped onto the three pieces and split into triangles.

Refinement is red-green: marked cells are split into four similar children,
hanging nodes are closed with green bisections, and green pairs are merged
back into their parent before they are refined again so that repeated local
refinement does not degrade the cell shapes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, MeshFormatError

INLET = "inlet"
OUTLET = "outlet"
WALL_BUFFER = "wall_buffer"
WALL_CONTRACTION = "wall_contraction"
TAGS = (INLET, OUTLET, WALL_BUFFER, WALL_CONTRACTION)

RIGHT = "right-triangle"
CROSSED = "crossed-triangle"
SPLITS = (RIGHT, CROSSED)

# marking data for the localized refinements of the default duct
BOUNDARY_CENTERS = ((0.4, 0.5), (0.4, -0.5))
BOUNDARY_RADIUS = 0.65
POINT_TOL = 1e-12


@dataclass(frozen=True)
class DuctGeometry:
    b_i: float = 1.0
    b_o: float = 1.0
    L: float = 1.0
    H: float = 0.5
    chamfer: float = 0.0  # > 0 cuts each re-entrant corner by this length

    def __post_init__(self):
        if not (self.b_i > 0 and self.b_o > 0 and self.L > 0):
            raise GeometryError("buffer and contraction lengths must be positive")
        if not (0 < self.H <= 1):
            raise GeometryError(f"outlet half-height H={self.H} must lie in (0, 1]")
        if self.chamfer < 0:
            raise GeometryError("chamfer length must be nonnegative")
        if self.chamfer > 0:
            if self.H == 1:
                raise GeometryError("a straight channel has no corner to chamfer")
            if self.chamfer >= min(self.b_o, self.wall_length) / 2:
                raise GeometryError("chamfer too long for the adjacent walls")

    @property
    def x_in(self) -> float:
        return -self.b_i

    @property
    def x_out(self) -> float:
        return self.L + self.b_o

    @property
    def wall_length(self) -> float:
        return math.hypot(self.L, 1.0 - self.H)

    @property
    def area(self) -> float:
        a = 2 * self.b_i + self.L * (1 + self.H) + 2 * self.H * self.b_o
        if self.chamfer > 0:
            a += 2 * self._chamfer_added_area()
        return a

    def _chamfer_points(self):
        c = self.chamfer
        tx, ty = self.L / self.wall_length, (self.H - 1.0) / self.wall_length
        return (self.L - c * tx, self.H - c * ty), (self.L + c, self.H)

    def _chamfer_added_area(self):
        # the chord of a re-entrant corner passes outside the domain
        (x1, y1), (x2, y2) = self._chamfer_points()
        cx, cy = self.L, self.H
        return abs((x1 - cx) * (y2 - cy) - (x2 - cx) * (y1 - cy)) / 2

    def breakpoints(self):
        """x-coordinates where the upper wall changes slope."""
        pts = [0.0, self.L]
        if self.chamfer > 0:
            (x1, _), (x2, _) = self._chamfer_points()
            pts += [x1, x2]
        return sorted(pts)

    def half_height(self, x):
        """Upper wall height as a function of x (vectorized)."""
        x = np.asarray(x, dtype=float)
        y = np.where(x <= 0, 1.0, np.where(x >= self.L, self.H,
                                            1.0 + (self.H - 1.0) * x / self.L))
        if self.chamfer > 0:
            (x1, y1), (x2, y2) = self._chamfer_points()
            on = (x > x1) & (x < x2)
            y = np.where(on, y1 + (y2 - y1) * (x - x1) / (x2 - x1), y)
        return y

    def corners(self):
        """The four endpoints of the contraction walls."""
        return ((self.L, self.H), (self.L, -self.H), (0.0, 1.0), (0.0, -1.0))


def _edge_key(a, b):
    return (a, b) if a < b else (b, a)


@dataclass
class Mesh:
    """Conforming triangulation with boundary tags and refinement history.

    ``vertices`` is ``(N, 2)``, ``cells`` is ``(M, 3)`` counter-clockwise.
    ``facet_tags`` maps sorted boundary vertex pairs to one of :data:`TAGS`.
    """

    vertices: np.ndarray
    cells: np.ndarray
    facet_tags: dict
    provenance: tuple = (0, 0, 0)
    split_kind: str = RIGHT
    # refinement bookkeeping: edge -> midpoint vertex, half edge -> parent edge,
    # and for green cells the parent triangle (-1 rows for regular cells)
    midpoints: dict = field(default_factory=dict, repr=False)
    parent_edge: dict = field(default_factory=dict, repr=False)
    green_parent: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.cells = np.ascontiguousarray(self.cells, dtype=np.int64)
        if self.green_parent is None:
            self.green_parent = -np.ones_like(self.cells)
        self._edges = None

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.cells)

    def _build_edges(self):
        c = self.cells
        # local edge j is opposite local vertex j
        loc = np.stack([c[:, [1, 2]], c[:, [0, 2]], c[:, [0, 1]]], axis=1)
        flat = np.sort(loc.reshape(-1, 2), axis=1)
        edges, inv, counts = np.unique(flat, axis=0, return_inverse=True,
                                       return_counts=True)
        self._edges = edges
        self._cell_edges = inv.reshape(-1, 3)
        self._edge_counts = counts

    @property
    def edges(self) -> np.ndarray:
        """Unique edges as sorted vertex pairs, shape ``(E, 2)``."""
        if self._edges is None:
            self._build_edges()
        return self._edges

    @property
    def cell_edges(self) -> np.ndarray:
        """Global edge index of local edge ``j`` (opposite vertex ``j``)."""
        if self._edges is None:
            self._build_edges()
        return self._cell_edges

    @property
    def boundary_edges(self) -> np.ndarray:
        if self._edges is None:
            self._build_edges()
        return self._edges[self._edge_counts == 1]

    def signed_areas(self):
        p = self.vertices[self.cells]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def area(self):
        return float(self.signed_areas().sum())

    def diameters(self):
        p = self.vertices[self.cells]
        lens = [np.linalg.norm(p[:, i] - p[:, j], axis=1) for i, j in ((0, 1), (1, 2), (2, 0))]
        return np.max(lens, axis=0)

    def edges_with_tag(self, tag):
        return np.array(sorted(e for e, t in self.facet_tags.items() if t == tag),
                        dtype=np.int64).reshape(-1, 2)

    def boundary_cells(self):
        """Cell index owning each tagged boundary edge, as a dict."""
        cached = self.__dict__.get("_owners")
        if cached is not None:
            return cached
        ce = self.cell_edges
        owner = {}
        e = self.edges
        for cell, row in enumerate(ce):
            for ge in row:
                if self._edge_counts[ge] == 1:
                    owner[(int(e[ge, 0]), int(e[ge, 1]))] = cell
        self.__dict__["_owners"] = owner
        return owner

    def check(self):
        """Raise if the conformity, orientation or tagging invariants fail."""
        if np.any(self.signed_areas() <= 0):
            raise GeometryError("cell with nonpositive signed area")
        counts = self._edge_counts if self._edges is not None else None
        if counts is None:
            self._build_edges()
            counts = self._edge_counts
        if np.any(counts > 2):
            raise GeometryError("edge shared by more than two cells")
        bnd = {tuple(map(int, e)) for e in self.boundary_edges}
        if bnd != set(self.facet_tags):
            raise GeometryError("boundary edges and facet tags disagree")
        # hanging vertices would sit in the interior of a boundary-less edge
        used = np.zeros(self.n_vertices, bool)
        used[self.cells.ravel()] = True
        if not used.all():
            raise GeometryError("unused vertex")
        return True


# ----------------------------------------------------------------------------
# base meshes

def _split_quads(xs, ys_of_col, split, mirror_rows=None):
    """Triangulate a structured grid whose column ``i`` has node heights
    ``ys_of_col[i]`` (all columns share the row count)."""
    nx = len(xs) - 1
    ny = len(ys_of_col[0]) - 1
    verts = [(x, y) for i, x in enumerate(xs) for y in ys_of_col[i]]
    vid = lambda i, j: i * (ny + 1) + j
    cells = []
    for i in range(nx):
        for j in range(ny):
            v00, v10, v11, v01 = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            if split == CROSSED:
                p = [np.array(verts[v]) for v in (v00, v10, v11, v01)]
                c = _diagonal_intersection(p[0], p[2], p[1], p[3])
                verts.append(tuple(c))
                m = len(verts) - 1
                cells += [(v00, v10, m), (v10, v11, m), (v11, v01, m), (v01, v00, m)]
            else:
                flip = mirror_rows is not None and j < mirror_rows
                if flip:
                    cells += [(v00, v10, v01), (v10, v11, v01)]
                else:
                    cells += [(v00, v10, v11), (v00, v11, v01)]
    return np.array(verts, float), np.array(cells, np.int64)


def _diagonal_intersection(a, c, b, d):
    # solve a + s (c - a) = b + t (d - b)
    m = np.column_stack([c - a, b - d])
    s, _ = np.linalg.solve(m, b - a)
    return a + s * (c - a)


def _tag_boundary(verts, cells, classify):
    c = cells
    loc = np.sort(np.stack([c[:, [1, 2]], c[:, [0, 2]], c[:, [0, 1]]], axis=1).reshape(-1, 2), axis=1)
    edges, counts = np.unique(loc, axis=0, return_counts=True)
    tags = {}
    for a, b in edges[counts == 1]:
        tags[(int(a), int(b))] = classify(verts[a], verts[b])
    return tags


def _grid_x(x0, x1, n_per_unit, extra=()):
    n = max(1, int(round(n_per_unit * (x1 - x0))))
    xs = set(np.linspace(x0, x1, n + 1).tolist())
    xs.update(e for e in extra if x0 < e < x1)
    return sorted(xs)


def build_base_mesh(geom: DuctGeometry, n: int = 2, split: str = CROSSED) -> Mesh:
    """Structured triangulation of the duct.

    The grid has ``2 n`` rows across the full height and about ``n`` columns
    per unit length in each of the three subdomains; rows are uniform in the
    scaled coordinate ``y / h(x)`` so they match across the interfaces.
    In the right-triangle split the lower half uses mirrored diagonals, which
    makes the mesh symmetric about the centreline.
    """
    if n < 1:
        raise GeometryError("resolution n must be >= 1")
    if split not in SPLITS:
        raise GeometryError(f"unknown split {split!r}")
    bps = geom.breakpoints()
    xs = (_grid_x(geom.x_in, 0.0, n)
          + _grid_x(0.0, geom.L, n, bps)[1:]
          + _grid_x(geom.L, geom.x_out, n, bps)[1:])
    ny = 2 * n
    eta = np.linspace(-1.0, 1.0, ny + 1)
    ys = [eta * float(geom.half_height(x)) for x in xs]
    verts, cells = _split_quads(xs, ys, split, mirror_rows=n)
    tol = 1e-12

    def classify(p, q):
        xm = 0.5 * (p[0] + q[0])
        if abs(p[0] - geom.x_in) < tol and abs(q[0] - geom.x_in) < tol:
            return INLET
        if abs(p[0] - geom.x_out) < tol and abs(q[0] - geom.x_out) < tol:
            return OUTLET
        return WALL_CONTRACTION if tol < xm < geom.L - tol else WALL_BUFFER

    mesh = Mesh(verts, cells, _tag_boundary(verts, cells, classify), (0, 0, 0), split)
    return mesh


def build_rectangle_mesh(x0: float, x1: float, y0: float, y1: float, n: int,
                         split: str = RIGHT, ny: int | None = None,
                         wall_tag: str = WALL_BUFFER) -> Mesh:
    """``n x ny`` array of rectangles; left side is the inlet, right the outlet.

    The top and bottom sides get ``wall_tag``, so a straight channel can
    stand in for the contraction when testing the force integral.
    """
    if wall_tag not in TAGS:
        raise GeometryError(f"unknown facet tag {wall_tag!r}")
    if n < 1 or x1 <= x0 or y1 <= y0:
        raise GeometryError("degenerate rectangle")
    ny = n if ny is None else ny
    xs = np.linspace(x0, x1, n + 1)
    ys = [np.linspace(y0, y1, ny + 1)] * (n + 1)
    verts, cells = _split_quads(list(xs), ys, split)
    tol = 1e-12 * max(1.0, abs(x1) + abs(x0))

    def classify(p, q):
        if abs(p[0] - x0) < tol and abs(q[0] - x0) < tol:
            return INLET
        if abs(p[0] - x1) < tol and abs(q[0] - x1) < tol:
            return OUTLET
        return wall_tag

    return Mesh(verts, cells, _tag_boundary(verts, cells, classify), (0, 0, 0), split)


# ----------------------------------------------------------------------------
# refinement

class _Refiner:
    """Mutable working copy of a mesh for one red-green refinement pass."""

    def __init__(self, mesh: Mesh, merge_greens=True):
        self.verts = [tuple(v) for v in mesh.vertices.tolist()]
        self.mid = dict(mesh.midpoints)
        self.parent_edge = dict(mesh.parent_edge)
        self.tags = dict(mesh.facet_tags)
        self.cells = []
        self.alive = []
        self.edge_cells = {}
        self.origin = {}  # mesh cell index -> working cell id
        gp = mesh.green_parent
        parents = {}
        for i, cell in enumerate(mesh.cells.tolist()):
            if merge_greens and gp[i, 0] >= 0:
                key = tuple(int(v) for v in gp[i])
                if key not in parents:
                    parents[key] = self._add(key)
                self.origin[i] = parents[key]
            else:
                self.origin[i] = self._add(tuple(cell))

    def _add(self, cell):
        cid = len(self.cells)
        self.cells.append(cell)
        self.alive.append(True)
        a, b, c = cell
        for e in (_edge_key(a, b), _edge_key(b, c), _edge_key(c, a)):
            self.edge_cells.setdefault(e, set()).add(cid)
        return cid

    def _remove(self, cid):
        self.alive[cid] = False
        a, b, c = self.cells[cid]
        for e in (_edge_key(a, b), _edge_key(b, c), _edge_key(c, a)):
            self.edge_cells[e].discard(cid)

    def _midpoint(self, a, b, touched):
        e = _edge_key(a, b)
        m = self.mid.get(e)
        if m is None:
            pa, pb = self.verts[a], self.verts[b]
            self.verts.append(((pa[0] + pb[0]) / 2, (pa[1] + pb[1]) / 2))
            m = len(self.verts) - 1
            self.mid[e] = m
            h1, h2 = _edge_key(e[0], m), _edge_key(m, e[1])
            self.parent_edge[h1] = e
            self.parent_edge[h2] = e
            tag = self.tags.pop(e, None)
            if tag is not None:
                self.tags[h1] = tag
                self.tags[h2] = tag
            touched.extend(self.edge_cells.get(e, ()))
            pe = self.parent_edge.get(e)
            if pe is not None:
                touched.extend(self.edge_cells.get(pe, ()))
        return m

    def _needs_red(self, cid):
        a, b, c = self.cells[cid]
        n_split = 0
        for x, y in ((a, b), (b, c), (c, a)):
            m = self.mid.get(_edge_key(x, y))
            if m is not None:
                n_split += 1
                if _edge_key(x, m) in self.mid or _edge_key(m, y) in self.mid:
                    return True
        return n_split >= 2

    def red(self, cid, touched):
        a, b, c = self.cells[cid]
        self._remove(cid)
        mab = self._midpoint(a, b, touched)
        mbc = self._midpoint(b, c, touched)
        mca = self._midpoint(c, a, touched)
        kids = [self._add((a, mab, mca)), self._add((mab, b, mbc)),
                self._add((mca, mbc, c)), self._add((mab, mbc, mca))]
        touched.extend(kids)
        return kids

    def refine(self, marked):
        queue = list(marked)
        while queue:
            touched = []
            for cid in queue:
                if self.alive[cid]:
                    self.red(cid, touched)
            queue = [t for t in dict.fromkeys(touched) if self.alive[t] and self._needs_red(t)]

    def finish(self, provenance, split_kind) -> Mesh:
        cells, greens = [], []
        for cid, cell in enumerate(self.cells):
            if not self.alive[cid]:
                continue
            a, b, c = cell
            rot = None
            for r, (x, y, o) in enumerate(((a, b, c), (b, c, a), (c, a, b))):
                if _edge_key(x, y) in self.mid:
                    rot = (x, y, o)
                    break
            if rot is None:
                cells.append(cell)
                greens.append((-1, -1, -1))
            else:
                x, y, o = rot
                m = self.mid[_edge_key(x, y)]
                cells += [(x, m, o), (m, y, o)]
                greens += [cell, cell]
        verts = np.array(self.verts, float)
        used = np.unique(np.array(cells).ravel())
        if len(used) != len(verts):
            raise GeometryError("refinement produced orphan vertices")
        return Mesh(verts, np.array(cells, np.int64), self.tags, provenance,
                    split_kind, self.mid, self.parent_edge,
                    np.array(greens, np.int64))


def refine_cells(mesh: Mesh, marked, provenance=None) -> Mesh:
    """Red-refine the marked cells and close the mesh with green bisections."""
    r = _Refiner(mesh)
    ids = {r.origin[int(i)] for i in np.asarray(list(marked), dtype=np.int64)}
    r.refine(sorted(ids))
    return r.finish(provenance or mesh.provenance, mesh.split_kind)


def refine_uniform(mesh: Mesh) -> Mesh:
    """Split every cell into four similar children."""
    r = _Refiner(mesh, merge_greens=False)
    r.refine(range(len(r.cells)))
    ru, rb, rp = mesh.provenance
    return r.finish((ru + 1, rb, rp), mesh.split_kind)


def mark_boundary(mesh: Mesh, centers=BOUNDARY_CENTERS, radius=BOUNDARY_RADIUS):
    """Cells within ``radius`` of one of ``centers`` that own a boundary edge."""
    p = mesh.vertices[mesh.cells]
    near = np.zeros(mesh.n_cells, bool)
    for cx, cy in centers:
        d = np.hypot(p[..., 0] - cx, p[..., 1] - cy).max(axis=1)
        near |= d <= radius
    on_bnd = np.zeros(mesh.n_cells, bool)
    counts = mesh._edge_counts if mesh._edges is not None else None
    if counts is None:
        mesh._build_edges()
        counts = mesh._edge_counts
    on_bnd = (counts[mesh.cell_edges] == 1).any(axis=1)
    return np.flatnonzero(near & on_bnd)


def mark_points(mesh: Mesh, points, tol=POINT_TOL):
    """Cells whose closure contains one of ``points``."""
    p = mesh.vertices[mesh.cells]
    area2 = 2 * mesh.signed_areas()
    hit = np.zeros(mesh.n_cells, bool)
    for x, y in points:
        lam = []
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            a = (p[:, j, 0] - x) * (p[:, k, 1] - y) - (p[:, k, 0] - x) * (p[:, j, 1] - y)
            lam.append(a / area2)
        lam = np.array(lam)
        hit |= (lam >= -tol).all(axis=0)
    return np.flatnonzero(hit)


def refine_boundary(mesh: Mesh, geom: DuctGeometry | None = None,
                    centers=BOUNDARY_CENTERS, radius=BOUNDARY_RADIUS) -> Mesh:
    ru, rb, rp = mesh.provenance
    marked = mark_boundary(mesh, centers, radius)
    if len(marked) == 0:
        return Mesh(mesh.vertices, mesh.cells, dict(mesh.facet_tags), (ru, rb + 1, rp),
                    mesh.split_kind, mesh.midpoints, mesh.parent_edge, mesh.green_parent)
    return refine_cells(mesh, marked, (ru, rb + 1, rp))


def refine_points(mesh: Mesh, geom: DuctGeometry, points=None) -> Mesh:
    ru, rb, rp = mesh.provenance
    marked = mark_points(mesh, geom.corners() if points is None else points)
    if len(marked) == 0:
        return Mesh(mesh.vertices, mesh.cells, dict(mesh.facet_tags), (ru, rb, rp + 1),
                    mesh.split_kind, mesh.midpoints, mesh.parent_edge, mesh.green_parent)
    return refine_cells(mesh, marked, (ru, rb, rp + 1))


def duct_mesh(geom: DuctGeometry, n=2, split=CROSSED, r_u=0, r_b=0, r_p=0) -> Mesh:
    """Base mesh followed by ``r_u`` uniform, ``r_b`` boundary and ``r_p``
    point refinements, in that order."""
    mesh = build_base_mesh(geom, n, split)
    for _ in range(r_u):
        mesh = refine_uniform(mesh)
    for _ in range(r_b):
        mesh = refine_boundary(mesh, geom)
    for _ in range(r_p):
        mesh = refine_points(mesh, geom)
    return mesh


# ----------------------------------------------------------------------------
# text format

HEADER = "g2duct-mesh v1"


def write_mesh(mesh: Mesh, path):
    with open(path, "w") as f:
        f.write(HEADER + "\n")
        f.write(f"vertices {mesh.n_vertices}\n")
        for x, y in mesh.vertices.tolist():
            f.write(f"{x!r} {y!r}\n")
        f.write(f"cells {mesh.n_cells}\n")
        for i, j, k in mesh.cells:
            f.write(f"{i} {j} {k}\n")
        f.write(f"facets {len(mesh.facet_tags)}\n")
        for (i, j), tag in sorted(mesh.facet_tags.items()):
            f.write(f"{i} {j} {tag}\n")


def read_mesh(path) -> Mesh:
    with open(path) as f:
        lines = [ln.split() for ln in f if ln.strip()]
    if not lines or " ".join(lines[0]) != HEADER:
        raise MeshFormatError(f"{path}: missing '{HEADER}' header")
    pos = 1

    def section(name, width):
        nonlocal pos
        head = lines[pos]
        if len(head) != 2 or head[0] != name:
            raise MeshFormatError(f"{path}: expected '{name} N' at record {pos + 1}")
        count = int(head[1])
        rows = lines[pos + 1:pos + 1 + count]
        if len(rows) != count or any(len(r) != width for r in rows):
            raise MeshFormatError(f"{path}: malformed '{name}' section")
        pos += 1 + count
        return rows

    try:
        verts = np.array([[float(a), float(b)] for a, b in section("vertices", 2)])
        cells = np.array([[int(a) for a in r] for r in section("cells", 3)], np.int64)
        tags = {}
        for i, j, tag in section("facets", 3):
            if tag not in TAGS:
                raise MeshFormatError(f"{path}: unknown facet tag {tag!r}")
            tags[_edge_key(int(i), int(j))] = tag
    except (ValueError, IndexError) as exc:
        if isinstance(exc, MeshFormatError):
            raise
        raise MeshFormatError(f"{path}: {exc}") from None
    return Mesh(verts, cells, tags)
