"""Triangulations of the field that contain the road in their edge skeleton.

Constrained Delaunay triangulation with quality refinement is delegated to
Shewchuk's Triangle (``triangle`` package).  Constraint segments are the
domain boundary and every road edge, pre-split into pieces no longer than
``h``; road edges that Triangle splits further are recovered from its
segment markers.
"""
from __future__ import annotations

import hashlib
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import triangle as tr

from .errors import GeometryError
from .network import RoadNetwork, require_valid, _data_lines

INTERIOR, BOUNDARY, ROAD, ROAD_BOUNDARY = 0, 1, 2, 3


@dataclass(frozen=True, eq=False)
class DomainGeometry:
    """Simple polygon bounding the field, stored counterclockwise."""

    polygon: np.ndarray

    def __post_init__(self):
        p = np.array(self.polygon, dtype=float).reshape(-1, 2)
        if len(p) > 1 and np.allclose(p[0], p[-1]):
            p = p[:-1]
        if len(p) < 3:
            raise GeometryError("domain polygon needs at least 3 vertices")
        if _signed_area(p) < 0:
            p = p[::-1].copy()
        if _signed_area(p) <= 0:
            raise GeometryError("domain polygon has zero area")
        if not _is_simple(p):
            raise GeometryError("domain polygon is self-intersecting")
        p.flags.writeable = False
        object.__setattr__(self, "polygon", p)

    @classmethod
    def rectangle(cls, x0=0.0, y0=0.0, x1=1.0, y1=1.0):
        return cls([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])

    @classmethod
    def unit_square(cls):
        return cls.rectangle()

    @classmethod
    def l_shape(cls):
        """Unit square minus its upper-right quarter."""
        return cls([(0, 0), (1, 0), (1, 0.5), (0.5, 0.5), (0.5, 1), (0, 1)])

    @property
    def area(self) -> float:
        return _signed_area(self.polygon)

    @property
    def edges(self):
        p = self.polygon
        return p, np.roll(p, -1, axis=0)

    def diameter(self) -> float:
        d = self.polygon[:, None, :] - self.polygon[None, :, :]
        return float(np.sqrt((d**2).sum(-1)).max())

    def boundary_distance(self, x) -> float:
        a, b = self.edges
        d = b - a
        t = np.clip(((x - a) * d).sum(1) / (d * d).sum(1), 0.0, 1.0)
        return float(np.hypot(*(a + t[:, None] * d - x).T).min())

    def on_boundary(self, x, tol=None) -> bool:
        tol = 1e-9 * self.diameter() if tol is None else tol
        return self.boundary_distance(np.asarray(x, float)) <= tol

    def contains(self, x, tol=None) -> bool:
        """Closed-domain membership (boundary points count as inside)."""
        x = np.asarray(x, float)
        if self.on_boundary(x, tol):
            return True
        a, b = self.edges
        # crossing number
        cond = (a[:, 1] > x[1]) != (b[:, 1] > x[1])
        with np.errstate(divide="ignore", invalid="ignore"):
            xs = a[:, 0] + (x[1] - a[:, 1]) * (b[:, 0] - a[:, 0]) / (b[:, 1] - a[:, 1])
        return bool(np.count_nonzero(cond & (x[0] < xs)) % 2)

    def bounding_box(self):
        return self.polygon.min(0), self.polygon.max(0)


def _signed_area(p) -> float:
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _is_simple(p) -> bool:
    from .network import segments_intersect

    n = len(p)
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if segments_intersect(p[i], p[(i + 1) % n], p[j], p[(j + 1) % n]):
                return False
    return True


def parse_domain(text: str) -> DomainGeometry:
    """Parse ``polygon N`` followed by N lines ``x y``."""
    lines = list(_data_lines(text))
    if not lines or lines[0][1][0] != "polygon" or len(lines[0][1]) != 2:
        raise GeometryError("domain file must start with 'polygon <count>'")
    n = int(lines[0][1][1])
    rows = lines[1 : n + 1]
    if len(rows) != n:
        raise GeometryError(f"polygon: expected {n} rows, found {len(rows)}")
    return DomainGeometry([(float(t[0]), float(t[1])) for _, t in rows])


def read_domain(path) -> DomainGeometry:
    return parse_domain(Path(path).read_text())


def format_domain(domain: DomainGeometry) -> str:
    rows = "".join(f"{float(x)!r} {float(y)!r}\n" for x, y in domain.polygon)
    return f"polygon {len(domain.polygon)}\n{rows}"


# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation with road and boundary bookkeeping.

    ``road_edges[r]`` lies on road edge ``road_parent[r]``; ``road_arc[r]``
    holds the arc-length positions of its two vertices along that edge.
    ``network_vertex_map[k]`` is the mesh vertex of network vertex k.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    markers: np.ndarray
    road_edges: np.ndarray
    road_parent: np.ndarray
    road_arc: np.ndarray
    network_vertex_map: np.ndarray | None = None
    min_angle_target: float = 0.0

    def __post_init__(self):
        for name in ("vertices", "triangles", "markers", "road_edges", "road_parent", "road_arc"):
            arr = np.ascontiguousarray(getattr(self, name))
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def edges(self) -> np.ndarray:
        """Unique undirected edges, sorted pairs."""
        t = self.triangles
        e = np.sort(np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
        return np.unique(e, axis=0)

    def boundary_edges(self) -> np.ndarray:
        """Edges belonging to exactly one triangle, oriented as in that triangle."""
        t = self.triangles
        e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        key = np.sort(e, axis=1)
        _, inv, cnt = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        return e[cnt[inv.ravel()] == 1]

    @property
    def on_boundary(self) -> np.ndarray:
        return (self.markers == BOUNDARY) | (self.markers == ROAD_BOUNDARY)

    @property
    def on_road(self) -> np.ndarray:
        return (self.markers == ROAD) | (self.markers == ROAD_BOUNDARY)

    @property
    def road_vertices(self) -> np.ndarray:
        """Sorted mesh indices of all vertices on the road."""
        return np.unique(self.road_edges.ravel())

    def triangle_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def road_lengths(self) -> np.ndarray:
        d = self.vertices[self.road_edges[:, 1]] - self.vertices[self.road_edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @property
    def fingerprint(self) -> str:
        h = hashlib.sha1()
        for arr in (self.vertices, self.triangles, self.road_edges):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def _split(a, b, h):
    n = max(1, math.ceil(np.hypot(*(b - a)) / h - 1e-9))
    return [a + (b - a) * k / n for k in range(1, n)]


def triangulate(
    domain: DomainGeometry,
    net: RoadNetwork | None,
    h: float,
    min_angle: float = 25.0,
    merge_tol: float = 1e-9,
) -> Mesh:
    """Constrained Delaunay triangulation of ``domain`` containing ``net``.

    ``net=None`` gives a road-free mesh (used for the Dirichlet baseline).
    Vertices closer than ``merge_tol * diam(domain)`` are merged.
    """
    if not h > 0:
        raise GeometryError(f"mesh size must be positive, got {h}")
    diam = domain.diameter()
    tol = merge_tol * diam
    poly = domain.polygon
    points = [p.copy() for p in poly]

    def find_or_add(x):
        d = np.hypot(*(np.asarray(points) - x).T)
        k = int(np.argmin(d))
        if d[k] <= tol:
            return k
        points.append(np.asarray(x, float).copy())
        return len(points) - 1

    nmap = np.zeros(0, dtype=np.int64)
    road_pts_on_boundary = []
    if net is not None:
        require_valid(net)
        nmap = np.empty(net.n_vertices, dtype=np.int64)
        for k, x in enumerate(net.vertices):
            if not domain.contains(x, tol):
                raise GeometryError(f"road vertex {k} at {x.tolist()} lies outside the domain", item=k)
            on_b = domain.on_boundary(x, tol)
            if on_b != bool(net.boundary[k]):
                raise GeometryError(
                    f"road vertex {k} at {x.tolist()}: boundary flag {bool(net.boundary[k])} "
                    f"does not match geometry (on boundary: {on_b})",
                    item=k,
                )
            nmap[k] = find_or_add(x)
            if on_b:
                road_pts_on_boundary.append(nmap[k])
        if len(set(nmap.tolist())) != net.n_vertices:
            raise GeometryError("distinct road vertices merge under the merge tolerance")
        _check_road_against_boundary(domain, net, tol)

    # boundary constraint segments, split at road vertices lying on them
    segs, marks = [], []
    npoly = len(poly)
    for i in range(npoly):
        a, b = poly[i], poly[(i + 1) % npoly]
        d = b - a
        L2 = d @ d
        chain = [(0.0, i), (1.0, (i + 1) % npoly)]
        for k in road_pts_on_boundary:
            if k < npoly:
                continue
            x = points[k]
            t = (x - a) @ d / L2
            if 0 < t < 1 and np.hypot(*(a + t * d - x)) <= tol:
                chain.append((t, k))
        chain.sort()
        for (_, p), (_, q) in zip(chain, chain[1:]):
            segs.append((p, q))
            marks.append(1)

    for e, (i, j) in enumerate(net.edges if net is not None else []):
        segs.append((int(nmap[i]), int(nmap[j])))
        marks.append(2 + e)

    # pre-split every constraint to pieces of length <= h
    vin, sin, min_ = list(points), [], []
    for (p, q), m in zip(segs, marks):
        chain = [p]
        for x in _split(vin[p], vin[q], h):
            vin.append(x)
            chain.append(len(vin) - 1)
        chain.append(q)
        for a, b in zip(chain, chain[1:]):
            sin.append((a, b))
            min_.append(m)

    max_area = math.sqrt(3.0) / 4.0 * h * h
    opts = f"pq{min_angle:g}a{max_area:.17g}Q"
    out = tr.triangulate(
        {
            "vertices": np.asarray(vin, float),
            "segments": np.asarray(sin, np.int32),
            "segment_markers": np.asarray(min_, np.int32).reshape(-1, 1),
        },
        opts,
    )
    V = np.asarray(out["vertices"], float)
    T = np.asarray(out["triangles"], np.int64)
    S = np.asarray(out["segments"], np.int64)
    SM = np.asarray(out["segment_markers"], np.int64).ravel()
    if len(V) < len(points) or not np.allclose(V[: len(points)], np.asarray(points)):
        raise GeometryError("triangulator did not preserve input vertices")

    # orient counterclockwise
    p = V[T]
    cross = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (
        p[:, 2, 0] - p[:, 0, 0]
    )
    T[cross < 0] = T[cross < 0][:, [0, 2, 1]]
    if np.any(cross == 0):
        raise GeometryError("degenerate triangle produced")

    road = SM >= 2
    road_edges = S[road]
    parent = SM[road] - 2
    arc = np.zeros((len(road_edges), 2))
    if net is not None and len(road_edges):
        a = net.vertices[net.edges[parent, 0]]
        tan = net.tangents[parent]
        arc[:, 0] = ((V[road_edges[:, 0]] - a) * tan).sum(1)
        arc[:, 1] = ((V[road_edges[:, 1]] - a) * tan).sum(1)
        # orient each piece along its parent edge
        flip = arc[:, 0] > arc[:, 1]
        road_edges[flip] = road_edges[flip][:, ::-1]
        arc[flip] = arc[flip][:, ::-1]
        order = np.lexsort((arc[:, 0], parent))
        road_edges, parent, arc = road_edges[order], parent[order], arc[order]

    mesh = Mesh(V, T, np.zeros(len(V), np.int64), road_edges, parent, arc, nmap if net is not None else None, min_angle)
    return _with_markers(mesh)


def _with_markers(mesh: Mesh) -> Mesh:
    markers = np.zeros(mesh.n_vertices, np.int64)
    bnd = np.zeros(mesh.n_vertices, bool)
    bnd[mesh.boundary_edges().ravel()] = True
    rd = np.zeros(mesh.n_vertices, bool)
    rd[mesh.road_edges.ravel()] = True
    markers[bnd] = BOUNDARY
    markers[rd] = ROAD
    markers[bnd & rd] = ROAD_BOUNDARY
    return Mesh(
        mesh.vertices, mesh.triangles, markers, mesh.road_edges, mesh.road_parent, mesh.road_arc,
        mesh.network_vertex_map, mesh.min_angle_target,
    )


def _check_road_against_boundary(domain, net, tol):
    """Reject road edges leaving the domain or running along its boundary."""
    from .network import _orient

    a_all, b_all = domain.edges
    for e, (i, j) in enumerate(net.edges):
        p, q = net.vertices[i], net.vertices[j]
        mid = 0.5 * (p + q)
        if domain.on_boundary(mid, tol):
            raise GeometryError(f"road edge {e} runs along the domain boundary", item=e)
        if not domain.contains(mid, tol):
            raise GeometryError(f"road edge {e} leaves the domain", item=e)
        L = np.hypot(*(q - p))
        for a, b in zip(a_all, b_all):
            d1, d2 = _orient(a, b, p), _orient(a, b, q)
            d3, d4 = _orient(p, q, a), _orient(p, q, b)
            s = tol * max(L, np.hypot(*(b - a)))
            if ((d1 > s and d2 < -s) or (d1 < -s and d2 > s)) and ((d3 > s and d4 < -s) or (d3 < -s and d4 > s)):
                raise GeometryError(f"road edge {e} crosses the domain boundary", item=e)
        for c in domain.polygon:
            t = (c - p) @ (q - p) / (L * L)
            if tol < t * L < L - tol and np.hypot(*(p + t * (q - p) - c)) <= tol:
                raise GeometryError(f"road edge {e} passes through a boundary corner", item=e)


def refine(mesh: Mesh) -> Mesh:
    """Uniform red refinement: every triangle is split into four."""
    edges = mesh.edges()
    n = mesh.n_vertices
    key = {(int(i), int(j)): n + k for k, (i, j) in enumerate(edges)}

    def mid(i, j):
        return key[(i, j) if i < j else (j, i)]

    V = np.vstack([mesh.vertices, 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])])
    T = []
    for a, b, c in mesh.triangles.tolist():
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        T += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
    RE, RP, RA = [], [], []
    for (i, j), par, (s0, s1) in zip(mesh.road_edges.tolist(), mesh.road_parent.tolist(), mesh.road_arc.tolist()):
        m = mid(i, j)
        sm = 0.5 * (s0 + s1)
        RE += [(i, m), (m, j)]
        RP += [par, par]
        RA += [(s0, sm), (sm, s1)]
    out = Mesh(
        V,
        np.asarray(T, np.int64),
        np.zeros(len(V), np.int64),
        np.asarray(RE, np.int64).reshape(-1, 2),
        np.asarray(RP, np.int64),
        np.asarray(RA, float).reshape(-1, 2),
        mesh.network_vertex_map,
        mesh.min_angle_target,
    )
    return _with_markers(out)


@dataclass(frozen=True)
class MeshQuality:
    min_angle: float
    max_aspect_ratio: float
    h_max: float
    h_min: float
    n_vertices: int
    n_triangles: int
    n_road_edges: int
    n_boundary_edges: int


def triangle_angles(mesh: Mesh) -> np.ndarray:
    """Interior angles in degrees, shape (n_triangles, 3)."""
    p = mesh.vertices[mesh.triangles]
    out = np.empty((mesh.n_triangles, 3))
    for k in range(3):
        u = p[:, (k + 1) % 3] - p[:, k]
        w = p[:, (k + 2) % 3] - p[:, k]
        cross = u[:, 0] * w[:, 1] - u[:, 1] * w[:, 0]
        out[:, k] = np.degrees(np.arctan2(np.abs(cross), (u * w).sum(1)))
    return out


def mesh_quality(mesh: Mesh) -> MeshQuality:
    """Angle, aspect-ratio and size statistics.

    The aspect ratio is circumradius over twice the inradius, 1 for an
    equilateral triangle.
    """
    p = mesh.vertices[mesh.triangles]
    la = np.hypot(*(p[:, 1] - p[:, 2]).T)
    lb = np.hypot(*(p[:, 2] - p[:, 0]).T)
    lc = np.hypot(*(p[:, 0] - p[:, 1]).T)
    area = np.abs(mesh.triangle_areas())
    s = 0.5 * (la + lb + lc)
    inr = area / s
    circ = la * lb * lc / (4.0 * area)
    edges = mesh.edges()
    el = np.hypot(*(mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]]).T)
    return MeshQuality(
        min_angle=float(triangle_angles(mesh).min()),
        max_aspect_ratio=float((circ / (2.0 * inr)).max()),
        h_max=float(el.max()),
        h_min=float(el.min()),
        n_vertices=mesh.n_vertices,
        n_triangles=mesh.n_triangles,
        n_road_edges=len(mesh.road_edges),
        n_boundary_edges=len(mesh.boundary_edges()),
    )


def conformity_errors(mesh: Mesh, net: RoadNetwork) -> np.ndarray:
    """Per road edge: relative mismatch between the chain of mesh edges and the edge.

    Checks that the pieces tile ``[0, length]`` end to end and that their
    lengths add up.  Returns an array with one value per network edge.
    """
    lengths = net.edge_lengths
    pieces = mesh.road_lengths()
    out = np.full(net.n_edges, np.inf)
    for e in range(net.n_edges):
        sel = mesh.road_parent == e
        if not np.any(sel):
            continue
        arc = mesh.road_arc[sel]
        order = np.argsort(arc[:, 0])
        arc = arc[order]
        gaps = np.abs(arc[1:, 0] - arc[:-1, 1]).sum() if len(arc) > 1 else 0.0
        ends = abs(arc[0, 0]) + abs(arc[-1, 1] - lengths[e])
        total = abs(pieces[sel].sum() - lengths[e])
        out[e] = (gaps + ends + total) / lengths[e]
    return out


# ---------------------------------------------------------------------------
# file format


def format_mesh(mesh: Mesh) -> str:
    out = io.StringIO()
    out.write(f"vertices {mesh.n_vertices}\n")
    for (x, y), m in zip(mesh.vertices, mesh.markers):
        out.write(f"{float(x)!r} {float(y)!r} {int(m)}\n")
    out.write(f"triangles {mesh.n_triangles}\n")
    for i, j, k in mesh.triangles:
        out.write(f"{i} {j} {k}\n")
    out.write(f"road_edges {len(mesh.road_edges)}\n")
    for (i, j), p in zip(mesh.road_edges, mesh.road_parent):
        out.write(f"{i} {j} {p}\n")
    return out.getvalue()


def write_mesh(mesh: Mesh, path) -> None:
    Path(path).write_text(format_mesh(mesh), newline="\n")


def parse_mesh(text: str, net: RoadNetwork | None = None) -> Mesh:
    """Read the mesh format back.

    Arc positions and the network vertex map are rebuilt from ``net`` when
    given; otherwise arc positions are NaN and the map is None.
    """
    lines = list(_data_lines(text))
    pos = 0

    def block(name):
        nonlocal pos
        if pos >= len(lines) or lines[pos][1][0] != name:
            raise GeometryError(f"mesh file: expected '{name} <count>'")
        n = int(lines[pos][1][1])
        rows = [t for _, t in lines[pos + 1 : pos + 1 + n]]
        if len(rows) != n:
            raise GeometryError(f"{name}: expected {n} rows, found {len(rows)}")
        pos += n + 1
        return rows

    vr, tr_, rr = block("vertices"), block("triangles"), block("road_edges")
    V = np.array([(float(r[0]), float(r[1])) for r in vr]).reshape(-1, 2)
    M = np.array([int(r[2]) for r in vr], np.int64)
    T = np.array([[int(x) for x in r[:3]] for r in tr_], np.int64).reshape(-1, 3)
    RE = np.array([[int(r[0]), int(r[1])] for r in rr], np.int64).reshape(-1, 2)
    RP = np.array([int(r[2]) for r in rr], np.int64)
    RA = np.full((len(RE), 2), np.nan)
    nmap = None
    if net is not None:
        a = net.vertices[net.edges[RP, 0]]
        tan = net.tangents[RP]
        RA[:, 0] = ((V[RE[:, 0]] - a) * tan).sum(1)
        RA[:, 1] = ((V[RE[:, 1]] - a) * tan).sum(1)
        nmap = np.array([int(np.argmin(np.hypot(*(V - x).T))) for x in net.vertices], np.int64)
    return Mesh(V, T, M, RE, RP, RA, nmap)


def read_mesh(path, net: RoadNetwork | None = None) -> Mesh:
    return parse_mesh(Path(path).read_text(), net)
