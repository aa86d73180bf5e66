"""Road networks: embedded straight-edge planar graphs and their metric analysis.

A road is stored as vertices, undirected edges and a per-vertex flag telling
whether the vertex lies on the boundary of the field.  Functions on the road
are continuous and piecewise linear along edges (:class:`NetworkFunction`).
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra, shortest_path

from .errors import DomainError, GeometryError

# relative tolerance for orientation tests and point location
GEOM_EPS = 1e-12


class NetworkPoint(NamedTuple):
    """Point on edge ``edge`` at parameter ``t`` in [0, 1] from its first vertex."""

    edge: int
    t: float


@dataclass(frozen=True, eq=False)
class RoadNetwork:
    """Embedded planar graph with straight edges.

    Parameters
    ----------
    vertices : (n, 2) array_like
    edges : (m, 2) array_like of int
    boundary : (n,) array_like of bool, optional
        Marks vertices lying on the boundary of the field.
    """

    vertices: np.ndarray
    edges: np.ndarray
    boundary: np.ndarray = None

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float).reshape(-1, 2)
        e = np.array(self.edges, dtype=np.int64).reshape(-1, 2)
        b = np.zeros(len(v), dtype=bool) if self.boundary is None else np.array(self.boundary, dtype=bool)
        if b.shape != (len(v),):
            raise GeometryError("boundary flags must have one entry per vertex")
        if e.size and (e.min() < 0 or e.max() >= len(v)):
            raise GeometryError("edge refers to a missing vertex")
        for arr in (v, e, b):
            arr.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "boundary", b)

    @classmethod
    def polyline(cls, points, boundary=None):
        pts = np.asarray(points, dtype=float)
        edges = [(i, i + 1) for i in range(len(pts) - 1)]
        return cls(pts, edges, boundary)

    @classmethod
    def segment(cls, p, q, boundary=None):
        return cls.polyline([p, q], boundary)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def edge_vectors(self) -> np.ndarray:
        return self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]

    @property
    def edge_lengths(self) -> np.ndarray:
        return np.hypot(*self.edge_vectors.T)

    @property
    def tangents(self) -> np.ndarray:
        """Unit tangent of every edge, oriented from first to second vertex."""
        return self.edge_vectors / self.edge_lengths[:, None]

    def diameter(self) -> float:
        """Euclidean diameter of the vertex set."""
        if self.n_vertices < 2:
            return 0.0
        d = self.vertices[:, None, :] - self.vertices[None, :, :]
        return float(np.sqrt((d**2).sum(-1)).max())

    def position(self, p) -> np.ndarray:
        """Planar coordinates of a network point (vertex index or NetworkPoint)."""
        p = locate(self, p)
        if isinstance(p, (int, np.integer)):
            return self.vertices[p].copy()
        i, j = self.edges[p.edge]
        return (1.0 - p.t) * self.vertices[i] + p.t * self.vertices[j]

    def adjacency(self) -> sp.csr_matrix:
        """Symmetric sparse adjacency weighted by edge length."""
        n = self.n_vertices
        w = self.edge_lengths
        i, j = self.edges.T
        a = sp.coo_matrix((np.r_[w, w], (np.r_[i, j], np.r_[j, i])), shape=(n, n))
        return a.tocsr()


@dataclass(frozen=True)
class NetworkFunction:
    """Continuous piecewise-linear function given by its vertex values."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float).ravel())

    def _check(self, net: RoadNetwork):
        if len(self.values) != net.n_vertices:
            raise DomainError(
                f"function has {len(self.values)} values, network has {net.n_vertices} vertices"
            )

    def slopes(self, net: RoadNetwork) -> np.ndarray:
        """Tangential derivative on each edge."""
        self._check(net)
        i, j = net.edges.T
        return (self.values[j] - self.values[i]) / net.edge_lengths

    def l2_norm(self, net: RoadNetwork) -> float:
        self._check(net)
        i, j = net.edges.T
        a, b = self.values[i], self.values[j]
        return math.sqrt(float(np.sum(net.edge_lengths * (a * a + a * b + b * b) / 3.0)))

    def gradient_norm(self, net: RoadNetwork) -> float:
        """L2 norm of the tangential gradient over the network."""
        self._check(net)
        i, j = net.edges.T
        return math.sqrt(float(np.sum((self.values[j] - self.values[i]) ** 2 / net.edge_lengths)))

    def sup_norm(self) -> float:
        return float(np.abs(self.values).max()) if self.values.size else 0.0


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    connected: bool
    n_components: int
    zero_length_edges: list = field(default_factory=list)
    duplicate_edges: list = field(default_factory=list)
    self_loops: list = field(default_factory=list)
    crossings: list = field(default_factory=list)
    outside_vertices: list = field(default_factory=list)
    outside_edges: list = field(default_factory=list)
    boundary_overlaps: list = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return (
            self.connected
            and not self.zero_length_edges
            and not self.duplicate_edges
            and not self.self_loops
            and not self.crossings
            and not self.outside_vertices
            and not self.outside_edges
            and not self.boundary_overlaps
        )

    def problems(self) -> list[str]:
        out = []
        if not self.connected:
            out.append(f"disconnected ({self.n_components} components)")
        for name in ("zero_length_edges", "duplicate_edges", "self_loops", "crossings", "outside_vertices",
                     "outside_edges", "boundary_overlaps"):
            items = getattr(self, name)
            if items:
                out.append(f"{name.replace('_', ' ')}: {items}")
        return out


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(a, b, p, tol) -> bool:
    """p collinear with ab (already tested) and within its bounding box."""
    return (
        min(a[0], b[0]) - tol <= p[0] <= max(a[0], b[0]) + tol
        and min(a[1], b[1]) - tol <= p[1] <= max(a[1], b[1]) + tol
    )


def segments_intersect(p1, p2, q1, q2, tol=0.0) -> bool:
    """Closed-segment intersection test (touching counts)."""
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > tol and d2 < -tol) or (d1 < -tol and d2 > tol)) and (
        (d3 > tol and d4 < -tol) or (d3 < -tol and d4 > tol)
    ):
        return True
    if abs(d1) <= tol and _on_segment(q1, q2, p1, 0.0):
        return True
    if abs(d2) <= tol and _on_segment(q1, q2, p2, 0.0):
        return True
    if abs(d3) <= tol and _on_segment(p1, p2, q1, 0.0):
        return True
    if abs(d4) <= tol and _on_segment(p1, p2, q2, 0.0):
        return True
    return False


def _edge_conflicts(net: RoadNetwork) -> list[tuple[int, int]]:
    """Pairs of edges meeting anywhere other than at a shared end vertex."""
    v, e = net.vertices, net.edges
    scale = max(net.diameter(), 1e-300)
    tol = GEOM_EPS * scale * scale
    lo = np.minimum(v[e[:, 0]], v[e[:, 1]])
    hi = np.maximum(v[e[:, 0]], v[e[:, 1]])
    out = []
    for a in range(len(e)):
        # bounding-box prefilter
        cand = np.nonzero(
            np.all(lo[a + 1 :] <= hi[a] + tol, axis=1) & np.all(hi[a + 1 :] >= lo[a] - tol, axis=1)
        )[0] + a + 1
        ia, ja = e[a]
        for b in cand:
            ib, jb = e[b]
            shared = {ia, ja} & {ib, jb}
            if len(shared) == 2:
                continue  # duplicate edge, reported separately
            if shared:
                s = shared.pop()
                pa = ja if ia == s else ia
                pb = jb if ib == s else ib
                u, w = v[pa] - v[s], v[pb] - v[s]
                # collinear and pointing the same way: the edges overlap
                if abs(u[0] * w[1] - u[1] * w[0]) <= tol and u @ w > 0:
                    out.append((a, int(b)))
                continue
            if segments_intersect(v[ia], v[ja], v[ib], v[jb], tol):
                out.append((a, int(b)))
    return out


def validate_network(net: RoadNetwork, domain=None) -> ValidationReport:
    """Check connectivity, edge lengths, duplicates and planarity of ``net``.

    If ``domain`` (a :class:`~roadfield.meshing.DomainGeometry`) is given, the
    vertices are also checked to lie in the closed domain, and every edge is
    checked to neither leave the domain nor run along its boundary.  The road
    may touch the boundary only at finitely many points.
    """
    n = net.n_vertices
    if n == 0:
        return ValidationReport(connected=False, n_components=0)
    ncomp, _ = connected_components(net.adjacency() + sp.eye(n), directed=False)
    if net.n_edges:
        lengths = net.edge_lengths
        scale = max(net.diameter(), 1.0)
        zero = [int(k) for k in np.nonzero(lengths <= GEOM_EPS * scale)[0]]
    else:
        zero = []
    loops = [int(k) for k, (i, j) in enumerate(net.edges) if i == j]
    seen, dup = {}, []
    for k, (i, j) in enumerate(net.edges):
        key = (min(i, j), max(i, j))
        if key in seen:
            dup.append((seen[key], k))
        else:
            seen[key] = k
    crossings = _edge_conflicts(net) if not zero and not loops else []
    outside, leaving, along = [], [], []
    if domain is not None:
        outside = [int(k) for k in range(n) if not domain.contains(net.vertices[k])]
        if not zero and not loops:
            for k, (i, j) in enumerate(net.edges):
                status = _edge_vs_domain(net.vertices[i], net.vertices[j], domain)
                if "outside" in status:
                    leaving.append(k)
                if "boundary" in status:
                    along.append(k)
    return ValidationReport(
        connected=ncomp == 1,
        n_components=int(ncomp),
        zero_length_edges=zero,
        duplicate_edges=dup,
        self_loops=loops,
        crossings=crossings,
        outside_vertices=outside,
        outside_edges=leaving,
        boundary_overlaps=along,
    )


def _edge_vs_domain(p, q, domain) -> set:
    """Where the open segment pq runs: any of ``"inside"``, ``"outside"``, ``"boundary"``.

    The segment is cut where it meets the polygon sides (crossings and the
    projections of side endpoints onto it); each piece then lies wholly
    inside, outside or on the boundary, so testing its midpoint suffices.
    """
    d = q - p
    L2 = float(d @ d)
    tol = GEOM_EPS * max(domain.diameter(), 1.0)
    a, b = domain.edges
    cuts = [0.0, 1.0]
    for s0, s1 in zip(a, b):
        e = s1 - s0
        den = d[0] * e[1] - d[1] * e[0]
        if abs(den) > tol * np.sqrt(L2 * float(e @ e)):
            w = s0 - p
            cuts.append((w[0] * e[1] - w[1] * e[0]) / den)
        for c in (s0, s1):
            t = float((c - p) @ d) / L2
            if np.hypot(*(p + t * d - c)) <= tol:
                cuts.append(t)
    ts = np.unique(np.clip(cuts, 0.0, 1.0))
    out = set()
    for t0, t1 in zip(ts[:-1], ts[1:]):
        if (t1 - t0) ** 2 * L2 <= tol * tol:
            continue
        m = p + 0.5 * (t0 + t1) * d
        out.add("boundary" if domain.on_boundary(m) else "inside" if domain.contains(m) else "outside")
    return out


def require_valid(net: RoadNetwork, domain=None) -> None:
    report = validate_network(net, domain)
    if not report.valid:
        raise GeometryError("invalid road network: " + "; ".join(report.problems()))


def total_length(net: RoadNetwork) -> float:
    """One-dimensional measure of the network (sum of edge lengths)."""
    return float(net.edge_lengths.sum())


# ---------------------------------------------------------------------------
# geodesics


def locate(net: RoadNetwork, p, tol: float = 1e-9):
    """Normalize a network point.

    Accepts a vertex index, a :class:`NetworkPoint` / ``(edge, t)`` pair, or
    planar coordinates (a length-2 float array) within ``tol * diameter`` of
    the network.  Points coinciding with a vertex are returned as its index.
    """
    if isinstance(p, (int, np.integer)):
        if not 0 <= p < net.n_vertices:
            raise DomainError(f"vertex {p} not in network")
        return int(p)
    if isinstance(p, tuple) and len(p) == 2 and isinstance(p[0], (int, np.integer)):
        e, t = int(p[0]), float(p[1])
        if not 0 <= e < net.n_edges or not 0.0 <= t <= 1.0:
            raise DomainError(f"network point {p} out of range")
        if t == 0.0:
            return int(net.edges[e, 0])
        if t == 1.0:
            return int(net.edges[e, 1])
        return NetworkPoint(e, t)
    x = np.asarray(p, dtype=float).ravel()
    if x.shape != (2,):
        raise DomainError(f"cannot interpret {p!r} as a network point")
    a = net.vertices[net.edges[:, 0]]
    d = net.edge_vectors
    t = np.clip(((x - a) * d).sum(1) / (d * d).sum(1), 0.0, 1.0)
    dist = np.hypot(*(a + t[:, None] * d - x).T)
    k = int(np.argmin(dist))
    if dist[k] > tol * max(net.diameter(), 1.0):
        raise DomainError(f"point {x.tolist()} is not on the network (distance {dist[k]:.3g})")
    return locate(net, (k, float(t[k])))


def vertex_distances(net: RoadNetwork) -> np.ndarray:
    """All-pairs geodesic distances between vertices."""
    return shortest_path(net.adjacency(), method="D", directed=False)


def geodesic_distance(net: RoadNetwork, p, q) -> float:
    """Length of the shortest path inside the network between two network points."""
    p, q = locate(net, p), locate(net, q)
    n = net.n_vertices
    lengths = net.edge_lengths
    rows, cols, vals = list(net.edges[:, 0]), list(net.edges[:, 1]), list(lengths)
    ids = []
    extra = 0
    for pt in (p, q):
        if isinstance(pt, NetworkPoint):
            node = n + extra
            extra += 1
            i, j = net.edges[pt.edge]
            ell = lengths[pt.edge]
            rows += [node, node]
            cols += [i, j]
            vals += [pt.t * ell, (1.0 - pt.t) * ell]
            ids.append(node)
        else:
            ids.append(pt)
    if isinstance(p, NetworkPoint) and isinstance(q, NetworkPoint) and p.edge == q.edge:
        if p.t == q.t:
            return 0.0
        rows.append(ids[0])
        cols.append(ids[1])
        vals.append(abs(p.t - q.t) * lengths[p.edge])
    if ids[0] == ids[1]:
        return 0.0
    size = n + extra
    g = sp.coo_matrix((vals, (rows, cols)), shape=(size, size)).tocsr()
    d = dijkstra(g, directed=False, indices=ids[0])
    return float(d[ids[1]])


# ---------------------------------------------------------------------------
# Ahlfors-type densities


def disk_intersection_lengths(net: RoadNetwork, center, radii) -> np.ndarray:
    """Length of the network inside closed disks ``B(center, r)`` for each r.

    Exact for straight edges: the chord of each edge is found from the foot
    of the perpendicular and clipped to the edge.
    """
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    a = net.vertices[net.edges[:, 0]]
    ell = net.edge_lengths
    tan = net.edge_vectors / ell[:, None]
    w = np.asarray(center, dtype=float) - a
    foot = (w * tan).sum(1)
    perp2 = np.maximum((w * w).sum(1) - foot * foot, 0.0)
    half = np.sqrt(np.maximum(radii[:, None] ** 2 - perp2[None, :], 0.0))
    lo = np.maximum(foot - half, 0.0)
    hi = np.minimum(foot + half, ell)
    inside = np.where(radii[:, None] ** 2 > perp2[None, :], np.maximum(hi - lo, 0.0), 0.0)
    return inside.sum(1)


def _sample_centers(net: RoadNetwork, edge_samples: int) -> np.ndarray:
    ts = np.unique(np.r_[np.arange(1, edge_samples + 1) / (edge_samples + 1), 0.5])
    a = net.vertices[net.edges[:, 0]]
    d = net.edge_vectors
    pts = (a[:, None, :] + ts[None, :, None] * d[:, None, :]).reshape(-1, 2)
    return np.vstack([net.vertices, pts])


def _event_radii(net: RoadNetwork, x) -> np.ndarray:
    """Distances from x to every vertex and to every edge."""
    dv = np.hypot(*(net.vertices - x).T)
    a = net.vertices[net.edges[:, 0]]
    d = net.edge_vectors
    t = np.clip(((x - a) * d).sum(1) / (d * d).sum(1), 0.0, 1.0)
    de = np.hypot(*(a + t[:, None] * d - x).T)
    return np.r_[dv, de]


@dataclass(frozen=True)
class AhlforsEstimate:
    value: float
    center: np.ndarray
    radius: float
    edge_samples: int
    radii_per_octave: int
    n_centers: int


def ahlfors_upper_constant(
    net: RoadNetwork, edge_samples: int = 8, radii_per_octave: int = 4
) -> AhlforsEstimate:
    """Estimate ``sup H1(K ∩ B(x, r)) / r`` over centers x on K and radii r > 0.

    Centers are the vertices plus ``edge_samples`` interior points and the
    midpoint of each edge.  For each center the radii are all distances to
    vertices and edges, half the smallest of those, and the points
    ``2**(k / radii_per_octave)`` of a fixed logarithmic lattice between
    ``min_edge / 64`` and the farthest vertex.  The lattice is shared by all
    networks so that adding edges can only enlarge the candidate set.
    """
    require_valid(net)
    centers = _sample_centers(net, edge_samples)
    r_lo = net.edge_lengths.min() / 64.0
    best = (-np.inf, None, None)
    for x in centers:
        ev = _event_radii(net, x)
        far = ev[: net.n_vertices].max()
        pos = ev[ev > GEOM_EPS * far]
        k0 = math.floor(radii_per_octave * math.log2(r_lo))
        k1 = math.ceil(radii_per_octave * math.log2(far))
        grid = 2.0 ** (np.arange(k0, k1 + 1) / radii_per_octave)
        grid = grid[(grid >= r_lo) & (grid <= far)]
        radii = np.unique(np.r_[pos, 0.5 * pos.min(), grid])
        ratio = disk_intersection_lengths(net, x, radii) / radii
        k = int(np.argmax(ratio))
        if ratio[k] > best[0]:
            best = (float(ratio[k]), x.copy(), float(radii[k]))
    return AhlforsEstimate(best[0], best[1], best[2], edge_samples, radii_per_octave, len(centers))


def lower_ahlfors_check(net: RoadNetwork, samples: int = 16, n_radii: int = 32):
    """Check ``H1(K ∩ B(x, r)) >= r`` for sampled x on K and r below the reach of x.

    The reach is the distance from x to the farthest network point (a vertex).
    Returns ``(holds, worst_ratio)``.
    """
    require_valid(net)
    centers = _sample_centers(net, samples)
    worst = np.inf
    for x in centers:
        ev = _event_radii(net, x)
        far = ev[: net.n_vertices].max()
        grid = far * np.arange(1, n_radii + 1) / (n_radii + 1)
        radii = np.unique(np.r_[grid, ev[(ev > GEOM_EPS * far) & (ev < far)]])
        ratio = disk_intersection_lengths(net, x, radii) / radii
        worst = min(worst, float(ratio.min()))
    return worst >= 1.0 - 1e-12, worst


# ---------------------------------------------------------------------------
# embedding inequalities for piecewise-linear functions


def holder_embedding_check(net: RoadNetwork, f: NetworkFunction):
    """Check ``|f(x) - f(y)| <= dist_K(x, y)**0.5 * ||grad f||_2`` on all vertex pairs.

    Returns ``(holds, worst_slack)`` where slack is right minus left side.
    """
    g = f.gradient_norm(net)
    d = vertex_distances(net)
    lhs = np.abs(f.values[:, None] - f.values[None, :])
    slack = np.sqrt(d) * g - lhs
    worst = float(slack.min())
    scale = max(1.0, float(np.sqrt(d.max()) * g))
    return worst >= -1e-12 * scale, worst


def linfty_bound_check(net: RoadNetwork, f: NetworkFunction):
    """Check ``||f||_inf <= ||f||_2 / |K|**0.5 + |K|**0.5 * ||grad f||_2``.

    Returns ``(holds, slack)``.
    """
    ell = total_length(net)
    rhs = f.l2_norm(net) / math.sqrt(ell) + math.sqrt(ell) * f.gradient_norm(net)
    lhs = f.sup_norm()
    slack = rhs - lhs
    return slack >= -1e-12 * max(1.0, rhs), slack


# ---------------------------------------------------------------------------
# file format


def _data_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def parse_network(text: str) -> RoadNetwork:
    """Parse the line-oriented network format (``vertices N`` / ``edges M`` blocks)."""
    lines = list(_data_lines(text))
    pos = 0

    def header(name):
        nonlocal pos
        if pos >= len(lines) or lines[pos][1][0] != name or len(lines[pos][1]) != 2:
            where = lines[pos][0] if pos < len(lines) else "EOF"
            raise GeometryError(f"line {where}: expected '{name} <count>'")
        count = int(lines[pos][1][1])
        pos += 1
        rows = lines[pos : pos + count]
        if len(rows) != count:
            raise GeometryError(f"{name}: expected {count} rows, found {len(rows)}")
        pos += count
        return rows

    vrows = header("vertices")
    erows = header("edges")
    try:
        verts = [(float(t[0]), float(t[1])) for _, t in vrows]
        flags = [bool(int(t[2])) if len(t) > 2 else False for _, t in vrows]
        edges = [(int(t[0]), int(t[1])) for _, t in erows]
    except (ValueError, IndexError) as exc:
        raise GeometryError(f"malformed network row: {exc}") from None
    return RoadNetwork(verts, edges, flags)


def read_network(path) -> RoadNetwork:
    return parse_network(Path(path).read_text())


def format_network(net: RoadNetwork) -> str:
    out = io.StringIO()
    out.write(f"vertices {net.n_vertices}\n")
    for (x, y), b in zip(net.vertices, net.boundary):
        out.write(f"{float(x)!r} {float(y)!r} {int(b)}\n")
    out.write(f"edges {net.n_edges}\n")
    for i, j in net.edges:
        out.write(f"{i} {j}\n")
    return out.getvalue()


def write_network(net: RoadNetwork, path) -> None:
    Path(path).write_text(format_network(net), newline="\n")


def network_stats(net: RoadNetwork, edge_samples: int = 8) -> dict:
    """Key/value summary used by the ``net-stats`` command."""
    report = validate_network(net)
    stats = {
        "vertices": net.n_vertices,
        "edges": net.n_edges,
        "valid": report.valid,
        "connected": report.connected,
        "components": report.n_components,
        "zero_length_edges": len(report.zero_length_edges),
        "duplicate_edges": len(report.duplicate_edges),
        "crossings": len(report.crossings),
        "length": total_length(net),
    }
    if report.valid:
        est = ahlfors_upper_constant(net, edge_samples)
        stats["lambda_K"] = est.value
        stats["lambda_K_edge_samples"] = est.edge_samples
        stats["lower_ahlfors_ratio"] = lower_ahlfors_check(net)[1]
    return stats

