"""Random and structured road networks for tests and demos."""
from __future__ import annotations

import numpy as np
from scipy.sparse.csgraph import minimum_spanning_tree
from scipy.spatial import Delaunay
import scipy.sparse as sp

from .meshing import DomainGeometry
from .network import RoadNetwork, segments_intersect, validate_network


def random_planar_network(rng, n_vertices: int = 8, extra_edges: int = 2, box=(0.1, 0.9)) -> RoadNetwork:
    """Connected planar network: Delaunay spanning tree plus a few Delaunay edges.

    Every edge comes from one Delaunay triangulation of the points, so no two
    edges cross.  Points are drawn uniformly in ``box**2``.
    """
    rng = np.random.default_rng(rng)
    lo, hi = box
    while True:
        pts = lo + (hi - lo) * rng.random((max(n_vertices, 3), 2))
        try:
            tri = Delaunay(pts)
        except Exception:  # degenerate draw (collinear points)
            continue
        edges = set()
        for s in tri.simplices:
            for i in range(3):
                a, b = sorted((int(s[i]), int(s[(i + 1) % 3])))
                edges.add((a, b))
        edges = sorted(edges)
        w = np.array([np.hypot(*(pts[a] - pts[b])) for a, b in edges])
        if w.min() < 1e-3 * (hi - lo):
            continue
        n = len(pts)
        G = sp.coo_matrix((w, ([a for a, _ in edges], [b for _, b in edges])), shape=(n, n))
        T = minimum_spanning_tree(G).tocoo()
        tree = {(min(a, b), max(a, b)) for a, b in zip(T.row, T.col)}
        rest = [e for e in edges if e not in tree]
        pick = rng.permutation(len(rest))[: min(extra_edges, len(rest))]
        chosen = sorted(tree | {rest[k] for k in pick})
        net = RoadNetwork(pts, chosen)
        if validate_network(net).valid:
            return net


def random_tree(rng, n_vertices: int = 8, box=(0.1, 0.9)) -> RoadNetwork:
    """Random spanning tree of a Delaunay triangulation."""
    return random_planar_network(rng, n_vertices, 0, box)


def random_function_values(rng, net: RoadNetwork, kind: str | None = None) -> np.ndarray:
    """Vertex values of a test function: gaussian, smooth, spiky or constant."""
    rng = np.random.default_rng(rng)
    kind = kind or rng.choice(["gaussian", "smooth", "spiky", "constant"])
    n = net.n_vertices
    if kind == "gaussian":
        return rng.standard_normal(n)
    if kind == "smooth":
        k = rng.normal(size=2) * 3
        return np.sin(net.vertices @ k + rng.random() * 6.28)
    if kind == "spiky":
        v = np.zeros(n)
        v[rng.integers(n)] = rng.choice([-1, 1]) * 10 ** rng.uniform(-3, 3)
        return v
    return np.full(n, rng.normal())


def lattice_tree(rng, domain: DomainGeometry, spacing: float = 0.25, n_vertices: int = 6) -> RoadNetwork:
    """Random tree on grid nodes strictly inside ``domain``.

    Grid edges never cross and never pass through domain corners when the
    corners sit on the grid, which keeps meshing well posed.
    """
    rng = np.random.default_rng(rng)
    lo, hi = domain.bounding_box()
    xs = np.arange(lo[0] + spacing, hi[0] - 0.5 * spacing, spacing)
    ys = np.arange(lo[1] + spacing, hi[1] - 0.5 * spacing, spacing)
    nodes = {(i, j) for i in range(len(xs)) for j in range(len(ys))
             if domain.contains((xs[i], ys[j])) and not domain.on_boundary((xs[i], ys[j]), 1e-9)}

    def inside(a, b):
        mid = 0.5 * (np.array([xs[a[0]], ys[a[1]]]) + np.array([xs[b[0]], ys[b[1]]]))
        return domain.contains(mid) and not domain.on_boundary(mid, 1e-9)

    order = sorted(nodes)
    start = order[rng.integers(len(order))]
    tree, edges = [start], []
    while len(tree) < n_vertices:
        frontier = []
        for k, (i, j) in enumerate(tree):
            for d in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                nb = (i + d[0], j + d[1])
                if nb in nodes and nb not in tree and inside((i, j), nb):
                    frontier.append((k, nb))
        if not frontier:
            break
        k, nb = frontier[rng.integers(len(frontier))]
        tree.append(nb)
        edges.append((k, len(tree) - 1))
    pts = np.array([(xs[i], ys[j]) for i, j in tree])
    return RoadNetwork(pts, edges)


def crossing_free(net: RoadNetwork) -> bool:
    """Independent pairwise check used by tests."""
    for a in range(net.n_edges):
        for b in range(a + 1, net.n_edges):
            if set(net.edges[a]) & set(net.edges[b]):
                continue
            p1, p2 = net.vertices[net.edges[a]]
            q1, q2 = net.vertices[net.edges[b]]
            if segments_intersect(p1, p2, q1, q2):
                return False
    return True


def random_params(rng, low: float = 0.2, high: float = 5.0):
    """Coupling parameters drawn log-uniformly from ``[low, high]``."""
    from .assembly import CouplingParams

    rng = np.random.default_rng(rng)
    return CouplingParams(*(float(x) for x in np.exp(rng.uniform(np.log(low), np.log(high), 4))))


def random_configuration(seed: int):
    """``(domain, network, params)`` for property sweeps.

    The draw cycles through four kinds by ``seed % 4``: a random Delaunay tree
    in the square, a wall-to-wall chord of the square (both ends Dirichlet),
    a lattice tree in the L-shape, and a random planar network with a cycle.
    """
    rng = np.random.default_rng(seed)
    kind = seed % 4
    if kind == 0:
        dom = DomainGeometry.unit_square()
        net = random_tree(rng, int(rng.integers(3, 7)), box=(0.15, 0.85))
    elif kind == 1:
        dom = DomainGeometry.unit_square()
        y0, y1 = rng.uniform(0.2, 0.8, 2)
        net = RoadNetwork.segment((0.0, y0), (1.0, y1), [True, True])
    elif kind == 2:
        dom = DomainGeometry.l_shape()
        net = lattice_tree(rng, dom, spacing=0.125, n_vertices=int(rng.integers(3, 8)))
    else:
        dom = DomainGeometry.unit_square()
        net = random_planar_network(rng, 5, 1, box=(0.15, 0.85))
    return dom, net, random_params(rng)
