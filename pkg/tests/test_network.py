import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from roadfield.errors import DomainError, GeometryError
from roadfield.generators import crossing_free, random_function_values, random_planar_network, random_tree
from roadfield.meshing import DomainGeometry
from roadfield.network import (
    NetworkFunction,
    NetworkPoint,
    RoadNetwork,
    ahlfors_upper_constant,
    disk_intersection_lengths,
    format_network,
    geodesic_distance,
    holder_embedding_check,
    linfty_bound_check,
    locate,
    lower_ahlfors_check,
    network_stats,
    parse_network,
    require_valid,
    segments_intersect,
    total_length,
    validate_network,
    vertex_distances,
)


def floyd_warshall(net):
    n = net.n_vertices
    d = np.full((n, n), np.inf)
    np.fill_diagonal(d, 0.0)
    for (i, j), ell in zip(net.edges, net.edge_lengths):
        d[i, j] = d[j, i] = min(d[i, j], ell)
    for k in range(n):
        d = np.minimum(d, d[:, k, None] + d[None, k, :])
    return d


def param_intersect(p1, p2, q1, q2):
    """Solve p1 + s (p2 - p1) = q1 + t (q2 - q1) for s, t in [0, 1]."""
    A = np.column_stack([p2 - p1, q1 - q2])
    if abs(np.linalg.det(A)) < 1e-14:
        return None
    s, t = np.linalg.solve(A, q1 - p1)
    return -1e-12 <= s <= 1 + 1e-12 and -1e-12 <= t <= 1 + 1e-12


# --- validation -------------------------------------------------------------


def test_unit_segment_is_valid():
    rep = validate_network(RoadNetwork.segment((0, 0), (1, 0)))
    assert rep.valid and rep.connected


def test_disjoint_segments_are_disconnected():
    net = RoadNetwork([(0, 0), (1, 0), (0, 1), (1, 1)], [(0, 1), (2, 3)])
    rep = validate_network(net)
    assert not rep.valid
    assert rep.n_components == 2


def test_crossing_diagonals_rejected():
    net = RoadNetwork([(0, 0), (1, 1), (0, 1), (1, 0), (0.5, 2)], [(0, 1), (2, 3), (1, 4), (4, 2)])
    rep = validate_network(net)
    assert rep.connected
    assert rep.crossings
    p = net.vertices
    assert param_intersect(p[0], p[1], p[2], p[3])


def test_zero_length_and_duplicate_edges():
    net = RoadNetwork([(0, 0), (0, 0), (1, 0)], [(0, 1), (1, 2), (2, 1)])
    rep = validate_network(net)
    assert rep.zero_length_edges and rep.duplicate_edges
    with pytest.raises(GeometryError):
        require_valid(net)


def test_collinear_overlap_at_shared_vertex():
    net = RoadNetwork([(0, 0), (1, 0), (0.5, 0)], [(0, 1), (0, 2)])
    assert validate_network(net).crossings


def test_vertex_outside_domain():
    net = RoadNetwork.segment((0.5, 0.5), (1.5, 0.5))
    assert validate_network(net, DomainGeometry.unit_square()).outside_vertices == [1]


@pytest.mark.parametrize("p,q,touching", [
    ((0.0, 0.2), (0.0, 0.8), True),     # runs along the left side
    ((0.0, 0.0), (1.0, 0.0), True),     # the whole bottom side
    ((0.0, 0.5), (1.0, 0.5), False),    # wall to wall, two contact points
    ((0.5, 0.0), (0.5, 1.0), False),
    ((0.0, 0.0), (1.0, 1.0), False),    # corner to corner
])
def test_boundary_overlap_square(p, q, touching):
    rep = validate_network(RoadNetwork.segment(p, q, [True, True]), DomainGeometry.unit_square())
    assert (rep.boundary_overlaps == [0]) == touching
    assert rep.valid != touching and not rep.outside_edges


def test_edge_leaving_lshape():
    dom = DomainGeometry.l_shape()
    across = RoadNetwork.segment((0.25, 0.9), (0.9, 0.25))  # both ends inside, middle in the notch
    rep = validate_network(across, dom)
    assert rep.outside_edges == [0] and not rep.outside_vertices and not rep.valid
    # touching the reentrant corner once is allowed
    assert validate_network(RoadNetwork.segment((0.1, 0.1), (0.5, 0.5), [False, True]), dom).valid
    # sliding along the notch side is not
    assert validate_network(RoadNetwork.segment((0.5, 0.5), (0.5, 0.8), [True, True]), dom).boundary_overlaps == [0]


@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=8, max_size=8))
def test_segments_intersect_matches_parametric_solve(c):
    p1, p2, q1, q2 = (np.array(c[i : i + 2]) for i in range(0, 8, 2))
    expected = param_intersect(p1, p2, q1, q2)
    if expected is None:
        return  # parallel or degenerate: the oracle has no unique answer
    A = np.column_stack([p2 - p1, q1 - q2])
    s, t = np.linalg.solve(A, q1 - p1)
    if min(abs(s), abs(s - 1), abs(t), abs(t - 1)) < 1e-6:
        return  # touching configurations are sensitive to round-off
    assert segments_intersect(p1, p2, q1, q2) == expected


# --- length and geodesics -----------------------------------------------------


def test_total_length_examples():
    assert total_length(RoadNetwork.segment((0, 0), (1, 0))) == 1.0
    cross = RoadNetwork([(0.5, 0.5), (0, 0.5), (1, 0.5), (0.5, 0), (0.5, 1)], [(0, 1), (0, 2), (0, 3), (0, 4)])
    assert total_length(cross) == pytest.approx(2.0, rel=1e-15)
    assert total_length(RoadNetwork.polyline([(0, 0), (1, 0), (1, 1)])) == 2.0


def test_geodesic_examples():
    seg = RoadNetwork.segment((0, 0), (3, 4))
    assert geodesic_distance(seg, 0, 1) == pytest.approx(5.0)
    path = RoadNetwork.polyline([(0, 0), (1, 0), (1, 1)])
    assert geodesic_distance(path, (0.0, 0.0), (1.0, 1.0)) == pytest.approx(2.0)
    assert math.hypot(1, 1) < geodesic_distance(path, 0, 2)


def test_geodesic_between_edge_points():
    path = RoadNetwork.polyline([(0, 0), (1, 0), (1, 1)])
    assert geodesic_distance(path, NetworkPoint(0, 0.25), NetworkPoint(1, 0.5)) == pytest.approx(1.25)
    assert geodesic_distance(path, NetworkPoint(0, 0.25), NetworkPoint(0, 0.75)) == pytest.approx(0.5)
    assert geodesic_distance(path, (0, 0.3), (0, 0.3)) == 0.0
    assert geodesic_distance(path, np.array([0.5, 0.0]), np.array([1.0, 0.5])) == pytest.approx(1.0)


def test_off_network_point_rejected():
    with pytest.raises(DomainError):
        geodesic_distance(RoadNetwork.segment((0, 0), (1, 0)), (0.5, 0.2), 0)
    with pytest.raises(DomainError):
        locate(RoadNetwork.segment((0, 0), (1, 0)), 7)


@pytest.mark.parametrize("seed", range(10))
def test_vertex_distances_match_floyd_warshall(seed):
    net = random_planar_network(seed, n_vertices=12, extra_edges=4)
    np.testing.assert_allclose(vertex_distances(net), floyd_warshall(net), rtol=1e-12)


@given(st.integers(0, 10_000), st.lists(st.tuples(st.integers(0, 50), st.floats(0, 1)), min_size=3, max_size=3))
def test_geodesic_is_a_metric_above_euclid(seed, pts):
    net = random_planar_network(seed, n_vertices=7, extra_edges=2)
    p, q, r = (NetworkPoint(e % net.n_edges, t) for e, t in pts)
    pq = geodesic_distance(net, p, q)
    qr = geodesic_distance(net, q, r)
    pr = geodesic_distance(net, p, r)
    tol = 1e-12 * (1 + pq + qr)
    assert pq == pytest.approx(geodesic_distance(net, q, p), rel=1e-12, abs=1e-14)
    assert pr <= pq + qr + tol
    assert pq >= np.hypot(*(net.position(p) - net.position(q))) - tol


# --- Ahlfors densities ----------------------------------------------------------


def test_disk_intersection_closed_form():
    seg = RoadNetwork.segment((0, 0), (1, 0))
    np.testing.assert_allclose(disk_intersection_lengths(seg, (0.5, 0), [0.1, 0.5, 2.0]), [0.2, 1.0, 1.0])
    # chord of a disk centred off the segment: 2 sqrt(r^2 - d^2)
    np.testing.assert_allclose(disk_intersection_lengths(seg, (0.5, 0.3), [0.5]), [0.8])


@pytest.mark.parametrize("length", [0.01, 1.0, 37.0])
def test_segment_ahlfors_constant_is_two(length):
    est = ahlfors_upper_constant(RoadNetwork.segment((0, 0), (length, 0)))
    assert est.value == pytest.approx(2.0, rel=1e-2)
    assert est.value <= 2.0 + 1e-12


def test_cross_ahlfors_constant_is_four(cross_road):
    est = ahlfors_upper_constant(cross_road)
    assert est.value == pytest.approx(4.0, rel=1e-2)


def test_regular_polygon_ahlfors_near_pi():
    th = 2 * np.pi * np.arange(64) / 64
    ring = RoadNetwork(np.c_[np.cos(th), np.sin(th)], [(k, (k + 1) % 64) for k in range(64)])
    est = ahlfors_upper_constant(ring)
    assert est.value == pytest.approx(np.pi, rel=2e-2)


@pytest.mark.parametrize("seed", range(5))
def test_ahlfors_monotone_under_adding_edges(seed):
    full = random_planar_network(seed, n_vertices=8, extra_edges=3)
    tree = random_planar_network(seed, n_vertices=8, extra_edges=0)
    np.testing.assert_array_equal(tree.vertices, full.vertices)
    assert ahlfors_upper_constant(tree).value <= ahlfors_upper_constant(full).value + 1e-12


def test_lower_ahlfors_examples():
    seg = RoadNetwork.segment((0, 0), (1, 0))
    assert disk_intersection_lengths(seg, (0.5, 0), [0.3])[0] / 0.3 == pytest.approx(2.0)
    assert disk_intersection_lengths(seg, (0.0, 0), [0.5])[0] / 0.5 == pytest.approx(1.0)
    ok, worst = lower_ahlfors_check(seg)
    assert ok and worst == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(10))
def test_lower_ahlfors_on_random_trees(seed):
    ok, worst = lower_ahlfors_check(random_tree(seed, n_vertices=int(3 + seed % 8)))
    assert ok and worst >= 1 - 1e-12


# --- embedding inequalities ---------------------------------------------------------


def test_holder_constant_function():
    net = random_tree(3)
    ok, slack = holder_embedding_check(net, NetworkFunction(np.full(net.n_vertices, 2.5)))
    assert ok and slack == 0.0


def test_holder_equality_for_linear_function():
    seg = RoadNetwork.segment((0, 0), (1, 0))
    f = NetworkFunction([0.0, 1.0])
    assert f.gradient_norm(seg) == pytest.approx(1.0)
    ok, slack = holder_embedding_check(seg, f)
    assert ok and abs(slack) < 1e-15


def test_linfty_examples():
    seg = RoadNetwork.segment((0, 0), (1, 0))
    ok, slack = linfty_bound_check(seg, NetworkFunction([-3.0, -3.0]))
    assert ok and slack == pytest.approx(0.0, abs=1e-15)
    f = NetworkFunction([0.0, 1.0])
    assert f.l2_norm(seg) == pytest.approx(1 / math.sqrt(3), rel=1e-15)
    ok, slack = linfty_bound_check(seg, f)
    assert ok and slack == pytest.approx(1 / math.sqrt(3), rel=1e-14)


def test_l2_norm_matches_quadrature():
    net = random_planar_network(7, n_vertices=6, extra_edges=1)
    vals = np.random.default_rng(0).standard_normal(net.n_vertices)
    s = np.linspace(0, 1, 2001)
    total = 0.0
    for (i, j), ell in zip(net.edges, net.edge_lengths):
        g = (1 - s) * vals[i] + s * vals[j]
        y = g * g
        total += ell * (y.sum() - 0.5 * (y[0] + y[-1])) * (s[1] - s[0])
    assert NetworkFunction(vals).l2_norm(net) ** 2 == pytest.approx(total, rel=1e-6)


@given(st.integers(0, 10_000), st.sampled_from(["gaussian", "smooth", "spiky", "constant"]))
def test_embedding_inequalities_fuzz(seed, kind):
    net = random_planar_network(seed, n_vertices=3 + seed % 9, extra_edges=seed % 3)
    f = NetworkFunction(random_function_values(seed, net, kind))
    assert holder_embedding_check(net, f)[0]
    assert linfty_bound_check(net, f)[0]


def test_function_value_count_checked():
    with pytest.raises(DomainError):
        NetworkFunction([1.0, 2.0]).l2_norm(RoadNetwork.polyline([(0, 0), (1, 0), (2, 0)]))


# --- generators and file format ---------------------------------------------------------


@pytest.mark.parametrize("seed", range(10))
def test_generated_networks_are_valid(seed):
    net = random_planar_network(seed, n_vertices=10, extra_edges=3)
    assert validate_network(net).valid
    assert crossing_free(net)


def test_network_file_round_trip(cross_road):
    text = format_network(cross_road)
    back = parse_network("# comment\n" + text)
    np.testing.assert_array_equal(back.vertices, cross_road.vertices)
    np.testing.assert_array_equal(back.edges, cross_road.edges)
    np.testing.assert_array_equal(back.boundary, cross_road.boundary)


@pytest.mark.parametrize(
    "text",
    ["vertices 2\n0 0 0\nedges 1\n0 1\n", "vertices 2\n0 0 0\n1 0 0\nedges 1\n0 5\n", "edges 1\n0 1\n"],
)
def test_malformed_network_files(text):
    with pytest.raises(GeometryError):
        parse_network(text)


def test_network_stats_keys(mid_road):
    stats = network_stats(mid_road)
    assert stats["valid"] and stats["length"] == 1.0
    assert stats["lambda_K"] == pytest.approx(2.0, rel=1e-2)
    assert stats["lower_ahlfors_ratio"] >= 1 - 1e-12


def test_network_arrays_read_only(mid_road):
    with pytest.raises(ValueError):
        mid_road.vertices[0, 0] = 3.0
