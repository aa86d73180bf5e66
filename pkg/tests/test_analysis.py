import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from roadfield.analysis import (
    alpha_root,
    classify,
    coercivity_constant,
    constants_report,
    efficiency_report,
    elementary_inequality_check,
    lambda1_lower_bound,
    trace_constant,
    trace_constant_dense,
    trinomial,
)
from roadfield.assembly import CouplingParams, assemble_field, assemble_trace_coupling, build_system
from roadfield.errors import ConfigurationError, DomainError
from roadfield.generators import random_configuration
from roadfield.meshing import triangulate
from roadfield.network import RoadNetwork
from roadfield.spectral import dirichlet_gamma, smallest_eigenpairs

positive = st.floats(1e-3, 1e3)


def test_alpha_golden_example():
    assert alpha_root(1, 1, 1, 1, 1) == pytest.approx((3 - math.sqrt(5)) / 2, rel=1e-15)


@pytest.mark.parametrize("a,p", [(1.0, 0.3), (2.0, 1.5), (5.0, 0.01)])
def test_alpha_without_trace_term(a, p):
    # with C_T nu -> 0 the trinomial factors as (aX - C_P mu)(X - 1)
    assert alpha_root(a, p, 1e-14, 1.0, 1.0) == pytest.approx(p / a, rel=1e-10)


def test_alpha_vanishes_with_poincare_term():
    vals = [alpha_root(1, m, 1, 1, 1) for m in (1e-2, 1e-5, 1e-10)]
    assert vals == sorted(vals, reverse=True)
    assert vals[-1] < 1e-9


@given(positive, positive, positive, positive, positive)
def test_alpha_is_root_in_unit_interval(a, mu, nu, C_P, C_T):
    al = alpha_root(a, mu, nu, C_P, C_T)
    assert 0 < al < 1
    scale = a + (a + C_P * mu + C_T * nu) + C_P * mu
    assert abs(trinomial(a, mu, nu, C_P, C_T, al)) <= 1e-12 * scale


@pytest.mark.parametrize("bad", [(0, 1, 1, 1, 1), (1, -1, 1, 1, 1), (1, 1, 1, 1, np.inf)])
def test_alpha_rejects_nonpositive(bad):
    with pytest.raises(DomainError):
        alpha_root(*bad)


def test_coercivity_example():
    assert coercivity_constant(CouplingParams(3, 1, 1, 1), 1.0, 1.0) == pytest.approx(0.5)


def test_coercivity_follows_b():
    for b in (1e-2, 1e-5, 1e-9):
        assert coercivity_constant(CouplingParams(1, b, 1, 1), 1.0, 1.0) == b


def test_coercivity_rejects_nonpositive_constants():
    with pytest.raises(DomainError):
        coercivity_constant(CouplingParams(), 0.0, 1.0)


def test_elementary_inequality_examples():
    assert elementary_inequality_check(1, 1, 0)
    assert elementary_inequality_check(0, 2.5, 0.7)
    with pytest.raises(DomainError):
        elementary_inequality_check(1, 1, -0.1)


@given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6), st.floats(0, 1e6))
def test_elementary_inequality_fuzz(al, be, eps):
    assert elementary_inequality_check(al, be, eps)


def test_elementary_inequality_bulk(rng):
    a, b = rng.normal(size=(2, 100_000)) * 10 ** rng.uniform(-3, 3, (2, 100_000))
    eps = 10 ** rng.uniform(-6, 6, 100_000)
    assert all(elementary_inequality_check(x, y, e) for x, y, e in zip(a, b, eps))


def test_c0_example():
    # (a / C_P) alpha with C_P = 1/(2 pi^2) and the golden alpha
    c0 = lambda1_lower_bound(1.0, 1 / (2 * np.pi**2), (3 - math.sqrt(5)) / 2)
    assert c0 == pytest.approx(2 * np.pi**2 * (3 - math.sqrt(5)) / 2, rel=1e-14)
    assert c0 == pytest.approx(7.5397, abs=1e-4)


def test_c0_scaling_in_a():
    C_P, C_T, mu, nu = 0.05, 0.2, 1.3, 0.8
    for a in (0.5, 1.0, 2.0):
        al = alpha_root(a, mu, nu, C_P, C_T)
        # recompute the root from the monic quadratic directly
        s = (a + C_P * mu + C_T * nu) / a
        ref = (s - math.sqrt(s * s - 4 * C_P * mu / a)) / 2
        assert al == pytest.approx(ref, rel=1e-9)
        assert lambda1_lower_bound(a, C_P, al) == pytest.approx(a / C_P * ref, rel=1e-9)


def test_c0_vanishes_with_alpha():
    assert lambda1_lower_bound(1.0, 0.05, 1e-12) < 1e-9
    with pytest.raises(DomainError):
        lambda1_lower_bound(1.0, 0.05, 1.0)


@pytest.fixture(scope="module")
def cross_mesh(square, cross_road):
    return triangulate(square, cross_road, 1 / 8)


def test_trace_constant_dense_match(cross_mesh):
    assert trace_constant(cross_mesh) == pytest.approx(trace_constant_dense(cross_mesh), rel=1e-8)


def test_trace_constant_sampling(cross_mesh, rng):
    C_T = trace_constant(cross_mesh)
    A, _ = assemble_field(cross_mesh)
    T, _, _ = assemble_trace_coupling(cross_mesh)
    f = np.nonzero(~cross_mesh.on_boundary)[0]
    A, T = A[f][:, f], T[f][:, f]
    V = rng.standard_normal((1000, len(f)))
    lhs = np.einsum("ij,ij->i", V, (T @ V.T).T)
    rhs = np.einsum("ij,ij->i", V, (A @ V.T).T)
    assert np.all(lhs <= C_T * rhs * (1 + 1e-12))


def test_trace_constant_monotone_in_road(cross_mesh):
    # drop the road edges of one arm on the same mesh
    parent = cross_mesh.road_parent
    keep = parent != 3
    sub = dataclasses.replace(cross_mesh, road_edges=cross_mesh.road_edges[keep],
                              road_parent=parent[keep], road_arc=cross_mesh.road_arc[keep])
    assert trace_constant(sub) <= trace_constant(cross_mesh) * (1 + 1e-10)


def test_trace_constant_needs_road(square):
    with pytest.raises(DomainError):
        trace_constant(triangulate(square, None, 0.25))


@pytest.mark.parametrize("ratio,band,label", [
    (1.5, 1e-3, "improves"), (0.5, 1e-3, "slows"), (1.0005, 1e-3, "neutral"),
    (0.9995, 1e-3, "neutral"), (1.0005, 1e-4, "improves"),
])
def test_classify(ratio, band, label):
    assert classify(ratio, band) == label


@pytest.mark.parametrize("seed", range(6))
def test_bound_chain_on_corpus(seed):
    dom, net, params = random_configuration(seed)
    mesh = triangulate(dom, net, 1 / 8)
    sys_ = build_system(mesh, params)
    spec = smallest_eigenpairs(sys_, 1, tol=1e-10)
    gamma = dirichlet_gamma(mesh, params.a)[0]
    rep = efficiency_report(sys_, spec, gamma, mesh, net)
    c = rep.constants
    assert rep.bound_holds and c.c0 <= rep.lambda1
    assert 0 < c.alpha < 1
    assert all(np.isfinite([c.C_P, c.C_T, c.Lambda_K, c.c0, c.c_coer]))
    assert rep.ratio == pytest.approx(rep.lambda1 / rep.gamma1, rel=1e-15)


def test_constants_report_poincare(square, mid_road):
    mesh = triangulate(square, mid_road, 1 / 16)
    rep = constants_report(mesh, CouplingParams(), mid_road)
    assert rep.C_P == pytest.approx(1 / (2 * np.pi**2), rel=0.03)
    assert rep.Lambda_K == pytest.approx(2.0, rel=0.01)


def test_mismatched_meshes_rejected(square, mid_road, small_system):
    other = triangulate(square, mid_road, 1 / 6)
    spec = smallest_eigenpairs(small_system, 1)
    with pytest.raises(ConfigurationError):
        efficiency_report(small_system, spec, 20.0, other, mid_road)


def test_self_comparison_is_neutral(square):
    # without a road the coupled operator reduces to the Dirichlet field operator
    mesh = triangulate(square, None, 1 / 8)
    sys_ = build_system(mesh, CouplingParams(1.7, 1, 1, 0.6))
    spec = smallest_eigenpairs(sys_, 1, tol=1e-12)
    gamma = dirichlet_gamma(mesh, 1.7, tol=1e-12)[0]
    rep = efficiency_report(sys_, spec, gamma, mesh, with_constants=False)
    assert rep.ratio == pytest.approx(1.0, abs=1e-10)
    assert rep.classification == "neutral"


def test_ranking_stable_under_refinement(square):
    params = CouplingParams(1, 10, 1, 1)
    roads = {
        "chord": RoadNetwork.segment((0.0, 0.3), (1.0, 0.7), [True, True]),
        "stub": RoadNetwork.segment((0.4, 0.5), (0.6, 0.5)),
    }
    ratios = {}
    for h in (1 / 8, 1 / 16):
        for name, net in roads.items():
            mesh = triangulate(square, net, h)
            sys_ = build_system(mesh, params)
            lam = smallest_eigenpairs(sys_, 1, tol=1e-10).lambda1
            ratios[name, h] = lam / dirichlet_gamma(mesh, 1.0)[0]
    for h in (1 / 8, 1 / 16):
        assert ratios["chord", h] > ratios["stub", h]
    assert ratios["chord", 1 / 16] == pytest.approx(ratios["chord", 1 / 8], rel=0.02)
