from types import SimpleNamespace

import numpy as np
import pytest
import scipy.sparse as sp

from roadfield.errors import DomainError
from roadfield.evolution import (
    EvolutionTrace,
    State,
    bump,
    decay_rate_fit,
    implicit_euler,
    initial_state,
    l_norm,
    nodal_expression,
    project_initial,
    spectral_propagate,
)
from roadfield.spectral import dense_reference_eigen, smallest_eigenpairs


@pytest.fixture(scope="module")
def full(small_system):
    return dense_reference_eigen(small_system)


def test_project_eigenvectors(small_system, full):
    e = full.eigenvectors
    c = project_initial(small_system, full, e[:, 0])
    np.testing.assert_allclose(c, np.eye(len(c))[0], atol=1e-10)
    c = project_initial(small_system, full, 2 * e[:, 0] + 3 * e[:, 1])
    np.testing.assert_allclose(c[:2], [2, 3], atol=1e-10)
    np.testing.assert_allclose(c[2:], 0, atol=1e-10)


def test_full_spectrum_reconstructs(small_system, full, rng):
    x = rng.standard_normal(small_system.n_dofs)
    c = project_initial(small_system, full, x)
    back = spectral_propagate(full, c, 0.0).values
    assert l_norm(small_system, back - x) <= 1e-8 * l_norm(small_system, x)


def test_project_dimension_mismatch(small_system, full):
    with pytest.raises(DomainError):
        project_initial(small_system, full, np.zeros(3))


def test_single_mode_decay(small_system, full):
    c = np.eye(len(full))[0]
    for t in (0.0, 0.01, 0.3):
        s = spectral_propagate(full, c, t)
        assert l_norm(small_system, s.values) == pytest.approx(np.exp(-full.lambda1 * t), rel=1e-10)


def test_negative_time_rejected(full):
    with pytest.raises(DomainError):
        spectral_propagate(full, np.ones(len(full)), -1.0)


def test_semigroup(small_system, full, rng):
    c = project_initial(small_system, full, rng.standard_normal(small_system.n_dofs))
    direct = spectral_propagate(full, c, 0.07).values
    mid = spectral_propagate(full, c, 0.03)
    two = spectral_propagate(full, project_initial(small_system, full, mid), 0.04).values
    assert l_norm(small_system, two - direct) <= 1e-12 * l_norm(small_system, direct) + 1e-300


def test_mode_dominance(small_system, full, rng):
    x = rng.standard_normal(small_system.n_dofs)
    c = project_initial(small_system, full, x)
    e1 = full.eigenvectors[:, 0]
    lam2 = full.eigenvalues[1]
    for t in (0.01, 0.05, 0.2):
        s = spectral_propagate(full, c, t).values
        lhs = l_norm(small_system, s - c[0] * np.exp(-full.lambda1 * t) * e1)
        assert lhs <= np.exp(-lam2 * t) * l_norm(small_system, x) * (1 + 1e-12)


def test_scalar_recurrence():
    lam, dt = 3.0, 0.1
    one = sp.csr_matrix([[1.0]])
    scalar = SimpleNamespace(B=sp.csr_matrix([[lam]]), Lmass=one)
    tr = implicit_euler(scalar, np.array([2.0]), dt, 5 * dt)
    np.testing.assert_allclose(tr.lnorms, 2.0 / (1 + dt * lam) ** np.arange(6), rtol=1e-14)
    assert tr.final.values[0] == pytest.approx(2.0 / (1 + dt * lam) ** 5, rel=1e-14)


@pytest.mark.parametrize("dt", [1e-4, 1e-2, 1.0])
def test_norm_nonincreasing_any_dt(small_system, dt):
    tr = implicit_euler(small_system, bump(small_system), dt, 20 * dt)
    assert np.all(np.diff(tr.lnorms) <= 0)
    assert np.all(np.diff(tr.times) > 0)


def test_bad_time_steps(small_system):
    x = bump(small_system)
    with pytest.raises(DomainError):
        implicit_euler(small_system, x, 0.0, 1.0)
    with pytest.raises(DomainError):
        implicit_euler(small_system, x, 0.1, 0.05)


def test_bit_identical_and_contractive(small_system, rng):
    x = bump(small_system)
    a = implicit_euler(small_system, x, 1e-3, 0.05, snapshot_every=10)
    b = implicit_euler(small_system, x, 1e-3, 0.05, snapshot_every=10)
    assert a.lnorms.tobytes() == b.lnorms.tobytes()
    assert a.final.values.tobytes() == b.final.values.tobytes()
    y = x + 0.1 * rng.standard_normal(len(x))
    c = implicit_euler(small_system, y, 1e-3, 0.05, snapshot_every=10)
    d0 = l_norm(small_system, x - y)
    for step in a.snapshots:
        assert l_norm(small_system, a.snapshots[step].values - c.snapshots[step].values) <= d0 * (1 + 1e-12)


def test_snapshots(small_system):
    tr = implicit_euler(small_system, bump(small_system), 0.01, 0.1, snapshot_every=5)
    assert sorted(tr.snapshots) == [0, 5, 10]
    assert tr.snapshots[5].t == pytest.approx(0.05)


def test_dt_halving_first_order(small_system, full):
    x = bump(small_system)
    c = project_initial(small_system, full, x)
    T = 0.05
    exact = spectral_propagate(full, c, T).values
    errs = []
    for dt in (T / 10, T / 20, T / 40, T / 80):
        tr = implicit_euler(small_system, x, dt, T)
        errs.append(l_norm(small_system, tr.final.values - exact))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    np.testing.assert_allclose(ratios, 2.0, rtol=0.15)


def test_decay_fit_pure_mode(small_system):
    spec = smallest_eigenpairs(small_system, 1, tol=1e-12)
    lam = spec.lambda1
    dt = 0.01 / lam
    tr = implicit_euler(small_system, spec.eigenvectors[:, 0], dt, 3 / lam)
    rate, resid = decay_rate_fit(tr)
    # backward Euler decays at log(1 + dt lam) / dt
    assert rate == pytest.approx(np.log1p(dt * lam) / dt, rel=1e-9)
    assert rate == pytest.approx(lam, rel=0.02)
    assert resid < 1e-10


def test_decay_fit_orthogonal_to_first_mode(small_system, full):
    lam2 = full.eigenvalues[1]
    x = bump(small_system)
    e1 = full.eigenvectors[:, 0]
    x = x - (e1 @ (small_system.Lmass @ x)) * e1
    dt = 0.01 / lam2
    tr = implicit_euler(small_system, x, dt, 4 / lam2)
    rate, _ = decay_rate_fit(tr, window=0.3)
    assert rate == pytest.approx(lam2, rel=0.02)


def test_decay_fit_constant_trace():
    tr = EvolutionTrace(np.linspace(0, 1, 50), np.full(50, 3.0))
    rate, resid = decay_rate_fit(tr)
    assert rate == pytest.approx(0.0, abs=1e-12)
    assert resid < 1e-12


def test_decay_fit_guards():
    t = np.linspace(0, 1, 40)
    with pytest.raises(DomainError):
        decay_rate_fit(EvolutionTrace(t, np.exp(-t)), window=0.1)
    # underflowed samples are dropped rather than producing -inf logs
    y = np.exp(-t)
    y[-5:] = 0.0
    rate, _ = decay_rate_fit(EvolutionTrace(t, y))
    assert rate == pytest.approx(1.0, rel=1e-10)


def test_initial_state_expressions(small_system):
    x = initial_state(small_system, "x * (1 - x)", "1")
    v, u = small_system.split(x)
    pts = small_system.mesh.vertices[small_system.field_dofs]
    np.testing.assert_allclose(v, pts[:, 0] * (1 - pts[:, 0]))
    np.testing.assert_allclose(u, 1.0)
    b = initial_state(small_system)
    assert np.all(small_system.split(b)[1] == 0) and b.max() > 0.5


def test_bad_expression():
    with pytest.raises(DomainError):
        nodal_expression("__import__('os')", np.zeros((2, 2)))


def test_state_time_offset(small_system):
    tr = implicit_euler(small_system, State(bump(small_system), 1.0), 0.1, 0.3)
    np.testing.assert_allclose(tr.times, [1.0, 1.1, 1.2, 1.3])
