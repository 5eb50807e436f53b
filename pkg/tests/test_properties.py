"""Property-based checks of the structural invariants."""
import math

import numpy as np
from hypothesis import given, settings, strategies as st

from vnslimit.characteristics import PhasePoint, exit_time_free, free_flow, push_exponential
from vnslimit.diagnostics import decay_fit, hminus1_norm
from vnslimit.fluid import project
from vnslimit.grid import Grid, ScalarField, VectorField, cell_average, interpolate
from vnslimit.kinetic import ParticleEnsemble, deposit

finite = st.floats(-3.0, 3.0, allow_nan=False)
eps_s = st.floats(1e-3, 1e3)
dt_s = st.floats(1e-3, 2.0)
vec2 = st.tuples(finite, finite).map(np.array)


@given(vec2, vec2, vec2, eps_s, dt_s)
def test_push_semigroup(x, v, u, eps, dt):
    p = PhasePoint(x, v)
    two = push_exponential(push_exponential(p, u, eps, dt), u, eps, dt)
    one = push_exponential(p, u, eps, 2 * dt)
    scale = 1 + np.abs(x).max() + np.abs(v).max() + np.abs(u).max() + 2 * dt
    assert np.abs(two.x - one.x).max() <= 1e-12 * scale
    assert np.abs(two.v - one.v).max() <= 1e-12 * scale


@given(vec2, vec2, vec2, eps_s, dt_s)
def test_push_contracts_towards_terminal_velocity(x, v, u, eps, dt):
    target = u - np.array([0.0, 1.0])
    q = push_exponential(PhasePoint(x, v), u, eps, dt)
    lhs = np.linalg.norm(q.v - target)
    assert lhs <= math.exp(-dt / eps) * np.linalg.norm(v - target) + 1e-14 * (1 + np.abs(target).max())


@given(st.floats(-1.0, 3.0), eps_s, st.lists(dt_s, min_size=2, max_size=6))
def test_free_fall_velocity_monotone_above_terminal(vz, eps, steps):
    p = PhasePoint(np.array([0.0, 1.0]), np.array([0.0, vz]))
    prev = vz
    for dt in steps:
        p = free_flow(p, eps, dt)
        assert p.v[1] >= -1.0
        assert p.v[1] <= prev + 1e-15
        prev = p.v[1]


@given(st.sampled_from([0.5, 1.0, 2.0]), st.sampled_from([0.5, 1.0, 2.0]),
       st.sampled_from([0.5, 0.25, 0.1]), st.floats(1e-6, 1.0), st.floats(-1.0, 1.0))
def test_free_exit_time_bound(L, R, eps, zfrac, vfrac):
    z0, vz = L * zfrac, R * vfrac
    assert exit_time_free(z0, vz, eps) < L + eps * (1 + R)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 4 * 2**20 - 1), st.floats(0.0, 4.0))
def test_interpolation_periodic_wrap(seed, k, z):
    # dyadic abscissae, so that x + Lx is itself exactly representable
    x = k / 2**20
    g = Grid.uniform(8)
    rng = np.random.default_rng(seed)
    f = VectorField(g, (rng.random(g.face_shape(0)), rng.random(g.face_shape(1))))
    p = np.array([x, z])
    assert np.array_equal(interpolate(f, p), interpolate(f, p + np.array([4.0, 0.0])))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 300))
def test_deposit_mass_and_brinkman_identity(seed, n):
    g = Grid.uniform(8)
    rng = np.random.default_rng(seed)
    x = np.column_stack([4 * rng.random(n), 4 * rng.random(n)])
    ens = ParticleEnsemble.from_arrays(x, rng.standard_normal((n, 2)), rng.random(n))
    u = VectorField(g, tuple(project([rng.standard_normal(g.face_shape(a)) for a in (0, 1)], g)[0]))
    m = deposit(ens, u)
    assert m.rho.values.min() >= 0
    assert math.isclose(m.rho.integral(), ens.alive_mass, rel_tol=1e-12, abs_tol=1e-300)
    uc = cell_average(u).components
    for a in range(2):
        assert np.array_equal(m.brinkman.components[a], m.j.components[a] - m.rho.values * uc[a])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.booleans())
def test_hminus1_below_l2(seed, periodic):
    g = Grid.uniform(12, periodic_z=periodic)
    th = ScalarField(g, np.random.default_rng(seed).standard_normal(g.cells))
    assert hminus1_norm(th) <= th.l2_norm() * (1 + 1e-14)


@given(st.floats(1e-3, 1e3), st.floats(-3.0, 0.5))
def test_decay_fit_scale_invariant(c, p):
    t = np.linspace(0, 20, 30)
    base = np.column_stack([t, (1 + t) ** p])
    scaled = np.column_stack([t, c * (1 + t) ** p])
    assert math.isclose(decay_fit(base, (5, 20)), decay_fit(scaled, (5, 20)), abs_tol=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_projection_idempotent(seed):
    g = Grid.uniform(16)
    rng = np.random.default_rng(seed)
    u, _ = project([rng.standard_normal(g.face_shape(a)) for a in (0, 1)], g)
    again, _ = project(u, g)
    assert max(np.abs(a - b).max() for a, b in zip(u, again)) <= 1e-12
