import math

import numpy as np
import pytest

from vnslimit.characteristics import PhasePoint, free_flow
from vnslimit.grid import Grid, VectorField
from vnslimit.kinetic import (ABSORBED, InitialKineticSpec, ParticleEnsemble, advance_particles,
                              deposit, monokinetic_functional, sample_initial)


@pytest.fixture
def grid():
    return Grid.uniform(16)


def test_monokinetic_sample_is_exact(grid):
    ens = sample_initial(InitialKineticSpec(n_particles=500, temperature=0.0), grid, seed=1)
    assert np.all(ens.velocities == np.array([0.0, -1.0]))


def test_equal_weights_sum_to_mass(grid):
    ens = sample_initial(InitialKineticSpec(n_particles=10_000), grid, seed=0)
    assert np.all(ens.weights == 1e-4)
    assert math.fsum(ens.weights) == 1.0
    assert ens.initial_mass == 1.0


def test_temperature_matches_sample_variance(grid):
    n, theta = 10_000, 0.01
    ens = sample_initial(InitialKineticSpec(n_particles=n, temperature=theta), grid, seed=3)
    band = 3 * theta * math.sqrt(2 / (n - 1))
    var = ens.velocities.var(axis=0, ddof=1)
    assert np.all(np.abs(var - theta) < band)


def test_sampling_is_deterministic_and_positions_shared(grid):
    a = sample_initial(InitialKineticSpec(n_particles=300, temperature=0.02), grid, seed=7)
    b = sample_initial(InitialKineticSpec(n_particles=300, temperature=0.02), grid, seed=7)
    c = sample_initial(InitialKineticSpec(n_particles=300, temperature=0.0), grid, seed=7)
    assert np.array_equal(a.positions, b.positions) and np.array_equal(a.velocities, b.velocities)
    assert np.array_equal(a.positions, c.positions)


def test_sampled_positions_inside_blob(grid):
    spec = InitialKineticSpec(n_particles=2000, center=(2.0, 2.5), radius=0.75)
    ens = sample_initial(spec, grid, seed=0)
    r = np.linalg.norm(ens.positions - np.array([2.0, 2.5]), axis=1)
    # jitter stays within the fine cell that straddles the support
    assert r.max() < 0.75 + math.sqrt(2) * grid.spacing[0] / 4


def test_support_touching_wall_rejected(grid):
    with pytest.raises(ValueError):
        sample_initial(InitialKineticSpec(center=(2.0, 0.5), radius=0.75), grid)
    with pytest.raises(ValueError):
        sample_initial(InitialKineticSpec(center=(2.0, 3.5), radius=0.75), grid)
    with pytest.raises(ValueError):
        sample_initial(InitialKineticSpec(density=lambda x, z: np.ones_like(z)), grid)


def test_mean_velocity_follows_fluid(grid):
    X, Z = grid.mesh(0)
    u = VectorField(grid, (np.full(grid.face_shape(0), 0.2), np.zeros(grid.face_shape(1))))
    ens = sample_initial(InitialKineticSpec(n_particles=100), grid, seed=0, u0=u)
    assert np.allclose(ens.velocities, [0.2, -1.0], atol=1e-15)


def test_deposit_empty(grid):
    m = deposit(ParticleEnsemble.empty(2), VectorField.zeros(grid))
    assert not m.rho.values.any() and not any(c.any() for c in m.j.components)
    assert not any(c.any() for c in m.brinkman.components)


def test_deposit_single_particle_on_node():
    g = Grid.uniform(4)  # h = 1
    ens = ParticleEnsemble.from_arrays([[1.5, 2.5]], [[2.0, 0.0]], [1.0])
    m = deposit(ens, VectorField.zeros(g))
    expect = np.zeros((4, 4))
    expect[1, 2] = 1.0
    assert np.array_equal(m.rho.values, expect)
    assert np.array_equal(m.j.components[0], 2 * expect) and not m.j.components[1].any()
    assert np.array_equal(m.brinkman.components[0], 2 * expect)


def test_brinkman_vanishes_when_particles_move_with_fluid(grid):
    c = (0.3, -0.4)
    u = VectorField(grid, (np.full(grid.face_shape(0), c[0]), np.full(grid.face_shape(1), c[1])))
    ens = sample_initial(InitialKineticSpec(n_particles=400, mean_velocity=c), grid, seed=2)
    m = deposit(ens, u)
    assert max(np.abs(b).max() for b in m.brinkman.components) < 1e-12


def test_deposited_mass_equals_alive_mass(grid):
    ens = sample_initial(InitialKineticSpec(n_particles=5000, temperature=0.05), grid, seed=4)
    m = deposit(ens, VectorField.zeros(grid))
    assert m.rho.integral() == pytest.approx(ens.alive_mass, rel=1e-12)
    assert m.rho.values.min() >= 0


def test_pure_fall_absorbs_everything():
    g = Grid.uniform(16)
    n = 200
    rng = np.random.default_rng(0)
    x = np.column_stack([rng.random(n) * 4, 0.05 + 0.4 * rng.random(n)])
    v = np.tile([0.0, -1.0], (n, 1))
    ens = ParticleEnsemble.from_arrays(x, v, np.full(n, 1.0 / n))
    out = advance_particles(ens, VectorField.zeros(g), 0.3, 0.5)
    assert np.all(out.status == ABSORBED)
    assert out.absorbed_mass == ens.initial_mass
    assert np.allclose(out.exit_times, x[:, 1], atol=1e-12)


def test_single_particle_matches_free_flow():
    g = Grid.uniform(16)
    p = PhasePoint(np.array([1.0, 3.0]), np.array([0.4, 0.2]))
    ens = ParticleEnsemble.from_arrays([p.x], [p.v], [1.0])
    out = advance_particles(ens, VectorField.zeros(g), 0.25, 0.3)
    q = free_flow(p, 0.25, 0.3)
    assert np.allclose(out.positions[0], q.x, atol=1e-14)
    assert np.allclose(out.velocities[0], q.v, atol=1e-14)


def test_ap_limit_in_particle_push(grid):
    u = VectorField(grid, (np.full(grid.face_shape(0), 0.3), np.zeros(grid.face_shape(1))))
    ens = sample_initial(InitialKineticSpec(n_particles=300, temperature=0.5), grid, seed=5)
    out = advance_particles(ens, u, 1e-8, 0.05)
    assert np.abs(out.velocities - np.array([0.3, -1.0])).max() < 1e-7


def test_frozen_zero_field_monokinetic_decay(grid):
    ens = sample_initial(InitialKineticSpec(n_particles=400, temperature=0.3), grid, seed=6)
    eps, dt = 0.2, 0.01
    before = monokinetic_functional(ens, None)
    out = advance_particles(ens, None, eps, dt, grid=grid)
    assert monokinetic_functional(out, None) == pytest.approx(before * math.exp(-2 * dt / eps),
                                                              rel=1e-13)


def test_ledger_every_step(grid):
    ens = sample_initial(InitialKineticSpec(n_particles=3000, temperature=0.4), grid, seed=8)
    u = VectorField.zeros(grid)
    for k in range(40):
        ens = advance_particles(ens, u, 0.1, 0.1, t0=0.1 * k)
        assert ens.ledger_error() <= 1e-12
        z = ens.positions[ens.alive, 1]
        assert np.all((z > 0) & (z < 4.0))
    assert ens.absorbed_mass > 0.5


def test_nonpositive_step_rejected(grid):
    ens = ParticleEnsemble.empty()
    with pytest.raises(ValueError):
        advance_particles(ens, VectorField.zeros(grid), 0.0, 0.1)
