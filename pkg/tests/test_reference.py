import math

import numpy as np
import pytest

from semifio.dynamics import make_potential
from semifio.errors import BoxTooSmallError, InvalidInputError
from semifio.grid import Grid, WavefunctionGrid, coherent_state, l2_distance
from semifio.reference import split_step_propagate

import oracles
from frozen_values import FROZEN


def test_free_gaussian_closed_form():
    eps = 0.1
    g = Grid.uniform(-12, 12, 512)
    psi0 = coherent_state(g, 0.0, 0.0, eps)
    out = split_step_propagate(make_potential("free"), psi0, 1.0)
    exact = WavefunctionGrid(g, oracles.free_gaussian(g.coords()[0], eps, 1.0), eps)
    assert l2_distance(out, exact) <= 1e-8


def test_free_oracle_matches_frozen_quadrature():
    got = oracles.free_gaussian(np.array([0.0, 0.3, -0.7]), 0.1, 1.0)
    np.testing.assert_allclose(got, FROZEN["free_gaussian_eps01_t1"], atol=1e-13)


@pytest.mark.parametrize("eps,dt_factor", [(0.02, 50), (0.1, 200)])
def test_harmonic_coherent_state(eps, dt_factor):
    # Strang error grows like dt^2/eps, i.e. like eps at dt = eps/50; at eps = 0.1
    # the default step leaves 5.5e-7, so that case runs with a finer step
    g = Grid.uniform(-6, 6, 512)
    psi0 = coherent_state(g, 0.5, 0.3, eps)
    T = math.pi / 2
    out = split_step_propagate(make_potential("harmonic"), psi0, T, dt=eps / dt_factor)
    exact = WavefunctionGrid(g, oracles.harmonic_coherent(g.coords()[0], 0.5, 0.3, eps, T), eps)
    assert l2_distance(out, exact) <= 1e-7


def test_zero_time_is_bit_exact():
    g = Grid.uniform(-6, 6, 64)
    psi0 = coherent_state(g, 0.0, 1.0, 0.1)
    out = split_step_propagate(make_potential("cosine"), psi0, 0.0)
    assert np.array_equal(out.samples, psi0.samples)
    assert out.samples is not psi0.samples


def test_norm_conservation_and_reversibility():
    eps = 0.05
    g = Grid.uniform(-2 * math.pi, 2 * math.pi, 256)
    psi0 = coherent_state(g, 0.5, 0.3, eps)
    pot = make_potential("cosine")
    fwd = split_step_propagate(pot, psi0, 1.0, boundary_tol=1.0)
    assert fwd.norm() == pytest.approx(psi0.norm(), abs=1e-10)
    back = split_step_propagate(pot, fwd, -1.0, boundary_tol=1.0)
    assert l2_distance(back, psi0) <= 1e-8


def test_order_two_self_convergence():
    eps = 0.1
    g = Grid.uniform(-8, 8, 256)
    psi0 = coherent_state(g, 0.5, 0.3, eps)
    pot = make_potential("cosine")
    runs = [split_step_propagate(pot, psi0, 1.0, dt=h) for h in (0.02, 0.01, 0.005)]
    ratio = l2_distance(runs[0], runs[1]) / l2_distance(runs[1], runs[2])
    assert 3.5 <= ratio <= 4.5


def test_box_too_small():
    g = Grid.uniform(-2, 2, 128)
    psi0 = coherent_state(g, 0.0, 1.0, 0.1)
    with pytest.raises(BoxTooSmallError):
        split_step_propagate(make_potential("free"), psi0, 2.0)


def test_rejects_non_power_of_two():
    g = Grid.uniform(-6, 6, 100)
    with pytest.raises(InvalidInputError):
        split_step_propagate(make_potential("free"), coherent_state(g, 0, 0, 0.1), 1.0)
