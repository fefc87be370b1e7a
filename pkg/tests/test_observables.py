import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from asep_hydro.dynamics import ModelParams, sample_initial
from asep_hydro.lattice import LatticeSpec
from asep_hydro.observables import (BlockSpec, chemical_potential, conditional_current_mean,
                                    current, default_block_radius, empirical_field,
                                    product_relative_entropy)
from asep_hydro.oracles import block_current_enumeration


def test_block_spec_validation():
    assert BlockSpec(1, 3).cell_count == 27
    with pytest.raises(ValueError):
        BlockSpec(0, 2)
    with pytest.raises(ValueError, match="must be <"):
        BlockSpec(4, 1).check_fits(LatticeSpec(4, 1))


@pytest.mark.parametrize("inv_eps,dim,k", [(6, 3, 4), (9, 3, 5), (12, 3, 6), (10, 3, 5), (8, 1, 64)])
def test_default_block_radius(inv_eps, dim, k):
    assert default_block_radius(1 / inv_eps, dim) == k


def test_full_lattice_field_is_half_inverse_eps():
    lat = LatticeSpec(4, 2)
    f = empirical_field(np.ones(lat.site_count), lat, BlockSpec(1, 2))
    np.testing.assert_array_equal(f.values, 2.0)
    assert f.meta["eps"] == 0.25 and f.meta["k"] == 1


def test_checkerboard_even_volume_blocks_vanish():
    # d=1, k=1: face nodes see a truncated two-cell block, interior nodes three cells
    lat = LatticeSpec(4, 1)
    occ = (np.arange(lat.site_count) % 2).astype(np.uint8)
    f = empirical_field(occ, lat, BlockSpec(1, 1))
    assert f.values[0] == 0.0 and f.values[-1] == 0.0
    # odd blocks are off by one particle: +-1/(2N) before the eps^-1 rescaling
    np.testing.assert_allclose(np.abs(f.values[1:-1]), lat.inv_eps / 6)


def test_field_is_odd_under_particle_hole_swap():
    lat = LatticeSpec(5, 2)
    occ = sample_initial(lat, 0.0, 4)
    block = BlockSpec(2, 2)
    for mode in ("truncate", "restrict"):
        a = empirical_field(occ, lat, block, mode=mode).values
        b = empirical_field(1 - occ, lat, block, mode=mode).values
        np.testing.assert_array_equal(a + b, 0.0)


def test_restrict_mode_keeps_whole_blocks_only():
    lat = LatticeSpec(6, 2)
    f = empirical_field(np.zeros(lat.site_count), lat, BlockSpec(2, 2), mode="restrict")
    assert f.shape == (lat.side - 4, lat.side)
    assert f.axes[0][0] == pytest.approx(-1 + 2 * lat.eps)


def test_stride_subsamples_nodes():
    lat = LatticeSpec(6, 2)
    f = empirical_field(np.zeros(lat.site_count), lat, BlockSpec(1, 2), stride=2)
    np.testing.assert_allclose(f.axes[0], lat.axis_positions(0)[::2])


def test_block_radius_must_fit():
    lat = LatticeSpec(3, 1)
    with pytest.raises(ValueError):
        empirical_field(np.zeros(lat.site_count), lat, BlockSpec(3, 1))


def test_fair_coin_field_mean_and_variance():
    lat = LatticeSpec(6, 2)
    block = BlockSpec(2, 2)
    rng = np.random.default_rng(0)
    samples = np.array([
        empirical_field(sample_initial(lat, 0.0, rng), lat, block, mode="restrict").values[3, 5]
        for _ in range(4000)
    ])
    expected_var = lat.inv_eps**2 / (4 * block.cell_count)
    assert abs(samples.mean()) < 4 * math.sqrt(expected_var / len(samples))
    assert samples.var(ddof=1) == pytest.approx(expected_var, rel=0.1)


def test_current_examples():
    lat = LatticeSpec(3, 2)
    params = ModelParams.from_delta((0.4, 0.0))
    x = lat.encode((0, 0))
    y = lat.neighbor(x, 1, +1)
    occ = np.zeros(lat.site_count)
    occ[x] = 1
    assert current(occ, lat, x, 1, params) == pytest.approx(0.8)
    assert current(np.zeros(lat.site_count), lat, x, 1, params) == 0.0
    occ[y] = 1
    assert current(occ, lat, x, 1, params) == 0.0
    assert current(occ, lat, lat.encode((3, 0)), 1, params) == 0.0  # bond leaves the lattice


def test_gradient_current_telescopes_around_periodic_loop():
    lat = LatticeSpec(4, 2)
    params = ModelParams.from_delta((0.4, 0.0))
    occ = sample_initial(lat, 0.0, 11)
    loop = [lat.encode((1, j)) for j in range(-4, 5)]
    assert sum(current(occ, lat, s, 2, params) for s in loop) == 0.0


def test_conditional_current_closed_form_value():
    # N = 27 cells, rho_bar = 1/2: (1 + 1/26) * (-1/4)
    value = conditional_current_mean(Fraction(1, 2), BlockSpec(1, 3), 1)
    assert value == Fraction(-27, 104)
    assert float(conditional_current_mean(0.5, BlockSpec(1, 3), 1.0)) == pytest.approx(-27 / 104, abs=1e-15)


@pytest.mark.parametrize("rho", [0.0, 1.0])
def test_conditional_current_vanishes_on_empty_and_full(rho):
    assert conditional_current_mean(rho, BlockSpec(2, 2), 0.7) == 0.0


_SHAPES = [(k, 1) for k in range(1, 8)] + [(1, 2)]


@pytest.mark.parametrize("k,dim", _SHAPES)
def test_conditional_current_matches_enumeration(k, dim):
    block = BlockSpec(k, dim)
    n_cells = block.cell_count
    assert n_cells <= 16
    table = block_current_enumeration(k, dim, delta=0.7)
    for n, value in table.items():
        assert conditional_current_mean(n / n_cells, block, 0.7) == pytest.approx(value, abs=1e-10)


def test_chemical_potential_examples():
    assert chemical_potential(0.0, 0.1) == 0.0
    assert chemical_potential(0.5, 0.1) == pytest.approx(10 * math.log(1.1 / 0.9))
    assert chemical_potential(0.5, 0.1) == pytest.approx(2.00671, abs=5e-6)
    assert chemical_potential(0.3, 1e-6) == pytest.approx(1.2, rel=1e-9)


def test_chemical_potential_odd_and_increasing():
    m = np.linspace(-4.9, 4.9, 301)
    phi = chemical_potential(m, 0.1)
    np.testing.assert_allclose(phi, -chemical_potential(-m, 0.1), atol=1e-12)
    assert np.all(np.diff(phi) > 0)


def test_chemical_potential_domain():
    with pytest.raises(ValueError):
        chemical_potential(5.0, 0.1)


def test_relative_entropy_examples():
    assert product_relative_entropy([0.3, 0.6], [0.3, 0.6], 0.5) == 0.0
    one = product_relative_entropy([0.75], [0.5], 1.0)
    assert one == pytest.approx(0.75 * math.log(1.5) + 0.25 * math.log(0.5))
    assert one == pytest.approx(0.130812, abs=1e-6)


def test_relative_entropy_rejects_degenerate_probabilities():
    with pytest.raises(ValueError):
        product_relative_entropy([1.0, 0.5], [0.5, 0.5], 0.1)
    with pytest.raises(ValueError):
        product_relative_entropy([0.5], [0.0], 0.1)


@settings(max_examples=50)
@given(st.lists(st.tuples(st.floats(0.01, 0.99), st.floats(0.01, 0.99)), min_size=1, max_size=20))
def test_relative_entropy_nonnegative(pairs):
    r1, r2 = np.array(pairs).T
    s = product_relative_entropy(r1, r2, 0.1, dim=1)
    assert s >= 0
    assert (s == 0) == bool(np.all(r1 == r2))


@pytest.mark.parametrize("inv_eps", [32, 64])
def test_entropy_lattice_sum_carries_endpoint_bias(inv_eps):
    # eps^-2 s / (2 int m^2) = 1 + eps + O(eps^2): the lattice sum counts both faces in full
    lat = LatticeSpec(inv_eps, 1)
    m = np.cos(np.pi * lat.axis_positions(0))
    eps = lat.eps
    s = product_relative_entropy(0.5 + eps * m, np.full_like(m, 0.5), eps, dim=1)
    assert s / eps**2 / 2.0 == pytest.approx(1 + eps, abs=3 * eps**2)
