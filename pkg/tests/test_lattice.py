import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from asep_hydro.lattice import BoundaryClass, LatticeSpec, build_lattice


@pytest.mark.parametrize("inv_eps,dim,side,count", [(2, 3, 5, 125), (1, 1, 3, 3), (8, 3, 17, 4913)])
def test_build_lattice_sizes(inv_eps, dim, side, count):
    lat = build_lattice(inv_eps, dim)
    assert lat.side == side
    assert lat.site_count == count == side**dim


@pytest.mark.parametrize("inv_eps,dim", [(0, 1), (-3, 2), (2, 0), (1.5, 1)])
def test_build_lattice_rejects_bad_sizes(inv_eps, dim):
    with pytest.raises(ValueError):
        build_lattice(inv_eps, dim)


def test_encode_decode_roundtrip_exhaustive():
    lat = LatticeSpec(2, 2)
    seen = set()
    for s in range(lat.site_count):
        c = lat.decode(s)
        assert all(-2 <= x <= 2 for x in c)
        assert lat.encode(c) == s
        seen.add(c)
    assert seen == set(itertools.product(range(-2, 3), repeat=2))


def test_axis_one_is_slowest():
    lat = LatticeSpec(2, 3)
    assert lat.decode(0) == (-2, -2, -2)
    assert lat.decode(1) == (-2, -2, -1)
    # the first face_size indices form the x1 = -inv_eps slice
    assert {lat.decode(s)[0] for s in range(lat.face_size)} == {-2}


def test_neighbor_wall_on_axis_one():
    lat = LatticeSpec(2, 3)
    x = lat.encode((2, 0, 1))
    assert lat.neighbor(x, 1, +1) is None
    assert lat.neighbor(lat.encode((-2, 0, 0)), 1, -1) is None


def test_neighbor_wraps_on_periodic_axes():
    lat = LatticeSpec(2, 3)
    x = lat.encode((0, 2, 1))
    assert lat.decode(lat.neighbor(x, 2, +1)) == (0, -2, 1)
    assert lat.decode(lat.neighbor(lat.encode((0, 0, -2)), 3, -1)) == (0, 0, 2)


def test_neighbor_interior_shift():
    lat = LatticeSpec(3, 2)
    x = lat.encode((1, 2))
    assert lat.decode(lat.neighbor(x, 1, -1)) == (0, 2)


@pytest.mark.parametrize("axis,sign", [(0, 1), (4, 1), (1, 0), (2, 2)])
def test_neighbor_rejects_bad_axis_or_sign(axis, sign):
    lat = LatticeSpec(2, 3)
    with pytest.raises(ValueError):
        lat.neighbor(0, axis, sign)


@given(st.integers(1, 3), st.integers(1, 3), st.data())
def test_neighbor_inverse(inv_eps, dim, data):
    lat = LatticeSpec(inv_eps, dim)
    s = data.draw(st.integers(0, lat.site_count - 1))
    axis = data.draw(st.integers(1, dim))
    fwd = lat.neighbor(s, axis, +1)
    if fwd is not None:
        assert lat.neighbor(fwd, axis, -1) == s


def test_neighbor_table_matches_neighbor():
    lat = LatticeSpec(2, 3)
    table = lat.neighbor_table
    for s in range(lat.site_count):
        for a in range(1, 4):
            for k, sign in enumerate((1, -1)):
                nb = lat.neighbor(s, a, sign)
                assert table[s, a - 1, k] == (-1 if nb is None else nb)


def test_classify_examples():
    lat = LatticeSpec(2, 3)
    assert lat.classify(lat.encode((-2, 0, 0))) is BoundaryClass.GAMMA_PLUS
    assert lat.classify(lat.encode((2, 0, 0))) is BoundaryClass.GAMMA_MINUS
    assert lat.classify(lat.encode((0, 2, 0))) is BoundaryClass.INTERIOR


def test_face_counts_partition_the_lattice():
    lat = LatticeSpec(2, 3)
    classes = [lat.classify(s) for s in range(lat.site_count)]
    plus = classes.count(BoundaryClass.GAMMA_PLUS)
    minus = classes.count(BoundaryClass.GAMMA_MINUS)
    assert plus == minus == 25
    assert plus + minus + classes.count(BoundaryClass.INTERIOR) == lat.site_count
    assert [s for s, c in enumerate(classes) if c is BoundaryClass.GAMMA_PLUS] == \
        lat.face_sites(BoundaryClass.GAMMA_PLUS).tolist()


def test_torus_wraps_axis_one_and_has_no_faces():
    lat = LatticeSpec(2, 2, torus=True)
    x = lat.encode((2, 0))
    assert lat.decode(lat.neighbor(x, 1, +1)) == (-2, 0)
    assert all(lat.classify(s) is BoundaryClass.INTERIOR for s in range(lat.site_count))


def test_macro_coordinates_place_faces_at_unit_distance():
    lat = LatticeSpec(4, 2)
    u = lat.macro_coordinates()
    assert u[:, 0].min() == -1.0 and u[:, 0].max() == 1.0
    np.testing.assert_allclose(lat.axis_positions(1), np.arange(-4, 5) * 2 / 9)
