import itertools

import pytest
from hypothesis import given, strategies as st

from kawasaki_lab.lattice import (CapExceeded, derive_structure, make_cube, make_triadic,
                                  neighborhood, translate, triadic_partition, unit, shift)


def test_cube_sites_d1():
    dom = make_cube(3, 1)
    assert dom.sites == ((-1,), (0,), (1,))


def test_cube_size_d2():
    assert len(make_cube(3, 2)) == 9


def test_even_side_collapses():
    # (-2, 2) ∩ Z = {-1, 0, 1}
    assert make_cube(4, 1).sites == make_cube(3, 1).sites


def test_cube_rejects_bad_input():
    with pytest.raises(ValueError):
        make_cube(0, 1)
    with pytest.raises(ValueError):
        make_cube(3, 0)
    with pytest.raises(CapExceeded):
        make_cube(5, 2, cap=24)


def test_structure_lambda3_d1():
    st_ = make_cube(3, 1).structure
    assert st_.interior.sites == ((0,),)
    assert st_.boundary.sites == ((-1,), (1,))
    assert st_.enlarged.sites == ((-1,), (0,), (1,), (2,))
    assert len(st_.enlarged_bonds) == 3
    assert len(st_.interior_bonds) == 2


def test_structure_lambda3_d2_bonds():
    assert len(make_cube(3, 2).structure.enlarged_bonds) == 18


def test_single_site_is_boundary():
    st_ = make_cube(1, 1).structure
    assert st_.interior.sites == ()
    assert st_.boundary.sites == ((0,),)


def test_neighborhood_sup_distance():
    dom = make_cube(3, 1)
    assert neighborhood(dom.structure.enlarged, 2).sites == tuple((x,) for x in range(-3, 5))


def test_triadic_centers():
    assert triadic_partition(1, 0, 1) == [(-1,), (0,), (1,)]
    assert triadic_partition(2, 1, 1) == [(-3,), (0,), (3,)]
    with pytest.raises(ValueError):
        triadic_partition(1, 1, 1)


def test_triadic_d2_disjoint_cover():
    centers = triadic_partition(2, 0, 2)
    assert len(centers) == 81
    sub = make_triadic(0, 2)
    cells = [set(translate(sub, z).sites) for z in centers]
    assert sum(len(c) for c in cells) == 81
    assert set().union(*cells) == set(make_triadic(2, 2).sites)


@pytest.mark.parametrize("d", [1, 2])
def test_partition_and_bond_tiling(d):
    for m in range(1, 4 if d == 1 else 3):
        big = make_triadic(m, d)
        for n in range(m):
            centers = triadic_partition(m, n, d)
            assert len(centers) == 3 ** (d * (m - n))
            sub = make_triadic(n, d)
            assert sum(len(sub) for _ in centers) == len(big)
            tiles = []
            for z in centers:
                tiles.extend(derive_structure(translate(sub, z)).enlarged_bonds.bonds)
            assert len(tiles) == len(set(tiles))
            assert set(tiles) == set(big.structure.enlarged_bonds.bonds)


@given(st.integers(1, 9), st.integers(1, 2))
def test_interior_boundary_cover(L, d):
    if d == 2 and L > 5:
        L = 5
    dom = make_cube(L, d)
    s = dom.structure
    assert set(s.interior.sites).isdisjoint(s.boundary.sites)
    assert set(s.interior.sites) | set(s.boundary.sites) == set(dom.sites)
    for (x, i) in s.enlarged_bonds:
        assert x in dom
    for (x, i) in s.interior_bonds:
        assert shift(x, unit(i, d)) in dom
    expected = sum(1 for k in range(-L, L + 1) if -L < 2 * k < L) ** d
    assert len(dom) == expected
