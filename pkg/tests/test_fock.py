import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ibclab.fock import (CapacityError, FockSpace, FockVector, ModelParams, RadialGrid, build_sector_basis,
                         inner_product, product_state_from_profile, sector_weights)


def test_model_params_validation():
    with pytest.raises(ValueError):
        ModelParams(E0=0.0)
    with pytest.raises(ValueError):
        ModelParams(N_max=-1)
    with pytest.raises(ValueError):
        ModelParams(g=1.0, N_max=0)
    assert ModelParams(E0=2.0).kappa == pytest.approx(2.0)


def test_grid_nodes_and_cover():
    g = RadialGrid(h=0.5, M=4, r_min=0.25)
    assert np.allclose(g.nodes, [0.75, 1.25, 1.75, 2.25])
    assert g.box_radius == pytest.approx(2.25)
    assert RadialGrid.covering(8.5, 0.1).M == 85
    with pytest.raises(ValueError):
        RadialGrid(h=0.0, M=3)
    with pytest.raises(ValueError):
        RadialGrid(h=0.1, M=0)


def test_vacuum_sector():
    b = build_sector_basis(0, 10)
    assert len(b) == 1 and b.weights.tolist() == [1.0]


def test_two_particle_multisets():
    b = build_sector_basis(2, 3)
    assert [tuple(e + 1) for e in b.entries] == [(1, 1), (1, 2), (1, 3), (2, 2), (2, 3), (3, 3)]
    # multiplicity of each multiset among ordered pairs
    assert b.weights.tolist() == [1, 2, 2, 1, 2, 1]


def test_large_sector_count():
    assert math.comb(202, 3) == 1_353_400
    b = build_sector_basis(3, 200)
    assert len(b) == 1_353_400
    assert b.weights.sum() == 200**3


def test_capacity_error():
    with pytest.raises(CapacityError):
        build_sector_basis(3, 200, max_size=1000)


@given(n=st.integers(0, 4), M=st.integers(1, 7))
@settings(max_examples=40, deadline=None)
def test_index_is_inverse_of_enumeration(n, M):
    b = build_sector_basis(n, M)
    assert np.array_equal(b.index(b.entries), np.arange(len(b)))
    assert b.weights.sum() == M**n


def _random_vector(space, rng):
    data = rng.standard_normal(space.dim) + 1j * rng.standard_normal(space.dim)
    return FockVector(space, data)


def test_inner_product_trivial_cases():
    space = FockSpace(RadialGrid(h=0.5, M=4), 2)
    vac = FockVector.vacuum(space)
    assert inner_product(vac, vac) == 1
    w = FockVector.zeros(space)
    w.data[space.sector_slice(2)] = 1.0
    assert inner_product(vac, w) == 0


def test_inner_product_matches_ordered_sum():
    grid = RadialGrid(h=0.3, M=4)
    space = FockSpace(grid, 2)
    rng = np.random.default_rng(0)
    u, w = _random_vector(space, rng), _random_vector(space, rng)
    ref = 0.0
    for n in range(3):
        b = space.bases[n]
        for t in itertools.product(range(4), repeat=n):
            i = b.index(np.array([sorted(t)]))[0] if n else 0
            ref += grid.h**n * np.conj(u.sector(n)[i]) * w.sector(n)[i]
    assert abs(inner_product(u, w) - ref) <= 1e-12 * abs(ref)


def test_sector_weights():
    space = FockSpace(RadialGrid(h=0.5, M=4), 2)
    P = sector_weights(FockVector.vacuum(space))
    assert P.tolist() == [1.0, 0.0, 0.0]
    v = _random_vector(space, np.random.default_rng(1)).normalized()
    assert abs(sector_weights(v).sum() - 1) <= 1e-12


def test_product_state():
    grid = RadialGrid(h=0.1, M=20)
    space = FockSpace(grid, 2)
    assert np.array_equal(product_state_from_profile(space, lambda r: 0 * r, [1.0]).data,
                          FockVector.vacuum(space).data)
    v = product_state_from_profile(space, lambda r: np.exp(-math.sqrt(2) * r), [0.0, 1.0])
    assert np.allclose(v.sector(1), np.exp(-math.sqrt(2) * grid.nodes))
    v2 = product_state_from_profile(space, lambda r: r, [0, 0, 1])
    b = space.bases[2]
    assert np.allclose(v2.sector(2), grid.nodes[b.entries[:, 0]] * grid.nodes[b.entries[:, 1]])
    with pytest.raises(ValueError):
        product_state_from_profile(space, lambda r: r, [0, 0, 0, 1])


def test_vector_shape_checked():
    space = FockSpace(RadialGrid(h=0.5, M=4), 1)
    with pytest.raises(ValueError):
        FockVector(space, np.zeros(3))
