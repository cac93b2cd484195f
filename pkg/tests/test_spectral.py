import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ibclab.fock import FockSpace, ModelParams, RadialGrid
from ibclab.hamiltonian import IbcSpec, assemble_ibc
from ibclab.spectral import ConvergenceError, lowest_eigenpairs, richardson_extrapolate


def test_free_ground_state_is_vacuum():
    model = ModelParams(g=0.0, E0=1.0, N_max=2)
    A = assemble_ibc(model, IbcSpec.dirichlet(), FockSpace.for_model(model, RadialGrid(h=0.2, M=15)))
    r = lowest_eigenpairs(A, k=1)
    assert abs(r.eigenvalues[0]) <= 1e-12
    v = r.eigenvectors[0]
    assert abs(abs(v.vacuum_amplitude) - 1) <= 1e-12


def test_lanczos_on_larger_matrix_matches_dense():
    model = ModelParams(g=1.0, E0=1.0, N_max=2)
    A = assemble_ibc(model, IbcSpec.dirichlet(), FockSpace.for_model(model, RadialGrid(h=0.2, M=60)))
    it = lowest_eigenpairs(A, k=3, method="lanczos", tol=1e-10)
    d = lowest_eigenpairs(A, k=3, method="dense")
    assert np.max(np.abs(it.eigenvalues - d.eigenvalues)) <= 1e-9
    assert np.all(it.residuals <= 1e-10)
    # eigenvectors agree up to phase
    for x, y in zip(it.eigenvectors, d.eigenvectors):
        ov = abs(np.sum(A.weights * np.conj(x.data) * y.data)) / (x.norm() * y.norm())
        assert ov >= 1 - 1e-8


def test_lanczos_failure_is_reported():
    model = ModelParams(g=1.0, E0=1.0, N_max=2)
    A = assemble_ibc(model, IbcSpec.dirichlet(), FockSpace.for_model(model, RadialGrid(h=0.2, M=60)))
    with pytest.raises(ConvergenceError) as err:
        lowest_eigenpairs(A, k=2, method="lanczos", tol=1e-14, krylov_dim=10, max_restarts=2)
    assert err.value.residuals.size == 2


def test_seed_determinism():
    model = ModelParams(g=1.0, E0=1.0, N_max=2)
    A = assemble_ibc(model, IbcSpec.dirichlet(), FockSpace.for_model(model, RadialGrid(h=0.2, M=50)))
    a = lowest_eigenpairs(A, k=2, method="lanczos", seed=7)
    b = lowest_eigenpairs(A, k=2, method="lanczos", seed=7)
    assert np.array_equal(a.eigenvalues, b.eigenvalues)


def test_bad_k():
    model = ModelParams(g=0.0, E0=1.0, N_max=1)
    A = assemble_ibc(model, IbcSpec.dirichlet(), FockSpace.for_model(model, RadialGrid(h=0.2, M=3)))
    with pytest.raises(ValueError):
        lowest_eigenpairs(A, k=4)


def test_richardson_exact_models():
    hs = [0.1, 0.05, 0.025]
    ex = richardson_extrapolate([(h, 3.0 + 2 * h) for h in hs])
    assert abs(ex.value - 3.0) <= 1e-12
    ex2 = richardson_extrapolate([(h, 3.0 - 5 * h**2) for h in hs], order=2)
    assert abs(ex2.value - 3.0) <= 1e-12
    ex3 = richardson_extrapolate([(h, 1.0 + 0.7 * h**1.5) for h in [0.2, 0.1, 0.05, 0.025]], order=None)
    assert abs(ex3.value - 1.0) <= 1e-8 and abs(ex3.order - 1.5) <= 1e-6


@given(L=st.floats(-5, 5), c=st.floats(-5, 5))
@settings(max_examples=30, deadline=None)
def test_richardson_linear_property(L, c):
    ex = richardson_extrapolate([(h, L + c * h) for h in (0.4, 0.2, 0.1)])
    assert abs(ex.value - L) <= 1e-10 * (1 + abs(L) + abs(c))


def test_richardson_needs_three_distinct():
    with pytest.raises(ValueError):
        richardson_extrapolate([(0.1, 1.0), (0.05, 1.0)])
    with pytest.raises(ValueError):
        richardson_extrapolate([(0.1, 1.0), (0.1, 1.0), (0.05, 1.0)])
