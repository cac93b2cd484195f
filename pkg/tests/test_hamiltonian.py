import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ibclab.fock import FockSpace, FockVector, ModelParams, RadialGrid, product_state_from_profile
from ibclab.hamiltonian import (AdmissibilityError, CutoffSpec, IbcSpec, assemble_ibc, assemble_shell,
                                assemble_smeared, boundary_closure, hermiticity_defect, robin_admissible)
from ibclab.oracles import exact_ground
from ibclab.spectral import lowest_eigenpairs

MODEL = ModelParams(g=1.0, E0=1.0, N_max=2)


def test_admissibility_examples():
    g = 1.0
    assert robin_admissible(-4 * math.pi / g, 0, 0, g / (4 * math.pi)).ok
    assert robin_admissible(0, 4 * math.pi / g, g / (4 * math.pi), 0).ok
    r = robin_admissible(1, 0, 0, 1)
    assert not r.ok and r.abcd_defect == pytest.approx(2.0)
    with pytest.raises(ValueError):
        robin_admissible(0, 0, 1, 1)


def test_inadmissible_robin_rejected():
    space = FockSpace.for_model(MODEL, RadialGrid(h=0.2, M=10))
    with pytest.raises(AdmissibilityError):
        assemble_ibc(MODEL, IbcSpec.robin(1, 0, 0, 1), space)


def test_free_model_is_block_diagonal():
    model = ModelParams(g=0.0, E0=1.0, N_max=2)
    space = FockSpace.for_model(model, RadialGrid(h=0.2, M=10))
    A = assemble_ibc(model, IbcSpec.dirichlet(), space)
    for n in range(3):
        for m in range(3):
            if n != m:
                assert A.block(n, m).nnz == 0
    S = A.symmetric().toarray()
    w = np.linalg.eigvalsh(S)
    assert abs(w[0]) <= 1e-12
    for n in (1, 2):
        sl = space.sector_slice(n)
        assert np.linalg.eigvalsh(S[sl, sl])[0] >= n * model.E0


@pytest.mark.parametrize("M,h,N", [(15, 0.2, 2), (30, 0.1, 2), (12, 0.3, 3)])
def test_dirichlet_positive_and_hermitian(M, h, N):
    model = ModelParams(g=1.0, E0=1.0, N_max=N)
    A = assemble_ibc(model, IbcSpec.dirichlet(), FockSpace.for_model(model, RadialGrid(h=h, M=M)))
    assert hermiticity_defect(A) <= 1e-12
    assert np.linalg.eigvalsh(A.symmetric().toarray())[0] >= -1e-10


def test_special_case_mappings():
    space = FockSpace.for_model(MODEL, RadialGrid(h=0.2, M=15))
    for special, plain in ((IbcSpec.robin_as_dirichlet(1.0), IbcSpec.dirichlet()),
                           (IbcSpec.robin_as_neumann(1.0), IbcSpec.neumann())):
        A = assemble_ibc(MODEL, special, space).matrix.toarray()
        B = assemble_ibc(MODEL, plain, space).matrix.toarray()
        assert np.max(np.abs(A - B)) <= 1e-12


def test_perturbed_robin_defect():
    space = FockSpace.for_model(MODEL, RadialGrid(h=0.2, M=15))
    a, b, c = 1.0, 0.0, 0.0
    d = -1.0 + 0.1  # conj(a) d - conj(c) b = -1 + 0.1
    A = assemble_ibc(MODEL, IbcSpec.robin(a, b, c, d), space, check=False)
    assert hermiticity_defect(A) > 1e-6


@given(a=st.floats(0.3, 3), b=st.floats(-3, 3), c=st.floats(-3, 3), theta=st.floats(0, 2 * math.pi))
@settings(max_examples=30, deadline=None)
def test_admissible_robin_is_hermitian(a, b, c, theta):
    h = 0.2
    if abs(h * a - b) < 0.25:
        return
    ph = np.exp(1j * theta)
    tup = [a * ph, b * ph, c * ph, (c * b - 1) / a * ph]
    assert robin_admissible(*tup).ok
    space = FockSpace.for_model(MODEL, RadialGrid(h=h, M=8))
    A = assemble_ibc(MODEL, IbcSpec.robin(*tup), space)
    assert hermiticity_defect(A) <= 1e-12


def test_shell_requires_offset_grid():
    with pytest.raises(ValueError):
        assemble_shell(MODEL, 0.4, FockSpace.for_model(MODEL, RadialGrid(h=0.2, M=10)))
    with pytest.raises(ValueError):
        CutoffSpec.shell(0.0)
    with pytest.raises(ValueError):
        assemble_shell(MODEL, 0.1, FockSpace.for_model(MODEL, RadialGrid(h=0.2, M=10, r_min=0.1)))


def test_shell_free_and_hermitian():
    model = ModelParams(g=0.0, E0=1.0, N_max=2)
    space = FockSpace.for_model(model, RadialGrid(h=0.2, M=15, r_min=0.4))
    A = assemble_shell(model, 0.4, space)
    assert abs(np.linalg.eigvalsh(A.symmetric().toarray())[0]) <= 1e-12
    for delta in (0.8, 0.4, 0.2):
        sp = FockSpace.for_model(MODEL, RadialGrid(h=0.2, M=15, r_min=delta))
        assert hermiticity_defect(assemble_shell(MODEL, delta, sp)) <= 1e-12


def test_smeared_zero_profile_is_free():
    space = FockSpace.for_model(MODEL, RadialGrid(h=0.2, M=10))
    A = assemble_smeared(MODEL, CutoffSpec.smeared(profile=lambda r: 0 * r), space)
    B = assemble_ibc(ModelParams(g=0.0, E0=1.0, N_max=2), IbcSpec.dirichlet(), space)
    assert abs(A.matrix - B.matrix).max() <= 1e-14
    with pytest.raises(ValueError):
        CutoffSpec.smeared()


def test_exact_state_eigen_residual_converges():
    # sample the dressed product state and apply H; the one-sided boundary
    # derivative of the form discretization makes the residual first order
    model = ModelParams(g=1.0, E0=1.0, N_max=2)
    gt = exact_ground(model)
    out = []
    for h in (0.2, 0.1, 0.05):
        grid = RadialGrid.covering(12.0, h)
        space = FockSpace.for_model(model, grid)
        A = assemble_ibc(model, IbcSpec.dirichlet(), space)
        c = -model.g / math.sqrt(math.pi)
        v = product_state_from_profile(space, lambda r: np.exp(-model.kappa * r), [1, c, c**2 / math.sqrt(2)])
        r = FockVector(space, A.matrix @ v.data - gt.E_min * v.data)
        # residual restricted to sectors below the truncation
        sl = slice(0, int(space.offsets[2]))
        out.append(np.sqrt(np.sum(space.weights[sl] * np.abs(r.data[sl]) ** 2)))
    orders = np.log(np.array(out[:-1]) / np.array(out[1:])) / math.log(2)
    assert np.all(orders > 0.9), orders
    assert out[-1] < 0.05


def test_boundary_closure_labels():
    space = FockSpace.for_model(MODEL, RadialGrid(h=0.2, M=10))
    assert boundary_closure(MODEL, assemble_smeared(MODEL, CutoffSpec.smeared(0.5), space)) is None
    cl = boundary_closure(MODEL, assemble_ibc(MODEL, IbcSpec.dirichlet(), space))
    assert cl.p == 0 and cl.q(0) == pytest.approx(-1 / math.sqrt(math.pi))


def test_ground_energy_small_grid_is_sensible():
    space = FockSpace.for_model(MODEL, RadialGrid.covering(10.0, 0.1))
    E = lowest_eigenpairs(assemble_ibc(MODEL, IbcSpec.dirichlet(), space)).eigenvalues[0]
    assert abs(E - exact_ground(MODEL).E_min) / exact_ground(MODEL).E_min < 0.1
