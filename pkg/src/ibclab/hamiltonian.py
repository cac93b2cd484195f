"""
Sparse Hamiltonians for the fixed-source model in the reduced Fock representation.

Every variant has the same second-quantized skeleton.  On sector n,

    (A v)^(n) = sum_j t_j v^(n) + (n E0 + shift_n) v^(n)
              + up_(n-1)  * sum_j a(r_j) v^(n-1)(.. without r_j ..)
              + down_n    * sum_k b_k v^(n+1)(.., r_k)

where t is a one-particle operator on the radial grid, ``a`` and ``b`` are
grid vectors and the scalar coefficients depend only on n.  The variants
differ in how these pieces are obtained:

* Dirichlet IBC and delta-shell: from the discrete quadratic form with the
  boundary node of sector n+1 replaced by the interior-boundary value,
  which makes the matrix symmetric and positive by construction;
* Neumann and general Robin IBC: by discretizing the operator directly with
  a one-sided boundary derivative, so that inadmissible coefficients show up
  as a Hermiticity defect;
* smeared cutoff: creation/annihilation with a radial charge profile.

The resulting matrix acts on coefficient vectors and is self-adjoint in the
weighted inner product of ``FockSpace``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .fock import FockSpace, ModelParams, ModeSet, RadialGrid

SQRT_PI = math.sqrt(math.pi)


class IbcKind(str, Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"
    ROBIN = "robin"


class CutoffKind(str, Enum):
    SHELL = "shell"
    SMEARED = "smeared"


class AdmissibilityError(ValueError):
    """Robin coefficients violate the self-adjointness conditions."""


@dataclass(frozen=True)
class IbcSpec:
    """Which interior-boundary condition to impose.

    For ``ROBIN`` the boundary condition is (alpha + beta d/dr)(r psi) at the
    source and the creation term uses (gamma + delta d/dr)(r psi).
    """

    kind: IbcKind = IbcKind.DIRICHLET
    alpha: complex = 0.0
    beta: complex = 0.0
    gamma: complex = 0.0
    delta: complex = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", IbcKind(self.kind))

    @classmethod
    def dirichlet(cls) -> "IbcSpec":
        return cls(IbcKind.DIRICHLET)

    @classmethod
    def neumann(cls) -> "IbcSpec":
        return cls(IbcKind.NEUMANN)

    @classmethod
    def robin(cls, alpha, beta, gamma, delta) -> "IbcSpec":
        return cls(IbcKind.ROBIN, complex(alpha), complex(beta), complex(gamma), complex(delta))

    @classmethod
    def robin_as_dirichlet(cls, g: float) -> "IbcSpec":
        return cls.robin(-4 * math.pi / g, 0.0, 0.0, g / (4 * math.pi))

    @classmethod
    def robin_as_neumann(cls, g: float) -> "IbcSpec":
        return cls.robin(0.0, 4 * math.pi / g, g / (4 * math.pi), 0.0)


def gaussian_profile(sigma: float) -> Callable[[np.ndarray], np.ndarray]:
    """Normalized 3D Gaussian charge density of width sigma, as a function of radius."""
    norm = (2 * math.pi * sigma**2) ** -1.5
    return lambda r: norm * np.exp(-np.asarray(r) ** 2 / (2 * sigma**2))


@dataclass(frozen=True)
class CutoffSpec:
    """UV cutoff: emission on a sphere (``SHELL``) or from a smeared density (``SMEARED``)."""

    kind: CutoffKind
    delta_shell: float | None = None
    sigma: float | None = None
    profile: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", CutoffKind(self.kind))
        if self.kind is CutoffKind.SHELL:
            if self.delta_shell is None or not self.delta_shell > 0:
                raise ValueError("shell cutoff needs a positive radius")
        else:
            if self.profile is None:
                if self.sigma is None or not self.sigma > 0:
                    raise ValueError("smeared cutoff needs a profile or a positive width")
                object.__setattr__(self, "profile", gaussian_profile(self.sigma))

    @classmethod
    def shell(cls, delta_shell: float) -> "CutoffSpec":
        return cls(CutoffKind.SHELL, delta_shell=delta_shell)

    @classmethod
    def smeared(cls, sigma: float | None = None, profile=None) -> "CutoffSpec":
        return cls(CutoffKind.SMEARED, sigma=sigma, profile=profile)


@dataclass(frozen=True, eq=False)
class SparseHermitian:
    """Sparse matrix on a ``FockSpace``, self-adjoint w.r.t. its weights."""

    matrix: sp.csr_matrix
    space: FockSpace
    label: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return self.space.weights

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def symmetric(self) -> sp.csr_matrix:
        """Similarity transform W^(1/2) A W^(-1/2), Hermitian iff A is W-self-adjoint."""
        d = np.sqrt(self.weights)
        return sp.csr_matrix(sp.diags(d) @ self.matrix @ sp.diags(1.0 / d))

    def triplets(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order], coo.col[order], coo.data[order].astype(complex)

    def expectation(self, v: np.ndarray) -> complex:
        return complex(np.sum(self.weights * np.conj(v) * (self.matrix @ v)))

    def block(self, n: int, m: int) -> sp.csr_matrix:
        s = self.space
        return self.matrix[s.sector_slice(n), :][:, s.sector_slice(m)]


@dataclass(frozen=True)
class AdmissibilityReport:
    ok: bool
    ac_imag: float
    bd_imag: float
    abcd_defect: float


def robin_admissible(alpha, beta, gamma, delta, tol: float = 1e-12) -> AdmissibilityReport:
    """Check conj(a)c real, conj(b)d real and conj(a)d - conj(c)b = -1."""
    alpha, beta, gamma, delta = (complex(x) for x in (alpha, beta, gamma, delta))
    if alpha == 0 and beta == 0:
        raise ValueError("(alpha, beta) must not both vanish")
    ac = abs((alpha.conjugate() * gamma).imag)
    bd = abs((beta.conjugate() * delta).imag)
    abcd = abs(alpha.conjugate() * delta - gamma.conjugate() * beta + 1.0)
    return AdmissibilityReport(ok=max(ac, bd, abcd) <= tol, ac_imag=ac, bd_imag=bd, abcd_defect=abcd)


# ---------------------------------------------------------------------------
# one-particle pieces
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class _SectorTerms:
    """Grid-level ingredients of the skeleton described in the module docstring."""

    t: sp.csr_matrix
    shift: complex
    up_vec: np.ndarray
    up_coef: Callable[[int], complex]
    down_vec: np.ndarray
    down_coef: Callable[[int], complex]


def _laplacian(grid: RadialGrid, corner: complex = 1.0) -> sp.csr_matrix:
    """-1/2 second difference with zero far end; ``corner`` replaces the (0,0) entry times h^-2."""
    M, h = grid.M, grid.h
    main = np.full(M, 1.0 / h**2, dtype=complex if isinstance(corner, complex) else float)
    main[0] = corner / h**2
    off = np.full(M - 1, -0.5 / h**2)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def _e0(M: int) -> np.ndarray:
    e = np.zeros(M)
    e[0] = 1.0
    return e


def _form_terms(grid: RadialGrid, ibc_const: Callable[[int], float]) -> _SectorTerms:
    """Terms of the quadratic form with boundary value v^(n+1)(.,0) = -c_n v^(n).

    Sector n+1 contributes, per coordinate, the edge energy
    (h^(n-1)/2) sum_s |v^(n+1)(s,1) - v^(n+1)(s,0)|^2 with (n+1) equivalent
    coordinates.  Expanding the square gives the interior Laplacian, a
    diagonal shift on sector n and a symmetric cross term; dividing the form
    by the weights h^n / h^(n+1) yields the operator coefficients.
    """
    h = grid.h

    def shift_of(n):
        return (n + 1) * ibc_const(n) ** 2 / (2 * h)

    shift = shift_of(0)
    for n in range(1, 4):
        if not math.isclose(shift_of(n), shift, rel_tol=1e-12):
            raise AssertionError("boundary shift must not depend on the sector")

    def cross(n):
        return (n + 1) * h ** (n - 1) * ibc_const(n) / 2

    return _SectorTerms(
        t=_laplacian(grid),
        shift=shift,
        up_vec=_e0(grid.M),
        up_coef=lambda n: cross(n) / h ** (n + 1) / (n + 1),
        down_vec=_e0(grid.M),
        down_coef=lambda n: cross(n) / h**n,
    )


def _dirichlet_terms(model: ModelParams, grid: RadialGrid) -> _SectorTerms:
    # lim r psi^(n+1) = -g/(2 pi sqrt(n+1)) psi^(n); reduced coordinates add sqrt(4 pi)
    g = model.g
    return _form_terms(grid, lambda n: math.sqrt(4 * math.pi) * g / (2 * math.pi * math.sqrt(n + 1)))


def _shell_terms(model: ModelParams, grid: RadialGrid, delta_shell: float) -> _SectorTerms:
    # psi^(n+1)(., delta) = -g/(2 pi delta sqrt(n+1)) psi^(n); the reduced value is
    # sqrt(4 pi) * delta * psi at the shell, so delta drops out
    g = model.g
    return _form_terms(
        grid,
        lambda n: math.sqrt(4 * math.pi) * delta_shell * g / (2 * math.pi * delta_shell * math.sqrt(n + 1)),
    )


def _neumann_terms(model: ModelParams, grid: RadialGrid) -> _SectorTerms:
    """Direct discretization of the Neumann-type IBC and its Hamiltonian.

    Boundary: (v_1 - v_0)/h = c_n v^(n), c_n = g/(sqrt(pi) sqrt(n+1)).
    Creation: g sqrt(n+1)/(2 sqrt(pi)) * v_0^(n+1).
    """
    g, h = model.g, grid.h

    def c(n):
        return g / (SQRT_PI * math.sqrt(n + 1))

    # second difference at node 1 with v_0 = v_1 - h c v^(n): (v_2 - v_1)/h^2 - c v^(n)/h
    return _SectorTerms(
        t=_laplacian(grid, corner=0.5),
        # creation acting on v_0 = v_1 - h c_n v^(n) leaves -g^2 h / (2 pi) on the diagonal
        shift=-g * g * h / (2 * math.pi),
        up_vec=_e0(grid.M),
        up_coef=lambda n: c(n) / (2 * h),
        down_vec=_e0(grid.M),
        down_coef=lambda n: g * math.sqrt(n + 1) / (2 * SQRT_PI),
    )


def _robin_terms(spec: IbcSpec, grid: RadialGrid) -> _SectorTerms:
    """Direct discretization of the Robin family in reduced coordinates.

    Boundary: alpha v_0 + beta (v_1 - v_0)/h = a_n v^(n), a_n = 4 sqrt(pi)/sqrt(n+1).
    Creation: 2 sqrt(pi) sqrt(n+1) (gamma v_0 + delta (v_1 - v_0)/h).
    Eliminating v_0 = p v_1 + q_n v^(n) gives the skeleton terms.
    """
    a, b, c, d = spec.alpha, spec.beta, spec.gamma, spec.delta
    h = grid.h
    denom = h * a - b
    if abs(denom) < 1e-14 * max(abs(h * a), abs(b), 1.0):
        raise ValueError("boundary node cannot be eliminated: h*alpha == beta")
    p = -b / denom

    def q(n):
        return h * 4 * SQRT_PI / (math.sqrt(n + 1) * denom)

    return _SectorTerms(
        t=_laplacian(grid, corner=complex((2 - p) / 2)),
        shift=2 * SQRT_PI * (c - d / h) * q(0),
        up_vec=_e0(grid.M),
        up_coef=lambda n: -q(n) / (2 * h**2),
        down_vec=_e0(grid.M),
        down_coef=lambda n: 2 * SQRT_PI * math.sqrt(n + 1) * ((c - d / h) * p + d / h),
    )


def _smeared_terms(model: ModelParams, grid: RadialGrid, profile) -> _SectorTerms:
    r = grid.nodes
    phi = np.asarray(profile(r))
    if np.iscomplexobj(phi):
        if np.max(np.abs(phi.imag)) > 0:
            raise ValueError("charge profile must be real")
        phi = phi.real
    if not np.all(np.isfinite(phi)):
        raise ValueError("charge profile is not finite on the grid")
    # s-wave: integral d^3y phi psi = integral dr sqrt(4 pi) r phi v
    chi = math.sqrt(4 * math.pi) * r * phi
    g, h = model.g, grid.h
    return _SectorTerms(
        t=_laplacian(grid),
        shift=0.0,
        up_vec=chi,
        up_coef=lambda n: g / math.sqrt(n + 1),
        down_vec=h * chi,
        down_coef=lambda n: g * math.sqrt(n + 1),
    )


# ---------------------------------------------------------------------------
# many-body assembly
# ---------------------------------------------------------------------------

def _label_terms(space: FockSpace, terms: _SectorTerms):
    """Express grid-level terms in the space's one-particle labels."""
    if space.modes is None:
        return terms.t.tocsr(), terms.up_vec, terms.down_vec
    V = space.modes.vectors
    h = space.grid.h
    t = h * (V.conj().T @ (terms.t @ V))
    if (terms.t - terms.t.conj().T).nnz == 0:
        # exact symmetry of the grid operator survives projection only up to rounding
        t = 0.5 * (t + t.conj().T)
    t = sp.csr_matrix(np.where(np.abs(t) > 1e-14 * np.max(np.abs(t)), t, 0.0))
    return t, space.modes.project(terms.up_vec), V.T @ terms.down_vec


def _assemble(space: FockSpace, E0: float, terms: _SectorTerms) -> sp.csr_matrix:
    t, up, down = _label_terms(space, terms)
    t.sort_indices()
    diag_t = t.diagonal()
    up_nz = np.flatnonzero(up)
    down_nz = np.flatnonzero(down)
    rows, cols, vals = [], [], []
    bases = space.bases
    for n, basis in enumerate(bases):
        off = int(space.offsets[n])
        E = basis.entries
        count = len(basis)
        ridx = off + np.arange(count)
        diag = n * E0 + (terms.shift if n < space.N_max else 0.0) + np.zeros(count, dtype=complex)
        for j in range(n):
            diag = diag + diag_t[E[:, j]]
            # hopping of coordinate j to every other label k' with t[m_j, k'] != 0
            lab = E[:, j]
            starts, stops = t.indptr[lab], t.indptr[lab + 1]
            reps = stops - starts
            src = np.repeat(np.arange(count), reps)
            first = np.repeat(np.cumsum(reps) - reps, reps)
            pos = np.repeat(starts, reps) + np.arange(src.size) - first
            new_lab = t.indices[pos]
            keep = new_lab != lab[src]
            src, pos, new_lab = src[keep], pos[keep], new_lab[keep]
            moved = E[src].copy()
            moved[:, j] = new_lab
            moved.sort(axis=1)
            rows.append(ridx[src])
            cols.append(off + basis.index(moved))
            vals.append(t.data[pos].astype(complex))
            # creation from sector n-1: remove coordinate j
            if up_nz.size:
                hit = np.isin(lab, up_nz)
                reduced = np.delete(E[hit], j, axis=1)
                rows.append(ridx[hit])
                cols.append(int(space.offsets[n - 1]) + bases[n - 1].index(reduced))
                vals.append(terms.up_coef(n - 1) * up[lab[hit]].astype(complex))
        rows.append(ridx)
        cols.append(ridx)
        vals.append(diag)
        # annihilation from sector n+1: insert every label k with down[k] != 0
        if n < space.N_max and down_nz.size:
            grown = np.concatenate([np.repeat(E, down_nz.size, axis=0),
                                    np.tile(down_nz, count)[:, None]], axis=1)
            grown.sort(axis=1)
            rows.append(np.repeat(ridx, down_nz.size))
            cols.append(int(space.offsets[n + 1]) + bases[n + 1].index(grown))
            vals.append(terms.down_coef(n) * np.tile(down[down_nz], count).astype(complex))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    if np.all(vals.imag == 0):
        vals = vals.real
    A = sp.coo_matrix((vals, (rows, cols)), shape=(space.dim, space.dim)).tocsr()
    A.sum_duplicates()
    A.eliminate_zeros()
    return A


def _check_space(model: ModelParams, space: FockSpace):
    if space.N_max != model.N_max:
        raise ValueError(f"space has N_max={space.N_max} but model has N_max={model.N_max}")


def ibc_terms(model: ModelParams, spec: IbcSpec, grid: RadialGrid, check: bool = True) -> _SectorTerms:
    if spec.kind is IbcKind.DIRICHLET:
        return _dirichlet_terms(model, grid)
    if spec.kind is IbcKind.NEUMANN:
        return _neumann_terms(model, grid)
    if check:
        report = robin_admissible(spec.alpha, spec.beta, spec.gamma, spec.delta)
        if not report.ok:
            raise AdmissibilityError(f"inadmissible Robin coefficients: {report}")
    return _robin_terms(spec, grid)


def assemble_ibc(model: ModelParams, spec: IbcSpec, space: FockSpace, check: bool = True) -> SparseHermitian:
    """Point-source IBC Hamiltonian.  ``check=False`` skips the Robin admissibility gate."""
    _check_space(model, space)
    if space.grid.r_min != 0:
        raise ValueError("point-source IBC needs a grid starting at r = 0")
    if model.g == 0:
        spec = IbcSpec.dirichlet()
    terms = ibc_terms(model, spec, space.grid, check=check)
    return SparseHermitian(_assemble(space, model.E0, terms), space, label=f"ibc-{spec.kind.value}",
                           meta={"spec": spec})


def assemble_shell(model: ModelParams, delta_shell: float, space: FockSpace) -> SparseHermitian:
    """Delta-shell cutoff: creation and absorption on the sphere r = delta_shell."""
    _check_space(model, space)
    grid = space.grid
    if delta_shell < grid.h * (1 - 1e-12):
        raise ValueError(f"shell radius {delta_shell} is below the grid spacing {grid.h}")
    if not math.isclose(grid.r_min, delta_shell, rel_tol=1e-12, abs_tol=1e-15):
        raise ValueError("shell model needs a grid starting at r = delta_shell")
    terms = _shell_terms(model, grid, delta_shell)
    return SparseHermitian(_assemble(space, model.E0, terms), space, label="shell",
                           meta={"delta_shell": delta_shell})


def assemble_smeared(model: ModelParams, cutoff: CutoffSpec, space: FockSpace) -> SparseHermitian:
    """Cutoff Hamiltonian with the point source replaced by a radial charge density."""
    _check_space(model, space)
    if cutoff.kind is not CutoffKind.SMEARED:
        raise ValueError("assemble_smeared needs a smeared cutoff")
    if space.grid.r_min != 0:
        raise ValueError("smeared model needs a grid starting at r = 0")
    terms = _smeared_terms(model, space.grid, cutoff.profile)
    return SparseHermitian(_assemble(space, model.E0, terms), space, label="smeared",
                           meta={"sigma": cutoff.sigma})


def hermiticity_defect(A: SparseHermitian) -> float:
    """max |S_ij - conj(S_ji)| for the weight-symmetrized matrix S."""
    S = A.symmetric()
    D = (S - S.conj().T).tocoo()
    return float(np.max(np.abs(D.data))) if D.nnz else 0.0


# ---------------------------------------------------------------------------
# reduced one-particle spaces
# ---------------------------------------------------------------------------

def coupling_modes(model: ModelParams, variant: IbcSpec | CutoffSpec, grid: RadialGrid,
                   n_poles: int = 24, n_eigs: int = 0) -> ModeSet:
    """Rational Krylov space of the emission vector.

    Spans b and (t + E0 + s)^(-1) b for s = 0 and log-spaced shifts up to the
    top of the sector spectrum.  The dressed ground state of every variant is
    built from these functions, so a few dozen modes reproduce the full-grid
    energies to high accuracy at a fraction of the basis size.  ``n_eigs``
    adds the lowest one-particle eigenvectors of t, needed for excitations.
    """
    if isinstance(variant, IbcSpec):
        terms = ibc_terms(model, variant, grid)
    elif variant.kind is CutoffKind.SHELL:
        terms = _shell_terms(model, grid, variant.delta_shell)
    else:
        terms = _smeared_terms(model, grid, variant.profile)
    t = (terms.t + model.E0 * sp.identity(grid.M)).tocsc()
    top = 2.0 * max(model.N_max, 1) / grid.h**2 + abs(terms.shift)
    shifts = np.concatenate([[0.0], np.geomspace(1e-2 * model.E0, top, n_poles)])
    seed = np.asarray(terms.up_vec, dtype=float)
    cols = [seed]
    for s in shifts:
        cols.append(sla.spsolve(t + s * sp.identity(grid.M, format="csc"), seed))
    if n_eigs:
        T = terms.t.toarray()
        _, U = np.linalg.eigh(0.5 * (T + T.conj().T))
        cols.extend(U[:, :n_eigs].T)
    return ModeSet.from_span(grid, np.column_stack(cols), rtol=1e-13)


@dataclass(frozen=True)
class BoundaryClosure:
    """Elimination v^(n+1)(., r_min) = p v^(n+1)(., r_1) + q(n) v^(n) of the constrained node."""

    p: complex
    q: Callable[[int], complex]


def boundary_closure(model: ModelParams, A: SparseHermitian) -> BoundaryClosure | None:
    """Boundary stencil used to assemble ``A``; None for the smeared model (no boundary)."""
    grid = A.space.grid
    g, h = model.g, grid.h
    if A.label == "smeared":
        return None
    if A.label in ("ibc-dirichlet", "shell"):
        return BoundaryClosure(0.0, lambda n: -g / (SQRT_PI * math.sqrt(n + 1)))
    if A.label == "ibc-neumann":
        return BoundaryClosure(1.0, lambda n: -h * g / (SQRT_PI * math.sqrt(n + 1)))
    if A.label == "ibc-robin":
        s = A.meta["spec"]
        denom = h * s.alpha - s.beta
        return BoundaryClosure(-s.beta / denom, lambda n: h * 4 * SQRT_PI / (math.sqrt(n + 1) * denom))
    raise ValueError(f"no boundary closure known for matrix label {A.label!r}")
