"""
Radially reduced bosonic Fock space around a fixed point source.

Every particle is kept in the s-wave sector about the origin, and the
n-particle amplitude is stored in reduced form

    v^(n)(r_1, ..., r_n) = (4 pi)^(n/2) * r_1 * ... * r_n * psi^(n)

so that the Fock norm becomes a plain product-measure norm on the half-line:
||psi||^2 = sum_n integral |v^(n)|^2 dr_1 ... dr_n.  Natural units are fixed
(hbar = m_y = 1).

One-particle labels are either grid nodes (the default) or a reduced set of
grid functions (``ModeSet``).  A symmetric n-particle function is stored by
its value on each sorted multiset of labels; the multiplicity of a multiset
among ordered tuples is its weight.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

DEFAULT_MAX_SECTOR_SIZE = 5_000_000


class CapacityError(ValueError):
    """Raised when a sector basis would exceed the configured size."""


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the fixed-source model in natural units."""

    g: float = 1.0
    E0: float = 1.0
    N_max: int = 2
    m_y: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        if not self.E0 > 0:
            raise ValueError(f"E0 must be positive, got {self.E0}")
        if self.N_max < 0:
            raise ValueError(f"N_max must be >= 0, got {self.N_max}")
        if self.g != 0 and self.N_max < 1:
            raise ValueError("an interacting model (g != 0) needs N_max >= 1")
        if self.m_y != 1.0 or self.hbar != 1.0:
            raise ValueError("only natural units (m_y = hbar = 1) are supported")

    @property
    def kappa(self) -> float:
        """Decay rate sqrt(2 m_y E0) / hbar of the dressing cloud."""
        return math.sqrt(2.0 * self.m_y * self.E0) / self.hbar


@dataclass(frozen=True)
class RadialGrid:
    """Uniform radial grid ``r_k = r_min + k*h`` for k = 1..M.

    Node 0 (at ``r_min``) is the constrained boundary node and node M+1 carries
    the zero far-end condition; neither is an unknown.
    """

    h: float
    M: int
    r_min: float = 0.0

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"grid spacing must be positive, got {self.h}")
        if self.M < 1:
            raise ValueError(f"need at least one interior node, got M={self.M}")
        if self.r_min < 0:
            raise ValueError(f"r_min must be nonnegative, got {self.r_min}")

    @classmethod
    def covering(cls, radius: float, h: float, r_min: float = 0.0) -> "RadialGrid":
        """Smallest grid with spacing h whose box reaches ``radius``."""
        M = int(math.ceil((radius - r_min) / h - 1e-9))
        return cls(h=h, M=max(M, 1), r_min=r_min)

    @property
    def nodes(self) -> np.ndarray:
        return self.r_min + self.h * np.arange(1, self.M + 1)

    @property
    def box_radius(self) -> float:
        """Radius of the box, R_box = r_min + M*h."""
        return self.r_min + self.M * self.h


@dataclass(frozen=True, eq=False)
class ModeSet:
    """A reduced one-particle space spanned by grid functions.

    ``vectors`` has shape (M, K); columns are orthonormal in the grid inner
    product ``h * sum_k conj(a_k) b_k``.
    """

    grid: RadialGrid
    vectors: np.ndarray

    def __post_init__(self):
        V = np.asarray(self.vectors)
        if V.ndim != 2 or V.shape[0] != self.grid.M:
            raise ValueError(f"mode vectors must have shape (M, K), got {V.shape}")
        gram = self.grid.h * (V.conj().T @ V)
        if not np.allclose(gram, np.eye(V.shape[1]), atol=1e-10):
            raise ValueError("mode vectors are not orthonormal in the grid inner product")

    @classmethod
    def from_span(cls, grid: RadialGrid, columns: np.ndarray, rtol: float = 1e-12) -> "ModeSet":
        """Orthonormal basis of span(columns), dropping numerically dependent directions."""
        A = np.sqrt(grid.h) * np.asarray(columns)
        A = A / np.linalg.norm(A, axis=0)
        U, s, _ = np.linalg.svd(A, full_matrices=False)
        keep = s > rtol * s[0]
        return cls(grid=grid, vectors=U[:, keep] / np.sqrt(grid.h))

    @property
    def K(self) -> int:
        return self.vectors.shape[1]

    def project(self, f: np.ndarray) -> np.ndarray:
        """Mode coefficients of a grid function (orthogonal projection)."""
        return self.grid.h * (self.vectors.conj().T @ f)


def _binomial_table(N: int, k: int) -> np.ndarray:
    table = np.zeros((N + 1, k + 1), dtype=np.int64)
    for x in range(N + 1):
        for j in range(min(x, k) + 1):
            table[x, j] = math.comb(x, j)
    return table


@dataclass(frozen=True, eq=False)
class SectorBasis:
    """All multisets of size n drawn from K one-particle labels, in lex order.

    ``entries[i]`` is a nondecreasing row of 0-based labels (label k is grid
    node k+1 for a grid basis); ``weights[i]`` is n!/prod(occupancy!).
    """

    n: int
    K: int
    entries: np.ndarray
    weights: np.ndarray
    _binom: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return self.entries.shape[0]

    def index(self, multisets: np.ndarray) -> np.ndarray:
        """Positions of sorted multisets (rows) in this basis."""
        a = np.asarray(multisets, dtype=np.int64)
        if self.n == 0:
            return np.zeros(a.shape[0] if a.ndim == 2 else 1, dtype=np.int64)
        a = a.reshape(-1, self.n)
        # multiset -> strictly increasing combination of {0..N-1}, then lex rank
        N = self.K + self.n - 1
        c = a + np.arange(self.n)
        rank = np.zeros(a.shape[0], dtype=np.int64)
        prev = np.full(a.shape[0], -1, dtype=np.int64)
        for i in range(self.n):
            k = self.n - i
            rank += self._binom[N - prev - 1, k] - self._binom[N - c[:, i], k]
            prev = c[:, i]
        return rank


def build_sector_basis(n: int, M: int, max_size: int = DEFAULT_MAX_SECTOR_SIZE) -> SectorBasis:
    """Enumerate the size-n multisets of M labels with their multiplicities."""
    if n < 0 or M < 1:
        raise ValueError(f"need n >= 0 and M >= 1, got n={n}, M={M}")
    size = math.comb(M + n - 1, n)
    if size > max_size:
        raise CapacityError(f"sector n={n} over M={M} labels has {size} entries (limit {max_size})")
    if n == 0:
        entries = np.zeros((1, 0), dtype=np.int64)
    else:
        flat = np.fromiter(
            itertools.chain.from_iterable(itertools.combinations_with_replacement(range(M), n)),
            dtype=np.int64,
            count=size * n,
        )
        entries = flat.reshape(size, n)
    weights = np.full(size, float(math.factorial(n)))
    if n > 1:
        # occupancy runs in sorted rows: divide by occ! incrementally
        run = np.ones(size)
        for j in range(1, n):
            same = entries[:, j] == entries[:, j - 1]
            run = np.where(same, run + 1, 1.0)
            weights /= run
    binom = _binomial_table(M + n, max(n, 1))
    return SectorBasis(n=n, K=M, entries=entries, weights=weights, _binom=binom)


class FockSpace:
    """Sectors n = 0..N_max over a radial grid, optionally on a reduced mode set."""

    def __init__(self, grid: RadialGrid, N_max: int, modes: ModeSet | None = None,
                 max_size: int = DEFAULT_MAX_SECTOR_SIZE):
        if modes is not None and modes.grid != grid:
            raise ValueError("mode set was built on a different grid")
        self.grid = grid
        self.N_max = N_max
        self.modes = modes
        self.K = grid.M if modes is None else modes.K
        self.bases = [build_sector_basis(n, self.K, max_size) for n in range(N_max + 1)]
        sizes = [len(b) for b in self.bases]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])
        # grid labels carry the quadrature weight h per particle; orthonormal modes carry 1
        dx = grid.h if modes is None else 1.0
        self.weights = np.concatenate([dx ** b.n * b.weights for b in self.bases])

    @classmethod
    def for_model(cls, model: ModelParams, grid: RadialGrid, modes: ModeSet | None = None,
                  max_size: int = DEFAULT_MAX_SECTOR_SIZE) -> "FockSpace":
        return cls(grid, model.N_max, modes=modes, max_size=max_size)

    @property
    def dim(self) -> int:
        return int(self.offsets[-1])

    def sector_slice(self, n: int) -> slice:
        return slice(int(self.offsets[n]), int(self.offsets[n + 1]))

    def compatible(self, other: "FockSpace") -> bool:
        return (self is other) or (
            self.grid == other.grid and self.N_max == other.N_max and self.modes is other.modes
        )

    def single_particle_values(self, coeffs: np.ndarray) -> np.ndarray:
        """Grid values of a one-particle amplitude given in this space's labels."""
        return coeffs if self.modes is None else self.modes.vectors @ coeffs


@dataclass(frozen=True, eq=False)
class FockVector:
    """Sector-decomposed coefficient vector of a state in a ``FockSpace``."""

    space: FockSpace
    data: np.ndarray

    def __post_init__(self):
        if self.data.shape != (self.space.dim,):
            raise ValueError(f"expected {self.space.dim} coefficients, got {self.data.shape}")

    @classmethod
    def zeros(cls, space: FockSpace) -> "FockVector":
        return cls(space, np.zeros(space.dim, dtype=complex))

    @classmethod
    def vacuum(cls, space: FockSpace, amplitude: complex = 1.0) -> "FockVector":
        data = np.zeros(space.dim, dtype=complex)
        data[0] = amplitude
        return cls(space, data)

    def sector(self, n: int) -> np.ndarray:
        return self.data[self.space.sector_slice(n)]

    @property
    def vacuum_amplitude(self) -> complex:
        return complex(self.data[0])

    def norm(self) -> float:
        return math.sqrt(inner_product(self, self).real)

    def normalized(self) -> "FockVector":
        return FockVector(self.space, self.data / self.norm())


def inner_product(u: FockVector, w: FockVector) -> complex:
    """Weighted Fock inner product <u, w>, antilinear in u."""
    if not u.space.compatible(w.space):
        raise ValueError("vectors live on different grids or bases")
    return complex(np.sum(u.space.weights * np.conj(u.data) * w.data))


def sector_weights(v: FockVector) -> np.ndarray:
    """Squared norm carried by each sector, P(0..N_max)."""
    dens = v.space.weights * np.abs(v.data) ** 2
    return np.array([dens[v.space.sector_slice(n)].sum() for n in range(v.space.N_max + 1)])


def product_state_from_profile(space: FockSpace, f: Callable[[np.ndarray], np.ndarray] | np.ndarray,
                               n_weights: Sequence[complex]) -> FockVector:
    """State whose sector n equals ``n_weights[n] * prod_j f(r_j)``.

    ``f`` is a callable of radius (or an array of its node values).  Missing
    trailing ``n_weights`` are zero.
    """
    values = f(space.grid.nodes) if callable(f) else np.asarray(f)
    values = np.asarray(values, dtype=complex)
    if not np.all(np.isfinite(values)):
        raise ValueError("profile is not finite at every grid node")
    labels = values if space.modes is None else space.modes.project(values)
    data = np.zeros(space.dim, dtype=complex)
    for n, c in enumerate(n_weights):
        if n > space.N_max:
            if c != 0:
                raise ValueError(f"weight given for sector {n} > N_max={space.N_max}")
            continue
        basis = space.bases[n]
        data[space.sector_slice(n)] = c * np.prod(labels[basis.entries], axis=1)
    return FockVector(space, data)
