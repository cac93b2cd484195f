"""
Closed-form reference values for the fixed-source model.

Everything here is independent of the grid code: ground-state data of the
point source, the multi-center ground energy and its Yukawa pair term, an
analytic residual check of the multi-center ground state, and the
coherent-state (van Hove) ground energy of the smeared-source model.
Natural units hbar = m_y = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate, special

from .fock import ModelParams


@dataclass(frozen=True)
class GroundTruth:
    E_min: float
    lambda_mean: float
    kappa: float
    N_norm: float

    def poisson(self, n: int) -> float:
        """P(n) = exp(-lambda) lambda^n / n!."""
        return math.exp(-self.lambda_mean) * self.lambda_mean**n / math.factorial(n)


def _check_E0(model: ModelParams):
    if not model.E0 > 0:
        raise ValueError("E0 must be positive")


def exact_ground(model: ModelParams) -> GroundTruth:
    """Dressed ground state of the point source with Dirichlet-type IBC."""
    _check_E0(model)
    g, k = model.g, model.kappa
    lam = g * g / (2 * math.pi * k)
    return GroundTruth(E_min=g * g * k / (2 * math.pi), lambda_mean=lam, kappa=k, N_norm=math.exp(-lam / 2))


def dressed_profile(model: ModelParams):
    """Reduced one-particle profile exp(-kappa r) of the dressing cloud."""
    k = model.kappa
    return lambda r: np.exp(-k * np.asarray(r))


# ---------------------------------------------------------------------------
# several fixed sources
# ---------------------------------------------------------------------------

class CenterSet:
    """Positions of N fixed sources in R^3."""

    def __init__(self, positions: Sequence[Sequence[float]]):
        x = np.atleast_2d(np.asarray(positions, dtype=float))
        if x.shape[1] != 3 or x.shape[0] < 1:
            raise ValueError(f"need an (N, 3) array of positions, got {x.shape}")
        d = self._distances(x)
        if x.shape[0] > 1 and np.min(d[np.triu_indices(x.shape[0], 1)]) <= 0:
            raise ValueError("source positions must be pairwise distinct")
        self.positions = x

    @staticmethod
    def _distances(x):
        return np.linalg.norm(x[:, None, :] - x[None, :, :], axis=-1)

    @classmethod
    def pair(cls, R: float, axis=(0.0, 0.0, 1.0)) -> "CenterSet":
        a = np.asarray(axis, dtype=float)
        a = a / np.linalg.norm(a)
        return cls([-0.5 * R * a, 0.5 * R * a])

    @property
    def N(self) -> int:
        return self.positions.shape[0]

    def distances(self) -> np.ndarray:
        return self._distances(self.positions)

    def translated(self, shift) -> "CenterSet":
        return CenterSet(self.positions + np.asarray(shift, dtype=float))


def _yukawa(kappa, d):
    return np.exp(-kappa * d) / d


def two_center_ground(model: ModelParams, centers: CenterSet) -> float:
    """Ground energy (g^2/pi) [N kappa/2 - sum_{i<j} exp(-kappa R_ij)/R_ij]."""
    _check_E0(model)
    k = model.kappa
    iu = np.triu_indices(centers.N, 1)
    pair = float(np.sum(_yukawa(k, centers.distances()[iu]))) if centers.N > 1 else 0.0
    return model.g**2 / math.pi * (centers.N * k / 2 - pair)


def yukawa_pair_potential(model: ModelParams, R: float | np.ndarray) -> float | np.ndarray:
    """V(R) = -(g^2/pi) exp(-kappa R)/R, the R-dependent part of the two-source energy."""
    R = np.asarray(R, dtype=float)
    if np.any(R <= 0):
        raise ValueError("separation must be positive")
    out = -model.g**2 / math.pi * _yukawa(model.kappa, R)
    return float(out) if out.ndim == 0 else out


def fit_decay_rate(R: np.ndarray, V: np.ndarray) -> tuple[float, float]:
    """Fit V(R) = -A exp(-lam R)/R by linear least squares on log(-V R); returns (lam, A)."""
    R = np.asarray(R, dtype=float)
    V = np.asarray(V, dtype=float)
    if R.size < 2 or np.any(V >= 0):
        raise ValueError("need at least two strictly negative samples")
    slope, intercept = np.polyfit(R, np.log(-V * R), 1)
    return float(-slope), float(math.exp(intercept))


def ground_coefficients(model: ModelParams, n_max: int) -> np.ndarray:
    """Sector prefactors c_0..c_n_max of the multi-center ground state (c_0 = 1).

    Solved from the interior-boundary condition: near a source,
    r * F(x_i + r w) -> 1, so c_(n+1) = -g c_n / (2 pi sqrt(n+1)).
    """
    c = np.ones(n_max + 1)
    for n in range(n_max):
        c[n + 1] = -model.g * c[n] / (2 * math.pi * math.sqrt(n + 1))
    return c


def _F_terms(kappa, centers, y):
    """Per-center values f_i(y) = exp(-kappa d)/d and Laplacians; y has shape (..., 3)."""
    d = np.linalg.norm(y[..., None, :] - centers.positions, axis=-1)
    f = _yukawa(kappa, d)
    # radial derivatives of exp(-kappa d)/d
    f1 = -np.exp(-kappa * d) * (kappa * d + 1) / d**2
    f2 = np.exp(-kappa * d) * (kappa**2 * d**2 + 2 * kappa * d + 2) / d**3
    return d, f, f2 + 2 * f1 / d


def _near_source_limits(kappa, centers):
    """For each source i: lim r F(x_i + r w) and lim d/dr [r F(x_i + r w)] as r -> 0.

    r f_i = exp(-kappa r) contributes 1 and -kappa; the other sources are
    smooth at x_i and contribute 0 and f_i'(x_i).
    """
    D = centers.distances()
    off = ~np.eye(centers.N, dtype=bool)
    value = np.ones(centers.N)
    slope = -kappa + np.array([np.sum(_yukawa(kappa, D[i, off[i]])) for i in range(centers.N)])
    return value, slope


def ibc_residual_multicenter(model: ModelParams, centers: CenterSet, samples: Sequence[np.ndarray],
                             E: float | None = None) -> float:
    """Max residual of the boundary conditions and eigen-equation of the multi-source ground state.

    ``samples`` is a sequence of arrays of shape (S, n, 3): S configurations
    of n particles (n = 0 allowed).  For each configuration y^n and each
    source i the residuals are
      (a) |lim r psi^(n+1)(y^n, x_i + r w) + g/(2 pi sqrt(n+1)) psi^(n)(y^n)|
      (b) |(H psi)^(n)(y^n) - E psi^(n)(y^n)| away from the sources,
    both evaluated in closed form.  ``E`` defaults to ``two_center_ground``.
    """
    _check_E0(model)
    if E is None:
        E = two_center_ground(model, centers)
    k, g = model.kappa, model.g
    n_top = max((np.asarray(s).shape[1] for s in samples), default=0)
    c = ground_coefficients(model, n_top + 1)
    lim_val, lim_slope = _near_source_limits(k, centers)
    worst = 0.0
    for block in samples:
        y = np.asarray(block, dtype=float)
        if y.ndim != 3 or y.shape[2] != 3:
            raise ValueError("each sample block must have shape (S, n, 3)")
        S, n = y.shape[0], y.shape[1]
        if n:
            if np.min(np.linalg.norm(y[..., None, :] - centers.positions, axis=-1)) < 1e-8:
                raise ValueError("sample configuration too close to a source")
            d, f, lap = _F_terms(k, centers, y)
            F = f.sum(axis=-1)  # (S, n)
            LF = lap.sum(axis=-1)
            prodF = np.prod(F, axis=1)
            # sum_j lap_j prod = prod * sum_j LF_j / F_j
            kinetic = -0.5 * c[n] * prodF * np.sum(LF / F, axis=1)
        else:
            prodF = np.ones(S)
            kinetic = np.zeros(S)
        psi_n = c[n] * prodF
        # (a) boundary condition at every source
        bc = c[n + 1] * prodF[:, None] * lim_val[None, :] + g / (2 * math.pi * math.sqrt(n + 1)) * psi_n[:, None]
        # (b) creation term: (g sqrt(n+1)/4 pi) * 4 pi * sum_i slope_i * c_(n+1) prod F
        creation = g * math.sqrt(n + 1) * c[n + 1] * prodF * np.sum(lim_slope)
        eig = kinetic + n * model.E0 * psi_n + creation - E * psi_n
        worst = max(worst, float(np.max(np.abs(bc), initial=0.0)), float(np.max(np.abs(eig), initial=0.0)))
    return worst


def multicenter_eigenvalue(model: ModelParams, centers: CenterSet) -> float:
    """Eigenvalue read off from the vacuum sector of H applied to the multi-source ground state.

    (H psi)^(0) is the creation term alone, g * c_1 * sum_i lim d/dr [r F(x_i + r w)],
    and psi^(0) = c_0 = 1, so this evaluates the Hamiltonian rather than the
    closed-form energy.
    """
    _check_E0(model)
    c = ground_coefficients(model, 1)
    _, slope = _near_source_limits(model.kappa, centers)
    return float(model.g * c[1] * np.sum(slope))


def random_configurations(centers: CenterSet, n: int, count: int, seed: int = 42,
                          spread: float = 2.0, min_distance: float = 1e-3) -> np.ndarray:
    """Uniform configurations in a cube around the sources, kept away from them."""
    rng = np.random.default_rng(seed)
    lo = centers.positions.min(axis=0) - spread
    hi = centers.positions.max(axis=0) + spread
    out = np.empty((count, n, 3))
    for s in range(count):
        for j in range(n):
            while True:
                p = rng.uniform(lo, hi)
                if np.min(np.linalg.norm(centers.positions - p, axis=1)) >= min_distance:
                    out[s, j] = p
                    break
    return out


# ---------------------------------------------------------------------------
# smeared source
# ---------------------------------------------------------------------------
# Fourier convention: phi_hat(k) = (2 pi)^(-3/2) int d^3y exp(-i k.y) phi(y), so the
# normalized Gaussian of width sigma has |phi_hat|^2 = (2 pi)^(-3) exp(-sigma^2 k^2).

def _gaussian_spectrum(sigma):
    return lambda k: (2 * math.pi) ** -3 * np.exp(-(sigma * k) ** 2)


def van_hove_self_energy(model: ModelParams, sigma: float, rtol: float = 1e-12) -> float:
    """E_phi = -g^2 int d^3k |phi_hat|^2 / (k^2/2 + E0) by adaptive radial quadrature.

    This is the exact ground energy of the smeared-source model (coherent
    state completing the square).
    """
    _check_E0(model)
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    spec = _gaussian_spectrum(sigma)
    val, err = integrate.quad(lambda k: 4 * math.pi * k * k * spec(k) / (0.5 * k * k + model.E0),
                              0, np.inf, epsabs=0, epsrel=rtol, limit=200)
    if not np.isfinite(val) or err > 1e3 * rtol * abs(val) + 1e-300:
        raise ArithmeticError(f"quadrature did not converge (estimate {val}, error {err})")
    return -model.g**2 * val


def van_hove_closed_form(model: ModelParams, sigma: float) -> float:
    """Same integral in closed form via the scaled complementary error function."""
    a = math.sqrt(2 * model.E0)
    inner = math.sqrt(math.pi) / (2 * sigma) - 0.5 * math.pi * a * special.erfcx(a * sigma)
    return -model.g**2 * (2 * math.pi) ** -3 * 4 * math.pi * 2 * inner


def massless_counterterm(model: ModelParams, sigma: float) -> float:
    """E0-independent self-energy -g^2 int d^3k |phi_hat|^2/(k^2/2) = -g^2/(2 pi^(3/2) sigma)."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return -model.g**2 / (2 * math.pi**1.5 * sigma)


def renorm_constant(model: ModelParams) -> float:
    """E_infinity = g^2 sqrt(E0) / (4 pi)."""
    _check_E0(model)
    return model.g**2 * math.sqrt(model.E0) / (4 * math.pi)
