"""Lowest eigenpairs of assembled Hamiltonians and grid-convergence extrapolation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .fock import FockVector
from .hamiltonian import SparseHermitian

DENSE_LIMIT = 2000
DEFAULT_SEED = 42


class ConvergenceError(RuntimeError):
    """The iterative eigensolver did not reach the requested tolerance."""

    def __init__(self, message: str, residuals: np.ndarray):
        super().__init__(message)
        self.residuals = residuals


@dataclass
class SpectralResult:
    eigenvalues: np.ndarray
    eigenvectors: list[FockVector]
    residuals: np.ndarray
    iterations: int
    method: str


def _dense(S, k: int):
    w, U = np.linalg.eigh(S.toarray())
    return w[:k], U[:, :k], 0


def _lanczos(S, k: int, tol: float, seed: int, krylov_dim: int, max_restarts: int):
    """Thick-restart Lanczos with full reorthogonalization on a Hermitian matrix.

    After each cycle the ``keep`` lowest Ritz vectors are retained together
    with the next Lanczos vector; the projected matrix is rebuilt from explicit
    projections, so the arrowhead structure after a restart needs no special
    bookkeeping.
    """
    n = S.shape[0]
    dtype = np.result_type(S.dtype, np.float64)
    rng = np.random.default_rng(seed)
    m = min(krylov_dim, n)
    keep = min(max(k + 8, m // 3), m - 2)
    V = np.zeros((n, m + 1), dtype=dtype)
    T = np.zeros((m + 1, m + 1), dtype=dtype)
    v = rng.standard_normal(n).astype(dtype)
    V[:, 0] = v / np.linalg.norm(v)
    j0 = 0
    matvecs = 0
    resid = np.full(k, np.inf)
    for _ in range(max_restarts):
        for j in range(j0, m):
            w = S @ V[:, j]
            matvecs += 1
            # two passes of classical Gram-Schmidt against the whole basis
            c = V[:, : j + 1].conj().T @ w
            w = w - V[:, : j + 1] @ c
            c2 = V[:, : j + 1].conj().T @ w
            w = w - V[:, : j + 1] @ c2
            c = c + c2
            T[: j + 1, j] = c
            T[j, : j + 1] = c.conj()
            beta = np.linalg.norm(w)
            if beta < 1e-14 * max(1.0, np.abs(c).max()):
                # invariant subspace: continue with a fresh orthogonal direction
                w = rng.standard_normal(n).astype(dtype)
                for _pass in range(2):
                    w = w - V[:, : j + 1] @ (V[:, : j + 1].conj().T @ w)
                beta_couple = 0.0
                w = w / np.linalg.norm(w)
            else:
                beta_couple = beta
                w = w / beta
            T[j + 1, j] = T[j, j + 1] = beta_couple
            V[:, j + 1] = w
        theta, Y = np.linalg.eigh(T[:m, :m])
        resid = np.abs(T[m, m - 1] * Y[m - 1, :k])
        if np.all(resid <= tol):
            X = V[:, :m] @ Y[:, :k]
            return theta[:k], X, matvecs
        # restart: Ritz vectors plus the residual direction
        X = V[:, :m] @ Y[:, :keep]
        nxt = V[:, m].copy()
        V[:] = 0
        T[:] = 0
        V[:, :keep] = X
        V[:, keep] = nxt
        T[:keep, :keep] = np.diag(theta[:keep])
        # the first new column recomputes the couplings to the Ritz block explicitly
        j0 = keep
    raise ConvergenceError(
        f"Lanczos did not converge after {max_restarts} restarts ({matvecs} products)", resid
    )


def lowest_eigenpairs(A: SparseHermitian, k: int = 1, tol: float = 1e-9, seed: int = DEFAULT_SEED,
                      method: str = "auto", krylov_dim: int = 120, max_restarts: int = 400) -> SpectralResult:
    """The k lowest eigenpairs of a weight-self-adjoint sparse Hamiltonian.

    ``method`` is ``"dense"``, ``"lanczos"`` or ``"auto"`` (dense up to
    dimension 2000).  Residuals ||A x - E x|| (weighted norm, ||x|| = 1) are
    recomputed by an explicit product and must not exceed ``tol``.
    """
    if k < 1 or k >= A.dim:
        raise ValueError(f"need 1 <= k < dim, got k={k}, dim={A.dim}")
    if method == "auto":
        method = "dense" if A.dim <= DENSE_LIMIT else "lanczos"
    S = A.symmetric()
    if method == "dense":
        vals, X, iters = _dense(S, k)
    elif method == "lanczos":
        vals, X, iters = _lanczos(S, k, tol, seed, krylov_dim, max_restarts)
    else:
        raise ValueError(f"unknown method {method!r}")
    d = np.sqrt(A.weights)
    vectors, residuals, energies = [], [], []
    for i in range(k):
        x = X[:, i] / np.linalg.norm(X[:, i])
        Sx = S @ x
        rayleigh = np.vdot(x, Sx)
        if abs(rayleigh.imag) > 1e-12 * max(1.0, abs(rayleigh)):
            raise ArithmeticError(f"Rayleigh quotient has imaginary part {rayleigh.imag:.3e}")
        E = rayleigh.real
        residuals.append(np.linalg.norm(Sx - E * x))
        energies.append(E)
        v = (x / d).astype(complex)
        # fix the global phase: largest component real positive
        p = np.argmax(np.abs(v))
        v *= np.exp(-1j * np.angle(v[p]))
        vectors.append(FockVector(A.space, v))
    order = np.argsort(energies)
    residuals = np.asarray(residuals)[order]
    if np.any(residuals > tol):
        raise ConvergenceError(f"residuals {residuals} exceed tolerance {tol}", residuals)
    return SpectralResult(
        eigenvalues=np.asarray(energies)[order],
        eigenvectors=[vectors[i] for i in order],
        residuals=residuals,
        iterations=int(iters),
        method=method,
    )


@dataclass(frozen=True)
class Extrapolation:
    value: float
    error: float
    order: float
    coefficient: float


def richardson_extrapolate(samples: Sequence[tuple[float, float]], order: float | None = 1.0) -> Extrapolation:
    """Fit value(h) = L + c h^p and return the h -> 0 limit.

    With ``order`` fixed the fit is linear least squares; ``order=None`` fits p
    as well (needs at least three samples).  ``error`` is the RMS fit residual
    plus the shift of the limit when the coarsest sample is dropped, whenever
    enough samples remain to refit.
    """
    h = np.array([s[0] for s in samples], dtype=float)
    y = np.array([s[1] for s in samples], dtype=float)
    if h.size < 3:
        raise ValueError("need at least three samples")
    if np.unique(h).size != h.size or np.any(h <= 0):
        raise ValueError("sample spacings must be positive and distinct")

    def fit(hh, yy, p):
        if p is not None:
            G = np.column_stack([np.ones_like(hh), hh**p])
            (L, c), *_ = np.linalg.lstsq(G, yy, rcond=None)
            return L, c, p
        hs = hh / hh.max()
        p0 = 1.0
        if hh.size >= 3:
            idx = np.argsort(hh)[::-1][:3]
            d1, d2 = yy[idx[0]] - yy[idx[1]], yy[idx[1]] - yy[idx[2]]
            ratio = hh[idx[0]] / hh[idx[1]]
            if d1 * d2 > 0 and ratio > 1:
                p0 = float(np.clip(np.log(d1 / d2) / np.log(ratio), 0.2, 6.0))
        sol = least_squares(lambda q: q[0] + q[1] * hs ** q[2] - yy,
                            x0=[yy[np.argmin(hh)], yy.max() - yy.min(), p0], method="lm")
        L, c, p = sol.x
        return L, c / hh.max() ** p, p

    L, c, p = fit(h, y, order)
    rms = float(np.sqrt(np.mean((L + c * h**p - y) ** 2)))
    if not np.all(np.isfinite([L, c, p])):
        raise ValueError("degenerate sample set")
    shift = 0.0
    need = 2 if order is not None else 3
    if h.size > need:
        finer = np.argsort(h)[: h.size - 1]
        L2, _, _ = fit(h[finer], y[finer], order)
        shift = abs(L2 - L)
    return Extrapolation(value=float(L), error=rms + shift, order=float(p), coefficient=float(c))
