"""Crank-Nicolson propagation and the sector probability balance."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .fock import FockSpace, FockVector, ModelParams, sector_weights
from .hamiltonian import SparseHermitian, boundary_closure

SOLVE_TOL = 1e-12


class LinearSolveError(RuntimeError):
    pass


@dataclass
class Trajectory:
    dt: float
    times: np.ndarray
    snapshots: list[FockVector]
    weights: np.ndarray  # (snapshots, N_max + 1)
    fluxes: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))  # (snapshots, N_max)
    energies: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def norms2(self) -> np.ndarray:
        return self.weights.sum(axis=1)


def _cn_stepper(A: SparseHermitian, dt: float):
    """Return step(x) for x in symmetrized coordinates W^(1/2) v."""
    S = A.symmetric().astype(complex)
    n = S.shape[0]
    eye = sp.identity(n, dtype=complex, format="csc")
    lhs = (eye + 0.5j * dt * S).tocsc()
    rhs = (eye - 0.5j * dt * S).tocsr()
    lu = sla.splu(lhs)

    def step(x):
        b = rhs @ x
        y = lu.solve(b)
        bnorm = np.linalg.norm(b)
        # iterative refinement of the direct solve
        for _ in range(5):
            r = b - lhs @ y
            if np.linalg.norm(r) <= SOLVE_TOL * bnorm:
                return y
            y = y + lu.solve(r)
        if np.linalg.norm(b - lhs @ y) > SOLVE_TOL * bnorm:
            raise LinearSolveError("Crank-Nicolson solve did not reach the tolerance")
        return y

    return step


def propagate(A: SparseHermitian, v0: FockVector, dt: float, steps: int, record_every: int = 1,
              model: ModelParams | None = None) -> Trajectory:
    """Implicit-midpoint time stepping v -> (1 + i dt A/2)^(-1) (1 - i dt A/2) v.

    Snapshots are kept every ``record_every`` steps (and at t = 0).  When
    ``model`` is given, boundary-flux estimates are attached to each snapshot.
    """
    if not dt > 0:
        raise ValueError("time step must be positive")
    if steps < 1 or record_every < 1:
        raise ValueError("need steps >= 1 and record_every >= 1")
    if not A.space.compatible(v0.space):
        raise ValueError("initial state lives on a different space")
    if v0.norm() == 0:
        raise ValueError("initial state is zero")
    d = np.sqrt(A.weights)
    step = _cn_stepper(A, dt)
    x = d * v0.data
    times, snaps = [0.0], [v0]
    for k in range(1, steps + 1):
        x = step(x)
        if k % record_every == 0 or k == steps:
            times.append(k * dt)
            snaps.append(FockVector(A.space, x / d))
    traj = Trajectory(
        dt=dt,
        times=np.array(times),
        snapshots=snaps,
        weights=np.array([sector_weights(v) for v in snaps]),
        energies=np.array([A.expectation(v.data).real for v in snaps]),
    )
    if model is not None:
        traj.fluxes = np.array([boundary_flux(model, A, v) for v in snaps])
    return traj


def _boundary_values(space: FockSpace, v: FockVector, n: int) -> np.ndarray:
    """Sector n+1 with its first coordinate at node 1, as a function on sector n labels."""
    bases = space.bases
    low = bases[n].entries
    if space.modes is None:
        labels, coef = np.array([0]), np.array([1.0])
    else:
        coef = space.modes.vectors[0, :]
        labels = np.arange(space.K)
    hi = v.sector(n + 1)
    out = np.zeros(low.shape[0], dtype=complex)
    for k, c in zip(labels, coef):
        grown = np.concatenate([np.full((low.shape[0], 1), k), low], axis=1)
        grown.sort(axis=1)
        out += c * hi[bases[n + 1].index(grown)]
    return out


def boundary_flux(model: ModelParams, A: SparseHermitian, v: FockVector) -> np.ndarray:
    """Probability flux j_n from sector n+1 into sector n, n = 0..N_max-1.

    Built from the current Im[conj(v) dv/dr] at the constrained node of
    sector n+1 with the (n+1) equivalent coordinates; the boundary value and
    the one-sided derivative use the same closure as the assembly.  For the
    smeared model (no boundary) the exact sector transfer is returned.
    """
    space = A.space
    closure = boundary_closure(model, A)
    if closure is None:
        return sector_transfer(A, v)
    h = space.grid.h
    dx = h if space.modes is None else 1.0
    out = np.zeros(space.N_max)
    for n in range(space.N_max):
        v1 = _boundary_values(space, v, n)
        v0 = closure.p * v1 + closure.q(n) * v.sector(n)
        w = dx**n * space.bases[n].weights
        current = np.imag(np.conj(v0) * (v1 - v0) / h)
        out[n] = -(n + 1) * np.sum(w * current)
    return out


def sector_transfer(A: SparseHermitian, v: FockVector) -> np.ndarray:
    """Exact discrete transfer 2 Im <v^(n), A_(n,n+1) v^(n+1)> from sector n+1 into n."""
    space = A.space
    out = np.zeros(space.N_max)
    for n in range(space.N_max):
        w = space.weights[space.sector_slice(n)]
        out[n] = 2 * np.imag(np.sum(w * np.conj(v.sector(n)) * (A.block(n, n + 1) @ v.sector(n + 1))))
    return out


def flux_balance_residual(traj: Trajectory, model: ModelParams | None = None,
                          A: SparseHermitian | None = None) -> np.ndarray:
    """|dP_n/dt - (j_n - j_(n-1))| at interior snapshots, shape (snapshots-2, N_max).

    dP_n/dt is a centered difference; j is taken from the trajectory or
    recomputed from ``model`` and ``A``.  Column n covers sectors n = 0..N_max-1
    (the top sector is fixed by total conservation).
    """
    if len(traj.times) < 3:
        raise ValueError("need at least three snapshots")
    dts = np.diff(traj.times)
    if not np.allclose(dts, dts[0], rtol=1e-12):
        raise ValueError("snapshots must be equally spaced")
    flux = traj.fluxes
    if flux.size == 0 or flux.shape[0] != len(traj.times):
        if model is None or A is None:
            raise ValueError("trajectory has no fluxes; pass model and matrix")
        flux = np.array([boundary_flux(model, A, v) for v in traj.snapshots])
    P = traj.weights
    dP = (P[2:] - P[:-2]) / (2 * dts[0])
    N = P.shape[1] - 1
    padded = np.concatenate([np.zeros((flux.shape[0], 1)), flux], axis=1)  # j_(-1) = 0
    predicted = padded[1:-1, 1:] - padded[1:-1, :-1]  # j_n - j_(n-1)
    return np.abs(dP[:, :N] - predicted[:, :N])


def write_csv(traj: Trajectory, path: str | Path, residual: np.ndarray | None = None) -> None:
    """Columns t, norm2, P0..PN, flux1..fluxN, res0..res(N-1); 17 significant digits."""
    N = traj.weights.shape[1] - 1
    if residual is None:
        residual = np.full((len(traj.times), N), np.nan)
    else:
        residual = np.vstack([np.full((1, N), np.nan), residual, np.full((1, N), np.nan)])
    flux = traj.fluxes if traj.fluxes.size else np.full((len(traj.times), N), np.nan)
    header = (["t", "norm2"] + [f"P{n}" for n in range(N + 1)] + [f"flux{n}" for n in range(1, N + 1)]
              + [f"residual{n}" for n in range(N)])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, t in enumerate(traj.times):
            row = [t, traj.norms2[i], *traj.weights[i], *flux[i], *residual[i]]
            w.writerow([f"{x:.17g}" for x in row])
