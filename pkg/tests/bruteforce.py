"""
Dense reference assemblies on ordered particle tuples.

Nothing here uses the package's multiset machinery or its sector terms.  A
sector-n amplitude is an array over all ordered tuples {1..M}^n; operators
are written out entry by entry, either from the continuum operator with the
boundary node eliminated by the boundary condition, or (Dirichlet and shell)
from the discrete quadratic form.  ``collapse`` restricts an ordered-tuple
operator to symmetric functions labelled by sorted multisets.
"""

import itertools
import math

import numpy as np

SQRT_PI = math.sqrt(math.pi)


def _tuples(M, n):
    return list(itertools.product(range(M), repeat=n))


class OrderedSpace:
    def __init__(self, M, N):
        self.M, self.N = M, N
        self.tuples = [_tuples(M, n) for n in range(N + 1)]
        sizes = [len(t) for t in self.tuples]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        self.dim = int(self.offsets[-1])
        self.index = [{t: self.offsets[n] + i for i, t in enumerate(ts)} for n, ts in enumerate(self.tuples)]

    def idx(self, s):
        return self.index[len(s)][tuple(s)]


def ibc_operator(M, h, N, E0, closure, creation):
    """Ordered-tuple operator of an IBC Hamiltonian.

    closure(n) -> (p, q): boundary node of sector n+1 is p * (node 1) + q * v^(n).
    creation(n) -> (a0, a1): the term added to sector n is a0 * v0 + a1 * v1 of
    sector n+1 with one coordinate at the boundary (v0) or at node 1 (v1).
    """
    S = OrderedSpace(M, N)
    A = np.zeros((S.dim, S.dim), dtype=complex)
    lap = 0.5 / h**2
    for n in range(N + 1):
        for s in S.tuples[n]:
            i = S.idx(s)
            A[i, i] += n * E0
            for j in range(n):
                k = s[j]
                A[i, i] += 2 * lap
                if k + 1 < M:
                    A[i, S.idx(s[:j] + (k + 1,) + s[j + 1:])] -= lap
                if k > 0:
                    A[i, S.idx(s[:j] + (k - 1,) + s[j + 1:])] -= lap
                else:
                    p, q = closure(n - 1)
                    A[i, i] -= lap * p
                    A[i, S.idx(s[:j] + s[j + 1:])] -= lap * q
            if n < N:
                p, q = closure(n)
                a0, a1 = creation(n)
                A[i, S.idx(s + (0,))] += a0 * p + a1
                A[i, i] += a0 * q
    return S, A


def dirichlet_form_operator(M, h, N, E0, c):
    """Operator of the discrete form sum_n h^n [n E0 |v|^2 + sum_j sum_edges |dv|^2 / (2 h^2)].

    The boundary node of sector n+1 carries -c(n) v^(n); the far node is 0.
    The operator is W^(-1) Q with W = h^n on sector n.
    """
    S = OrderedSpace(M, N)
    Q = np.zeros((S.dim, S.dim))
    for n in range(N + 1):
        w = h**n
        for s in S.tuples[n]:
            i = S.idx(s)
            Q[i, i] += w * n * E0
        for j in range(n):
            for rest in S.tuples[n - 1]:
                # edges (k, k+1) for k = 0..M in coordinate j; nodes 1..M are tuple labels 0..M-1
                for k in range(M + 1):
                    ell = np.zeros(S.dim)
                    if k == 0:
                        ell[S.idx(rest)] -= -c(n - 1)
                    else:
                        ell[S.idx(rest[:j] + (k - 1,) + rest[j:])] -= 1
                    if k < M:
                        ell[S.idx(rest[:j] + (k,) + rest[j:])] += 1
                    Q += w / (2 * h**2) * np.outer(ell, ell)
    W = np.concatenate([np.full(len(S.tuples[n]), h**n) for n in range(N + 1)])
    return S, Q / W[:, None]


def smeared_operator(M, h, N, E0, g, chi):
    """Ordered-tuple operator with creation g sqrt(n+1) h sum_k chi_k v^(n+1)(., k)."""
    S = OrderedSpace(M, N)
    A = np.zeros((S.dim, S.dim))
    lap = 0.5 / h**2
    for n in range(N + 1):
        for s in S.tuples[n]:
            i = S.idx(s)
            A[i, i] += n * E0
            for j in range(n):
                k = s[j]
                A[i, i] += 2 * lap
                if k + 1 < M:
                    A[i, S.idx(s[:j] + (k + 1,) + s[j + 1:])] -= lap
                if k > 0:
                    A[i, S.idx(s[:j] + (k - 1,) + s[j + 1:])] -= lap
                A[i, S.idx(s[:j] + s[j + 1:])] += g / math.sqrt(n) * chi[k]
            if n < N:
                for k in range(M):
                    A[i, S.idx(s + (k,))] += g * math.sqrt(n + 1) * h * chi[k]
    return S, A


def collapse(S, A, K=None):
    """Matrix on sorted multisets: entry (i, j) sums A[rep_i, t] over ordered t in multiset j."""
    K = S.M if K is None else K
    multisets = [list(itertools.combinations_with_replacement(range(K), n)) for n in range(S.N + 1)]
    flat = [m for ms in multisets for m in ms]
    col = {m: j for j, m in enumerate(flat)}
    B = np.zeros((len(flat), len(flat)), dtype=A.dtype)
    for i, m in enumerate(flat):
        row = A[S.idx(m)]
        for n in range(S.N + 1):
            for t in S.tuples[n]:
                B[i, col[tuple(sorted(t))]] += row[S.idx(t)]
    return B


def galerkin_modes(S, A, h, V):
    """Ordered-tuple operator in a product basis of orthonormal modes (columns of V, weight h)."""
    M, K = V.shape
    blocks = []
    for n in range(S.N + 1):
        P = np.ones((1, 1))
        for _ in range(n):
            P = np.kron(P, V)
        blocks.append(P)
    rows = []
    for n, Pn in enumerate(blocks):
        sl_n = slice(S.offsets[n], S.offsets[n + 1])
        row = []
        for m, Pm in enumerate(blocks):
            sl_m = slice(S.offsets[m], S.offsets[m + 1])
            row.append(h**n * Pn.conj().T @ A[sl_n, sl_m] @ Pm)
        rows.append(row)
    B = np.block(rows)
    return OrderedSpace(K, S.N), B


# ---------------------------------------------------------------------------
# the variants
# ---------------------------------------------------------------------------

def _c(g):
    return lambda n: g / (SQRT_PI * math.sqrt(n + 1))


def robin_closure(a, b, h):
    # alpha v0 + beta (v1 - v0)/h = 4 sqrt(pi)/sqrt(n+1) v^(n), solved for v0
    return lambda n: ((-b / h) / (a - b / h), (4 * SQRT_PI / math.sqrt(n + 1)) / (a - b / h))


def robin_creation(c, d, h):
    # sqrt(n+1) * 4 pi * (gamma u + delta u') in reduced coordinates
    return lambda n: (2 * SQRT_PI * math.sqrt(n + 1) * (c - d / h), 2 * SQRT_PI * math.sqrt(n + 1) * d / h)


def reference(kind, model, h, M, **kw):
    """Ordered-tuple operator of one variant; ``model`` needs g, E0 and N_max."""
    g, E0, Nm = model.g, model.E0, model.N_max
    if kind == "dirichlet-form":
        S, A = dirichlet_form_operator(M, h, Nm, E0, _c(g))
    elif kind == "dirichlet":
        c = _c(g)
        D = lambda n: g * math.sqrt(n + 1) / (2 * SQRT_PI)  # noqa: E731
        S, A = ibc_operator(M, h, Nm, E0, lambda n: (0.0, -c(n)), lambda n: (-D(n) / h, D(n) / h))
    elif kind == "neumann":
        c = _c(g)
        D = lambda n: g * math.sqrt(n + 1) / (2 * SQRT_PI)  # noqa: E731
        S, A = ibc_operator(M, h, Nm, E0, lambda n: (1.0, -h * c(n)), lambda n: (D(n), 0.0))
    elif kind == "robin":
        a, b, c, d = kw["coeffs"]
        S, A = ibc_operator(M, h, Nm, E0, robin_closure(a, b, h), robin_creation(c, d, h))
    elif kind == "smeared":
        r = h * np.arange(1, M + 1)
        sig = kw["sigma"]
        phi = (2 * math.pi * sig**2) ** -1.5 * np.exp(-r**2 / (2 * sig**2))
        chi = math.sqrt(4 * math.pi) * r * phi
        S, A = smeared_operator(M, h, Nm, E0, g, chi)
    else:
        raise ValueError(kind)
    return S, A
