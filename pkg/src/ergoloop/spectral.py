"""Small dense linear algebra and digraph checks.

Spectral radius, Schur stability, the contraction order of matrix powers,
and strong connectivity / primitivity of boolean adjacency matrices.
"""

from __future__ import annotations

from collections import deque
from math import gcd
from typing import NamedTuple, Optional

import numpy as np

__all__ = [
    "DimensionError",
    "SchurResult",
    "as_matrix",
    "spectral_radius",
    "is_schur",
    "induced_2norm",
    "power_contraction_order",
    "qr_eigenvalues",
    "as_adjacency",
    "is_strongly_connected",
    "graph_period",
    "is_primitive",
    "SCHUR_TOL",
    "M_MAX",
]

SCHUR_TOL = 1e-9
M_MAX = 10_000


class DimensionError(ValueError):
    """Raised when a matrix has the wrong shape for an operation."""


class SchurResult(NamedTuple):
    verdict: bool
    margin: float


def as_matrix(m, name: str = "matrix", square: bool = False) -> np.ndarray:
    """Coerce ``m`` to a finite 2-D float array.

    Scalars become 1x1 matrices. Raises :class:`DimensionError` on bad
    rank or (with ``square=True``) non-square input, ``ValueError`` on
    NaN/Inf entries.
    """
    a = np.array(m, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {a.shape}")
    if square and a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def spectral_radius(m) -> float:
    """Largest eigenvalue modulus of a square matrix (0 for a 0x0 matrix)."""
    a = as_matrix(m, square=True)
    if a.shape[0] == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(a))))


def is_schur(m, tol: float = SCHUR_TOL) -> SchurResult:
    """Check whether all eigenvalues lie strictly inside the unit circle.

    Parameters
    ----------
    m : array_like
        Square matrix.
    tol : float
        Safety margin in (0, 1); the verdict is ``rho < 1 - tol``.

    Returns
    -------
    SchurResult
        ``(verdict, margin)`` with ``margin = 1 - rho``.
    """
    if not 0.0 < tol < 1.0:
        raise ValueError(f"tol must lie in (0, 1), got {tol}")
    rho = spectral_radius(m)
    return SchurResult(rho < 1.0 - tol, 1.0 - rho)


def induced_2norm(m) -> float:
    """Induced Euclidean norm, computed as ``sqrt(rho(m.T @ m))``."""
    a = as_matrix(m)
    if a.size == 0:
        return 0.0
    g = a.T @ a
    # Gram matrix is symmetric PSD; eigvalsh is the symmetric eigen-solver
    return float(np.sqrt(max(np.max(np.abs(np.linalg.eigvalsh(g))), 0.0)))


def _norm_below_one(p: np.ndarray) -> bool:
    fro = np.sqrt(np.sum(p * p))
    if fro < 1.0:
        return True
    # ||p||_2 >= largest column norm and >= fro / sqrt(rank)
    if fro / np.sqrt(min(p.shape)) >= 1.0:
        return False
    if np.max(np.sqrt(np.sum(p * p, axis=0))) >= 1.0:
        return False
    return induced_2norm(p) < 1.0


def power_contraction_order(m, m_max: int = M_MAX) -> Optional[int]:
    """Smallest ``k <= m_max`` with ``||m**k||_2 < 1``, or ``None``.

    Because ``||m**k|| >= rho(m)**k``, inputs with spectral radius at least
    one return ``None`` without iterating.
    """
    a = as_matrix(m, square=True)
    if m_max < 1:
        raise ValueError("m_max must be a positive integer")
    if a.shape[0] == 0:
        return 1
    if spectral_radius(a) >= 1.0:
        return None
    p = a.copy()
    for k in range(1, m_max + 1):
        if _norm_below_one(p):
            return k
        p = p @ a
        if not np.all(np.isfinite(p)):
            return None
    return None


def _hessenberg(a: np.ndarray) -> np.ndarray:
    h = a.astype(complex)
    n = h.shape[0]
    for j in range(n - 2):
        x = h[j + 1:, j].copy()
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        phase = x[0] / abs(x[0]) if x[0] != 0 else 1.0
        v = x.copy()
        v[0] += phase * alpha
        v /= np.linalg.norm(v)
        h[j + 1:, :] -= 2.0 * np.outer(v, v.conj() @ h[j + 1:, :])
        h[:, j + 1:] -= 2.0 * np.outer(h[:, j + 1:] @ v, v.conj())
    return h


def qr_eigenvalues(m, tol: float = 1e-15, max_iter: int = 100_000) -> np.ndarray:
    """Eigenvalues by shifted QR iteration on the Hessenberg form.

    Independent of LAPACK's eigen-solvers (only QR factorizations are
    used); slow, intended for cross-checking small matrices.
    """
    a = as_matrix(m, square=True)
    n = a.shape[0]
    if n == 0:
        return np.zeros(0, dtype=complex)
    out: list[complex] = []
    stack = [_hessenberg(a)]
    iters = 0
    while stack:
        h = stack.pop()
        k = h.shape[0]
        if k == 1:
            out.append(complex(h[0, 0]))
            continue
        if k == 2:
            tr = h[0, 0] + h[1, 1]
            det = h[0, 0] * h[1, 1] - h[0, 1] * h[1, 0]
            disc = np.sqrt(tr * tr / 4.0 - det + 0j)
            out.extend([complex(tr / 2 + disc), complex(tr / 2 - disc)])
            continue
        scale = np.abs(np.diag(h))
        split = None
        for i in range(k - 1, 0, -1):
            if abs(h[i, i - 1]) <= tol * (scale[i] + scale[i - 1] + 1e-300):
                split = i
                break
        if split is not None:
            stack.append(h[:split, :split].copy())
            stack.append(h[split:, split:].copy())
            continue
        iters += 1
        if iters > max_iter:
            raise RuntimeError("QR iteration did not converge")
        a_, b_, c_, d_ = h[k - 2, k - 2], h[k - 2, k - 1], h[k - 1, k - 2], h[k - 1, k - 1]
        tr = a_ + d_
        disc = np.sqrt(tr * tr / 4.0 - (a_ * d_ - b_ * c_) + 0j)
        mu1, mu2 = tr / 2 + disc, tr / 2 - disc
        mu = mu1 if abs(mu1 - d_) < abs(mu2 - d_) else mu2
        if iters % 17 == 0:
            mu = d_ + abs(h[k - 1, k - 2])  # exceptional shift
        q, r = np.linalg.qr(h - mu * np.eye(k))
        h = r @ q + mu * np.eye(k)
        stack.append(h)
    return np.array(out)


def as_adjacency(g) -> np.ndarray:
    a = np.asarray(g)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise DimensionError(f"adjacency matrix must be square n x n with n >= 1, got {a.shape}")
    return a.astype(bool)


def _reach(adj: np.ndarray, start: int) -> np.ndarray:
    seen = np.zeros(adj.shape[0], dtype=bool)
    seen[start] = True
    queue = deque([start])
    while queue:
        u = queue.popleft()
        nxt = np.flatnonzero(adj[u] & ~seen)
        seen[nxt] = True
        queue.extend(nxt.tolist())
    return seen


def is_strongly_connected(g) -> bool:
    """True iff every node reaches every other node along directed edges."""
    adj = as_adjacency(g)
    return bool(_reach(adj, 0).all() and _reach(adj.T, 0).all())


def graph_period(g) -> int:
    """Period of a strongly connected digraph (gcd of its cycle lengths).

    Computed from BFS levels: the gcd of ``level[u] + 1 - level[v]`` over
    all edges ``u -> v``. Raises ``ValueError`` if ``g`` is not strongly
    connected.
    """
    adj = as_adjacency(g)
    if not is_strongly_connected(adj):
        raise ValueError("period is only defined here for strongly connected graphs")
    n = adj.shape[0]
    level = np.full(n, -1, dtype=np.int64)
    level[0] = 0
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(adj[u]):
            if level[v] < 0:
                level[v] = level[u] + 1
                queue.append(int(v))
    src, dst = np.nonzero(adj)
    d = 0
    for delta in np.unique(np.abs(level[src] + 1 - level[dst])):
        d = gcd(d, int(delta))
    return d


def is_primitive(g) -> bool:
    """True iff some boolean power of ``g`` is entrywise positive.

    A nonnegative matrix is primitive exactly when its graph is strongly
    connected and aperiodic, which is what is tested here; by Wielandt's
    bound the positive power then occurs at ``k <= (n - 1)**2 + 1``.
    """
    adj = as_adjacency(g)
    return is_strongly_connected(adj) and graph_period(adj) == 1
