"""The normal factor graph of the permanent and its double-edge version.

In N(theta) every edge ``(i, j)`` of the complete bipartite graph carries a
binary variable ``x[i, j]``; left check ``i`` and right check ``j`` demand
exactly one active edge, and the edge weight is ``theta[i, j]`` when active.
The double-edge graph N_DE(theta, eps) carries a pair ``(x, x')`` per edge,
checks apply to both components, and the edge weight is the 2x2 matrix
``W[i, j] = [[1, conj(theta)], [theta, |theta|^2 + eps]]`` indexed by
``(x, x')``. Its partition sum is ``|perm(theta)|^2`` when ``eps = 0`` and
``perm(eps)`` when ``theta = 0``.

The brute-force sums below collapse the left/right copies of each edge
variable through the equality constraint inside the edge node.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import as_square_matrix
from .exceptions import DomainError, SizeLimitError

NFG_MAX_N = 4
DENFG_MAX_N = 3


@dataclass(frozen=True)
class DenfgModel:
    theta: np.ndarray
    epsilon: np.ndarray
    W: np.ndarray  # shape (n, n, 2, 2)

    @property
    def n(self) -> int:
        return self.theta.shape[0]


def build_denfg(theta, epsilon=None) -> DenfgModel:
    """Assemble N_DE(theta, epsilon); ``epsilon`` defaults to zeros."""
    th = as_square_matrix(theta, "theta")
    n = th.shape[0]
    if epsilon is None:
        eps = np.zeros((n, n))
    else:
        e = np.asarray(epsilon)
        if e.shape != (n, n):
            raise DomainError(f"epsilon has shape {e.shape}, expected {(n, n)}")
        if np.iscomplexobj(e):
            if np.any(e.imag != 0):
                raise DomainError("epsilon entries must be real")
            e = e.real
        eps = np.ascontiguousarray(e, dtype=np.float64)
        if not np.all(np.isfinite(eps)) or np.any(eps < 0):
            raise DomainError("epsilon entries must be finite and non-negative")
    W = np.empty((n, n, 2, 2), dtype=np.complex128)
    W[..., 0, 0] = 1.0
    W[..., 0, 1] = th.conj()
    W[..., 1, 0] = th
    W[..., 1, 1] = np.abs(th) ** 2 + eps
    # PSD check: W00 = 1 > 0 and det = eps >= 0
    det = W[..., 0, 0] * W[..., 1, 1] - W[..., 0, 1] * W[..., 1, 0]
    if np.any(det.real < -1e-12 * (1 + np.abs(W[..., 1, 1]))):
        raise DomainError("edge-weight matrix is not positive semidefinite")
    th.setflags(write=False)
    eps.setflags(write=False)
    W.setflags(write=False)
    return DenfgModel(theta=th, epsilon=eps, W=W)


def _row_col_valid(x: np.ndarray, n: int) -> np.ndarray:
    # x has shape (K, n, n); exactly one 1 per row and per column
    return np.all(x.sum(axis=2) == 1, axis=1) & np.all(x.sum(axis=1) == 1, axis=1)


def _nfg_assignments(n: int) -> np.ndarray:
    codes = np.arange(2 ** (n * n), dtype=np.int64)
    bits = (codes[:, None] >> np.arange(n * n)) & 1
    return bits.reshape(-1, n, n)


def partition_sum_nfg_bruteforce(theta) -> complex:
    """``Z(N(theta))`` by summing the global function over ``{0,1}^{n^2}``."""
    th = as_square_matrix(theta, "theta", max_n=NFG_MAX_N)
    n = th.shape[0]
    x = _nfg_assignments(n)
    valid = _row_col_valid(x, n)
    weights = np.where(x == 1, th[None], 1.0 + 0j)
    g = np.prod(weights.reshape(len(x), -1), axis=1) * valid
    return complex(g.sum())


def nfg_support(theta) -> list[np.ndarray]:
    """Configurations of N(theta) with nonzero global function value."""
    th = as_square_matrix(theta, "theta", max_n=NFG_MAX_N)
    n = th.shape[0]
    x = _nfg_assignments(n)
    weights = np.where(x == 1, th[None], 1.0 + 0j)
    g = np.prod(weights.reshape(len(x), -1), axis=1) * _row_col_valid(x, n)
    return [x[k] for k in np.flatnonzero(g != 0)]


def partition_sum_denfg_bruteforce(model: DenfgModel) -> float:
    """``Z(N_DE(theta, eps))`` by summing over all ``(X^2)^{n^2}`` assignments.

    The result is real for real ``eps``; the imaginary rounding residue is
    checked and dropped.
    """
    n = model.n
    if n > DENFG_MAX_N:
        raise SizeLimitError(f"n={n} exceeds {DENFG_MAX_N}")
    codes = np.arange(4 ** (n * n), dtype=np.int64)
    sym = (codes[:, None] >> (2 * np.arange(n * n))) & 3
    x = (sym >> 1).reshape(-1, n, n)
    xp = (sym & 1).reshape(-1, n, n)
    valid = _row_col_valid(x, n) & _row_col_valid(xp, n)
    flatW = model.W.reshape(n * n, 2, 2)
    edges = np.arange(n * n)
    sym = sym[valid]
    vals = flatW[edges[None, :], sym >> 1, sym & 1]
    Z = complex(np.prod(vals, axis=1).sum())
    if abs(Z.imag) > 1e-9 * (1 + abs(Z)):
        raise ArithmeticError(f"partition sum has imaginary part {Z.imag!r}")
    return Z.real
