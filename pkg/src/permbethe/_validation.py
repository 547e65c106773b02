from __future__ import annotations

import numpy as np

from .exceptions import DomainError, SizeLimitError


def as_square_matrix(A, name: str = "A", max_n: int | None = None) -> np.ndarray:
    """Return ``A`` as a C-contiguous complex128 square matrix.

    Raises ``DomainError`` for non-square, empty or non-finite input and
    ``SizeLimitError`` when the dimension exceeds ``max_n``.
    """
    M = np.ascontiguousarray(A, dtype=np.complex128)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DomainError(f"{name} must be a square matrix, got shape {M.shape}")
    n = M.shape[0]
    if n < 1:
        raise DomainError(f"{name} must have dimension at least 1")
    if not np.all(np.isfinite(M)):
        raise DomainError(f"{name} has non-finite entries")
    if max_n is not None and n > max_n:
        raise SizeLimitError(f"{name} has n={n}, limit is {max_n}")
    return M


def check_angle(alpha: float) -> float:
    alpha = float(alpha)
    if not (0.0 <= alpha <= np.pi):
        raise DomainError(f"alpha must lie in [0, pi], got {alpha!r}")
    return alpha


def check_permutation(sigma) -> np.ndarray:
    s = np.asarray(sigma, dtype=np.int64)
    if s.ndim != 1 or not np.array_equal(np.sort(s), np.arange(s.size)):
        raise DomainError(f"not a permutation of range({s.size}): {sigma!r}")
    return s
