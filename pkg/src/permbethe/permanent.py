"""Exact permanents of complex square matrices.

Two evaluators are provided: a direct sum over permutations, kept as the
reference for small ``n``, and Ryser's inclusion-exclusion formula walked in
Gray-code order so that each subset differs from its predecessor by a single
column. The Ryser kernels are compiled with numba.
"""

from __future__ import annotations

import itertools

import numba
import numpy as np

from ._validation import as_square_matrix
from .exceptions import DomainError, SizeLimitError

NAIVE_MAX_N = 10
RYSER_MAX_N = 30


def perm_naive(A) -> complex:
    """Permanent by explicit enumeration of all ``n!`` permutations.

    Permutations are visited in lexicographic order and each term is built
    left to right, so the floating-point result is reproducible bit for bit.
    """
    M = as_square_matrix(A, max_n=NAIVE_MAX_N)
    n = M.shape[0]
    rows = [M[i].tolist() for i in range(n)]
    total = 0j
    for sigma in itertools.permutations(range(n)):
        term = 1 + 0j
        for i, j in enumerate(sigma):
            term *= rows[i][j]
        total += term
    return total


@numba.njit(cache=True, nogil=True)
def _ryser_kernel(M):
    n = M.shape[0]
    rowsum = np.zeros(n, dtype=np.complex128)
    in_set = np.zeros(n, dtype=np.bool_)
    total = 0j
    size = 0
    for k in range(1, 1 << n):
        # the bit that flips between Gray codes k-1 and k is the lowest set bit of k
        j = 0
        kk = k
        while (kk & 1) == 0:
            kk >>= 1
            j += 1
        if in_set[j]:
            in_set[j] = False
            size -= 1
            for i in range(n):
                rowsum[i] -= M[i, j]
        else:
            in_set[j] = True
            size += 1
            for i in range(n):
                rowsum[i] += M[i, j]
        prod = 1 + 0j
        for i in range(n):
            prod *= rowsum[i]
        if size & 1:
            total -= prod
        else:
            total += prod
    if n & 1:
        return -total
    return total


@numba.njit(cache=True, nogil=True)
def _ryser_batch_kernel(stack, out):
    for b in range(stack.shape[0]):
        out[b] = _ryser_kernel(stack[b])


def perm_ryser(A) -> complex:
    """Permanent via Ryser's formula, O(2^n * n) operations.

    ``perm(A) = (-1)^n * sum_S (-1)^|S| prod_i sum_{j in S} A[i, j]``
    with the subsets ``S`` traversed in binary-reflected Gray-code order.
    Double precision is adequate up to about ``n = 20`` for entries of
    modulus around one.
    """
    M = as_square_matrix(A, max_n=RYSER_MAX_N)
    return complex(_ryser_kernel(M))


def perm_ryser_batch(stack) -> np.ndarray:
    """Ryser permanents of a stack of matrices with shape ``(B, n, n)``."""
    S = np.ascontiguousarray(stack, dtype=np.complex128)
    if S.ndim != 3 or S.shape[1] != S.shape[2] or S.shape[1] < 1:
        raise DomainError(f"expected a (B, n, n) stack, got shape {S.shape}")
    if S.shape[1] > RYSER_MAX_N:
        raise SizeLimitError(f"n={S.shape[1]} exceeds the Ryser limit {RYSER_MAX_N}")
    if not np.all(np.isfinite(S)):
        raise DomainError("stack has non-finite entries")
    out = np.empty(S.shape[0], dtype=np.complex128)
    _ryser_batch_kernel(S, out)
    return out


def perm_abs2(A) -> float:
    """Squared modulus ``|perm(A)|**2``."""
    p = perm_ryser(A)
    return p.real * p.real + p.imag * p.imag
