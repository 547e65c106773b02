"""Degree-2 covers of the permanent factor graph.

A 2-cover of the complete bipartite graph is fixed by one bit per base edge:
bit 0 keeps the two copies parallel, bit 1 crosses them. Lifted rows and
columns are ordered ``(i, copy)`` so base vertex ``i`` copy ``c`` has index
``2 i + c``. The lifted matrix puts ``theta[i, j]`` at ``(2i + c, 2j + c)`` for
a parallel edge and at ``(2i + c, 2j + 1 - c)`` for a crossed one.

Covers are numbered by the little-endian integer whose bit ``i * n + j`` is the
bit of edge ``(i, j)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator

import numpy as np

from ._validation import as_square_matrix
from .exceptions import DomainError, SizeLimitError
from .permanent import RYSER_MAX_N, perm_ryser_batch

EXACT_MAX_N = 4
CYCLESUM_MAX_N = 6
TRANSFORMED_MAX_N = 5
DOUBLED_DENFG_MAX_N = 2
FACTORED_MAX_N = 5
_FACTORED_BATCH = {1: 1 << 16, 2: 4096, 3: 256, 4: 8, 5: 1}
_CHUNK = 8192


@dataclass(frozen=True)
class CoverAssignment:
    bits: np.ndarray  # (n, n) of 0/1

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 2 or b.shape[0] != b.shape[1] or b.shape[0] == 0:
            raise DomainError(f"cover bits must be a non-empty square array, got shape {b.shape}")
        if not np.all((b == 0) | (b == 1)):
            raise DomainError("cover bits must be 0 or 1")
        b = b.astype(np.int8)
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @property
    def n(self) -> int:
        return self.bits.shape[0]

    @property
    def code(self) -> int:
        flat = self.bits.ravel()
        return int(sum(int(v) << k for k, v in enumerate(flat)))

    @classmethod
    def from_code(cls, n: int, code: int) -> "CoverAssignment":
        if not 0 <= code < 2 ** (n * n):
            raise DomainError(f"cover code {code} out of range for n={n}")
        bits = [(code >> k) & 1 for k in range(n * n)]
        return cls(np.array(bits, dtype=np.int8).reshape(n, n))


def iter_covers(n: int) -> Iterator[CoverAssignment]:
    """All ``2^(n^2)`` covers in code order."""
    for code in range(2 ** (n * n)):
        yield CoverAssignment.from_code(n, code)


def _code_bits(n: int, codes: np.ndarray) -> np.ndarray:
    return ((codes[:, None] >> np.arange(n * n, dtype=np.int64)) & 1).reshape(-1, n, n)


def _lift_stack(th: np.ndarray, bits: np.ndarray) -> np.ndarray:
    K, n = bits.shape[0], th.shape[0]
    L = np.zeros((K, 2 * n, 2 * n), dtype=np.complex128)
    k = np.arange(K)[:, None, None]
    i = np.arange(n)[None, :, None]
    j = np.arange(n)[None, None, :]
    for c in (0, 1):
        L[k, 2 * i + c, 2 * j + (c ^ bits)] = th[None]
    return L


def lift_matrix(theta, cover: CoverAssignment) -> np.ndarray:
    """The ``2n x 2n`` lifted matrix of ``theta`` under ``cover``."""
    th = as_square_matrix(theta, "theta")
    if cover.n != th.shape[0]:
        raise DomainError(f"cover is for n={cover.n}, theta has n={th.shape[0]}")
    return _lift_stack(th, cover.bits[None].astype(np.int64))[0]


def _perm_of_lifts(th: np.ndarray, bits: np.ndarray) -> np.ndarray:
    out = np.empty(bits.shape[0], dtype=np.complex128)
    for s in range(0, bits.shape[0], _CHUNK):
        out[s : s + _CHUNK] = perm_ryser_batch(_lift_stack(th, bits[s : s + _CHUNK]))
    return out


def cover_perm_values(theta) -> np.ndarray:
    """``perm`` of every lifted matrix, indexed by cover code (n <= 4)."""
    th = as_square_matrix(theta, "theta", max_n=EXACT_MAX_N)
    n = th.shape[0]
    codes = np.arange(2 ** (n * n), dtype=np.int64)
    return _perm_of_lifts(th, _code_bits(n, codes))


@lru_cache(maxsize=None)
def _factored_tables(n: int):
    subsets = np.arange(4**n)
    s = ((subsets[:, None] >> np.arange(2 * n)) & 1).reshape(-1, n, 2).astype(np.float64)
    rowbits = (np.arange(2**n)[:, None] >> np.arange(n)) & 1
    # sel[c][S, b, j] = 1 when lifted column (j, c ^ b_j) belongs to S
    sel = [s[:, np.arange(n)[None, :], c ^ rowbits] for c in (0, 1)]
    sign = np.array([-1.0 if bin(k).count("1") & 1 else 1.0 for k in subsets])
    return sel, sign


def zb2_sq_denfg_batch(stack) -> np.ndarray:
    """``Z_B,2(N_DE(theta))^2`` for a stack of matrices, shape ``(T, n, n)``, n <= 5.

    Equal to the mean of ``|perm(lift)|^2`` over all ``2^(n^2)`` covers, but
    computed without enumerating them. In Ryser's expansion of a lifted
    permanent, the two lifted rows of base row ``i`` depend only on row ``i`` of
    the cover, and cover rows are independent. Hence the cover average of
    ``|perm|^2`` is ``sum_{S,S'} g(S) g(S') prod_i M_i(S, S')``, where ``g`` is
    the Ryser sign and ``M_i`` is a Gram matrix over the ``2^n`` choices of
    cover row ``i``. Ryser cancellation is squared here: the relative error is
    about 1e-13 at n = 4 for Gaussian entries.
    """
    st = np.asarray(stack, dtype=np.complex128)
    if st.ndim != 3 or st.shape[1] != st.shape[2] or st.shape[1] == 0:
        raise DomainError(f"expected a (T, n, n) stack, got shape {st.shape}")
    n = st.shape[1]
    if n > FACTORED_MAX_N:
        raise SizeLimitError(f"n={n} exceeds {FACTORED_MAX_N}")
    if not np.all(np.isfinite(st)):
        raise DomainError("stack has non-finite entries")
    sel, sign = _factored_tables(n)
    out = np.empty(st.shape[0])
    step = _FACTORED_BATCH[n]
    for a in range(0, st.shape[0], step):
        th = st[a : a + step]
        acc = None
        for i in range(n):
            f = np.einsum("sbj,tj->tsb", sel[0], th[:, i, :]) * np.einsum("sbj,tj->tsb", sel[1], th[:, i, :])
            gram = f @ np.conj(f).transpose(0, 2, 1)
            acc = gram if acc is None else acc * gram
        out[a : a + step] = np.einsum("s,tsr,r->t", sign, acc, sign).real / 2.0 ** (n * n)
    return out


def zb2_denfg_exact(theta) -> float:
    """``Z_B,2(N_DE(theta))``: the root mean of ``|perm(lift)|^2`` over all covers."""
    th = as_square_matrix(theta, "theta", max_n=EXACT_MAX_N)
    return math.sqrt(max(float(zb2_sq_denfg_batch(th[None])[0]), 0.0))


def zb2_denfg_sampled(theta, samples: int, rng: np.random.Generator, exhaustive: bool = False) -> tuple[float, float]:
    """Monte Carlo estimate of ``Z_B,2`` from uniformly drawn covers.

    Returns ``(estimate, standard_error)``; the error is the delta-method SE of
    the square root of the sample mean. With ``exhaustive=True`` every cover is
    enumerated instead and the error is 0.
    """
    th = as_square_matrix(theta, "theta")
    n = th.shape[0]
    if exhaustive:
        return zb2_denfg_exact(th), 0.0
    if samples < 2:
        raise DomainError("need at least 2 samples for a standard error")
    if 2 * n > RYSER_MAX_N:
        raise SizeLimitError(f"lifted size {2 * n} exceeds {RYSER_MAX_N}")
    bits = rng.integers(0, 2, size=(samples, n, n), dtype=np.int64)
    v = np.abs(_perm_of_lifts(th, bits)) ** 2
    mean = math.fsum(v) / samples
    est = math.sqrt(mean)
    sd = float(np.std(v, ddof=1))
    se = 0.0 if mean == 0 or sd == 0 else sd / math.sqrt(samples) / (2.0 * est)
    return est, se


def _cycle_count_table(perms: np.ndarray) -> np.ndarray:
    # number of non-trivial cycles of perms[a] o perms[b]^{-1}, for all a, b
    N, n = perms.shape
    inv = np.argsort(perms, axis=1)
    comp = np.take_along_axis(
        np.broadcast_to(perms[:, None, :], (N, N, n)),
        np.broadcast_to(inv[None, :, :], (N, N, n)),
        axis=2,
    )
    start = np.broadcast_to(np.arange(n), (N, N, n))
    cur = comp.copy()
    length = np.zeros((N, N, n), dtype=np.int64)
    for t in range(1, n + 1):
        hit = (cur == start) & (length == 0)
        length[hit] = t
        cur = np.take_along_axis(comp, cur, axis=2)
    cycles = (1.0 / length).sum(axis=2)
    fixed = (length == 1).sum(axis=2)
    return np.rint(cycles).astype(np.int64) - fixed


def permB2_nfg_cyclesum(theta) -> complex:
    """``perm_B,2(theta)`` as ``sum P(s1) P(s2) 2^{-c(s1 s2^-1)}`` over ``S_n^2``.

    ``c`` counts cycles of length at least 2 and ``P(s) = prod_i theta[i, s(i)]``.
    """
    th = as_square_matrix(theta, "theta", max_n=CYCLESUM_MAX_N)
    n = th.shape[0]
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    P = np.prod(th[np.arange(n)[None, :], perms], axis=1)
    K = np.exp2(-_cycle_count_table(perms).astype(np.float64))
    return complex(P @ K @ P)


# transformed (X^2-valued) normal factor graph of a 2-cover

@lru_cache(maxsize=None)
def _transformed_tables(n: int) -> tuple[np.ndarray, np.ndarray]:
    seen: dict[bytes, np.ndarray] = {}
    rows = np.arange(n)
    for s1 in itertools.permutations(range(n)):
        s1 = np.array(s1)
        for s2 in itertools.permutations(range(n)):
            s2 = np.array(s2)
            inv2 = np.argsort(s2)
            rho = inv2[s1]
            base = np.zeros((n, n), dtype=np.int8)
            fixed = s1 == s2
            base[rows[fixed], s1[fixed]] = 3
            cycles = []
            done = fixed.copy()
            for i in range(n):
                if done[i]:
                    continue
                cyc = []
                k = i
                while not done[k]:
                    done[k] = True
                    cyc.append(k)
                    k = rho[k]
                cycles.append(np.array(cyc))
            for labels in itertools.product((1, 2), repeat=len(cycles)):
                x = base.copy()
                for cyc, lab in zip(cycles, labels):
                    x[cyc, s1[cyc]] = lab
                    x[cyc, s2[cyc]] = lab
                key = x.tobytes()
                if key not in seen:
                    seen[key] = x
    configs = np.array(list(seen.values()), dtype=np.int8).reshape(-1, n, n)
    configs.setflags(write=False)
    # check-node sign: -1 per left or right check carrying two (1,0) symbols
    minus = ((configs == 2).sum(axis=2) == 2).sum(axis=1) + ((configs == 2).sum(axis=1) == 2).sum(axis=1)
    signs = np.where(minus % 2 == 0, 1.0, -1.0)
    signs.setflags(write=False)
    return configs, signs


def transformed_configurations(n: int) -> np.ndarray:
    """Valid configurations of the transformed cover graph, shape ``(K, n, n)``.

    Symbols are coded ``2 x + x'`` for the pair ``(x, x')``. They are generated
    from pairs of permutations: a common edge gets ``(1, 1)``, and each
    alternating cycle of the two matchings is labelled with ``(0, 1)`` or ``(1, 0)``
    throughout.
    """
    if n < 1:
        raise DomainError("n must be positive")
    if n > TRANSFORMED_MAX_N:
        raise SizeLimitError(f"n={n} exceeds {TRANSFORMED_MAX_N}")
    return _transformed_tables(n)[0]


def _edge_tables(th: np.ndarray, bits: np.ndarray) -> np.ndarray:
    n = th.shape[0]
    E = np.empty((n, n, 4), dtype=np.complex128)
    E[..., 0] = 1.0
    E[..., 1] = th
    E[..., 2] = np.where(bits == 1, -th, th)
    E[..., 3] = th * th
    return E


def z_cover_transformed(theta, cover: CoverAssignment) -> complex:
    """``Z`` of the transformed cover graph, which equals ``perm(lift_matrix)``."""
    th = as_square_matrix(theta, "theta", max_n=TRANSFORMED_MAX_N)
    n = th.shape[0]
    if cover.n != n:
        raise DomainError(f"cover is for n={n} mismatch")
    configs, signs = _transformed_tables(n)
    E = _edge_tables(th, cover.bits)
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    vals = E[ii[None], jj[None], configs].reshape(len(configs), -1)
    return complex(np.sum(signs * np.prod(vals, axis=1)))


def _walk_cycle(x: np.ndarray, start: int, lab: int, reverse: bool) -> list[tuple[str, int, int]]:
    # node sequence of one labelled cycle: ("L", i), edge (i, j), ("R", j), edge ...
    cols = [int(c) for c in np.flatnonzero(x[start] == lab)]
    i, j = start, cols[1] if reverse else cols[0]
    walk = []
    while True:
        walk += [("L", i, -1), ("E", i, j), ("R", j, -1)]
        i = next(int(r) for r in np.flatnonzero(x[:, j] == lab) if r != i)
        walk.append(("E", i, j))
        j = next(int(c) for c in np.flatnonzero(x[i] == lab) if c != j)
        if i == start:
            return walk


def transformed_value_by_cycles(theta, cover: CoverAssignment, reverse: bool = False) -> complex:
    """Same sum as :func:`z_cover_transformed`, but each labelled cycle is
    walked node by node in the chosen direction, multiplying edge weights and
    check-node signs as they are met."""
    th = as_square_matrix(theta, "theta", max_n=TRANSFORMED_MAX_N)
    n = th.shape[0]
    configs, _ = _transformed_tables(n)
    E = _edge_tables(th, cover.bits)
    total = 0j
    for x in configs:
        val = 1 + 0j
        for i, j in zip(*np.nonzero(x == 3)):
            val *= E[i, j, 3]
        seen = np.zeros(n, dtype=bool)
        for i in range(n):
            labelled = x[i][(x[i] == 1) | (x[i] == 2)]
            if seen[i] or labelled.size == 0:
                continue
            lab = int(labelled[0])
            for kind, a, b in _walk_cycle(x, i, lab, reverse):
                if kind == "E":
                    val *= E[a, b, lab]
                else:
                    if kind == "L":
                        seen[a] = True
                    if lab == 2:
                        val = -val
        total += val
    return total


def _doubled_edges(n: int, bits: np.ndarray) -> list[tuple[int, int, int, int]]:
    edges = []
    for i in range(n):
        for j in range(n):
            for c in (0, 1):
                edges.append((2 * i + c, 2 * j + (c ^ int(bits[i, j])), i, j))
    return edges


def cover_denfg_partition_sum(theta, cover: CoverAssignment) -> float:
    """``Z`` of the double-edge graph built on the 2-cover, by enumeration.

    Every lifted edge carries a pair ``(x, x')`` with weight
    ``[[1, conj(t)], [t, |t|^2]][x, x']``; the result equals
    ``|perm(lift_matrix(theta, cover))|^2``. Enumerates ``4^(2 n^2)`` states.
    """
    th = as_square_matrix(theta, "theta", max_n=DOUBLED_DENFG_MAX_N)
    n = th.shape[0]
    edges = _doubled_edges(n, cover.bits)
    m = len(edges)
    codes = np.arange(4**m, dtype=np.int64)
    sym = (codes[:, None] >> (2 * np.arange(m))) & 3
    x, xp = sym >> 1, sym & 1
    r = np.array([e[0] for e in edges])
    c = np.array([e[1] for e in edges])
    valid = np.ones(len(codes), dtype=bool)
    for v in range(2 * n):
        for comp in (x, xp):
            valid &= comp[:, r == v].sum(axis=1) == 1
            valid &= comp[:, c == v].sum(axis=1) == 1
    t = np.array([th[e[2], e[3]] for e in edges])
    W = np.empty((m, 2, 2), dtype=np.complex128)
    W[:, 0, 0] = 1.0
    W[:, 0, 1] = t.conj()
    W[:, 1, 0] = t
    W[:, 1, 1] = np.abs(t) ** 2
    s = sym[valid]
    vals = W[np.arange(m)[None, :], s >> 1, s & 1]
    Z = complex(np.prod(vals, axis=1).sum())
    if abs(Z.imag) > 1e-9 * (1 + abs(Z)):
        raise ArithmeticError(f"partition sum has imaginary part {Z.imag!r}")
    return Z.real
