"""Cycle-index combinatorics behind the double-cover closed forms.

The cycle index of the symmetric group,
``Z_n = (1/n!) * sum_sigma prod_k z_k^{c_k(sigma)}``, is evaluated with the
recurrence ``n Z_n = sum_{k=1}^n z_k Z_{n-k}`` (from the exponential
generating function ``exp(sum_k z_k x^k / k)``). On top of it sit

* ``psi_n(a, b, m, c) = (n!)^2 Z_n`` with ``z_1 = a`` and
  ``z_k = m b^k + c^k`` for ``k >= 2``, and ``Psi_n(a, b, m) = psi_n(a, b, m, 0)``;
* the all-ones degree-2 Bethe value ``Z_{B,2}^2`` and the expectations of
  ``Z^2`` and ``Z_{B,2}^2`` for zero-mean i.i.d. entries;
* brute-force moment expansions valid for any mean, used as oracles;
* the large-``n`` expansions of these sequences.
"""

from __future__ import annotations

import enum
import functools
import itertools
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ._validation import check_permutation
from .ensembles import MomentTable
from .exceptions import DomainError, PreconditionError, SizeLimitError


@dataclass(frozen=True)
class CycleType:
    """``counts[k - 1]`` is the number of cycles of length ``k``."""

    counts: tuple[int, ...]

    @property
    def n(self) -> int:
        return sum((k + 1) * c for k, c in enumerate(self.counts))

    @property
    def nontrivial(self) -> int:
        """Number of cycles of length at least two."""
        return sum(self.counts[1:])

    def class_size(self) -> int:
        """Number of permutations with this cycle type, ``n! / prod k^c_k c_k!``."""
        denom = 1
        for k, c in enumerate(self.counts, start=1):
            denom *= k**c * math.factorial(c)
        return math.factorial(self.n) // denom


def cycle_counts(sigma) -> CycleType:
    """Cycle type of a permutation given as the image list ``sigma[i]``."""
    s = check_permutation(sigma)
    n = s.size
    counts = [0] * n
    seen = np.zeros(n, dtype=bool)
    for start in range(n):
        if seen[start]:
            continue
        length, k = 0, start
        while not seen[k]:
            seen[k] = True
            k = s[k]
            length += 1
        counts[length - 1] += 1
    return CycleType(tuple(counts))


def cycle_types(n: int):
    """All cycle types of S_n (integer partitions of ``n``)."""

    def parts(remaining, largest):
        if remaining == 0:
            yield []
            return
        for k in range(min(remaining, largest), 0, -1):
            for rest in parts(remaining - k, k):
                yield [k] + rest

    for p in parts(n, n):
        counts = [0] * n
        for k in p:
            counts[k - 1] += 1
        yield CycleType(tuple(counts))


@dataclass(frozen=True)
class CycleIndexSpec:
    """Indeterminates ``z_1, ..., z_n`` as a sequence or a rule ``k -> z_k``."""

    n: int
    z: Sequence | Callable[[int], float]

    def __post_init__(self):
        if self.n < 0:
            raise DomainError("n must be non-negative")

    def values(self) -> list:
        if callable(self.z):
            return [self.z(k) for k in range(1, self.n + 1)]
        vals = list(self.z)
        if len(vals) < self.n:
            raise DomainError(f"need {self.n} indeterminates, got {len(vals)}")
        return vals[: self.n]


def _recurrence(z: Sequence) -> list:
    # Z_0 = 1, k Z_k = sum_{j=1}^{k} z_j Z_{k-j}; works for floats and Fractions
    Z = [z[0] * 0 + 1] if z else [1]
    for k in range(1, len(z) + 1):
        acc = z[0] * 0
        for j in range(1, k + 1):
            acc += z[j - 1] * Z[k - j]
        Z.append(acc / k)
    return Z


def _scale_for(z: Sequence[float]) -> float:
    s = 0.0
    for k, v in enumerate(z, start=1):
        if v != 0:
            s = max(s, math.exp(math.log(abs(v)) / k))
    return s if s > 0 else 1.0


def _log_sign(y: float, log_scale: float) -> tuple[float, int]:
    if y == 0:
        return -math.inf, 0
    return log_scale + math.log(abs(y)), 1 if y > 0 else -1


def cycle_index_log(spec: CycleIndexSpec) -> tuple[float, int]:
    """``(log|Z_n|, sign(Z_n))`` by the scaled recurrence.

    Each ``z_k`` is divided by ``s^k`` with ``s = max_k |z_k|^{1/k}``, so every
    scaled ``Z_k`` lies in ``[-1, 1]`` and nothing can overflow.
    """
    z = [float(v) for v in spec.values()]
    ls = math.log(_scale_for(z))
    scaled = [math.copysign(math.exp(math.log(abs(v)) - k * ls), v) if v else 0.0 for k, v in enumerate(z, start=1)]
    y = _recurrence(scaled)[-1]
    return _log_sign(y, spec.n * ls)


def cycle_index_eval(spec: CycleIndexSpec, mode: str = "scaled"):
    """Evaluate ``Z_n``.

    ``mode`` is ``"scaled"`` (overflow-free recurrence, result returned as a
    float), ``"float"`` (plain recurrence) or ``"exact"`` (``Fraction``
    arithmetic; pass ``Fraction`` or integer indeterminates).
    """
    if mode == "exact":
        z = [Fraction(v) for v in spec.values()]
        return _recurrence(z)[-1] if spec.n else Fraction(1)
    if mode == "float":
        z = [float(v) for v in spec.values()]
        Z = _recurrence(z)
        if not all(math.isfinite(v) for v in Z):
            raise OverflowError("cycle index overflowed in float mode; use the scaled mode or cycle_index_log")
        return float(Z[-1])
    if mode != "scaled":
        raise DomainError(f"unknown mode {mode!r}")
    log_value, sign = cycle_index_log(spec)
    if sign == 0:
        return 0.0
    if log_value > 709.78:
        raise OverflowError("Z_n exceeds double range; use cycle_index_log")
    return sign * math.exp(log_value)


def _psi_scaled_z(n: int, a: float, b: float, m: float, c: float) -> tuple[float, list[float]]:
    a, b, m, c = float(a), float(b), float(m), float(c)
    big = max(abs(b), abs(c)) * math.sqrt(abs(m) + 1.0)
    s = max(abs(a), big)
    if s == 0:
        s = 1.0
    z = [a / s] + [m * (b / s) ** k + (c / s) ** k for k in range(2, n + 1)]
    return s, z[:n]


def _psi_log_sequence(n: int, a, b, m, c) -> list[tuple[float, int]]:
    """``[(log|psi_k|, sign)]`` for ``k = 0..n``."""
    s, z = _psi_scaled_z(n, a, b, m, c)
    y = _recurrence(z) if n else [1.0]
    ls = math.log(s)
    out = []
    for k, yk in enumerate(y):
        lv, sg = _log_sign(yk, k * ls)
        out.append((lv + 2 * math.lgamma(k + 1), sg))
    return out


def psi_log(n: int, a, b, m, c) -> tuple[float, int]:
    """``(log|psi_n(a, b, m, c)|, sign)``; usable to ``n`` of several hundred."""
    if n < 0:
        raise DomainError("n must be non-negative")
    return _psi_log_sequence(n, a, b, m, c)[-1]


def psi_log_sequence(n_max: int, a, b, m, c) -> list[tuple[float, int]]:
    """``[psi_log(k, a, b, m, c) for k = 0..n_max]`` from a single recurrence pass."""
    if n_max < 0:
        raise DomainError("n must be non-negative")
    return _psi_log_sequence(n_max, a, b, m, c)


def Psi_log(n: int, a, b, m) -> tuple[float, int]:
    return psi_log(n, a, b, m, 0.0)


def _exp_signed(log_value: float, sign: int, hint: str) -> float:
    if sign == 0:
        return 0.0
    if log_value > 709.78:
        raise OverflowError(f"value exceeds double range; use {hint}")
    return sign * math.exp(log_value)


def psi(n: int, a, b, m, c) -> float:
    """``psi_n(a, b, m, c) = (n!)^2 Z_n`` with ``z_1 = a``, ``z_k = m b^k + c^k``."""
    return _exp_signed(*psi_log(n, a, b, m, c), "psi_log")


def Psi(n: int, a, b, m) -> float:
    """``Psi_n(a, b, m) = psi_n(a, b, m, 0)``."""
    return psi(n, a, b, m, 0.0)


def psi_exact(n: int, a, b, m, c) -> Fraction:
    """``psi_n`` in rational arithmetic (arguments converted with ``Fraction``)."""
    a, b, m, c = (Fraction(v) for v in (a, b, m, c))
    z = [a] + [m * b**k + c**k for k in range(2, n + 1)]
    Z = _recurrence(z[:n])[-1] if n else Fraction(1)
    return math.factorial(n) ** 2 * Z


# ---------------------------------------------------------------------------
# all-ones matrix


def theorem1_zb2_sq(n: int, exact: bool = False):
    """``Z_{B,2}^2`` of the double-edge graph of the all-ones ``n x n`` matrix.

    ``sum_k C(n,k)^2 Psi_k(0,1,1/2) Psi_{n-k}(1,1,1/2)^2``; the partition sum
    itself is ``Z^2 = (n!)^4``.
    """
    if n < 1:
        raise DomainError("n must be at least 1")
    if exact:
        half = Fraction(1, 2)
        d = [psi_exact(k, 0, 1, half, 0) for k in range(n + 1)]
        f = [psi_exact(k, 1, 1, half, 0) for k in range(n + 1)]
        return sum(math.comb(n, k) ** 2 * d[k] * f[n - k] ** 2 for k in range(n + 1))
    return _exp_signed(theorem1_zb2_sq_log(n), 1, "theorem1_zb2_sq_log")


def _theorem1_log_terms(n: int, d, f) -> float:
    terms = []
    for k in range(n + 1):
        if d[k][1] == 0:
            continue
        log_binom = math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
        terms.append(2 * log_binom + d[k][0] + 2 * f[n - k][0])
    top = max(terms)
    return top + math.log(math.fsum(math.exp(t - top) for t in terms))


def theorem1_zb2_sq_log(n: int) -> float:
    """Natural log of :func:`theorem1_zb2_sq`, by log-sum-exp over the terms."""
    if n < 1:
        raise DomainError("n must be at least 1")
    d = _psi_log_sequence(n, 0.0, 1.0, 0.5, 0.0)
    f = _psi_log_sequence(n, 1.0, 1.0, 0.5, 0.0)
    return _theorem1_log_terms(n, d, f)


def theorem1_zb2_sq_log_sequence(n_max: int) -> list[float]:
    """``[theorem1_zb2_sq_log(n) for n = 1..n_max]`` sharing one pass of the recurrences."""
    if n_max < 1:
        raise DomainError("n_max must be at least 1")
    d = _psi_log_sequence(n_max, 0.0, 1.0, 0.5, 0.0)
    f = _psi_log_sequence(n_max, 1.0, 1.0, 0.5, 0.0)
    return [_theorem1_log_terms(n, d, f) for n in range(1, n_max + 1)]


# ---------------------------------------------------------------------------
# random matrices with i.i.d. entries

_TOL = 1e-12


def _check_zero_mean(moments: MomentTable):
    if abs(moments[1, 0]) > _TOL:
        raise PreconditionError(f"mu10 must vanish, got {moments[1, 0]!r}")
    if not math.isfinite(abs(moments[2, 2])):
        raise PreconditionError("mu22 must be finite")


def _theorem2_args(moments: MomentTable) -> tuple[float, float, float]:
    _check_zero_mean(moments)
    mu11 = moments[1, 1].real
    mu20 = abs(moments[2, 0])
    if not mu20 < mu11:
        raise PreconditionError(f"need |mu20| < mu11, got |mu20| = {mu20!r}, mu11 = {mu11!r}")
    return moments[2, 2].real, mu11**2, mu20**2


def theorem2_expectations(n: int, moments: MomentTable) -> tuple[float, float]:
    """``(E[Z^2], E[Z_{B,2}^2])`` for zero-mean i.i.d. entries.

    ``E[Z^2] = psi_n(mu22, mu11^2, 2, |mu20|^2)`` and
    ``E[Z_{B,2}^2] = psi_n(mu22, mu11^2, 1, |mu20|^2)``.
    """
    a, b, c = _theorem2_args(moments)
    return psi(n, a, b, 2, c), psi(n, a, b, 1, c)


def theorem2_expectations_log(n: int, moments: MomentTable) -> tuple[float, float]:
    a, b, c = _theorem2_args(moments)
    return psi_log(n, a, b, 2, c)[0], psi_log(n, a, b, 1, c)[0]


def _appendix_h_args(moments: MomentTable) -> tuple[float, float]:
    _check_zero_mean(moments)
    mu11 = moments[1, 1].real
    if not (mu11 > 0 and abs(mu11 - abs(moments[2, 0])) < _TOL):
        raise PreconditionError(
            "equal-modulus case needs mu11 = |mu20| > 0; for |mu20| < mu11 use theorem2_expectations"
        )
    return moments[2, 2].real, mu11**2


def appendixH_expectations(n: int, moments: MomentTable) -> tuple[float, float]:
    """Expectations when the entries live on a line through the origin.

    With ``mu11 = |mu20| > 0``: ``E[Z^2] = Psi_n(mu22, mu11^2, 3)`` and
    ``E[Z_{B,2}^2] = Psi_n(mu22, mu11^2, 2)``.
    """
    a, b = _appendix_h_args(moments)
    return Psi(n, a, b, 3), Psi(n, a, b, 2)


def _row_moment_tensor(n: int, moments: MomentTable) -> np.ndarray:
    """``T[s1, s2, t1, t2] = E[th_{s1} th_{s2} conj(th_{t1} th_{t2})]`` within one row."""
    T = np.empty((n,) * 4, dtype=np.complex128)
    for cols in itertools.product(range(n), repeat=4):
        s1, s2, t1, t2 = cols
        value = 1 + 0j
        for col in set(cols):
            p = (s1 == col) + (s2 == col)
            q = (t1 == col) + (t2 == col)
            if p > 2 or q > 2:
                raise KeyError(f"moment pattern ({p}, {q}) outside the table")
            value *= moments[p, q]
        T[cols] = value
    return T


def expected_z2_bruteforce(n: int, moments: MomentTable) -> float:
    """``E[|perm(theta)|^4]`` by expanding over ``(sigma1, sigma2, tau1, tau2)``.

    Rows are independent, so each quadruple contributes the product over rows
    of the single-row moment read off the column pattern. Any mean is allowed.
    """
    if n > 4:
        raise SizeLimitError(f"n={n} exceeds 4")
    if n < 1:
        raise DomainError("n must be at least 1")
    T = _row_moment_tensor(n, moments)
    P = np.array(list(itertools.permutations(range(n))))
    total = np.ones((len(P),) * 4, dtype=np.complex128)
    for i in range(n):
        col = P[:, i]
        total *= T[np.ix_(col, col, col, col)]
    return float(total.sum().real)


@functools.lru_cache(maxsize=None)
def _all_cover_matchings(n: int) -> tuple[np.ndarray, ...]:
    out = []
    for code in range(2 ** (n * n)):
        bits = np.array([(code >> k) & 1 for k in range(n * n)]).reshape(n, n)
        out.append(_lift_matchings(n, bits))
    return tuple(out)


def _lift_matchings(n: int, bits: np.ndarray) -> np.ndarray:
    """Perfect matchings of a double cover as base-column choices.

    Returns an array of shape ``(K, n, 2)``: entry ``[k, i, c]`` is the base
    column used by lifted row ``(i, c)`` in matching ``k``.
    """
    found = []
    for choice in itertools.product(range(n), repeat=2 * n):
        used = set()
        ok = True
        for r, j in enumerate(choice):
            i, c = divmod(r, 2)
            target = (j, c ^ int(bits[i, j]))
            if target in used:
                ok = False
                break
            used.add(target)
        if ok:
            found.append(np.array(choice).reshape(n, 2))
    return np.array(found)


def expected_zb2_sq_bruteforce(n: int, moments: MomentTable) -> float:
    """``E[Z_{B,2}^2]`` as the cover average of ``E|perm(lift)|^2``.

    Each ``|perm(lift)|^2`` is expanded over ordered pairs of perfect matchings
    of the cover graph and the expectation factorizes over base rows.
    """
    if n > 3:
        raise SizeLimitError(f"n={n} exceeds 3")
    if n < 1:
        raise DomainError("n must be at least 1")
    T = _row_moment_tensor(n, moments)
    per_cover = []
    for M in _all_cover_matchings(n):
        acc = np.ones((len(M), len(M)), dtype=np.complex128)
        for i in range(n):
            s1, s2 = M[:, i, 0], M[:, i, 1]
            acc *= T[s1[:, None], s2[:, None], s1[None, :], s2[None, :]]
        per_cover.append(acc.sum().real)
    return math.fsum(per_cover) / 2 ** (n * n)


# ---------------------------------------------------------------------------
# asymptotics


class AsymptoticKind(enum.Enum):
    PSI_LEADING = "psi_leading"
    PSI_M1 = "psi_m1"
    PSI_M2 = "psi_m2"
    PSI_RATIO_COR1 = "ratio_all_ones"
    PSI_RATIO_COR2 = "ratio_zero_mean"
    RATIO_APPENDIX_H = "ratio_equal_modulus"


def zero_mean_ratio_constant(moments: MomentTable) -> float:
    """Offset ``C`` in ``E[Z^2]/E[Z_{B,2}^2] ~ (n + 1 + C)/e``."""
    a, b, c = _theorem2_args(moments)
    return -(a - 2 * b - c) / b - c / (b - c)


def asymptotics(kind: AsymptoticKind, n: int, *, a=None, b=None, m=None, c=None, moments=None, log=False):
    """Large-``n`` approximations; these are limits, not exact values.

    ``PSI_LEADING``
        ``Psi_n(a,b,m) ~ (n!)^2 b^n e^{a/b - m} n^{m-1} / Gamma(m)``.
    ``PSI_M1``, ``PSI_M2``
        ``psi_n(a,b,m,c)`` for ``m = 1, 2`` including the ``O(1)`` correction;
        require ``b > c``.
    ``PSI_RATIO_COR1``
        ``Z / Z_{B,2} ~ sqrt(pi n / e)`` for the all-ones matrix.
    ``PSI_RATIO_COR2``
        ``sqrt(E[Z^2] / E[Z_{B,2}^2]) ~ sqrt((n + 1 + C) / e)`` from ``moments``.
    ``RATIO_APPENDIX_H``
        The same ratio in the equal-modulus case ``mu11 = |mu20|``.

    With ``log=True`` the natural log is returned, which is what large ``n``
    needs for the ``psi`` kinds.
    """
    kind = AsymptoticKind(kind)
    if n < 1:
        raise DomainError("n must be at least 1")
    lf = 2 * math.lgamma(n + 1)
    if kind is AsymptoticKind.PSI_LEADING:
        a, b, m = float(a), float(b), float(m)
        if b <= 0 or m <= 0:
            raise DomainError("PSI_LEADING needs b > 0 and m > 0")
        out = lf + n * math.log(b) + a / b - m + (m - 1) * math.log(n) - math.lgamma(m)
    elif kind in (AsymptoticKind.PSI_M1, AsymptoticKind.PSI_M2):
        a, b, c = float(a), float(b), float(c)
        if not b > c:
            raise DomainError("the psi expansion requires b > c")
        if c < 0:
            raise DomainError("c must be non-negative")
        base = lf + n * math.log(b) - math.log1p(-c / b)
        if kind is AsymptoticKind.PSI_M1:
            out = base + (a - b - c) / b
        else:
            bracket = (n + 1) - (a - 2 * b - c) / b - c / (b - c)
            if bracket <= 0:
                raise DomainError("n too small for the psi expansion bracket to be positive")
            out = base + (a - 2 * b - c) / b + math.log(bracket)
    elif kind is AsymptoticKind.PSI_RATIO_COR1:
        out = 0.5 * math.log(math.pi * n / math.e)
    elif kind is AsymptoticKind.PSI_RATIO_COR2:
        if moments is None:
            raise DomainError("PSI_RATIO_COR2 needs moments")
        a2, b2, c2 = _theorem2_args(moments)
        if not b2 > c2:
            raise DomainError("the psi expansion requires b > c")
        out = 0.5 * (math.log(n + 1 + zero_mean_ratio_constant(moments)) - 1)
    else:
        if moments is None:
            raise DomainError("RATIO_APPENDIX_H needs moments")
        a2, b2 = _appendix_h_args(moments)
        d = (a2 - 3 * b2) / b2
        num = (n + 2) * (n + 1) / 2 - d * (n + 1) + d * d / 2
        den = (n + 1) - (a2 - 2 * b2) / b2
        out = 0.5 * (math.log(num / den) - 1)
    if log:
        return out
    return _exp_signed(out, 1, "log=True")
