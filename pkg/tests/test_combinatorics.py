import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from permbethe.combinatorics import (
    AsymptoticKind,
    CycleIndexSpec,
    Psi,
    Psi_log,
    appendixH_expectations,
    asymptotics,
    cycle_counts,
    cycle_index_eval,
    cycle_index_log,
    cycle_types,
    expected_z2_bruteforce,
    expected_zb2_sq_bruteforce,
    psi,
    psi_log,
    theorem1_zb2_sq,
    theorem1_zb2_sq_log,
    theorem2_expectations,
)
from permbethe.ensembles import MomentTable, sample_entries
from permbethe.exceptions import DomainError, PreconditionError, SizeLimitError


def _cycle_lengths(sigma):
    seen = [False] * len(sigma)
    out = []
    for s in range(len(sigma)):
        if not seen[s]:
            length, k = 0, s
            while not seen[k]:
                seen[k] = True
                k = sigma[k]
                length += 1
            out.append(length)
    return out


def _cycle_index_by_enumeration(n, z):
    total = 0.0
    for sigma in itertools.permutations(range(n)):
        term = 1.0
        for length in _cycle_lengths(sigma):
            term *= z[length - 1]
        total += term
    return total / math.factorial(n)


def _elliptic_gaussian(rho):
    # theta = x + iy, Var x = (1 + rho)/2, Var y = (1 - rho)/2
    vx, vy = (1 + rho) / 2, (1 - rho) / 2
    mu22 = 3 * vx**2 + 3 * vy**2 + 2 * vx * vy
    return MomentTable.from_dict({(1, 1): 1, (2, 0): rho, (2, 2): mu22})


def test_cycle_counts_examples():
    c = cycle_counts([0, 1, 2, 3])
    assert c.counts == (4, 0, 0, 0) and c.nontrivial == 0
    c = cycle_counts([1, 0])
    assert c.counts == (0, 1) and c.nontrivial == 1
    c = cycle_counts([1, 2, 3, 0])
    assert c.counts == (0, 0, 0, 1) and c.nontrivial == 1
    with pytest.raises(DomainError):
        cycle_counts([0, 0, 1])


def test_class_sizes_sum_to_factorial():
    for n in range(0, 13):
        assert sum(t.class_size() for t in cycle_types(n)) == math.factorial(n)


def test_class_sizes_match_enumeration():
    from collections import Counter

    counter = Counter(cycle_counts(s).counts for s in itertools.permutations(range(5)))
    for t in cycle_types(5):
        assert counter[t.counts] == t.class_size()


def test_cycle_index_examples():
    assert cycle_index_eval(CycleIndexSpec(1, [2.5])) == pytest.approx(2.5)
    assert cycle_index_eval(CycleIndexSpec(2, [1, 0.5])) == pytest.approx(0.75)
    assert cycle_index_eval(CycleIndexSpec(4, lambda k: 2.0)) == pytest.approx(5.0)
    assert cycle_index_eval(CycleIndexSpec(0, [])) == 1


@settings(max_examples=40, deadline=None)
@given(
    st.integers(min_value=1, max_value=6),
    st.lists(st.floats(min_value=-3, max_value=3, allow_nan=False), min_size=6, max_size=6),
)
def test_recurrence_matches_enumeration(n, z):
    ref = _cycle_index_by_enumeration(n, z)
    scale = _cycle_index_by_enumeration(n, [abs(v) for v in z])
    for mode in ("scaled", "float"):
        got = cycle_index_eval(CycleIndexSpec(n, z), mode=mode)
        assert abs(got - ref) <= 1e-12 * max(scale, 1e-300)
    exact = cycle_index_eval(CycleIndexSpec(n, [Fraction(v) for v in z]), mode="exact")
    assert abs(float(exact) - ref) <= 1e-12 * max(scale, 1e-300)


def test_unscaled_overflow_directs_to_scaled():
    # Z_2 = (z_1^2 + z_2) / 2 overflows in plain floats
    spec = CycleIndexSpec(2, [1e300, 1.0])
    with pytest.raises(OverflowError, match="scaled"):
        cycle_index_eval(spec, mode="float")
    log_value, sign = cycle_index_log(spec)
    assert sign == 1 and log_value == pytest.approx(600 * math.log(10.0) - math.log(2.0), rel=1e-14)
    # z_k = s^k makes Z_n = s^n exactly
    log_value, _ = cycle_index_log(CycleIndexSpec(400, lambda k: 3.0**k))
    assert log_value == pytest.approx(400 * math.log(3.0), rel=1e-12)


def test_psi_examples():
    for a, b, m in [(0.3, 2.0, 1.0), (5.0, 0.1, 0.5)]:
        assert Psi(1, a, b, m) == pytest.approx(a)
    assert Psi(2, 1, 1, 0.5) == pytest.approx(3)
    assert psi(2, 2, 1, 2, 0) == pytest.approx(12)
    assert psi(4, 2, 1, 2, 0) == pytest.approx(2880)
    assert Psi(0, 1, 1, 1) == 1


def test_psi_matches_c_zero_case():
    for n in range(0, 51):
        assert psi(n, 1.3, 0.7, 2.0, 0.0) == Psi(n, 1.3, 0.7, 2.0)


def test_psi_log_reaches_large_n():
    log_value, sign = psi_log(500, 2, 1, 2, 0)
    assert sign == 1
    # a - 2b = 0 makes Psi_n(2,1,2) = (n!)^2 (n+1) exactly
    assert log_value == pytest.approx(2 * math.lgamma(501) + math.log(501), rel=1e-13)
    assert Psi_log(1, 0, 1, 0.5) == (-math.inf, 0)


def test_theorem1_small_values():
    assert theorem1_zb2_sq(1) == pytest.approx(1)
    assert theorem1_zb2_sq(2) == pytest.approx(10)
    for n in range(1, 13):
        exact = theorem1_zb2_sq(n, exact=True)
        assert float(exact) == pytest.approx(theorem1_zb2_sq(n), rel=1e-12)
        assert theorem1_zb2_sq_log(n) == pytest.approx(math.log(float(exact)), rel=1e-12)


def test_theorem1_is_integer():
    for n in range(1, 13):
        value = theorem1_zb2_sq(n, exact=True)
        assert abs(value - round(value)) < 1e-6


def test_theorem2_examples():
    g = MomentTable.gaussian()
    assert theorem2_expectations(1, g) == pytest.approx((2, 2))
    assert theorem2_expectations(2, g) == pytest.approx((12, 10))
    assert theorem2_expectations(4, g)[0] == pytest.approx(2880)


def test_theorem2_preconditions():
    with pytest.raises(PreconditionError, match="mu10"):
        theorem2_expectations(2, MomentTable.for_alpha(0.0))
    with pytest.raises(PreconditionError, match="mu20"):
        theorem2_expectations(2, MomentTable.real_gaussian())


def test_equal_modulus_examples():
    r = MomentTable.real_gaussian()
    assert appendixH_expectations(1, r)[0] == pytest.approx(3)
    assert appendixH_expectations(2, r)[0] == pytest.approx(24)
    with pytest.raises(PreconditionError, match="theorem2"):
        appendixH_expectations(2, MomentTable.gaussian())


def test_bruteforce_small_cases():
    g = MomentTable.gaussian()
    assert expected_z2_bruteforce(1, g) == pytest.approx(2)
    assert expected_z2_bruteforce(2, g) == pytest.approx(12)
    assert expected_zb2_sq_bruteforce(1, g) == pytest.approx(2)
    assert expected_zb2_sq_bruteforce(2, g) == pytest.approx(10)
    ones = MomentTable.all_ones()
    assert expected_zb2_sq_bruteforce(2, ones) == pytest.approx(10)
    assert expected_z2_bruteforce(3, ones) == pytest.approx(6**4)
    with pytest.raises(SizeLimitError):
        expected_z2_bruteforce(5, g)
    with pytest.raises(SizeLimitError):
        expected_zb2_sq_bruteforce(4, g)


def test_bruteforce_real_gaussian_direct():
    # E (ad + bc)^4 for i.i.d. N(0,1): 9 + 6 + 9
    assert expected_z2_bruteforce(2, MomentTable.real_gaussian()) == pytest.approx(24)


@pytest.mark.parametrize("moments", [MomentTable.gaussian(), _elliptic_gaussian(0.5), _elliptic_gaussian(-0.3)])
def test_theorem_chain_zero_mean(moments):
    for n in range(1, 5):
        ez2, ezb2 = theorem2_expectations(n, moments)
        assert expected_z2_bruteforce(n, moments) == pytest.approx(ez2, rel=1e-10)
        if n <= 3:
            assert expected_zb2_sq_bruteforce(n, moments) == pytest.approx(ezb2, rel=1e-10)


def test_equal_modulus_against_bruteforce():
    r = MomentTable.real_gaussian()
    for n in range(1, 5):
        ez2, ezb2 = appendixH_expectations(n, r)
        assert expected_z2_bruteforce(n, r) == pytest.approx(ez2, rel=1e-10)
        if n <= 3:
            assert expected_zb2_sq_bruteforce(n, r) == pytest.approx(ezb2, rel=1e-10)


def test_bruteforce_alpha_zero_against_monte_carlo():
    rng = np.random.default_rng(77)
    trials = 10**6
    x = sample_entries(0.0, (trials, 4), rng)
    z2 = np.abs(x[:, 0] * x[:, 3] + x[:, 1] * x[:, 2]) ** 4
    se = z2.std(ddof=1) / math.sqrt(trials)
    target = expected_z2_bruteforce(2, MomentTable.for_alpha(0.0))
    assert abs(z2.mean() - target) < 3 * se


def test_asymptotic_examples():
    g = MomentTable.gaussian()
    for n in (5, 60, 400):
        assert asymptotics(AsymptoticKind.PSI_RATIO_COR2, n, moments=g) == pytest.approx(math.sqrt((n + 1) / math.e))
    assert asymptotics(AsymptoticKind.PSI_RATIO_COR1, 100) == pytest.approx(math.sqrt(100 * math.pi / math.e), rel=1e-15)
    assert abs(asymptotics(AsymptoticKind.PSI_RATIO_COR1, 100) - 10.75) < 1e-3
    with pytest.raises(DomainError):
        asymptotics(AsymptoticKind.PSI_M1, 10, a=1, b=1, c=2)


def _all_ones_ratio_exact(n):
    return math.exp(2 * math.lgamma(n + 1) - 0.5 * theorem1_zb2_sq_log(n))


def test_all_ones_ratio_convergence():
    errs = [abs(_all_ones_ratio_exact(n) / asymptotics(AsymptoticKind.PSI_RATIO_COR1, n) - 1) for n in (25, 50, 100)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 0.03


def test_gaussian_ratio_asymptote():
    n = 60
    exact = math.exp(0.5 * (psi_log(n, 2, 1, 2, 0)[0] - psi_log(n, 2, 1, 1, 0)[0]))
    assert exact == pytest.approx(asymptotics(AsymptoticKind.PSI_RATIO_COR2, n, moments=MomentTable.gaussian()), rel=0.03)


@pytest.mark.parametrize("abm", [(1, 1, 0.5), (2, 1, 2), (2, 1, 1)])
def test_psi_leading_term(abm):
    a, b, m = abm
    errs = []
    for n in (10, 20, 40, 80):
        log_exact = Psi_log(n, a, b, m)[0]
        log_asym = asymptotics(AsymptoticKind.PSI_LEADING, n, a=a, b=b, m=m, log=True)
        errs.append(abs(math.exp(log_exact - log_asym) - 1))
    assert errs[2] < 0.05
    assert all(e1 >= e2 for e1, e2 in zip(errs, errs[1:]))


@pytest.mark.parametrize("rho", [0.3, 0.6])
def test_ratio_constant_with_pseudo_variance(rho):
    # with the constant C the expansion is exact up to O((c/b)^n)
    moments = _elliptic_gaussian(rho)
    gaps = []
    for n in (50, 100, 200):
        ez2, ezb2 = (psi_log(n, moments[2, 2].real, 1.0, m, rho**2)[0] for m in (2, 1))
        exact = math.exp(0.5 * (ez2 - ezb2))
        gaps.append(abs(exact / asymptotics(AsymptoticKind.PSI_RATIO_COR2, n, moments=moments) - 1))
    assert max(gaps) < 1e-9


def test_psi_m2_expansion_second_order():
    a, b, c = 2.3, 1.0, 0.4
    gaps = []
    for n in (50, 100, 200):
        exact = psi_log(n, a, b, 2, c)[0]
        approx = asymptotics(AsymptoticKind.PSI_M2, n, a=a, b=b, c=c, log=True)
        gaps.append(abs(math.exp(exact - approx) - 1))
    # the bracket carries the O(1) correction, so the residual is O(c^n) only
    assert max(gaps) < 1e-12


def test_equal_modulus_ratio():
    r = MomentTable.real_gaussian()
    n = 200
    ez2, ezb2 = (Psi_log(n, 3, 1, m)[0] for m in (3, 2))
    exact = math.exp(0.5 * (ez2 - ezb2))
    assert exact == pytest.approx(asymptotics(AsymptoticKind.RATIO_APPENDIX_H, n, moments=r), rel=1e-9)
