"""Cross-module oracle checks with a machine-readable report.

Every check compares two independently computed quantities and records the
measured error next to its tolerance. Library functions are looked up
through their modules at call time, so a patched implementation is what
gets checked.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .. import combinatorics, covers, factorgraph, permanent, spa
from ..ensembles import EnsembleSpec, MomentTable, sample_matrix
from ..exceptions import DomainError

SUITES = ("fast", "full")


@dataclass
class CheckResult:
    name: str
    tolerance: float
    error: float
    passed: bool
    seconds: float
    detail: str = ""


def _rand(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))


def _rel(a, b) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


def _ryser_vs_naive(full: bool) -> float:
    rng = np.random.default_rng(101)
    count = 1000 if full else 100
    err = 0.0
    for k in range(count):
        th = _rand(rng, 1 + k % 7)
        err = max(err, _rel(permanent.perm_ryser(th), permanent.perm_naive(th)))
    return err


def _denfg_identities(full: bool) -> float:
    rng = np.random.default_rng(102)
    err = 0.0
    for k in range(100 if full else 20):
        n = 1 + k % 3
        th = _rand(rng, n)
        z = factorgraph.partition_sum_denfg_bruteforce(factorgraph.build_denfg(th))
        err = max(err, _rel(z, abs(permanent.perm_naive(th)) ** 2))
        eps = 3 * rng.random((n, n))
        z = factorgraph.partition_sum_denfg_bruteforce(factorgraph.build_denfg(np.zeros((n, n)), eps))
        err = max(err, _rel(z, permanent.perm_naive(eps).real))
    return err


def _all_ones_vs_enumeration(full: bool) -> float:
    err = 0.0
    for n in range(1, 5 if full else 4):
        vals = covers.cover_perm_values(np.ones((n, n)))
        enumerated = math.fsum(np.abs(vals) ** 2) / len(vals)
        err = max(err, _rel(enumerated, combinatorics.theorem1_zb2_sq(n)))
    return err


def _factored_vs_enumeration(full: bool) -> float:
    rng = np.random.default_rng(105)
    err = 0.0
    for n in range(1, 5 if full else 4):
        th = _rand(rng, n)
        ref = math.fsum(np.abs(covers.cover_perm_values(th)) ** 2) / 2 ** (n * n)
        err = max(err, _rel(covers.zb2_sq_denfg_batch(th[None])[0], ref))
    return err


def _cyclesum_vs_covers(full: bool) -> float:
    rng = np.random.default_rng(103)
    err = 0.0
    for k in range(100 if full else 10):
        th = _rand(rng, 1 + k % (4 if full else 3))
        err = max(err, _rel(covers.permB2_nfg_cyclesum(th), covers.cover_perm_values(th).mean()))
    return err


def _transform_vs_lift(full: bool) -> float:
    rng = np.random.default_rng(104)
    err = 0.0
    for n in range(1, 4 if full else 3):
        th = _rand(rng, n)
        vals = covers.cover_perm_values(th)
        for cover in covers.iter_covers(n):
            ref = vals[cover.code]
            err = max(err, abs(covers.z_cover_transformed(th, cover) - ref) / max(1.0, abs(ref)))
    return err


def _moment_closed_forms_vs_bruteforce(full: bool) -> float:
    err = 0.0
    cases = [
        (MomentTable.gaussian(), combinatorics.theorem2_expectations),
        (MomentTable.real_gaussian(), combinatorics.appendixH_expectations),
    ]
    for m, closed in cases:
        for n in range(1, 4 if full else 3):
            ez2, ezb2 = closed(n, m)
            err = max(err, _rel(ez2, combinatorics.expected_z2_bruteforce(n, m)))
            err = max(err, _rel(ezb2, combinatorics.expected_zb2_sq_bruteforce(n, m)))
    return err


def _spa_tree_exact(full: bool) -> float:
    err = 0.0
    for c in (2.0, 0.3 - 1.1j, -1.5):
        res = spa.run_spa(factorgraph.build_denfg([[c]]), spa.SpaConfig())
        err = max(err, _rel(res.zb_spa, abs(c) ** 2))
    return err


def _spa_rank1_vs_scalar(full: bool) -> float:
    err = 0.0
    n = 6 if full else 4
    for seed in range(4 if full else 2):
        th = sample_matrix(EnsembleSpec(alpha=0.0, n=n, seed=seed), 0)
        cfg = spa.SpaConfig(init_mode=spa.InitMode.RANK1, seed=seed)
        res = spa.run_spa(factorgraph.build_denfg(th), cfg)
        err = max(err, _rel(res.zb_spa, abs(spa.spa_nfg_scalar(th, cfg)) ** 2))
    return err


def _all_ones_ratio_asymptote(full: bool) -> float:
    n = 100
    exact = 0.5 * (4 * math.lgamma(n + 1) - combinatorics.theorem1_zb2_sq_log(n))
    approx = combinatorics.asymptotics(combinatorics.AsymptoticKind.PSI_RATIO_COR1, n, log=True)
    return abs(math.expm1(approx - exact))


_CHECKS: list[tuple[str, float, Callable[[bool], float], bool]] = [
    ("ryser_vs_naive", 1e-10, _ryser_vs_naive, False),
    ("denfg_partition_sum_identities", 1e-11, _denfg_identities, False),
    ("all_ones_zb2_closed_form_vs_enumeration", 1e-9, _all_ones_vs_enumeration, False),
    ("factored_zb2_vs_cover_enumeration", 1e-10, _factored_vs_enumeration, False),
    ("cyclesum_vs_cover_average", 1e-10, _cyclesum_vs_covers, False),
    ("transformed_cover_vs_lift", 1e-10, _transform_vs_lift, False),
    ("moment_closed_forms_vs_bruteforce", 1e-9, _moment_closed_forms_vs_bruteforce, False),
    ("spa_exact_on_tree", 1e-10, _spa_tree_exact, False),
    ("spa_rank1_vs_scalar_spa", 1e-6, _spa_rank1_vs_scalar, False),
    ("all_ones_ratio_asymptote_n100", 0.03, _all_ones_ratio_asymptote, False),
]


def verify(suite: str = "fast") -> dict:
    """Run a suite (``fast`` or ``full``); ``report["passed"]`` is the verdict."""
    if suite not in SUITES:
        raise DomainError(f"suite must be one of {SUITES}")
    full = suite == "full"
    results = []
    for name, tol, fn, full_only in _CHECKS:
        if full_only and not full:
            continue
        t0 = time.perf_counter()
        try:
            err = float(fn(full))
            ok = err <= tol
            detail = ""
        except Exception as exc:  # a crash is a failed check, not a failed run
            err, ok, detail = math.inf, False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, tol, err, bool(ok), time.perf_counter() - t0, detail))
    return {
        "suite": suite,
        "passed": all(r.passed for r in results),
        "checks": [asdict(r) for r in results],
    }
