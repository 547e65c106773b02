"""Exact closed forms next to their large-n approximations."""

from __future__ import annotations

import math

from ..combinatorics import (
    AsymptoticKind,
    asymptotics,
    psi_log_sequence,
    theorem1_zb2_sq,
    theorem1_zb2_sq_log_sequence,
)
from ..ensembles import MomentTable
from ..exceptions import DomainError

CLOSED_FORM_MAX_N = 500
EXACT_ROWS_MAX_N = 20

CLOSED_FORM_HEADER = [
    "n",
    "z2_all_ones", "zb2_sq_all_ones", "log_z2_all_ones", "log_zb2_sq_all_ones",
    "log_ratio_all_ones", "log_ratio_all_ones_asym", "rel_gap_all_ones",
    "ez2", "ezb2_sq", "log_ez2", "log_ezb2_sq",
    "log_ratio_moments", "log_ratio_moments_asym", "rel_gap_moments",
]


def moments_from_name(name: str) -> MomentTable:
    """``gaussian``, ``real-gaussian``, ``all-ones`` or ``alpha=<angle>``."""
    key = name.strip().lower()
    if key == "gaussian":
        return MomentTable.gaussian()
    if key in ("real-gaussian", "real_gaussian"):
        return MomentTable.real_gaussian()
    if key in ("all-ones", "all_ones", "ones"):
        return MomentTable.all_ones()
    if key.startswith("alpha="):
        return MomentTable.for_alpha(float(key.split("=", 1)[1]))
    raise DomainError(f"unknown moment table {name!r}")


def _exp_or_inf(x: float) -> float:
    return math.exp(x) if x < 709.0 else math.inf


def _float_or_inf(fn, *args) -> float:
    try:
        return float(fn(*args))
    except (OverflowError, ArithmeticError):
        return math.inf


def _moment_sequences(n_max: int, moments: MomentTable):
    """Log sequences of ``E[Z^2]`` and ``E[Z_B,2^2]`` plus the asymptotic kind, or ``None``."""
    if abs(moments[1, 0]) > 1e-12:
        return None
    mu11 = moments[1, 1].real
    mu20 = abs(moments[2, 0])
    a = moments[2, 2].real
    b = mu11**2
    if mu20 < mu11:
        c = mu20**2
        return psi_log_sequence(n_max, a, b, 2, c), psi_log_sequence(n_max, a, b, 1, c), AsymptoticKind.PSI_RATIO_COR2
    if abs(mu20 - mu11) < 1e-12:
        return psi_log_sequence(n_max, a, b, 3, 0), psi_log_sequence(n_max, a, b, 2, 0), AsymptoticKind.RATIO_APPENDIX_H
    return None


def _signed_exp(log_sign) -> float:
    lv, sg = log_sign
    return sg * _exp_or_inf(lv)


def closed_form_table(n_max: int, moments: MomentTable | str = "gaussian") -> list[dict]:
    """Rows ``n = 1 .. n_max`` of exact and asymptotic values.

    The all-ones columns use ``Z^2 = (n!)^4`` and the exact ``Z_B,2^2``; the
    moment columns use the zero-mean closed forms for ``moments`` (NaN when
    the entries have nonzero mean). Ratios are ``ln sqrt(. / .)``; raw values
    overflow to ``inf`` while the log columns stay finite.
    """
    if not 1 <= n_max <= CLOSED_FORM_MAX_N:
        raise DomainError(f"n_max must lie in [1, {CLOSED_FORM_MAX_N}]")
    if isinstance(moments, str):
        moments = moments_from_name(moments)
    t1 = theorem1_zb2_sq_log_sequence(n_max)
    seqs = _moment_sequences(n_max, moments)
    rows = []
    for n in range(1, n_max + 1):
        lz1 = 4 * math.log(math.factorial(n)) if n <= EXACT_ROWS_MAX_N else 4 * math.lgamma(n + 1)
        if n <= EXACT_ROWS_MAX_N:
            exact = theorem1_zb2_sq(n, True)
            lzb1 = math.log(exact.numerator) - math.log(exact.denominator)
        else:
            lzb1 = t1[n - 1]
        lr1 = 0.5 * (lz1 - lzb1)
        asym1 = asymptotics(AsymptoticKind.PSI_RATIO_COR1, n, log=True)
        row = {
            "n": n,
            "z2_all_ones": _float_or_inf(lambda: math.factorial(n) ** 4),
            "zb2_sq_all_ones": (
                _float_or_inf(theorem1_zb2_sq, n, True) if n <= EXACT_ROWS_MAX_N else _exp_or_inf(lzb1)
            ),
            "log_z2_all_ones": lz1,
            "log_zb2_sq_all_ones": lzb1,
            "log_ratio_all_ones": lr1,
            "log_ratio_all_ones_asym": asym1,
            "rel_gap_all_ones": math.exp(asym1 - lr1) - 1,
        }
        if seqs is None:
            row.update({k: math.nan for k in CLOSED_FORM_HEADER[8:]})
        else:
            ez2, ezb2, kind = seqs
            lz, lzb = ez2[n][0], ezb2[n][0]
            lr = 0.5 * (lz - lzb)
            try:
                asym = asymptotics(kind, n, moments=moments, log=True)
            except (DomainError, ValueError):
                asym = math.nan
            row.update({
                "ez2": _signed_exp(ez2[n]),
                "ezb2_sq": _signed_exp(ezb2[n]),
                "log_ez2": lz,
                "log_ezb2_sq": lzb,
                "log_ratio_moments": lr,
                "log_ratio_moments_asym": asym,
                "rel_gap_moments": math.exp(asym - lr) - 1 if math.isfinite(asym) else math.nan,
            })
        rows.append(row)
    return rows
