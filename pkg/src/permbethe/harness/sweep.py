"""Ensemble sweeps: per-trial records, per-alpha summaries, flat-file output.

Trial ``t`` at alpha index ``a`` draws its matrix from the stream
``(seed, a, t)``, its SPA initialization from ``(seed, a, t, 1)`` and its
sampled covers from ``(seed, a, t, 2)``. Results are therefore independent
of scheduling: trials can run in any order on any number of workers and the
reduction into summaries runs afterwards in a fixed order.
"""

from __future__ import annotations

import csv
import json
import math
import os
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .. import __version__
from ..combinatorics import expected_z2_bruteforce, expected_zb2_sq_bruteforce, theorem2_expectations_log
from ..covers import EXACT_MAX_N, zb2_denfg_exact, zb2_denfg_sampled
from ..ensembles import EnsembleSpec, MomentTable, sample_matrix, stream_rng
from ..exceptions import DomainError, NumericalDegeneracyError
from ..factorgraph import build_denfg
from ..permanent import perm_abs2
from ..spa import SpaConfig, run_spa

SPA_MAX_N = 20
RECORD_HEADER = ["alpha", "trial", "z", "zb", "log_z", "log_zb", "converged", "degeneracy", "iterations"]
SUMMARY_HEADER = [
    "alpha", "ln_ratio_of_means", "ln_mean_ratio", "mean_log_ratio", "std_log_ratio",
    "convergence_rate", "frac_rank1", "frac_diagonal", "frac_generic",
]
DEGENERACY_NA = "NA"


class SweepMode(Enum):
    SPA_SWEEP = "spa-sweep"
    COVER_SWEEP = "cover-sweep"
    CLOSED_FORM = "closed-form"
    VERIFY = "verify"


def default_alphas(count: int = 21) -> tuple[float, ...]:
    return tuple(float(a) for a in np.linspace(0.0, math.pi, count))


@dataclass(frozen=True)
class SweepConfig:
    mode: SweepMode
    n: int
    alphas: tuple[float, ...] = field(default_factory=default_alphas)
    trials: int = 100
    seed: int = 0
    spa: SpaConfig = field(default_factory=SpaConfig)
    cover_samples: int | None = None  # None means exhaustive enumeration
    output_path: str | None = None
    threads: int = 1
    include_nonconverged: bool = True
    table_format: str = "csv"

    def __post_init__(self):
        object.__setattr__(self, "mode", SweepMode(self.mode))
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        if self.n < 1:
            raise DomainError("n must be at least 1")
        if self.trials < 1:
            raise DomainError("trials must be at least 1")
        if not self.alphas:
            raise DomainError("need at least one alpha")
        if any(not 0.0 <= a <= math.pi for a in self.alphas):
            raise DomainError("alphas must lie in [0, pi]")
        if self.threads < 1:
            raise DomainError("threads must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        if self.table_format not in ("csv", "json"):
            raise DomainError("table_format must be 'csv' or 'json'")
        if self.mode is SweepMode.SPA_SWEEP and self.n > SPA_MAX_N:
            raise DomainError(f"spa-sweep needs exact permanents, n <= {SPA_MAX_N}")
        if self.mode is SweepMode.COVER_SWEEP:
            if self.cover_samples is None and self.n > EXACT_MAX_N:
                raise DomainError(f"exhaustive cover enumeration needs n <= {EXACT_MAX_N}")
            if self.cover_samples is not None and self.cover_samples < 2:
                raise DomainError("cover_samples must be at least 2")

    def echo(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        d["spa"]["init_mode"] = self.spa.init_mode.value
        d["spa"]["stream"] = list(self.spa.stream)
        d["alphas"] = list(self.alphas)
        return d


@dataclass(frozen=True)
class TrialRecord:
    alpha: float
    trial: int
    z: float
    zb: float
    log_z: float
    log_zb: float
    converged: bool
    degeneracy: str
    iterations: int

    def row(self) -> list[str]:
        return [
            repr(float(self.alpha)), str(self.trial), repr(float(self.z)), repr(float(self.zb)),
            repr(float(self.log_z)), repr(float(self.log_zb)), "true" if self.converged else "false",
            self.degeneracy, str(self.iterations),
        ]

    @classmethod
    def from_row(cls, row: dict) -> "TrialRecord":
        return cls(
            alpha=float(row["alpha"]), trial=int(row["trial"]), z=float(row["z"]), zb=float(row["zb"]),
            log_z=float(row["log_z"]), log_zb=float(row["log_zb"]),
            converged=row["converged"] in ("true", True), degeneracy=row["degeneracy"],
            iterations=int(row["iterations"]),
        )


@dataclass(frozen=True)
class SummaryRow:
    alpha: float
    ln_ratio_of_means: float
    ln_mean_ratio: float
    mean_log_ratio: float
    std_log_ratio: float
    convergence_rate: float
    frac_rank1: float
    frac_diagonal: float
    frac_generic: float

    def row(self) -> list[str]:
        return [repr(float(getattr(self, k))) for k in SUMMARY_HEADER]


def _log(x: float) -> float:
    if x > 0:
        return math.log(x)
    return -math.inf if x == 0 else math.nan


def _matrix(cfg: SweepConfig, ai: int, t: int) -> np.ndarray:
    spec = EnsembleSpec(alpha=cfg.alphas[ai], n=cfg.n, seed=cfg.seed, count=cfg.trials, stream=(ai,))
    return sample_matrix(spec, t)


def spa_trial(cfg: SweepConfig, ai: int, t: int) -> TrialRecord:
    """One SPA trial: ``Z = |perm(theta)|^2`` against ``Z_B,SPA``."""
    th = _matrix(cfg, ai, t)
    z = perm_abs2(th)
    spa_cfg = replace(cfg.spa, seed=cfg.seed, stream=(ai, t, 1))
    try:
        res = run_spa(build_denfg(th), spa_cfg)
    except NumericalDegeneracyError:
        return TrialRecord(cfg.alphas[ai], t, z, math.nan, _log(z), math.nan, False, DEGENERACY_NA, 0)
    return TrialRecord(
        cfg.alphas[ai], t, z, res.zb_spa, _log(z), res.log_zb_spa, res.converged,
        res.degeneracy.value, res.iterations,
    )


def cover_trial(cfg: SweepConfig, ai: int, t: int) -> TrialRecord:
    """One cover trial: ``Z = |perm(theta)|^2`` against ``Z_B,2`` of N_DE(theta)."""
    th = _matrix(cfg, ai, t)
    z = perm_abs2(th)
    if cfg.cover_samples is None:
        zb = zb2_denfg_exact(th)
    else:
        zb, _ = zb2_denfg_sampled(th, cfg.cover_samples, stream_rng(cfg.seed, ai, t, 2))
    return TrialRecord(cfg.alphas[ai], t, z, zb, _log(z), _log(zb), True, DEGENERACY_NA, 0)


def _run_bucket_task(args) -> list[TrialRecord]:
    cfg, ai, trials = args
    fn = spa_trial if cfg.mode is SweepMode.SPA_SWEEP else cover_trial
    return [fn(cfg, ai, t) for t in trials]


def _run_bucket(cfg: SweepConfig, ai: int, pool: ProcessPoolExecutor | None) -> list[TrialRecord]:
    if pool is None:
        return _run_bucket_task((cfg, ai, range(cfg.trials)))
    chunks = np.array_split(np.arange(cfg.trials), min(cfg.trials, 4 * cfg.threads))
    tasks = [(cfg, ai, [int(t) for t in c]) for c in chunks if len(c)]
    out: list[TrialRecord] = []
    for part in pool.map(_run_bucket_task, tasks):
        out.extend(part)
    return out


def summarize(records: Sequence[TrialRecord], mode: SweepMode, include_nonconverged: bool = True) -> list[SummaryRow]:
    """Per-alpha statistics, in order of first appearance of each alpha."""
    mode = SweepMode(mode)
    buckets: dict[float, list[TrialRecord]] = {}
    for r in records:
        buckets.setdefault(r.alpha, []).append(r)
    rows = []
    for alpha, bucket in buckets.items():
        total = len(bucket)
        used = [r for r in bucket if math.isfinite(r.zb) and (include_nonconverged or r.converged)]
        z = [r.z for r in used]
        zb = [r.zb for r in used]
        logs = [r.log_z - r.log_zb for r in used]
        k = len(used)
        nan = math.nan
        if k == 0:
            lrm = lmr = mlr = slr = nan
        else:
            if mode is SweepMode.COVER_SWEEP:
                lrm = 0.5 * _log(math.fsum(v * v for v in z) / math.fsum(v * v for v in zb))
            else:
                lrm = _log(math.fsum(z) / math.fsum(zb))
            lmr = _log(math.fsum(a / b for a, b in zip(z, zb)) / k)
            mlr = math.fsum(logs) / k
            slr = math.sqrt(math.fsum((v - mlr) ** 2 for v in logs) / (k - 1)) if k > 1 else 0.0
        conv = sum(r.converged for r in bucket) / total
        if mode is SweepMode.COVER_SWEEP:
            frac = dict.fromkeys(("RANK1", "DIAGONAL", "GENERIC"), nan)
        else:
            frac = {d: sum(r.degeneracy == d for r in bucket) / total for d in ("RANK1", "DIAGONAL", "GENERIC")}
        rows.append(SummaryRow(alpha, lrm, lmr, mlr, slr, conv, frac["RANK1"], frac["DIAGONAL"], frac["GENERIC"]))
    return rows


# output files


def write_records_csv(path: Path, records: Iterable[TrialRecord]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_HEADER)
        for r in records:
            w.writerow(r.row())


def read_records_csv(path: Path) -> list[TrialRecord]:
    with open(path, newline="") as fh:
        return [TrialRecord.from_row(row) for row in csv.DictReader(fh)]


def write_summary_csv(path: Path, rows: Iterable[SummaryRow]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for r in rows:
            w.writerow(r.row())


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def write_table_json(path: Path, header: list[str], items) -> None:
    data = [{k: _json_value(getattr(it, k)) for k in header} for it in items]
    path.write_text(json.dumps(data, indent=1) + "\n")


def version_string() -> str:
    """``git describe`` of the source tree when available, else the package version."""
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"], cwd=here, capture_output=True, text=True, timeout=5
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"v{__version__}-g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return f"v{__version__}"


def reference_lines(cfg: SweepConfig) -> dict:
    """Dashed-line candidates for the alpha = 0 and alpha = pi regimes."""
    n = cfg.n
    half_log = 0.5 * math.log(math.pi * n / math.e)
    if cfg.mode is SweepMode.SPA_SWEEP:
        return {
            "ln_ratio_alpha0_squared": 2 * half_log,
            "ln_ratio_alpha0_unsquared": half_log,
        }
    return {
        "ln_sqrt_ratio_alpha0": half_log,
        "ln_sqrt_ratio_alpha_pi": 0.5 * (math.log(n + 1) - 1),
    }


def cover_overlays(cfg: SweepConfig) -> dict:
    """Analytic ``ln sqrt(E[Z^2] / E[Z_B,2^2])`` at each alpha where available."""
    out = {}
    for alpha in cfg.alphas:
        vals = {}
        if cfg.n <= 3:
            m = MomentTable.for_alpha(alpha)
            vals["bruteforce"] = 0.5 * math.log(expected_z2_bruteforce(cfg.n, m) / expected_zb2_sq_bruteforce(cfg.n, m))
        if alpha == math.pi:
            lz, lzb = theorem2_expectations_log(cfg.n, MomentTable.gaussian())
            vals["closed_form"] = 0.5 * (lz - lzb)
        if vals:
            out[repr(alpha)] = vals
    return out


def _manifest_path(out: Path) -> Path:
    return out / "manifest.json"


def _same_run(a: dict, b: dict) -> bool:
    keys = [k for k in a if k not in ("output_path", "threads")]
    return all(a.get(k) == b.get(k) for k in keys)


def run_sweep(cfg: SweepConfig, resume: bool = False, max_buckets: int | None = None):
    """Run a spa- or cover-sweep, writing tables and a manifest to ``cfg.output_path``.

    Each alpha bucket is written as soon as it completes, and the manifest
    lists the finished buckets, so ``resume=True`` continues an interrupted
    run. ``max_buckets`` stops after that many new buckets (used to simulate an
    interruption). Returns ``(records, summary)``.
    """
    if cfg.mode not in (SweepMode.SPA_SWEEP, SweepMode.COVER_SWEEP):
        raise DomainError(f"run_sweep handles spa-sweep and cover-sweep, not {cfg.mode.value}")
    out = Path(cfg.output_path) if cfg.output_path else None
    echo = cfg.echo()
    done: dict[int, list[TrialRecord]] = {}
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        mpath = _manifest_path(out)
        if resume and mpath.exists():
            manifest = json.loads(mpath.read_text())
            if not _same_run(manifest["config"], echo):
                raise DomainError("manifest in the output directory belongs to a different sweep")
            stored = read_records_csv(out / "records.csv") if (out / "records.csv").exists() else []
            for ai in manifest.get("completed_alphas", []):
                done[ai] = [r for r in stored if r.alpha == cfg.alphas[ai]]
    started = time.time()
    pool = ProcessPoolExecutor(max_workers=cfg.threads) if cfg.threads > 1 else None
    new_buckets = 0
    try:
        for ai in range(len(cfg.alphas)):
            if ai in done:
                continue
            if max_buckets is not None and new_buckets >= max_buckets:
                break
            done[ai] = _run_bucket(cfg, ai, pool)
            new_buckets += 1
            if out is not None:
                _write_outputs(cfg, out, done, echo, time.time() - started)
    finally:
        if pool is not None:
            pool.shutdown()
    records = [r for ai in sorted(done) for r in done[ai]]
    summary = summarize(records, cfg.mode, cfg.include_nonconverged)
    if out is not None:
        _write_outputs(cfg, out, done, echo, time.time() - started)
    return records, summary


def _write_outputs(cfg: SweepConfig, out: Path, done: dict, echo: dict, wall: float):
    records = [r for ai in sorted(done) for r in done[ai]]
    summary = summarize(records, cfg.mode, cfg.include_nonconverged)
    # the CSV of records is always written: it is what resume reads back
    write_records_csv(out / "records.csv", records)
    write_summary_csv(out / "summary.csv", summary)
    if cfg.table_format == "json":
        write_table_json(out / "records.json", RECORD_HEADER, records)
        write_table_json(out / "summary.json", SUMMARY_HEADER, summary)
    manifest = {
        "config": echo,
        "version": version_string(),
        "wall_clock_seconds": wall,
        "completed_alphas": sorted(done),
        "trials_per_alpha": {repr(cfg.alphas[ai]): len(done[ai]) for ai in sorted(done)},
        "reference_lines": reference_lines(cfg),
    }
    if cfg.mode is SweepMode.COVER_SWEEP:
        manifest["analytic_overlays"] = cover_overlays(cfg)
    tmp = _manifest_path(out).with_suffix(".tmp")
    tmp.write_text(json.dumps(manifest, indent=1, default=_json_value) + "\n")
    os.replace(tmp, _manifest_path(out))


def spa_sweep(cfg: SweepConfig, resume: bool = False):
    return run_sweep(replace(cfg, mode=SweepMode.SPA_SWEEP), resume=resume)


def cover_sweep(cfg: SweepConfig, resume: bool = False):
    return run_sweep(replace(cfg, mode=SweepMode.COVER_SWEEP), resume=resume)

