"""Seeded Monte Carlo runs, aggregation and CSV output."""
from __future__ import annotations

import csv
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .common import MMOptions
from .scenarios import Scenario, cutset_upper_bound, run_scheme

log = logging.getLogger(__name__)

TRIAL_COLUMNS = ("trial", "seed", "scheme", "sum_rate_bits", "feasibility_residual", "outer_iters", "wall_ms")
SUMMARY_COLUMNS = ("scheme", "param", "mean_rate", "stderr", "n_trials")
BOUND = "cut-set-bound"
MAX_FAILED_FRACTION = 0.05
BOUND_SLACK = 1e-6
FEAS_TOL = 1e-6
OUT_DIR_ENV = "CRAN_OUT_DIR"


class RunFailedError(RuntimeError):
    """More than 5% of the trials of some scheme failed."""


class CutSetViolation(AssertionError):
    pass


def trial_seed(master: int, trial: int) -> int:
    """Channel seed of a trial; depends only on ``(master, trial)``."""
    ss = np.random.SeedSequence(int(master), spawn_key=(int(trial),))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class TrialRecord:
    trial: int
    seed: int
    scheme: str
    sum_rate_bits: float
    feasibility_residual: float
    outer_iters: int
    wall_ms: float
    failed: bool = False
    monotone: bool = True
    message: str = ""

    def row(self) -> list:
        rate = "nan" if self.failed else repr(float(self.sum_rate_bits))
        return [self.trial, self.seed, self.scheme, rate, repr(float(self.feasibility_residual)),
                self.outer_iters, f"{self.wall_ms:.3f}"]


@dataclass
class SchemeSummary:
    scheme: str
    mean_rate: float
    stderr: float
    n_trials: int
    n_failed: int


@dataclass
class ExperimentResult:
    """Per-trial records plus per-scheme means and standard errors.

    ``records`` are sorted by trial, then in the scenario's scheme order
    (the cut-set bound, when computed, comes last in each trial).
    """

    scenario: Scenario
    records: list
    summaries: dict
    wall_s: float
    param: str = ""

    def rates(self, scheme: str) -> np.ndarray:
        """Per-trial rates of successful trials."""
        return np.array([r.sum_rate_bits for r in self.records if r.scheme == scheme and not r.failed])

    def mean(self, scheme: str) -> float:
        return self.summaries[scheme].mean_rate

    def stderr(self, scheme: str) -> float:
        return self.summaries[scheme].stderr

    def paired(self, a: str, b: str) -> tuple[float, float]:
        """Mean and standard error of the per-trial difference ``a - b``."""
        ra = {r.trial: r.sum_rate_bits for r in self.records if r.scheme == a and not r.failed}
        rb = {r.trial: r.sum_rate_bits for r in self.records if r.scheme == b and not r.failed}
        d = np.array([ra[t] - rb[t] for t in sorted(set(ra) & set(rb))])
        return _mean_stderr(d)


def _mean_stderr(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return float("nan"), float("nan")
    se = float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0
    return float(np.mean(x)), se


def run_trial(scenario: Scenario, trial: int, options: MMOptions | None = None,
              with_bound: bool = True) -> list:
    """All schemes (and the cut-set bound) on the realization of one trial."""
    seed = trial_seed(scenario.seed, trial)
    ch = scenario.channel(seed)
    active = scenario.active
    ceff = scenario.effective_capacities(active)
    out = []
    for scheme in scenario.schemes:
        t0 = time.perf_counter()
        try:
            o = run_scheme(scheme, scenario, ch, options, active, ceff)
            failed = o.status == "infeasible" or not np.isfinite(o.sum_rate)
            rec = TrialRecord(trial, seed, scheme, o.sum_rate, o.residual, o.outer_iters,
                              1e3 * (time.perf_counter() - t0), failed, o.monotone,
                              "infeasible" if failed else "")
        except Exception as err:  # a failing trial is flagged, not fatal
            log.warning("trial %d scheme %s failed: %s", trial, scheme, err)
            rec = TrialRecord(trial, seed, scheme, float("nan"), float("nan"), 0,
                              1e3 * (time.perf_counter() - t0), True, True, f"{type(err).__name__}: {err}")
        out.append(rec)
    if with_bound and not scenario.is_multi_cu:
        t0 = time.perf_counter()
        ub = cutset_upper_bound(scenario, ch, options)
        out.append(TrialRecord(trial, seed, BOUND, ub, 0.0, 0, 1e3 * (time.perf_counter() - t0)))
        for r in out[:-1]:
            if not r.failed and r.sum_rate_bits > ub + BOUND_SLACK:
                raise CutSetViolation(f"trial {trial}: {r.scheme} rate {r.sum_rate_bits:.9f} "
                                      f"exceeds the cut-set bound {ub:.9f}")
    return out


def _trial_job(args):
    scenario, trial, options, with_bound = args
    return run_trial(scenario, trial, options, with_bound)


def summarize(records: Sequence[TrialRecord], schemes: Sequence[str]) -> dict:
    out = {}
    for s in schemes:
        rs = [r for r in records if r.scheme == s]
        ok = [r.sum_rate_bits for r in rs if not r.failed]
        m, se = _mean_stderr(ok)
        out[s] = SchemeSummary(s, m, se, len(ok), len(rs) - len(ok))
    return out


def run_monte_carlo(scenario: Scenario, out_dir: str | os.PathLike | None = None, workers: int = 1,
                    options: MMOptions | None = None, with_bound: bool = True, param: str = "",
                    trials: Sequence[int] | None = None) -> ExperimentResult:
    """Run every scheme of ``scenario`` on ``scenario.trials`` seeded realizations.

    Results do not depend on ``workers``: each trial is computed from
    ``(scenario.seed, trial)`` alone and records are sorted afterwards.
    Failed trials are excluded from the means; if more than 5% of some
    scheme's trials fail, :class:`RunFailedError` is raised (after the
    CSV files are written).
    """
    t0 = time.perf_counter()
    idx = list(range(int(scenario.trials))) if trials is None else [int(t) for t in trials]
    jobs = [(scenario, t, options, with_bound) for t in idx]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=int(workers)) as pool:
            chunks = list(pool.map(_trial_job, jobs))
    else:
        chunks = [_trial_job(j) for j in jobs]
    records = [r for chunk in sorted(chunks, key=lambda c: c[0].trial) for r in chunk]
    schemes = list(scenario.schemes) + ([BOUND] if with_bound and not scenario.is_multi_cu else [])
    result = ExperimentResult(scenario, records, summarize(records, schemes), time.perf_counter() - t0, param)
    if out_dir is not None:
        write_csv(result, out_dir)
    bad = {s: v.n_failed for s, v in result.summaries.items()
           if v.n_failed > MAX_FAILED_FRACTION * (v.n_trials + v.n_failed)}
    if bad:
        raise RunFailedError(f"too many failed trials: {bad}")
    return result


def write_trials_csv(records: Sequence[TrialRecord], path: str | os.PathLike):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRIAL_COLUMNS)
        for r in records:
            w.writerow(r.row())


def write_summary_csv(results: Sequence[ExperimentResult], path: str | os.PathLike):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for res in results:
            for s in res.summaries.values():
                w.writerow([s.scheme, res.param, repr(s.mean_rate), repr(s.stderr), s.n_trials])


def write_csv(result: ExperimentResult, out_dir: str | os.PathLike, stem: str = "") -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = stem or (f"{result.param}_" if result.param else "")
    p_trials, p_summary = out / f"{stem}trials.csv", out / f"{stem}summary.csv"
    write_trials_csv(result.records, p_trials)
    write_summary_csv([result], p_summary)
    return p_trials, p_summary


def read_trials_csv(path: str | os.PathLike) -> list:
    with open(path, newline="") as fh:
        return [dict(row) for row in csv.DictReader(fh)]


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_DIR_ENV, "results"))


def check_records(records: Sequence[TrialRecord], feas_tol: float = FEAS_TOL):
    """Assert that every optimized trial was monotone and feasible."""
    for r in records:
        if r.failed or r.scheme == BOUND:
            continue
        assert r.monotone, f"trial {r.trial} {r.scheme}: objective decreased"
        assert r.feasibility_residual < feas_tol, \
            f"trial {r.trial} {r.scheme}: residual {r.feasibility_residual:.3e}"
