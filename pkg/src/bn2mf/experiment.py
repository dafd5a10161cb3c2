"""Simulation grid runner and aggregate tables.

Each (structure, noise, replicate) dataset is one job; all requested methods
are fit on it and one JSON record per method is appended to
``reports.jsonl``. Jobs whose records already exist are skipped, so an
interrupted grid resumes where it stopped. Wall-clock times go to
``timing.log`` only, keeping the report file reproducible byte for byte.
"""

from __future__ import annotations

import json
import logging
import math
import time
import traceback
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import fit_baseline, select_by_bic
from .config import RunConfig
from .errors import FitError, NumericalError
from .io import dump_json
from .metrics import compare_solution
from .simgen import gen_dataset
from .uncertainty import aligned_coverage, variational_ci
from .vi import fit

log = logging.getLogger(__name__)

REPORTS = "reports.jsonl"
TIMING = "timing.log"
METRIC_KEYS = tuple(f"{part}_{m}" for m in ("relerr", "cos", "ssd") for part in ("overall", "scores", "loadings"))


@dataclass(frozen=True)
class Job:
    distinct_per_pattern: int
    noise_prop: float
    replicate: int
    methods: tuple

    def key(self, method: str) -> tuple:
        return (method, self.distinct_per_pattern, round(self.noise_prop, 6), self.replicate)


def dataset_seed(base: int, structure: int, noise: float, replicate: int) -> int:
    """Seed for one grid dataset, independent of which other cells are run."""
    ss = np.random.SeedSequence([base, structure, int(round(noise * 1000)), replicate])
    return int(ss.generate_state(1)[0])


def report_key(row: dict) -> tuple:
    return (row["method"], row["distinct_per_pattern"], round(row["noise_prop"], 6), row["replicate"])


def load_reports(out_dir) -> list[dict]:
    path = Path(out_dir) / REPORTS
    if not path.exists():
        return []
    rows = []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line:
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError:
                # a partially written final line from an interrupted run
                log.warning("ignoring malformed report line in %s", path)
    return rows


def plan_jobs(cfg: RunConfig, done: set) -> list[Job]:
    jobs = []
    for d in cfg.structure_list:
        for s in cfg.noise_list:
            for r in range(cfg.n_replicates):
                todo = tuple(m for m in cfg.grid_method_list if (m, d, round(s, 6), r) not in done)
                if todo:
                    jobs.append(Job(d, s, r, todo))
    return jobs


def _fit_method(method, truth, cfg: RunConfig, seed: int) -> dict:
    x = truth.x_noisy
    out = {}
    if method == "bn2mf":
        res = fit(x, cfg.hyperparameters(), cfg.fit_config(seed))
        scores, loadings, k = res.scores, res.loadings, res.k_effective
        out.update(elbo=res.elbo, sweeps=res.sweeps_used, converged=res.converged)
        if k == truth.spec.k:
            ci = variational_ci(res.state, cfg.n_draws, seed=seed, level=cfg.level)
            out["coverage"] = aligned_coverage(truth.scores_true, truth.loadings_true, ci, loadings)
    else:
        kw = cfg.baseline_kwargs(method)
        if method == "pca":
            res = fit_baseline(x, method, 0, **kw)
        else:
            if method != "fa":
                kw["seed"] = seed
            res = select_by_bic(x, method, cfg.k_candidate_list, **kw)
        scores, loadings, k = res.scores, res.loadings, res.k
        out.update(selection_stat=res.selection_stat, converged=res.converged)
        if "heywood" in res.info:
            out["heywood"] = bool(res.info["heywood"])
    allow_sign = method in ("pca", "fa")
    out["k"] = int(k)
    out["metrics"] = compare_solution(truth.x_clean, truth.scores_true, truth.loadings_true,
                                      scores, loadings, allow_sign=allow_sign)
    return out


def run_job(job: Job, cfg: RunConfig) -> tuple[list[dict], list[str]]:
    """Generate one dataset and fit every pending method on it; never raises."""
    seed = dataset_seed(cfg.seed, job.distinct_per_pattern, job.noise_prop, job.replicate)
    spec = cfg.sim_spec(distinct_per_pattern=job.distinct_per_pattern, noise_prop=job.noise_prop, seed=seed)
    rows, timings = [], []
    truth = None
    for method in job.methods:
        row = {"method": method, "distinct_per_pattern": job.distinct_per_pattern,
               "noise_prop": job.noise_prop, "replicate": job.replicate, "seed": seed,
               "n": spec.n, "p": spec.p, "k_true": spec.k, "version": __version__}
        t = time.perf_counter()
        try:
            if truth is None:
                truth = gen_dataset(spec)
            row.update(_fit_method(method, truth, cfg, seed))
            row["status"] = "ok"
        except (NumericalError, FitError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            row.update(status="error", error=f"{type(exc).__name__}: {exc}")
            log.debug("job failed\n%s", traceback.format_exc())
        rows.append(row)
        timings.append(f"{method}\t{job.distinct_per_pattern}\t{job.noise_prop}\t{job.replicate}\t"
                       f"{time.perf_counter() - t:.3f}")
    return rows, timings


def _run_job_star(args):
    return run_job(*args)


def run_grid(cfg: RunConfig, out_dir, n_jobs: int | None = None) -> list[dict]:
    """Run (or resume) the grid in ``out_dir``; returns every report row, sorted."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    existing = load_reports(out_dir)
    jobs = plan_jobs(cfg, {report_key(r) for r in existing})
    n_jobs = n_jobs or cfg.n_jobs
    log.info("grid: %d datasets pending (%d reports present)", len(jobs), len(existing))
    if jobs:
        (out_dir / "grid.cfg").write_text(cfg.to_text(), encoding="utf-8")
    with open(out_dir / REPORTS, "a", encoding="utf-8") as rep, open(out_dir / TIMING, "a", encoding="utf-8") as tl:
        def write(result):
            rows, timings = result
            for row in rows:
                rep.write(dump_json(row) + "\n")
            rep.flush()
            tl.write("".join(t + "\n" for t in timings))
            tl.flush()

        if n_jobs > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=n_jobs) as pool:
                # map yields in submission order, so appends stay deterministic
                for result in pool.map(_run_job_star, [(j, cfg) for j in jobs]):
                    write(result)
        else:
            for job in jobs:
                write(run_job(job, cfg))
    return sorted(load_reports(out_dir), key=report_key)


# --------------------------------------------------------------------------
# aggregation

def _mean_sd(values):
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return math.nan, math.nan
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0


def summarize(reports: list[dict]) -> dict:
    """Aggregates keyed by (method, structure, noise)."""
    groups = defaultdict(list)
    for r in reports:
        groups[(r["method"], r["distinct_per_pattern"], r["noise_prop"])].append(r)
    out = {}
    for key in sorted(groups):
        rows = groups[key]
        ok = [r for r in rows if r.get("status") == "ok"]
        k_true = rows[0].get("k_true")
        entry = {"n": len(rows), "n_ok": len(ok), "n_error": len(rows) - len(ok),
                 "rank_hits": sum(r["k"] == k_true for r in ok),
                 "k_mean": _mean_sd([r["k"] for r in ok])[0]}
        for m in METRIC_KEYS:
            vals = [r["metrics"][m] for r in ok if r["metrics"].get(m) is not None]
            entry[m] = (*_mean_sd(vals), len(vals))
        cov = [r["coverage"] for r in ok if r.get("coverage") is not None]
        entry["coverage_median"] = float(np.median(cov)) if cov else math.nan
        entry["coverage_n"] = len(cov)
        out[key] = entry
    return out


def _fmt(v) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


def emit_tables(reports: list[dict], out_dir) -> dict[str, Path]:
    """Write the metric, rank, formatted and coverage-grid tables; returns their paths."""
    if not reports:
        raise ValueError("no reports to summarize")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = summarize(reports)
    paths = {}

    lines = ["method,distinct_per_pattern,noise_prop,metric,n,mean,sd"]
    for (method, d, s), e in summary.items():
        for m in METRIC_KEYS:
            mean, sd, n = e[m]
            lines.append(f"{method},{d},{s},{m},{n},{_fmt(mean)},{_fmt(sd)}")
    paths["metrics"] = _write(out_dir / "metrics.csv", lines)

    lines = ["method,distinct_per_pattern,noise_prop,n,n_ok,n_error,rank_hits,rank_fraction,k_mean"]
    for (method, d, s), e in summary.items():
        frac = e["rank_hits"] / e["n_ok"] if e["n_ok"] else math.nan
        lines.append(f"{method},{d},{s},{e['n']},{e['n_ok']},{e['n_error']},{e['rank_hits']},"
                     f"{_fmt(frac)},{_fmt(e['k_mean'])}")
    paths["rank"] = _write(out_dir / "rank.csv", lines)

    # mean (sd) layout, one file per metric family
    for fam in ("relerr", "cos", "ssd"):
        lines = ["method,distinct_per_pattern,noise_prop,overall,scores,loadings"]
        for (method, d, s), e in summary.items():
            cells = []
            for part in ("overall", "scores", "loadings"):
                mean, sd, n = e[f"{part}_{fam}"]
                cells.append("NA" if n == 0 else f"{mean:.2f} ({sd:.2f})")
            lines.append(f"{method},{d},{s}," + ",".join(cells))
        paths[f"table_{fam}"] = _write(out_dir / f"table_{fam}.csv", lines)

    lines = ["distinct_per_pattern,noise_prop,median_coverage,n"]
    for (method, d, s), e in summary.items():
        if method == "bn2mf":
            lines.append(f"{d},{s},{_fmt(e['coverage_median'])},{e['coverage_n']}")
    paths["coverage_grid"] = _write(out_dir / "coverage_grid.csv", lines)
    return paths


def _write(path: Path, lines: list[str]) -> Path:
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_coverage_grid(path) -> tuple[list[int], list[float], np.ndarray]:
    """Coverage grid CSV back to (structures, noise levels, median matrix)."""
    rows = [line.split(",") for line in Path(path).read_text(encoding="utf-8").splitlines()[1:] if line]
    structures = sorted({int(r[0]) for r in rows}, reverse=True)
    noises = sorted({float(r[1]) for r in rows})
    grid = np.full((len(structures), len(noises)), np.nan)
    for d, s, med, _ in rows:
        grid[structures.index(int(d)), noises.index(float(s))] = float(med) if med else np.nan
    return structures, noises, grid
