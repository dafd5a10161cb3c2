"""Command-line interface.

Every RunConfig field is available as a ``--kebab-case`` option; options given
on the command line override ``--config``, which overrides the defaults.
Exit codes: 0 success, 1 usage or input error, 2 numerical or fitting failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import fit_baseline, select_by_bic
from .config import RunConfig, load_config
from .errors import ConfigError, FitError, NumericalError, ParseError
from .io import load_csv, load_lod, preprocess, write_csv, write_json, write_matrix
from .simgen import gen_dataset
from .uncertainty import bn2mf_fitter, bootstrap_ci, normalize_and_scale, nmf_poisson_fitter, variational_ci
from .vi import fit

log = logging.getLogger("bn2mf")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
UNIVERSAL = ("seed",)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value file of RunConfig fields")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("-v", "--verbose", action="store_true")
    opts = p.add_argument_group("run configuration")
    for f in fields(RunConfig):
        kind = type(f.default)
        opts.add_argument("--" + f.name.replace("_", "-"), dest=f.name, default=None,
                          type=_bool if kind is bool else kind, metavar=kind.__name__.upper(),
                          help=f"default: {f.default!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bn2mf", description="Bayesian non-parametric NMF with confidence intervals.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    helps = {
        "simulate": "generate one simulated dataset with its truth",
        "fit": "fit BN2MF to --input",
        "baselines": "fit the comparison methods to --input",
        "ci": "fit BN2MF and compute variational intervals for scaled scores",
        "bootstrap": "case-resampling bootstrap intervals for scaled scores",
        "grid": "run (or resume) a simulation grid and write tables",
        "report": "rebuild tables and figures from a grid directory",
    }
    for name, text in helps.items():
        _add_common(sub.add_parser(name, help=text, description=text))
    return parser


# --------------------------------------------------------------------------
# helpers

def _load_input(cfg: RunConfig):
    if not cfg.input:
        raise UsageError("this command needs --input (or 'input' in the config file)")
    x = load_csv(cfg.input)
    lod = load_lod(cfg.lod, x.col_ids) if cfg.lod else None
    if lod is not None or cfg.scale_sd:
        try:
            x = preprocess(x, lod=lod, scale_sd=cfg.scale_sd)
        except ValueError as exc:
            raise ParseError(str(exc)) from None
    return x


def _components(k: int) -> list[str]:
    return [f"pattern{i + 1}" for i in range(k)]


def _write_solution(out: Path, prefix: str, x, scores, loadings):
    scaled, normalized = normalize_and_scale(scores, loadings)
    comps = _components(loadings.shape[0])
    write_csv(out / f"{prefix}scores.csv", scores, x.row_ids, comps)
    write_csv(out / f"{prefix}loadings.csv", loadings, comps, x.col_ids, index_name="pattern")
    write_csv(out / f"{prefix}scaled_scores.csv", scaled, x.row_ids, comps)
    write_csv(out / f"{prefix}normalized_loadings.csv", normalized, comps, x.col_ids, index_name="pattern")
    return scaled, normalized


def _fit_summary(res) -> dict:
    return {"k_effective": res.k_effective, "elbo": res.elbo, "sweeps": res.sweeps_used,
            "converged": res.converged, "best_restart": res.restart_index,
            "restarts": [{"index": r.index, "seed": r.seed, "elbo": r.elbo, "sweeps": r.sweeps,
                          "converged": r.converged, "error": r.error} for r in res.restarts],
            "version": __version__}


def _write_intervals(out: Path, prefix: str, x, ci, extra: dict):
    comps = _components(ci.mean.shape[1])
    for name in ("mean", "lower", "upper"):
        write_csv(out / f"{prefix}{name}.csv", getattr(ci, name), x.row_ids, comps)
    write_json(out / f"{prefix}summary.json",
               {**extra, "n_draws": ci.n_draws, "level": ci.level, "warnings": list(ci.warnings),
                "missing_rows": int(ci.missing.any(axis=1).sum()), "version": __version__})


# --------------------------------------------------------------------------
# commands

def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    truth = gen_dataset(cfg.sim_spec())
    n, k = truth.scores_true.shape
    rows = [f"r{i + 1}" for i in range(n)]
    cols = [f"c{j + 1}" for j in range(truth.x_noisy.shape[1])]
    comps = _components(k)
    write_csv(out / "x_noisy.csv", truth.x_noisy, rows, cols)
    write_csv(out / "x_clean.csv", truth.x_clean, rows, cols)
    write_csv(out / "scores_true.csv", truth.scores_true, rows, comps)
    write_csv(out / "loadings_true.csv", truth.loadings_true, comps, cols, index_name="pattern")
    (out / "simulation.cfg").write_text("".join(f"{a} = {b}\n" for a, b in truth.spec.to_dict().items())
                                        + f"noise_sigma = {truth.noise_sigma!r}\n", encoding="utf-8")
    print(f"wrote simulated {n}x{len(cols)} dataset (k={k}) to {out}")
    return EXIT_OK


def cmd_fit(cfg: RunConfig, out: Path) -> int:
    from .plotting import loadings_bars

    x = _load_input(cfg)
    res = fit(x, cfg.hyperparameters(), cfg.fit_config())
    _, normalized = _write_solution(out, "", x, res.scores, res.loadings)
    write_json(out / "fit.json", _fit_summary(res))
    loadings_bars(normalized, x.col_ids, out / "loadings.png")
    print(f"k_effective={res.k_effective} elbo={res.elbo:.6g} sweeps={res.sweeps_used} "
          f"converged={res.converged}")
    return EXIT_OK


def cmd_baselines(cfg: RunConfig, out: Path) -> int:
    x = _load_input(cfg)
    summary = {}
    for method in cfg.method_list:
        if method == "bn2mf":
            continue
        kw = cfg.baseline_kwargs(method)
        if method == "pca":
            res = fit_baseline(x, method, 0, **kw)
        else:
            if method != "fa":
                kw["seed"] = cfg.seed
            res = select_by_bic(x, method, cfg.k_candidate_list, **kw)
        comps = _components(res.k)
        write_csv(out / f"{method}_scores.csv", res.scores, x.row_ids, comps)
        write_csv(out / f"{method}_loadings.csv", res.loadings, comps, x.col_ids, index_name="pattern")
        summary[method] = {"k": res.k, "selection_stat": res.selection_stat, "converged": res.converged,
                           "n_iter": res.n_iter, "loglik": res.loglik,
                           "failures": res.info.get("failures", []), "heywood": res.info.get("heywood")}
        print(f"{method}: k={res.k} stat={res.selection_stat:.6g} converged={res.converged}")
    write_json(out / "baselines.json", {"methods": summary, "version": __version__})
    return EXIT_OK


def cmd_ci(cfg: RunConfig, out: Path) -> int:
    from .plotting import loadings_bars, score_intervals

    x = _load_input(cfg)
    res = fit(x, cfg.hyperparameters(), cfg.fit_config())
    _, normalized = _write_solution(out, "", x, res.scores, res.loadings)
    ci = variational_ci(res.state, cfg.n_draws, seed=cfg.seed, level=cfg.level)
    _write_intervals(out, "ci_", x, ci, {"method": "variational", **_fit_summary(res)})
    loadings_bars(normalized, x.col_ids, out / "loadings.png")
    score_intervals(ci, out / "score_intervals.png")
    print(f"k_effective={res.k_effective}; {cfg.level:.0%} variational intervals from {ci.n_draws} draws")
    return EXIT_OK


def cmd_bootstrap(cfg: RunConfig, out: Path) -> int:
    from .plotting import score_intervals

    x = _load_input(cfg)
    if cfg.boot_method == "bn2mf":
        fitter = bn2mf_fitter(cfg.hyperparameters(), cfg.fit_config())
    else:
        fitter = nmf_poisson_fitter(cfg.boot_k, **cfg.baseline_kwargs("nmf_p"))
    ci = bootstrap_ci(x.values, fitter, n_boot=cfg.n_boot, seed=cfg.seed, level=cfg.level)
    _write_intervals(out, "boot_", x, ci, {"method": f"bootstrap_{cfg.boot_method}",
                                           "n_boot_requested": cfg.n_boot})
    score_intervals(ci, out / "boot_score_intervals.png")
    print(f"{ci.n_draws} of {cfg.n_boot} resamples used; {int(ci.missing.any(axis=1).sum())} rows never sampled")
    return EXIT_OK


def _tables_and_figures(reports, out: Path):
    from .experiment import emit_tables, read_coverage_grid
    from .plotting import coverage_heatmap

    paths = emit_tables(reports, out)
    structures, noises, grid = read_coverage_grid(paths["coverage_grid"])
    if grid.size:
        coverage_heatmap(structures, noises, grid, out / "coverage_heatmap.png")
    return paths


def cmd_grid(cfg: RunConfig, out: Path) -> int:
    from .experiment import run_grid

    reports = run_grid(cfg, out)
    _tables_and_figures(reports, out)
    n_err = sum(r.get("status") != "ok" for r in reports)
    print(f"{len(reports)} report rows in {out} ({n_err} failed)")
    return EXIT_OK


def cmd_report(cfg: RunConfig, out: Path) -> int:
    from .experiment import load_reports, report_key

    reports = sorted(load_reports(out), key=report_key)
    if not reports:
        raise UsageError(f"no reports found in {out}")
    paths = _tables_and_figures(reports, out)
    print("wrote " + ", ".join(sorted(p.name for p in paths.values())))
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "baselines": cmd_baselines, "ci": cmd_ci,
            "bootstrap": cmd_bootstrap, "grid": cmd_grid, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig) if getattr(args, f.name) is not None}
    try:
        cfg = load_config(args.config, overrides)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except (UsageError, ConfigError, ParseError, FileNotFoundError) as exc:
        print(f"bn2mf {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, FitError, np.linalg.LinAlgError) as exc:
        print(f"bn2mf {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"bn2mf {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
