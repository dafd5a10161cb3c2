"""Flat run configuration shared by every CLI command.

A config file holds ``key = value`` lines whose keys are the field names of
:class:`RunConfig`. Unknown keys are rejected and relative paths are resolved
against the directory holding the file.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .baselines import Method
from .errors import ConfigError
from .io import apply_kv, format_kv, parse_kv
from .model import Hyperparameters
from .simgen import NOISE_LEVELS, STRUCTURES, SimSpec
from .vi import FitConfig

PATH_FIELDS = ("input", "lod")
GRID_METHODS = ("bn2mf",) + tuple(m.value for m in Method)
FULL_REPLICATES = 100


@dataclass(frozen=True)
class RunConfig:
    # data
    input: str = ""                   # CSV exposure matrix (fit, baselines, ci, bootstrap)
    lod: str = ""                     # optional column,lod file; values below LOD become LOD/sqrt(2)
    scale_sd: bool = False            # divide columns by their SD (no centering)
    # simulation
    n: int = 1000
    p: int = 40
    k: int = 4
    distinct_per_pattern: int = 10
    noise_prop: float = 0.2
    sd_mode: str = "grand"
    seed: int = 0
    # BN2MF prior
    alpha_w: float = 1.0
    beta_w: float = 1.0
    alpha_h: float = 1.0
    beta_h: float = 1.0
    beta_a: float = 1.0
    k_init: int = 0                   # 0 means P
    # BN2MF fitting
    n_restarts: int = 10
    max_sweeps: int = 100_000
    rel_tol: float = 1e-6
    t0: float = 2.0
    anneal_sweeps: int = 50
    prune_rel_threshold: float = 1e-3
    n_jobs: int = 1
    # baselines
    methods: str = "nmf_l2,nmf_p,pca,fa"
    k_candidates: str = "3,4,5"
    variance_threshold: float = 0.8
    nmf_max_iter: int = 5000
    nmf_tol: float = 1e-6
    nmf_n_init: int = 5
    fa_max_iter: int = 2000
    fa_tol: float = 1e-6
    # intervals
    n_draws: int = 1000
    level: float = 0.95
    n_boot: int = 150
    boot_method: str = "bn2mf"        # bn2mf or nmf_p
    boot_k: int = 4                   # rank for nmf_p bootstrap fits
    # grid
    structures: str = "10,0"
    noise_levels: str = "0.2"
    replicates: int = 20
    full: bool = False                # 11 x 11 grid with 100 replicates
    grid_methods: str = "bn2mf,nmf_l2,nmf_p,pca,fa"

    def __post_init__(self):
        for name in ("methods", "grid_methods"):
            bad = [m for m in _split(getattr(self, name)) if m not in GRID_METHODS]
            if bad:
                raise ConfigError(f"{name}: unknown method(s) {bad}; choose from {list(GRID_METHODS)}")
        if self.boot_method not in ("bn2mf", "nmf_p"):
            raise ConfigError("boot_method must be bn2mf or nmf_p")
        try:
            self.structure_list, self.noise_list, self.k_candidate_list
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    # ---- derived views
    @property
    def method_list(self) -> list[str]:
        return _split(self.methods)

    @property
    def grid_method_list(self) -> list[str]:
        return _split(self.grid_methods)

    @property
    def k_candidate_list(self) -> list[int]:
        return [int(v) for v in _split(self.k_candidates)]

    @property
    def structure_list(self) -> list[int]:
        return list(STRUCTURES) if self.full else [int(v) for v in _split(self.structures)]

    @property
    def noise_list(self) -> list[float]:
        return list(NOISE_LEVELS) if self.full else [float(v) for v in _split(self.noise_levels)]

    @property
    def n_replicates(self) -> int:
        return FULL_REPLICATES if self.full else self.replicates

    def hyperparameters(self) -> Hyperparameters:
        return Hyperparameters(self.alpha_w, self.beta_w, self.alpha_h, self.beta_h, self.beta_a,
                               self.k_init or None)

    def fit_config(self, seed: int | None = None) -> FitConfig:
        return FitConfig(self.n_restarts, self.max_sweeps, self.rel_tol, self.t0, self.anneal_sweeps,
                         self.prune_rel_threshold, self.seed if seed is None else seed, self.n_jobs)

    def sim_spec(self, **overrides) -> SimSpec:
        base = dict(n=self.n, p=self.p, k=self.k, distinct_per_pattern=self.distinct_per_pattern,
                    noise_prop=self.noise_prop, seed=self.seed, sd_mode=self.sd_mode)
        base.update(overrides)
        return SimSpec(**base)

    def baseline_kwargs(self, method: str) -> dict:
        if method in ("nmf_l2", "nmf_p"):
            return dict(max_iter=self.nmf_max_iter, tol=self.nmf_tol, n_init=self.nmf_n_init)
        if method == "fa":
            return dict(max_iter=self.fa_max_iter, tol=self.fa_tol)
        return dict(variance_threshold=self.variance_threshold)

    def to_text(self) -> str:
        return format_kv(asdict(self))


def _split(text: str) -> list[str]:
    return [t.strip() for t in str(text).split(",") if t.strip()]


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the file at ``path``, then ``overrides`` (already-typed values)."""
    cfg = RunConfig()
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        cfg = apply_kv(RunConfig, parse_kv(text, str(path)), base=cfg,
                       path_fields=PATH_FIELDS, root=path.resolve().parent)
    if overrides:
        names = {f.name for f in fields(RunConfig)}
        unknown = sorted(set(overrides) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            cfg = RunConfig(**{**asdict(cfg), **overrides})
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
    return cfg
