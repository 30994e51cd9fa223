"""Batch Monte-Carlo studies: periodic-vs-adaptive comparisons, fixed-rate
heatmaps, tolerance sweeps, ring-size sweeps and binary-structure sweeps,
with deterministic seeding and long-format CSV output.

Study specifications are JSON files; see ``specs/`` for one example per
study kind and the README for the schema. A master seed (overridable via
the ``ADAPTRATE_SEED`` environment variable) drives per-replicate seed
sequences, so a study's CSV is byte-identical across repeat runs and
worker counts.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bayes, chains, design
from .bayes import BernoulliStructurePrior, PriorSpec
from .chains import ChainModel
from .design import DesignConfig, Trace

SEED_ENV_VAR = "ADAPTRATE_SEED"
MAX_CAP_MASS = 1e-6

PERIODIC_VS_ADAPTIVE = "periodic_vs_adaptive"
FIXED_RATE_HEATMAP = "fixed_rate_heatmap"
TOLERANCE_SWEEP = "tolerance_sweep"
RING_SIZE_SWEEP = "ring_size_sweep"
BINARY_STRUCTURE_SWEEP = "binary_structure_sweep"

STUDY_KINDS = (PERIODIC_VS_ADAPTIVE, FIXED_RATE_HEATMAP, TOLERANCE_SWEEP,
               RING_SIZE_SWEEP, BINARY_STRUCTURE_SWEEP)

# Fixed long-format CSV schema, identical across study kinds; cells that do
# not apply to a study stay empty.
CSV_COLUMNS = (
    "study", "model", "algorithm", "period", "theta", "m", "p", "d",
    "h_true_0", "h_true_1", "replicates", "capped", "ns_mean", "ns_se",
    "mse0_mean", "mse0_se", "mse1_mean", "mse1_se", "mae_mean", "mae_se",
)


@dataclass(frozen=True)
class StudySpec:
    study: str
    model: ChainModel
    prior: PriorSpec
    config: DesignConfig
    replicates: int
    seed: int = 0
    periods: tuple[float, ...] = ()
    thetas: tuple[float, ...] = ()
    rate_points: tuple[tuple[float, ...], ...] = ()
    ring_sizes: tuple[int, ...] = ()
    bernoulli_ps: tuple[float, ...] = ()
    edge_counts: tuple[int, ...] = ()

    def __post_init__(self):
        if self.study not in STUDY_KINDS:
            raise ValueError(f"unknown study kind {self.study!r}")
        if self.replicates < 1:
            raise ValueError("replicate count must be at least 1")
        needed = {
            PERIODIC_VS_ADAPTIVE: self.periods,
            FIXED_RATE_HEATMAP: self.rate_points,
            TOLERANCE_SWEEP: self.thetas,
            RING_SIZE_SWEEP: self.ring_sizes,
            BINARY_STRUCTURE_SWEEP: self.bernoulli_ps and self.edge_counts,
        }[self.study]
        if not needed:
            raise ValueError(f"study {self.study!r} is missing its sweep range")


def spec_from_dict(cfg: dict) -> StudySpec:
    model = chains.model_from_config(cfg["model"])
    prior = bayes.prior_from_config(cfg["prior"])
    config = design.config_from_dict(cfg.get("config", {}))
    return StudySpec(
        study=cfg["study"], model=model, prior=prior, config=config,
        replicates=int(cfg["replicates"]), seed=int(cfg.get("seed", 0)),
        periods=tuple(float(t) for t in cfg.get("periods", ())),
        thetas=tuple(float(t) for t in cfg.get("thetas", ())),
        rate_points=tuple(tuple(float(v) for v in pt)
                          for pt in cfg.get("rate_points", ())),
        ring_sizes=tuple(int(m) for m in cfg.get("ring_sizes", ())),
        bernoulli_ps=tuple(float(p) for p in cfg.get("bernoulli_ps", ())),
        edge_counts=tuple(int(d) for d in cfg.get("edge_counts", ())),
    )


def load_spec(path: str) -> StudySpec:
    with open(path) as f:
        return spec_from_dict(json.load(f))


def master_seed(spec: StudySpec, override: int | None = None) -> int:
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        return int(env)
    if override is not None:
        return override
    return spec.seed


@dataclass
class ReplicateOutcome:
    n_samples: int
    capped: bool
    mse: tuple[float, ...] = ()
    mae: float | None = None


@dataclass
class StudyRow:
    study: str
    model: str
    algorithm: str
    period: float | None = None
    theta: float | None = None
    m: int | None = None
    p: float | None = None
    d: int | None = None
    h_true: tuple[float, ...] | None = None
    outcomes: list[ReplicateOutcome] = field(default_factory=list)

    def cells(self) -> dict:
        ns = np.array([o.n_samples for o in self.outcomes], dtype=float)
        capped = sum(o.capped for o in self.outcomes)
        cells = {
            "study": self.study, "model": self.model, "algorithm": self.algorithm,
            "period": self.period, "theta": self.theta, "m": self.m,
            "p": self.p, "d": self.d,
            "h_true_0": self.h_true[0] if self.h_true else None,
            "h_true_1": (self.h_true[1] if self.h_true and len(self.h_true) > 1
                         else None),
            "replicates": len(self.outcomes), "capped": capped,
            "ns_mean": float(ns.mean()), "ns_se": _stderr(ns),
            "mse0_mean": None, "mse0_se": None,
            "mse1_mean": None, "mse1_se": None,
            "mae_mean": None, "mae_se": None,
        }
        if self.outcomes[0].mse:
            per_rate = np.array([o.mse for o in self.outcomes], dtype=float)
            for k in range(min(2, per_rate.shape[1])):
                cells[f"mse{k}_mean"] = float(per_rate[:, k].mean())
                cells[f"mse{k}_se"] = _stderr(per_rate[:, k])
        if self.outcomes[0].mae is not None:
            maes = np.array([o.mae for o in self.outcomes], dtype=float)
            cells["mae_mean"] = float(maes.mean())
            cells["mae_se"] = _stderr(maes)
        return cells


@dataclass
class StudyResult:
    spec: StudySpec
    rows: list[StudyRow]


def _stderr(values: np.ndarray) -> float:
    if values.size < 2:
        return 0.0
    return float(values.std(ddof=1) / math.sqrt(values.size))


def _replicate_seed(master: int, *key) -> np.random.SeedSequence:
    return np.random.SeedSequence(master, spawn_key=tuple(int(k) for k in key))


def _outcome_from_trace(trace: Trace, observer: design.SimulatedObserver,
                        model: ChainModel, h_true: np.ndarray,
                        posterior: bayes.Posterior) -> ReplicateOutcome:
    if model.kind == chains.MM1 and observer.max_cap_mass >= MAX_CAP_MASS:
        raise RuntimeError(
            f"truncated state space visited: cap mass {observer.max_cap_mass:.2e}")
    capped = not trace.converged
    if posterior.kind == bayes.CONFIGS:
        err = bayes.mae(bayes.map_estimate(posterior), h_true, model.d)
        return ReplicateOutcome(trace.n_samples, capped, mae=err)
    mses = tuple(bayes.mse(posterior, h_true, k) for k in range(model.d))
    return ReplicateOutcome(trace.n_samples, capped, mse=mses)


def _run_one(model: ChainModel, prior_post: bayes.Posterior, config: DesignConfig,
             h_true: np.ndarray, obs_seed: np.random.SeedSequence,
             period: float | None) -> ReplicateOutcome:
    observer = design.SimulatedObserver(model, h_true, obs_seed)
    engine = design.InferenceEngine(model, prior_post, config)
    while not engine.converged() and len(engine.steps) < config.step_cap:
        offset = period if period is not None else engine.recommend()[0]
        t_obs = (offset if model.protocol == chains.RESET_EACH_SAMPLE
                 else engine.t_last + offset)
        state = observer(engine.x_prev, t_obs, offset)
        engine.apply_observation(t_obs, state)
    return _outcome_from_trace(engine.trace(), observer, model, h_true,
                               engine.posterior)


def _prior_posterior(spec: StudySpec) -> bayes.Posterior:
    return bayes.build_prior(spec.prior, spec.config.h_max, spec.config.grid_nodes)


# --- per-kind study drivers -------------------------------------------------

def _tasks_periodic_vs_adaptive(spec: StudySpec, master: int):
    arms = [("adaptive", None)] + [("periodic", T) for T in spec.periods]
    prior_post = _prior_posterior(spec)
    tasks = []
    for rep in range(spec.replicates):
        h_true = bayes.sample_prior(spec.prior, np.random.default_rng(
            _replicate_seed(master, rep, 0)), spec.config.h_max)
        for arm_idx, (_, period) in enumerate(arms):
            tasks.append(((arm_idx, rep),
                          (spec.model, prior_post, spec.config, h_true,
                           _replicate_seed(master, rep, 1, arm_idx), period)))

    def collect(results):
        rows = []
        for arm_idx, (name, period) in enumerate(arms):
            row = StudyRow(spec.study, spec.model.kind, name, period=period,
                           theta=spec.config.theta)
            row.outcomes = [results[(arm_idx, rep)] for rep in range(spec.replicates)]
            rows.append(row)
        return rows

    return tasks, collect


def _tasks_tolerance_sweep(spec: StudySpec, master: int):
    prior_post = _prior_posterior(spec)
    configs = {theta: DesignConfig(**{**spec.config.to_dict(), "theta": theta})
               for theta in spec.thetas}
    tasks = []
    for rep in range(spec.replicates):
        h_true = bayes.sample_prior(spec.prior, np.random.default_rng(
            _replicate_seed(master, rep, 0)), spec.config.h_max)
        for t_idx, theta in enumerate(spec.thetas):
            tasks.append(((t_idx, rep),
                          (spec.model, prior_post, configs[theta], h_true,
                           _replicate_seed(master, rep, 1, t_idx), None)))

    def collect(results):
        rows = []
        for t_idx, theta in enumerate(spec.thetas):
            row = StudyRow(spec.study, spec.model.kind, "adaptive", theta=theta)
            row.outcomes = [results[(t_idx, rep)] for rep in range(spec.replicates)]
            rows.append(row)
        return rows

    return tasks, collect


def _tasks_fixed_rate_heatmap(spec: StudySpec, master: int):
    prior_post = _prior_posterior(spec)
    tasks = []
    for pt_idx, point in enumerate(spec.rate_points):
        h_true = np.asarray(point, dtype=float)
        if h_true.size != spec.model.d:
            raise ValueError(f"rate point {point} has wrong dimension")
        for rep in range(spec.replicates):
            tasks.append(((pt_idx, rep),
                          (spec.model, prior_post, spec.config, h_true,
                           _replicate_seed(master, pt_idx, rep), None)))

    def collect(results):
        rows = []
        for pt_idx, point in enumerate(spec.rate_points):
            row = StudyRow(spec.study, spec.model.kind, "adaptive",
                           theta=spec.config.theta, h_true=tuple(point))
            row.outcomes = [results[(pt_idx, rep)] for rep in range(spec.replicates)]
            rows.append(row)
        return rows

    return tasks, collect


def _tasks_ring_size_sweep(spec: StudySpec, master: int):
    prior_post = _prior_posterior(spec)
    models = {m: chains.ring(m) for m in spec.ring_sizes}
    tasks = []
    for rep in range(spec.replicates):
        h_true = bayes.sample_prior(spec.prior, np.random.default_rng(
            _replicate_seed(master, rep, 0)), spec.config.h_max)
        for m_idx, m in enumerate(spec.ring_sizes):
            tasks.append(((m_idx, rep),
                          (models[m], prior_post, spec.config, h_true,
                           _replicate_seed(master, rep, 1, m_idx), None)))

    def collect(results):
        rows = []
        for m_idx, m in enumerate(spec.ring_sizes):
            row = StudyRow(spec.study, chains.RING, "adaptive", m=m,
                           theta=spec.config.theta)
            row.outcomes = [results[(m_idx, rep)] for rep in range(spec.replicates)]
            rows.append(row)
        return rows

    return tasks, collect


def _random_structure(d_max: int, n_edges: int, rng) -> np.ndarray:
    """Uniform draw among digraph structures with exactly n_edges links."""
    bits = np.zeros(d_max)
    bits[rng.choice(d_max, size=n_edges, replace=False)] = 1.0
    return bits


def _tasks_binary_structure_sweep(spec: StudySpec, master: int):
    if spec.model.kind != chains.BINARY:
        raise ValueError("binary structure sweeps need a binary model")
    d_max = spec.model.d
    priors = {p: bayes.build_prior(BernoulliStructurePrior(p, spec.model.n_states))
              for p in spec.bernoulli_ps}
    tasks = []
    for p_idx, p in enumerate(spec.bernoulli_ps):
        for d_idx, n_edges in enumerate(spec.edge_counts):
            if not 0 <= n_edges <= d_max:
                raise ValueError(f"edge count {n_edges} outside 0..{d_max}")
            for rep in range(spec.replicates):
                rng = np.random.default_rng(
                    _replicate_seed(master, p_idx, d_idx, rep, 0))
                h_true = _random_structure(d_max, n_edges, rng)
                tasks.append(((p_idx, d_idx, rep),
                              (spec.model, priors[p], spec.config, h_true,
                               _replicate_seed(master, p_idx, d_idx, rep, 1), None)))

    def collect(results):
        rows = []
        for p_idx, p in enumerate(spec.bernoulli_ps):
            for d_idx, n_edges in enumerate(spec.edge_counts):
                row = StudyRow(spec.study, chains.BINARY, "adaptive",
                               m=spec.model.n_states, p=p, d=n_edges,
                               theta=spec.config.theta)
                row.outcomes = [results[(p_idx, d_idx, rep)]
                                for rep in range(spec.replicates)]
                rows.append(row)
        return rows

    return tasks, collect


_TASK_BUILDERS = {
    PERIODIC_VS_ADAPTIVE: _tasks_periodic_vs_adaptive,
    TOLERANCE_SWEEP: _tasks_tolerance_sweep,
    FIXED_RATE_HEATMAP: _tasks_fixed_rate_heatmap,
    RING_SIZE_SWEEP: _tasks_ring_size_sweep,
    BINARY_STRUCTURE_SWEEP: _tasks_binary_structure_sweep,
}


def _run_task(args) -> ReplicateOutcome:
    return _run_one(*args)


def run_study(spec: StudySpec, seed: int | None = None,
              threads: int = 1) -> StudyResult:
    """Execute every replicate and aggregate per sweep coordinate.

    Replicates run under a bounded worker pool; results are keyed by
    replicate index, so aggregation order (and the emitted CSV) does not
    depend on completion order. Runs that hit the step cap are recorded in
    the ``capped`` column rather than dropped.
    """
    master = master_seed(spec, seed)
    tasks, collect = _TASK_BUILDERS[spec.study](spec, master)
    keys = [key for key, _ in tasks]
    argses = [args for _, args in tasks]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(_run_task, argses, chunksize=4))
    else:
        outcomes = [_run_task(args) for args in argses]
    results = dict(zip(keys, outcomes))
    return StudyResult(spec, collect(results))


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def emit_csv(result: StudyResult, path: str | None = None) -> str:
    """Long-format CSV with the fixed column order of ``CSV_COLUMNS``."""
    lines = [",".join(CSV_COLUMNS)]
    for row in result.rows:
        cells = row.cells()
        lines.append(",".join(_format_cell(cells[c]) for c in CSV_COLUMNS))
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w") as f:
            f.write(text)
    return text


def read_csv_rows(path: str) -> list[dict]:
    """Round-trip reader for emitted study CSVs (strings kept verbatim)."""
    with open(path) as f:
        lines = f.read().splitlines()
    header = lines[0].split(",")
    return [dict(zip(header, line.split(","))) for line in lines[1:]]


def bootstrap_mean_interval(values, n_boot: int = 2000, seed: int = 0,
                            level: float = 0.95) -> tuple[float, float]:
    """Percentile bootstrap confidence interval for a sample mean.

    Statistical acceptance of the paper-style claims compares Monte-Carlo
    means through these intervals rather than point equality.
    """
    values = np.asarray(values, dtype=float)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, values.size, size=(n_boot, values.size))
    means = values[idx].mean(axis=1)
    tail = 100.0 * (1.0 - level) / 2.0
    return (float(np.percentile(means, tail)),
            float(np.percentile(means, 100.0 - tail)))
