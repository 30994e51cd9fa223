"""Adaptive sampling-time design: expected-variance/covariance objectives,
the log-grid + golden-section time search, and the sequential inference loop
(adaptive and fixed-period variants).

The next sample time is chosen to minimize the expected posterior variance
(one rate) or the determinant of the expected posterior covariance matrix
(several rates), recomputed from the current posterior before every sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import bayes, chains
from .bayes import Posterior, PriorSpec
from .chains import ChainModel, Observation

LITERAL_SQUARED = "literal_squared"
STANDARD_PREDICTIVE = "standard_predictive"

_BRANCH_FLOOR = 1e-300
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class DesignConfig:
    """Knobs of one inference run.

    ``theta`` is an absolute bound on the convergence criterion for
    continuous rates and a relative multiplier of the initial covariance
    determinant for binary structure posteriors. The candidate time search
    covers ``n_candidates`` log-spaced offsets in [delta_min, delta_max],
    optionally refined by golden section.
    """

    theta: float = 0.1
    objective_weighting: str = LITERAL_SQUARED
    delta_min: float = 1e-3
    delta_max: float = 100.0
    n_candidates: int = 60
    refine: bool = True
    seed: int = 0
    grid_nodes: int = bayes.DEFAULT_GRID_NODES
    h_max: float = bayes.DEFAULT_H_MAX
    step_cap: int = 500

    def __post_init__(self):
        if self.theta <= 0:
            raise ValueError("theta must be positive")
        if not 0 < self.delta_min < self.delta_max:
            raise ValueError("need 0 < delta_min < delta_max")
        if self.objective_weighting not in (LITERAL_SQUARED, STANDARD_PREDICTIVE):
            raise ValueError(f"unknown objective weighting {self.objective_weighting!r}")

    def to_dict(self) -> dict:
        return {
            "theta": self.theta, "objective_weighting": self.objective_weighting,
            "delta_min": self.delta_min, "delta_max": self.delta_max,
            "n_candidates": self.n_candidates, "refine": self.refine,
            "seed": self.seed, "grid_nodes": self.grid_nodes,
            "h_max": self.h_max, "step_cap": self.step_cap,
        }


def config_from_dict(cfg: dict) -> DesignConfig:
    known = {f for f in DesignConfig.__dataclass_fields__}
    extra = set(cfg) - known
    if extra:
        raise ValueError(f"unknown config fields: {sorted(extra)}")
    return DesignConfig(**cfg)


@dataclass(frozen=True)
class TraceStep:
    n: int
    t: float
    state: int
    expected_objective: float
    criterion: float
    map_estimate: tuple
    mean: tuple


@dataclass
class Trace:
    steps: list[TraceStep] = field(default_factory=list)
    converged: bool = False
    threshold: float = float("nan")
    model_kind: str = ""
    d: int = 0

    @property
    def n_samples(self) -> int:
        return len(self.steps)

    @property
    def final_criterion(self) -> float:
        return self.steps[-1].criterion if self.steps else float("nan")


def trace_to_csv(trace: Trace) -> str:
    """One row per step; floats carry 17 significant digits."""
    d = trace.d
    cols = (["n", "t", "x", "objective", "det_cov"]
            + [f"map_{k}" for k in range(d)] + [f"mean_{k}" for k in range(d)])
    lines = [",".join(cols)]
    for s in trace.steps:
        vals = ([str(s.n), format(s.t, ".17g"), str(s.state),
                 format(s.expected_objective, ".17g"), format(s.criterion, ".17g")]
                + [format(v, ".17g") for v in s.map_estimate]
                + [format(v, ".17g") for v in s.mean])
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


# --- expected-objective machinery ------------------------------------------

def _support_points(post: Posterior) -> np.ndarray:
    """Rate coordinates of the posterior support, shape (N, d)."""
    if post.kind == bayes.CONFIGS:
        return post.configs
    return np.stack([H.ravel() for H in post.grid.meshes()], axis=1)


def _moment_basis(points: np.ndarray) -> np.ndarray:
    """Columns [1, h_i..., h_i*h_j (i <= j)...] for covariance accumulation."""
    n, d = points.shape
    cols = [np.ones(n)] + [points[:, i] for i in range(d)]
    for i in range(d):
        for j in range(i, d):
            cols.append(points[:, i] * points[:, j])
    return np.stack(cols, axis=1)


def _weight_field(post: Posterior, mode: str) -> np.ndarray:
    """Integration weights times the posterior factor the mode prescribes."""
    p = post.density.ravel()
    base = p * p if mode == LITERAL_SQUARED else p
    if post.kind == bayes.CONFIGS:
        return base
    return post.grid.weight_mesh().ravel() * base


def _branch_covariance_sum(branch_probs: np.ndarray, qfield: np.ndarray,
                           basis: np.ndarray, d: int) -> np.ndarray:
    """Sum over observation branches of their weighted central second moments.

    Branches whose total weight falls below 1e-300 contribute zero; if every
    branch vanishes the proposed time is outside the representable range.
    """
    S = (branch_probs * qfield) @ basis  # (n_branches, n_cols)
    alive = S[:, 0] > _BRANCH_FLOOR
    if not np.any(alive):
        raise RuntimeError("every observation branch has vanishing probability")
    S = S[alive]
    s0 = S[:, 0]
    cov = np.empty((d, d))
    col = 1 + d
    for i in range(d):
        for j in range(i, d):
            contrib = S[:, col] - S[:, 1 + i] * S[:, 1 + j] / s0
            cov[i, j] = cov[j, i] = float(np.sum(contrib))
            col += 1
    return cov


def expected_variance(post: Posterior, t: float) -> float:
    """Expected posterior variance of a single absorbing-transition rate
    after observing the chain state at time t (from reset).

    Averages the two conditional posterior variances, weighted by the
    branch probabilities of observing state 0 or 1.
    """
    if post.kind != bayes.GRID or post.grid.ndim != 1:
        raise ValueError("expected_variance needs a one-dimensional grid posterior")
    if t <= 0:
        raise ValueError("t must be positive")
    h = post.grid.axes[0]
    stay = np.exp(-h * t)
    branch_probs = np.stack([stay, 1.0 - stay])
    qfield = _weight_field(post, STANDARD_PREDICTIVE)
    basis = _moment_basis(h[:, None])
    return float(_branch_covariance_sum(branch_probs, qfield, basis, 1)[0, 0])


def expected_covariance(post: Posterior, model: ChainModel, x_prev: int,
                        dt: float, mode: str = LITERAL_SQUARED) -> np.ndarray:
    """Expected posterior covariance matrix after one more sample at lag dt.

    ``literal_squared`` weights every branch by the squared current
    posterior; ``standard_predictive`` uses the plain posterior, i.e. the
    mixture of covariances of the normalized single-step updates weighted by
    the predictive state probabilities. The branch sum runs over all states
    of the (truncated) model.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    branch = bayes.observation_likelihood(post, model, x_prev, dt)
    branch = branch.reshape(branch.shape[0], -1)
    qfield = _weight_field(post, mode)
    basis = _moment_basis(_support_points(post))
    return _branch_covariance_sum(branch, qfield, basis, post.d)


def objective(post: Posterior, model: ChainModel, x_prev: int, dt: float,
              config: DesignConfig) -> float:
    """Scalar design objective: expected variance (d = 1) or the determinant
    of the expected covariance (d >= 2)."""
    if model.d == 1:
        return expected_variance(post, dt)
    cov = expected_covariance(post, model, x_prev, dt, config.objective_weighting)
    return float(np.linalg.det(cov))


def _golden_refine(f, a: float, b: float, rel_width: float = 1e-3):
    c = b - (b - a) * _INVPHI
    d_ = a + (b - a) * _INVPHI
    fc, fd = f(c), f(d_)
    for _ in range(200):
        if (b - a) <= rel_width * 0.5 * (a + b):
            break
        if fc < fd:
            b, d_, fd = d_, c, fc
            c = b - (b - a) * _INVPHI
            fc = f(c)
        else:
            a, c, fc = c, d_, fd
            d_ = a + (b - a) * _INVPHI
            fd = f(d_)
    x = 0.5 * (a + b)
    return x, f(x)


def _tie_floor(qfield: np.ndarray, basis: np.ndarray, d: int) -> float:
    """Objective magnitudes below this are roundoff, not signal.

    The covariance entries are assembled from second-moment sums, so their
    absolute noise scales with the largest diagonal moment; the determinant
    raises that scale to the d-th power. Values under the floor are treated
    as exact zeros so flat objectives tie toward the smallest offset.
    """
    diag_cols = [1 + d + (i * (2 * d - i + 1)) // 2 for i in range(d)]
    scale = float(np.max(np.abs(qfield @ basis[:, diag_cols])))
    return 1e-13 * scale ** d


def _search_next_time(f, config: DesignConfig, tie_floor: float = 0.0):
    """Global candidate sweep plus optional local refinement.

    Returns (offset, objective value); ties break toward the smallest
    offset, and the refined point is only kept if it strictly beats the
    best candidate.
    """
    candidates = np.geomspace(config.delta_min, config.delta_max, config.n_candidates)
    values = np.array([f(t) for t in candidates])
    if tie_floor > 0.0:
        values = np.where(values <= tie_floor, 0.0, values)
    best = int(np.argmin(values))
    t_best, f_best = float(candidates[best]), float(values[best])
    if config.refine and f_best > tie_floor:
        lo = float(candidates[max(best - 1, 0)])
        hi = float(candidates[min(best + 1, len(candidates) - 1)])
        if hi > lo:
            t_ref, f_ref = _golden_refine(f, lo, hi)
            if f_ref < f_best:
                t_best, f_best = t_ref, f_ref
    return t_best, f_best


def choose_next_time(post: Posterior, model: ChainModel, x_prev: int,
                     config: DesignConfig) -> float:
    """Offset (from the current time) minimizing the design objective."""
    mode = STANDARD_PREDICTIVE if model.d == 1 else config.objective_weighting
    floor = _tie_floor(_weight_field(post, mode),
                       _moment_basis(_support_points(post)), post.d)
    return _search_next_time(
        lambda dt: objective(post, model, x_prev, dt, config), config, floor)[0]


# --- the sequential loop ----------------------------------------------------

class InferenceEngine:
    """State of one inference run, stepped observation by observation.

    The engine owns the posterior snapshot chain, the convergence rule
    (variance for one rate, covariance determinant otherwise, relative
    theta * D0 for binary structure posteriors) and the per-step trace. It
    performs no sampling itself; callers feed it observations.
    """

    def __init__(self, model: ChainModel, prior: PriorSpec | Posterior,
                 config: DesignConfig):
        if isinstance(prior, Posterior):
            post = prior.normalized()
        else:
            post = bayes.build_prior(prior, config.h_max, config.grid_nodes)
        if post.d != model.d:
            raise ValueError(f"prior dimension {post.d} != model dimension {model.d}")
        if (post.kind == bayes.CONFIGS) != (model.kind == chains.BINARY):
            raise ValueError("binary models pair with structure priors only")
        self.model = model
        self.config = config
        self.posterior = post
        self.x_prev = model.initial_state
        self.t_last = 0.0
        self.steps: list[TraceStep] = []
        self._basis = _moment_basis(_support_points(post))
        meshes = None if post.kind == bayes.CONFIGS else post.grid.meshes()
        self._branches = chains.BranchProbCache(model, meshes)
        self.initial_criterion = self.criterion_value()

    @property
    def relative_threshold(self) -> bool:
        return self.posterior.kind == bayes.CONFIGS

    @property
    def threshold(self) -> float:
        if self.relative_threshold:
            return self.config.theta * self.initial_criterion
        return self.config.theta

    def criterion_value(self) -> float:
        if self.model.d == 1:
            return bayes.posterior_variance(self.posterior)
        return float(np.linalg.det(bayes.posterior_covariance(self.posterior)))

    def converged(self) -> bool:
        return self.criterion_value() <= self.threshold

    def _weight_mode(self) -> str:
        # The one-rate expected-variance formula carries a single posterior
        # factor; the weighting choice only exists for d >= 2.
        if self.model.d == 1:
            return STANDARD_PREDICTIVE
        return self.config.objective_weighting

    def _objective(self, dt: float) -> float:
        branch = self._branches.branch_probs(self.x_prev, dt)
        cov = _branch_covariance_sum(branch, self._qfield, self._basis,
                                     self.posterior.d)
        if self.model.d == 1:
            return float(cov[0, 0])
        return float(np.linalg.det(cov))

    def recommend(self) -> tuple[float, float]:
        """(offset, objective value) of the next recommended sample time."""
        self._qfield = _weight_field(self.posterior, self._weight_mode())
        floor = _tie_floor(self._qfield, self._basis, self.posterior.d)
        return _search_next_time(self._objective, self.config, floor)

    def observation_dt(self, t_obs: float) -> float:
        if self.model.protocol == chains.RESET_EACH_SAMPLE:
            return t_obs
        return t_obs - self.t_last

    def apply_observation(self, t_obs: float, state: int) -> TraceStep:
        """Bayes-update with an observation taken at absolute time ``t_obs``
        (time since reset under the reset protocol)."""
        dt = self.observation_dt(t_obs)
        if dt <= 0:
            raise ValueError("observation time must advance past the last sample")
        self._qfield = _weight_field(self.posterior, self._weight_mode())
        expected_obj = self._objective(dt)
        self.posterior = bayes.bayes_update(
            self.posterior, self.model, self.x_prev,
            Observation(t=t_obs, x=state), prev_time=self.t_last)
        if self.model.protocol == chains.CONTINUOUS_TRAJECTORY:
            self.t_last = t_obs
            self.x_prev = state
        step = TraceStep(
            n=len(self.steps) + 1, t=t_obs, state=state,
            expected_objective=expected_obj, criterion=self.criterion_value(),
            map_estimate=tuple(bayes.map_estimate(self.posterior)),
            mean=tuple(bayes.posterior_mean(self.posterior)))
        self.steps.append(step)
        return step

    def trace(self) -> Trace:
        return Trace(steps=list(self.steps), converged=self.converged(),
                     threshold=self.threshold, model_kind=self.model.kind,
                     d=self.model.d)


class SimulatedObserver:
    """Observation source backed by exact transition sampling at true rates.

    Tracks the largest probability any requested draw put on the truncated
    chain's cap state, so harness runs can assert the truncation was
    immaterial.
    """

    def __init__(self, model: ChainModel, h_true, seed):
        self.model = model
        self.h_true = np.asarray(h_true, dtype=float)
        self.rng = np.random.default_rng(seed)
        self.max_cap_mass = 0.0
        self.max_state = 0

    def __call__(self, x_prev: int, t_abs: float, dt: float) -> int:
        if self.model.kind == chains.BINARY:
            gen = chains.build_generator(self.model, self.h_true)
            row = chains.expm_batch(gen[None], dt)[0, x_prev]
        else:
            row = chains.transition_row(self.model, self.h_true, x_prev, dt)
        if self.model.kind == chains.MM1:
            self.max_cap_mass = max(self.max_cap_mass, float(row[-1]))
        cum = np.cumsum(row)
        state = int(np.searchsorted(cum, self.rng.random() * cum[-1], side="right"))
        state = min(state, self.model.n_states - 1)
        self.max_state = max(self.max_state, state)
        return state


def run_adaptive(model: ChainModel, prior: PriorSpec | Posterior,
                 config: DesignConfig, observer) -> Trace:
    """Sequential adaptive inference until the convergence criterion falls
    below its threshold (or the step cap is hit, leaving converged=False).

    ``observer(x_prev, t_abs, dt) -> state`` supplies observations; use
    :class:`SimulatedObserver` for simulation-backed runs.
    """
    engine = InferenceEngine(model, prior, config)
    while not engine.converged() and len(engine.steps) < config.step_cap:
        offset, _ = engine.recommend()
        t_obs = _next_absolute_time(engine, offset)
        state = observer(engine.x_prev, t_obs, offset)
        engine.apply_observation(t_obs, state)
    return engine.trace()


def run_periodic(model: ChainModel, prior: PriorSpec | Posterior,
                 config: DesignConfig, period: float, observer) -> Trace:
    """Fixed-period variant: the same loop with every offset equal to T."""
    if period <= 0:
        raise ValueError("period must be positive")
    engine = InferenceEngine(model, prior, config)
    while not engine.converged() and len(engine.steps) < config.step_cap:
        t_obs = _next_absolute_time(engine, period)
        state = observer(engine.x_prev, t_obs, period)
        engine.apply_observation(t_obs, state)
    return engine.trace()


def _next_absolute_time(engine: InferenceEngine, offset: float) -> float:
    if engine.model.protocol == chains.RESET_EACH_SAMPLE:
        return offset
    return engine.t_last + offset
