"""Markov chain families: generators, exact transition probabilities, sampling.

Supported chain kinds:

* ``two_state_unidirectional``: states {0, 1}, single rate h0, state 1
  absorbing; the process restarts at state 0 before every sample.
* ``two_state_bidirectional``: states {0, 1} with forward rate h0 and
  backward rate h1, observed along one continuous trajectory.
* ``mm1``: birth-death queue on {0, 1, 2, ...} with birth rate lam below
  death rate mu, truncated at ``state_cap`` wherever a finite matrix is
  needed.
* ``ring``: m states on a cycle with clockwise rate h_plus and
  counterclockwise rate h_minus.
* ``binary``: m states with one rate per ordered pair of distinct states,
  used for structure inference with rates restricted to {0, 1}.

Everything here is pure: randomness enters only through an explicit
``numpy.random.Generator``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import expm
from scipy.special import gammainc, gammaln, ive

RESET_EACH_SAMPLE = "reset_each_sample"
CONTINUOUS_TRAJECTORY = "continuous_trajectory"

UNIDIRECTIONAL = "two_state_unidirectional"
BIDIRECTIONAL = "two_state_bidirectional"
MM1 = "mm1"
RING = "ring"
BINARY = "binary"

# Series controls for the birth-death transition probability: terms are
# dropped once below this fraction of the running sum, with a hard cap.
BESSEL_TERM_RTOL = 1e-14
BESSEL_TERM_CAP = 10_000


@dataclass(frozen=True)
class ChainModel:
    """One chain family instance: state space, free rates, sampling protocol.

    ``n_states`` is the size of the (possibly truncated) state space; for
    the mm1 queue it equals ``state_cap + 1``.
    """

    kind: str
    n_states: int
    d: int
    protocol: str
    initial_state: int = 0
    state_cap: int | None = None
    edges: tuple[tuple[int, int], ...] | None = None

    def rate_labels(self) -> tuple[str, ...]:
        if self.kind == UNIDIRECTIONAL:
            return ("h0",)
        if self.kind == BIDIRECTIONAL:
            return ("h0", "h1")
        if self.kind == MM1:
            return ("lam", "mu")
        if self.kind == RING:
            return ("h_plus", "h_minus")
        return tuple(f"{i}->{j}" for i, j in self.edges)

    def to_config(self) -> dict:
        """Serializable description (the schema the harness documents)."""
        cfg = {"kind": self.kind, "protocol": self.protocol}
        if self.kind == MM1:
            cfg["state_cap"] = self.state_cap
        elif self.kind in (RING, BINARY):
            cfg["m"] = self.n_states
        if self.kind == BINARY:
            cfg["edges"] = [list(e) for e in self.edges]
        return cfg


@dataclass(frozen=True)
class RateVector:
    """Rate values (units 1/time) with per-index labels."""

    values: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 1 or len(self.labels) != vals.size:
            raise ValueError("rate values and labels must align")
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise ValueError("rates must be finite and nonnegative")


@dataclass(frozen=True)
class Observation:
    """A single (time, state) sample."""

    t: float
    x: int


def two_state_unidirectional() -> ChainModel:
    return ChainModel(UNIDIRECTIONAL, n_states=2, d=1, protocol=RESET_EACH_SAMPLE)


def two_state_bidirectional() -> ChainModel:
    return ChainModel(BIDIRECTIONAL, n_states=2, d=2, protocol=CONTINUOUS_TRAJECTORY)


def mm1_queue(state_cap: int = 50) -> ChainModel:
    if state_cap < 10:
        raise ValueError("state_cap must be at least 10")
    return ChainModel(
        MM1, n_states=state_cap + 1, d=2, protocol=CONTINUOUS_TRAJECTORY,
        state_cap=state_cap,
    )


def ring(m: int) -> ChainModel:
    if m < 2:
        raise ValueError("ring size must be at least 2")
    return ChainModel(RING, n_states=m, d=2, protocol=CONTINUOUS_TRAJECTORY)


def all_ordered_pairs(m: int) -> tuple[tuple[int, int], ...]:
    """Row-major enumeration of directed pairs: (0,1), (0,2), ..., (1,0), ..."""
    return tuple((i, j) for i in range(m) for j in range(m) if i != j)


def binary_digraph(m: int) -> ChainModel:
    if m < 2:
        raise ValueError("digraph size must be at least 2")
    return ChainModel(
        BINARY, n_states=m, d=m * (m - 1), protocol=CONTINUOUS_TRAJECTORY,
        edges=all_ordered_pairs(m),
    )


def model_from_config(cfg: dict) -> ChainModel:
    """Inverse of :meth:`ChainModel.to_config`."""
    kind = cfg.get("kind")
    if kind == UNIDIRECTIONAL:
        return two_state_unidirectional()
    if kind == BIDIRECTIONAL:
        return two_state_bidirectional()
    if kind == MM1:
        return mm1_queue(int(cfg.get("state_cap", 50)))
    if kind == RING:
        return ring(int(cfg["m"]))
    if kind == BINARY:
        return binary_digraph(int(cfg["m"]))
    raise ValueError(f"unknown chain kind: {kind!r}")


def rate_vector(model: ChainModel, values) -> RateVector:
    return RateVector(np.asarray(values, dtype=float), model.rate_labels())


def _values(h) -> np.ndarray:
    vals = np.asarray(h.values if isinstance(h, RateVector) else h, dtype=float)
    if np.any(vals < 0):
        raise ValueError("rates must be nonnegative")
    return vals


def build_generator(model: ChainModel, h) -> np.ndarray:
    """Infinitesimal generator matrix; rows sum to zero.

    The mm1 generator is truncated at ``state_cap`` with the birth rate out
    of the cap state removed (reflecting boundary), so it stays a proper
    generator of the finite chain.
    """
    vals = _values(h)
    if vals.size != model.d:
        raise ValueError(f"expected {model.d} rates, got {vals.size}")
    n = model.n_states
    A = np.zeros((n, n))
    if model.kind == UNIDIRECTIONAL:
        A[0, 1] = vals[0]
    elif model.kind == BIDIRECTIONAL:
        A[0, 1] = vals[0]
        A[1, 0] = vals[1]
    elif model.kind == MM1:
        lam, mu = vals
        idx = np.arange(n - 1)
        A[idx, idx + 1] = lam
        A[idx + 1, idx] = mu
    elif model.kind == RING:
        h_plus, h_minus = vals
        idx = np.arange(n)
        A[idx, (idx + 1) % n] = h_plus
        A[idx, (idx - 1) % n] += h_minus
    else:
        for k, (i, j) in enumerate(model.edges):
            A[i, j] = vals[k]
    np.fill_diagonal(A, 0.0)
    np.fill_diagonal(A, -A.sum(axis=1))
    return A


def two_state_bidirectional_probs(h0, h1, dt):
    """Closed-form 2x2 transition probabilities (p00, p01, p10, p11).

    Broadcasts over array rates; at h0 + h1 == 0 the chain is frozen and the
    matrix is the identity.
    """
    h0 = np.asarray(h0, dtype=float)
    h1 = np.asarray(h1, dtype=float)
    s = h0 + h1
    with np.errstate(divide="ignore", invalid="ignore"):
        decay = np.exp(-s * dt)
        f0 = np.where(s > 0, h0 / np.where(s > 0, s, 1.0), 0.0)
        f1 = np.where(s > 0, h1 / np.where(s > 0, s, 1.0), 0.0)
    p00 = np.where(s > 0, f1 + f0 * decay, 1.0)
    p01 = np.where(s > 0, f0 - f0 * decay, 0.0)
    p10 = np.where(s > 0, f1 - f1 * decay, 0.0)
    p11 = np.where(s > 0, f0 + f1 * decay, 1.0)
    return p00, p01, p10, p11


def _ring_eigenvalues(m: int, h_plus, h_minus) -> np.ndarray:
    """Circulant eigenvalues of the ring generator, broadcast over rates."""
    theta = 2.0 * np.pi * np.arange(m) / m
    h_plus = np.asarray(h_plus, dtype=float)[..., None]
    h_minus = np.asarray(h_minus, dtype=float)[..., None]
    return (-(h_plus + h_minus)
            + h_plus * np.exp(1j * theta)
            + h_minus * np.exp(-1j * theta))


def ring_transition_row(m: int, h_plus, h_minus, dt: float, i: int) -> np.ndarray:
    """Row i of exp(A*dt) for the ring generator via its circulant spectrum.

    Returns shape ``(..., m)`` broadcast over the rate arrays. Exact for any
    dt; the r=0 mode pins each row sum to 1, only roundoff negatives are
    clipped.
    """
    theta = 2.0 * np.pi * np.arange(m) / m
    nu = _ring_eigenvalues(m, h_plus, h_minus)
    E = np.exp(nu * dt)  # (..., m) complex
    j = np.arange(m)
    phases = np.exp(1j * np.outer(theta, (i - j))) / m  # (m modes, m targets)
    row = np.real(E @ phases)
    return np.clip(row, 0.0, 1.0)


def mm1_transition_prob(i: int, j: int, lam: float, mu: float, dt: float) -> float:
    """Birth-death transition probability p(X(t+dt)=j | X(t)=i).

    Evaluates the Bessel-series solution with rho = lam/mu and a =
    2*sqrt(lam*mu); the tail series is summed in log space and truncated at
    ``BESSEL_TERM_RTOL`` relative to the running sum (hard cap
    ``BESSEL_TERM_CAP`` terms). lam == 0 dispatches to the pure-death form:
    the number of deaths by dt is Poisson(mu*dt), with the absorbing mass at
    j = 0 as the complementary tail.

    Raises ``ValueError`` when lam >= mu (no stationary distribution) and
    ``RuntimeError`` if the tail fails to converge within the cap.
    """
    if i < 0 or j < 0:
        raise ValueError("states must be nonnegative")
    if mu <= 0 or lam < 0 or lam >= mu:
        raise ValueError("rates must satisfy 0 <= lam < mu")
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    if dt == 0:
        return 1.0 if i == j else 0.0
    if lam == 0.0:
        # rho^((j-i)/2) is singular here; deaths form a Poisson count.
        if j > i:
            return 0.0
        if i == 0:
            return 1.0 if j == 0 else 0.0
        nu = mu * dt
        if j == 0:
            return float(gammainc(i, nu))  # P(deaths >= i)
        k = i - j
        return float(np.exp(k * math.log(nu) - nu - math.lgamma(k + 1)))

    rho = lam / mu
    log_rho = math.log(rho)
    z = 2.0 * math.sqrt(lam * mu) * dt
    # exp(a - lam - mu)*dt = exp(-(sqrt(lam)-sqrt(mu))^2 * dt), the scale
    # left over after working with exponentially scaled Bessel values.
    # Individual factors can under/overflow where the combined term is O(1)
    # (scipy's ive dies near the tail peak at small rho), so every term is
    # assembled in log space from a downward-recurrence Bessel bank.
    shift = -((math.sqrt(lam) - math.sqrt(mu)) ** 2) * dt
    tail_start = j + i + 2
    # Tail terms rise until k ~ e*mu*dt before decaying (the rho^(-k/2)
    # factor defers the peak), so the relative-size cutoff only applies
    # past the peak.
    k_peak = math.e * mu * dt
    k_max = min(max(j + i + 1, int(k_peak) + 60) + 10, tail_start + BESSEL_TERM_CAP)
    bank = _log_ive_bank(np.array([z]), k_max)[:, 0]
    total = (math.exp(0.5 * (j - i) * log_rho + bank[abs(j - i)] + shift)
             + math.exp(0.5 * (j - i - 1) * log_rho + bank[j + i + 1] + shift))
    tail_scale = math.log1p(-rho) + j * log_rho
    orders = np.arange(tail_start, k_max + 1)
    terms = np.exp(tail_scale - 0.5 * orders * log_rho + bank[tail_start:] + shift)
    running = total + np.cumsum(terms)
    done = (orders > k_peak) & (terms <= BESSEL_TERM_RTOL * running)
    stop = int(np.argmax(done))
    if not done[stop]:
        raise RuntimeError("birth-death series did not converge")
    return float(min(max(running[stop], 0.0), 1.0))


def _log_ive_bank(z: np.ndarray, k_max: int) -> np.ndarray:
    """log(ive(k, z)) for k = 0..k_max over an array of z > 0.

    Miller-style downward recurrence on the consecutive-order ratios
    s_k = I_{k-1}/I_k (s_k = 2k/z + 1/s_{k+1}, seeded with 1/s = 0 well
    above ``k_max``), accumulated in log space and normalized against
    scipy's ive at order 0. Ratios stay O(k/z), so nothing can overflow.
    Relative accuracy at order k <= k_max is machine-level provided the
    start order exceeds z, which the callers' choice of k_max guarantees.
    """
    z = np.asarray(z, dtype=float)
    start = k_max + max(20, int(2.0 * math.sqrt(k_max)))
    two_over_z = 2.0 / z
    inv_s = np.zeros_like(z)
    log_y = np.zeros_like(z)
    log_bank = np.empty((k_max + 1, z.size))
    for k in range(start, 0, -1):
        s = k * two_over_z + inv_s
        log_y = log_y + np.log(s)
        if k - 1 <= k_max:
            log_bank[k - 1] = log_y
        inv_s = 1.0 / s
    return log_bank - log_bank[0] + np.log(ive(0, z))


def mm1_row_probs(lam, mu, dt: float, x_prev: int, n_states: int) -> np.ndarray:
    """Transition row p(j | x_prev) for j = 0..n_states-1 over rate arrays.

    Vectorized form of :func:`mm1_transition_prob` (same series, log-space
    terms, shared Bessel bank per order). Entries where lam >= mu or mu <= 0
    are returned as zero: such rate points are excluded by the truncated
    prior and must not poison grid arithmetic. lam == 0 entries use the
    pure-death form. Rows are *not* renormalized here.
    """
    lam = np.asarray(lam, dtype=float).ravel()
    mu = np.asarray(mu, dtype=float).ravel()
    out = np.zeros((lam.size, n_states))
    i = x_prev
    if dt == 0:
        out[:, i] = 1.0
        return out

    death = (lam == 0.0) & (mu > 0.0)
    if np.any(death):
        nu = mu[death] * dt
        if i == 0:
            out[death, 0] = 1.0
        else:
            out[death, 0] = gammainc(i, nu)  # P(deaths >= i)
            log_nu = np.log(nu)
            for j in range(1, i + 1):
                k = i - j
                out[death, j] = np.exp(k * log_nu - nu - gammaln(k + 1))

    live = (lam > 0.0) & (mu > lam)
    if not np.any(live):
        return out
    lam_l, mu_l = lam[live], mu[live]
    # The tail term rho^(-k/2) * I_k(z) peaks near k = e*mu*dt (the z and
    # rho dependences combine to 2*mu*dt exactly), so the bank length a
    # point needs is governed by mu*dt. Bucket on that need so slow corners
    # of a rate grid do not stretch the recurrence for everyone.
    need = math.e * mu_l * dt
    rows = np.empty((lam_l.size, n_states))
    lo = -np.inf
    for hi in (64.0, 256.0, 1024.0, 4096.0, np.inf):
        sel = (need > lo) & (need <= hi)
        lo = hi
        if np.any(sel):
            rows[sel] = _mm1_live_rows(lam_l[sel], mu_l[sel], dt, i, n_states)
    out[live] = rows
    return out


def _mm1_live_rows(lam: np.ndarray, mu: np.ndarray, dt: float,
                   i: int, n_states: int) -> np.ndarray:
    """Series rows for points with 0 < lam < mu, one shared bank length."""
    log_rho = np.log(lam) - np.log(mu)
    z = 2.0 * np.sqrt(lam * mu) * dt
    shift = -((np.sqrt(lam) - np.sqrt(mu)) ** 2) * dt
    # Orders needed: |j-i| and j+i+1 for the leading terms, then the tail
    # from j+i+2 until its terms decay, i.e. past k ~ e*mu*dt; each extra
    # order past that point shrinks terms at least e-fold.
    k_tail = int(math.e * float(np.max(mu)) * dt) + 60
    k_max = max(n_states + i + 1, i + 2 + k_tail)
    for _ in range(4):
        k_max = min(k_max, BESSEL_TERM_CAP)
        bank = _log_ive_bank(z, k_max)  # (k_max+1, n_pts) logs

        j = np.arange(n_states)[:, None]
        lead1 = np.exp(0.5 * (j - i) * log_rho + bank[np.abs(j - i).ravel()] + shift)
        lead2 = np.exp(0.5 * (j - i - 1) * log_rho + bank[(j + i + 1).ravel()] + shift)
        # Tail: suffix sums of c_k = exp(-k/2 log rho + log ive + shift),
        # shared across target states; each c_k <= 1 by normalization.
        orders = np.arange(i + 2, k_max + 1)
        c = np.exp(-0.5 * orders[:, None] * log_rho + bank[orders] + shift)
        suffix = np.cumsum(c[::-1], axis=0)[::-1]
        converged = float(np.max(c[-1])) <= BESSEL_TERM_RTOL * max(
            float(np.max(suffix[0])), 1e-30)
        if converged:
            break
        if k_max >= BESSEL_TERM_CAP:
            raise RuntimeError("birth-death series did not converge")
        k_max *= 2
    else:
        raise RuntimeError("birth-death series did not converge")
    tail_scale = np.exp(np.log1p(-np.exp(log_rho)) + j * log_rho)
    start_idx = np.clip(j.ravel(), 0, suffix.shape[0] - 1)
    tails = suffix[start_idx]
    rows = lead1 + lead2 + tail_scale * tails
    return np.clip(rows.T, 0.0, 1.0)


@lru_cache(maxsize=32)
def binary_config_table(d: int) -> np.ndarray:
    """All 2^d binary rate vectors in lexicographic order (edge 0 first)."""
    idx = np.arange(2 ** d)[:, None]
    shifts = d - 1 - np.arange(d)
    return ((idx >> shifts) & 1).astype(float)


@lru_cache(maxsize=16)
def binary_generator_batch(model: ChainModel) -> np.ndarray:
    """Generators for every 0/1 rate configuration, shape (2^d, m, m)."""
    if model.kind != BINARY:
        raise ValueError("binary_generator_batch needs a binary model")
    bits = binary_config_table(model.d)
    m = model.n_states
    A = np.zeros((bits.shape[0], m, m))
    for k, (i, j) in enumerate(model.edges):
        A[:, i, j] = bits[:, k]
    diag = -A.sum(axis=2)
    A[:, np.arange(m), np.arange(m)] = diag
    return A


def expm_batch(A: np.ndarray, dt: float) -> np.ndarray:
    """exp(A*dt) for a batch of small generators, shape (B, m, m).

    Scaling-and-squaring with a Taylor core: A*dt is scaled so its largest
    diagonal magnitude is <= 1/2, the series is summed to ~1e-20, then the
    result is squared back up. Rows of a generator exponential sum to 1;
    roundoff negatives are clipped and rows renormalized.
    """
    A = np.asarray(A, dtype=float)
    m = A.shape[-1]
    if dt == 0:
        return np.broadcast_to(np.eye(m), A.shape).copy()
    scale = float(np.max(np.abs(A))) * dt
    s = max(0, int(np.ceil(np.log2(scale / 0.5)))) if scale > 0.5 else 0
    B = A * (dt / (2 ** s))
    T = np.broadcast_to(np.eye(m), A.shape).copy()
    term = T.copy()
    for k in range(1, 16):
        term = term @ B / k
        T += term
    for _ in range(s):
        T = T @ T
    T = np.clip(T, 0.0, None)
    return T / T.sum(axis=-1, keepdims=True)


def transition_matrix(model: ChainModel, h, dt: float) -> np.ndarray:
    """Row-stochastic matrix of p(X(t+dt)=j | X(t)=i) under rates h.

    Two-state families use closed forms, ring and binary the matrix
    exponential of :func:`build_generator`, mm1 the Bessel series per entry
    (renormalized over the truncated state space) with a matrix-exponential
    fallback if the series misbehaves.
    """
    vals = _values(h)
    if vals.size != model.d:
        raise ValueError(f"expected {model.d} rates, got {vals.size}")
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    n = model.n_states
    if dt == 0:
        return np.eye(n)
    if model.kind == UNIDIRECTIONAL:
        p0 = math.exp(-vals[0] * dt)
        P = np.array([[p0, 1.0 - p0], [0.0, 1.0]])
    elif model.kind == BIDIRECTIONAL:
        p00, p01, p10, p11 = two_state_bidirectional_probs(vals[0], vals[1], dt)
        P = np.array([[p00, p01], [p10, p11]], dtype=float)
    elif model.kind in (RING, BINARY):
        P = expm(build_generator(model, vals) * dt)
        P = np.clip(P, 0.0, None)
        P /= P.sum(axis=1, keepdims=True)
    else:
        lam, mu = vals
        try:
            P = np.vstack([mm1_row_probs(lam, mu, dt, i, n)[0] for i in range(n)])
            sums = P.sum(axis=1)
            if not np.all(np.isfinite(P)) or np.any(sums <= 0):
                raise FloatingPointError("non-finite birth-death series")
            P /= sums[:, None]
        except (FloatingPointError, RuntimeError):
            P = expm(build_generator(model, vals) * dt)
            P = np.clip(P, 0.0, None)
            P /= P.sum(axis=1, keepdims=True)
    if not np.all(np.isfinite(P)):
        raise FloatingPointError("transition matrix is not finite")
    return P


def transition_row(model: ChainModel, h, x_prev: int, dt: float) -> np.ndarray:
    """Single transition row; cheaper than the full matrix for sampling."""
    vals = _values(h)
    if model.kind == MM1 and dt > 0:
        row = mm1_row_probs(vals[0], vals[1], dt, x_prev, model.n_states)[0]
        total = row.sum()
        if np.all(np.isfinite(row)) and total > 0:
            return row / total
    return transition_matrix(model, vals, dt)[x_prev]


def sample_transition(model: ChainModel, h, x_prev: int, dt: float, rng) -> int:
    """Draw X(t+dt) given X(t) = x_prev; deterministic given the rng state."""
    if dt == 0:
        return x_prev
    row = transition_row(model, h, x_prev, dt)
    cum = np.cumsum(row)
    return int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))


def transition_probs_over_rates(model: ChainModel, rates: tuple, x_prev: int,
                                dt: float) -> np.ndarray:
    """p(X=k | x_prev, h, dt) for every state k over arrays of rates.

    ``rates`` holds one array per rate dimension (broadcastable meshes).
    Returns shape ``(n_states,) + mesh.shape``. For mm1 the row is
    renormalized over the truncated state space wherever it has mass, and is
    zero where the rates violate lam < mu.
    """
    if model.kind == UNIDIRECTIONAL:
        h0 = np.asarray(rates[0], dtype=float)
        if x_prev == 1:
            zero = np.zeros_like(h0)
            return np.stack([zero, zero + 1.0])
        p0 = np.exp(-h0 * dt)
        return np.stack([p0, 1.0 - p0])
    if model.kind == BIDIRECTIONAL:
        p00, p01, p10, p11 = two_state_bidirectional_probs(rates[0], rates[1], dt)
        return np.stack([p00, p01] if x_prev == 0 else [p10, p11])
    if model.kind == RING:
        hp = np.asarray(rates[0], dtype=float)
        row = ring_transition_row(model.n_states, hp.ravel(),
                                  np.asarray(rates[1], dtype=float).ravel(),
                                  dt, x_prev)
        return np.moveaxis(row, -1, 0).reshape((model.n_states,) + hp.shape)
    if model.kind == MM1:
        lam = np.asarray(rates[0], dtype=float)
        rows = mm1_row_probs(lam.ravel(), np.asarray(rates[1], dtype=float).ravel(),
                             dt, x_prev, model.n_states)
        sums = rows.sum(axis=1, keepdims=True)
        rows = np.where(sums > 0, rows / np.where(sums > 0, sums, 1.0), 0.0)
        return rows.T.reshape((model.n_states,) + lam.shape)
    raise ValueError("use transition_probs_over_configs for binary models")


def transition_probs_over_configs(model: ChainModel, x_prev: int,
                                  dt: float) -> np.ndarray:
    """p(X=k | x_prev, config, dt) for all 2^d binary configs, shape (n_states, 2^d)."""
    if model.kind != BINARY:
        raise ValueError("transition_probs_over_configs needs a binary model")
    P = expm_batch(binary_generator_batch(model), dt)
    return P[:, x_prev, :].T


class BranchProbCache:
    """Repeated-dt evaluator of p(X=k | x_prev, h, dt) over a fixed rate set.

    The sequential design loop evaluates the same posterior support at
    dozens of candidate times per step; everything that depends only on the
    rates (not on dt) is precomputed here. Results match
    :func:`transition_probs_over_rates` / :func:`transition_probs_over_configs`.
    """

    def __init__(self, model: ChainModel, rates: tuple | None):
        self.model = model
        kind = model.kind
        if kind == BINARY:
            return
        flat = tuple(np.asarray(r, dtype=float).ravel() for r in rates)
        if kind == UNIDIRECTIONAL:
            self._h = flat[0]
        elif kind == BIDIRECTIONAL:
            h0, h1 = flat
            s = h0 + h1
            safe = np.where(s > 0, s, 1.0)
            self._s = s
            self._f0 = np.where(s > 0, h0 / safe, 0.0)
            self._f1 = np.where(s > 0, h1 / safe, 0.0)
            self._frozen = s == 0
        elif kind == RING:
            # Fold conjugate eigenvalue pairs: modes r and m-r contribute
            # 2*Re(E_r * phase), so only r = 0..m//2 need transcendentals.
            m = model.n_states
            h_plus, h_minus = flat
            r = np.arange(m // 2 + 1)
            theta = 2.0 * np.pi * r / m
            self._re_nu = np.outer(h_plus + h_minus, np.cos(theta) - 1.0)
            self._im_nu = np.outer(h_plus - h_minus, np.sin(theta))
            weights = np.where((r == 0) | (2 * r == m), 1.0, 2.0) / m
            j = np.arange(m)
            self._phase_re = [weights[:, None] * np.cos(np.outer(theta, i - j))
                              for i in range(m)]
            self._phase_im = [weights[:, None] * np.sin(np.outer(theta, i - j))
                              for i in range(m)]
        else:
            self._lam, self._mu = flat

    def branch_probs(self, x_prev: int, dt: float) -> np.ndarray:
        """Shape (n_states, n_points)."""
        kind = self.model.kind
        if kind == BINARY:
            return transition_probs_over_configs(self.model, x_prev, dt)
        if kind == UNIDIRECTIONAL:
            if x_prev == 1:
                zero = np.zeros_like(self._h)
                return np.stack([zero, zero + 1.0])
            stay = np.exp(-self._h * dt)
            return np.stack([stay, 1.0 - stay])
        if kind == BIDIRECTIONAL:
            decay = np.exp(-self._s * dt)
            if x_prev == 0:
                p0 = self._f1 + self._f0 * decay
                p1 = self._f0 * (1.0 - decay)
                p0[self._frozen] = 1.0
            else:
                p0 = self._f1 * (1.0 - decay)
                p1 = self._f0 + self._f1 * decay
                p1[self._frozen] = 1.0
            return np.stack([p0, p1])
        if kind == RING:
            amp = np.exp(self._re_nu * dt)
            ang = self._im_nu * dt
            e_re = amp * np.cos(ang)
            e_im = amp * np.sin(ang)
            rows = e_re @ self._phase_re[x_prev] - e_im @ self._phase_im[x_prev]
            return np.clip(rows, 0.0, 1.0).T
        rows = mm1_row_probs(self._lam, self._mu, dt, x_prev, self.model.n_states)
        sums = rows.sum(axis=1, keepdims=True)
        rows = np.where(sums > 0, rows / np.where(sums > 0, sums, 1.0), 0.0)
        return rows.T
