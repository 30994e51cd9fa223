"""Self-contained invariant checks runnable from the CLI.

Each check prints one PASS/FAIL line; the runner returns the failure count.
These are quick structural guarantees (stochasticity, consistency between
independent computation routes, conservation laws), not the full test suite.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import expm

from . import bayes, chains, design


def check_row_stochasticity() -> str | None:
    models = [
        (chains.two_state_unidirectional(), [1.3]),
        (chains.two_state_bidirectional(), [0.7, 2.1]),
        (chains.ring(6), [1.0, 0.4]),
        (chains.mm1_queue(20), [0.8, 2.5]),
        (chains.binary_digraph(3), [1, 0, 1, 1, 0, 0]),
    ]
    for model, h in models:
        for dt in (0.0, 0.05, 1.0, 17.0, 100.0):
            P = chains.transition_matrix(model, h, dt)
            err = float(np.max(np.abs(P.sum(axis=1) - 1.0)))
            if err > 1e-9 or np.any(P < -1e-15):
                return f"{model.kind} dt={dt}: row sum error {err:.2e}"
    return None


def check_chapman_kolmogorov() -> str | None:
    cases = [
        (chains.two_state_bidirectional(), [0.7, 2.1]),
        (chains.ring(8), [1.0, 0.4]),
        (chains.binary_digraph(3), [1, 0, 1, 1, 0, 1]),
    ]
    for model, h in cases:
        for t1, t2 in ((0.3, 0.9), (2.0, 5.0)):
            lhs = chains.transition_matrix(model, h, t1) @ \
                chains.transition_matrix(model, h, t2)
            rhs = chains.transition_matrix(model, h, t1 + t2)
            err = float(np.max(np.abs(lhs - rhs)))
            if err > 1e-8:
                return f"{model.kind}: CK error {err:.2e} at ({t1},{t2})"
    return None


def check_closed_form_vs_expm() -> str | None:
    model = chains.two_state_bidirectional()
    for h0 in (0.1, 1.0, 4.0):
        for h1 in (0.0, 0.5, 3.0):
            for dt in (0.2, 1.0, 5.0):
                P = chains.transition_matrix(model, [h0, h1], dt)
                Q = expm(chains.build_generator(model, [h0, h1]) * dt)
                err = float(np.max(np.abs(P - Q)))
                if err > 1e-10:
                    return f"(h0={h0},h1={h1},dt={dt}): error {err:.2e}"
    return None


def check_birth_death_series_vs_expm() -> str | None:
    model = chains.mm1_queue(100)
    for lam in (0.0, 0.5, 0.9):
        A = chains.build_generator(model, [lam, 1.0])
        for dt in (0.5, 3.0):
            E = expm(A * dt)
            for i in (0, 4, 9):
                for j in range(10):
                    p = chains.mm1_transition_prob(i, j, lam, 1.0, dt)
                    if abs(p - E[i, j]) > 1e-6:
                        return (f"lam={lam} dt={dt} ({i},{j}): "
                                f"series {p:.2e} vs expm {E[i, j]:.2e}")
    return None


def check_law_of_total_variance() -> str | None:
    prior = bayes.build_prior(bayes.GammaPrior(2, 1))
    var0 = bayes.posterior_variance(prior)
    for t in np.geomspace(1e-3, 100, 30):
        ev = design.expected_variance(prior, float(t))
        if ev > var0 + 1e-10:
            return f"expected variance {ev:.6f} above prior variance {var0:.6f}"
    return None


def check_update_normalization() -> str | None:
    model = chains.two_state_bidirectional()
    post = bayes.build_prior(bayes.BivariateGammaPrior(), nodes=101)
    rng = np.random.default_rng(5)
    t = 0.0
    x = 0
    for _ in range(20):
        t += 0.5
        x_new = chains.sample_transition(model, [1.0, 2.0], x, 0.5, rng)
        post = bayes.bayes_update(post, model, x, chains.Observation(t, x_new),
                                  prev_time=t - 0.5)
        if abs(post.mass() - 1.0) > 1e-9:
            return f"posterior mass drifted to {post.mass():.12f}"
        cov = bayes.posterior_covariance(post)
        if float(np.min(np.linalg.eigvalsh(cov))) < -1e-10:
            return "posterior covariance lost positive semidefiniteness"
        x = x_new
    return None


CHECKS = [
    ("row stochasticity", check_row_stochasticity),
    ("chapman-kolmogorov", check_chapman_kolmogorov),
    ("two-state closed form vs expm", check_closed_form_vs_expm),
    ("birth-death series vs expm", check_birth_death_series_vs_expm),
    ("law of total variance", check_law_of_total_variance),
    ("update normalization and PSD", check_update_normalization),
]


def run_checks(out=print) -> int:
    failures = 0
    for name, check in CHECKS:
        try:
            problem = check()
        except Exception as exc:  # a crashed check is a failed check
            problem = f"raised {type(exc).__name__}: {exc}"
        if problem is None:
            out(f"PASS  {name}")
        else:
            out(f"FAIL  {name}: {problem}")
            failures += 1
    return failures
