import time
import numpy as np
import adaptrate as ar
from adaptrate import bayes

def trial(theta, h_max, nodes, reps=12, sizes=(3, 8)):
    prior = ar.build_prior(ar.BivariateGammaPrior(), h_max, nodes)
    cfg = ar.DesignConfig(theta=theta, grid_nodes=nodes, h_max=h_max)
    out = {}
    t0 = time.time()
    for m in sizes:
        model = ar.ring(m)
        mses, ns = [], []
        for rep in range(reps):
            rng = np.random.default_rng(np.random.SeedSequence(4000, spawn_key=(rep, 0)))
            h_true = bayes.sample_prior(ar.BivariateGammaPrior(), rng, h_max)
            obs = ar.SimulatedObserver(model, h_true, np.random.SeedSequence(4000, spawn_key=(rep, 1, m)))
            eng = ar.InferenceEngine(model, prior, cfg)
            while not eng.converged() and len(eng.steps) < 500:
                off, _ = eng.recommend()
                s = obs(eng.x_prev, eng.t_last + off, off)
                eng.apply_observation(eng.t_last + off, s)
            mses.append([bayes.mse(eng.posterior, h_true, k) for k in range(2)])
            ns.append(len(eng.steps))
        out[m] = (np.mean(ns), np.array(mses).mean(axis=0))
    return out, time.time() - t0

for theta, h_max, nodes in [(0.1, 5.0, 51), (0.05, 5.0, 51), (0.02, 5.0, 51), (0.05, 10.0, 81)]:
    res, secs = trial(theta, h_max, nodes)
    parts = "  ".join(f"m={m}: Ns={v[0]:.0f} mse=({v[1][0]:.3f},{v[1][1]:.3f})" for m, v in res.items())
    print(f"theta={theta} h_max={h_max} nodes={nodes}: {parts}  [{secs:.0f}s]", flush=True)
