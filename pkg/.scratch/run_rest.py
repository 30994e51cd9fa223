import pickle, time, sys
from adaptrate import harness

results = {}
for name in ["tolerance_sweep_unidirectional", "tolerance_sweep_bidirectional",
             "ring_size_sweep", "binary_structure_sweep",
             "absorbing_pathology_two_state", "absorbing_pathology_mm1"]:
    spec = harness.load_spec(f"specs/{name}.json")
    t0 = time.time()
    res = harness.run_study(spec, threads=6)
    rows = []
    for row in res.rows:
        rows.append({
            "algorithm": row.algorithm, "period": row.period, "theta": row.theta,
            "m": row.m, "p": row.p, "d": row.d, "h_true": row.h_true,
            "ns": [o.n_samples for o in row.outcomes],
            "mse": [list(o.mse) if o.mse else None for o in row.outcomes],
            "mae": [o.mae for o in row.outcomes],
            "capped": [o.capped for o in row.outcomes],
        })
    results[name] = {"rows": rows, "secs": time.time() - t0}
    print(f"{name}: {time.time()-t0:.0f}s", flush=True)
    with open(".scratch/rest_studies.pkl", "wb") as f:
        pickle.dump(results, f)
print("ALL DONE")
