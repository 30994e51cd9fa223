import pickle, time
import numpy as np
from adaptrate import harness

spec = harness.load_spec("specs/periodic_vs_adaptive_bidirectional.json")
t0 = time.time()
res = harness.run_study(spec, threads=6)
rows = []
for row in res.rows:
    rows.append({
        "algorithm": row.algorithm, "period": row.period,
        "ns": [o.n_samples for o in row.outcomes],
        "mse": [list(o.mse) for o in row.outcomes],
        "capped": [o.capped for o in row.outcomes],
    })
with open(".scratch/bi_study.pkl", "wb") as f:
    pickle.dump({"rows": rows, "secs": time.time() - t0}, f)
print("done in", time.time()-t0)
