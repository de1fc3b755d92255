"""A small Monte Carlo on test size with few, equal-sized clusters.

Factor-model disturbances and a regressor that is constant within clusters
make heteroskedasticity-robust errors useless; the cluster-robust methods
differ in how close they get to the nominal 5%.

    python3 demos/size_experiment.py
"""

from clusterinf import DGPSpec, run_size_experiment

for G in (10, 20, 50):
    spec = DGPSpec("factor", G=G, size=20, lam=0.7, lam_sd=0.3)
    rep = run_size_experiment(spec, ["HC1", "CV1", "CV3", "WCR"], reps=500, seed=G,
                              boot_reps=199)
    rates = "  ".join(f"{m} {100 * rep.rate(m):5.1f}%" for m in rep.methods)
    print(f"G={G:>3}: {rates}")
