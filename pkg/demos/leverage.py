"""How much one cluster can matter: leverage, partial leverage and influence.

One cluster holds half of the sample. Partial leverage shows that the
effective number of clusters is far below G, and CV1 t tests over-reject.

    python3 demos/leverage.py
"""

from clusterinf import DGPSpec, diagnose, fit_ols, run_size_experiment, simulate
from clusterinf.rng import replication_rng

spec = DGPSpec("random_effects", G=21, size=20, size_pattern="one_dominant",
               dominant_share=0.5, lam=0.7)
sample = simulate(spec, replication_rng(3, 0))
rep = diagnose(fit_ols(sample.dataset(), sample.partition()), "x")
frame = rep.to_frame().sort_values("partial_leverage", ascending=False)
print(frame.head().to_string(index=False))
print(f"\nG = {len(rep.labels)}, effective clusters G*(0) = {rep.g_star0:.1f}")

mc = run_size_experiment(spec, ["CV1", "CV3", "WCR"], reps=400, seed=3, boot_reps=199)
print("\nrejection rates at 5% for a true null:")
print(mc.to_frame()[["method", "rejection_pct", "mc_se_pct"]].to_string(index=False))
