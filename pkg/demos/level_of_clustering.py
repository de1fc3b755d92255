"""Choosing the level of clustering with the score-variance test.

Disturbances are correlated within fine clusters only (first sample) or also
within the coarse clusters that contain them (second sample).

    python3 demos/level_of_clustering.py
"""

from clusterinf import build_partition, cv1, fit_ols, score_variance_test
from clusterinf.rng import replication_rng
from clusterinf.simulation import simulate_nested

for rho_coarse in (0.0, 0.2):
    sample, coarse_codes = simulate_nested(replication_rng(5, 0), 25, 10, 20,
                                           rho_coarse=rho_coarse)
    fine = sample.partition()
    coarse = build_partition(coarse_codes)
    fit = fit_ols(sample.dataset(), fine)
    se_fine = cv1(fit).se()[1]
    se_coarse = cv1(fit.recluster(coarse)).se()[1]
    res = score_variance_test(fit, fine, coarse, 1, B=999, seed=5)
    print(f"rho_coarse={rho_coarse}: se fine {se_fine:.4f}, se coarse {se_coarse:.4f}, "
          f"tau {res.tau_stat:.2f}, bootstrap P {res.p_bootstrap:.3f}")
