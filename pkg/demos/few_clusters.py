"""Inference on a state-level policy with 24 states of very different size.

The bundled panel has a staggered policy in a third of the states and a true
effect of zero. We compare several ways of testing it.

    python3 demos/few_clusters.py
"""

import numpy as np

from clusterinf import (Restriction, TreatmentSpec, build_partition, ci_inversion, cv1, cv3,
                        fit_ols, hc1, pairs_cluster_test, ri_test, t_test, wcr_test)
from clusterinf.datasets import load_example
from clusterinf.diagnostics import size_summary
from clusterinf.io import build_dataset

df = load_example()
data = build_dataset(df, "y", ["educ", "age", "treat"])
states = build_partition(df["state"].to_numpy())
print(size_summary(states))

fit = fit_ols(data, states)
j = data.column("treat")
print(f"\nestimate {fit.beta[j]:.4f}")

# Ignoring the clustering understates the uncertainty badly.
for cov in (hc1(fit), cv1(fit), cv3(fit)):
    r = t_test(fit, cov, j)
    print(f"{cov.kind:<5} se {r.std_error:.4f}  t {r.statistic:6.3f}  P {r.p_value:.3f}")

rest = Restriction.single(data.k, j)
wcr = wcr_test(fit, rest, B=9999, seed=1)
print(f"WCR   P {wcr.p_symmetric:.3f} (B={wcr.B}, {wcr.aux})")
pairs = pairs_cluster_test(data, states, rest, B=999, seed=1)
print(f"pairs P {pairs.p_symmetric:.3f} ({pairs.discarded} singular draws discarded)")

# Randomization inference re-assigns the policy (with its start years) to other states.
period = df["year"].to_numpy() - df["year"].min()
d = data.regressors[:, j]
treated = np.flatnonzero(states.cluster_sum(d) > 0)
starts = [int(period[(states.codes == g) & (d == 1)].min()) for g in treated]
ri = ri_test(data, states, TreatmentSpec("treat", treated, period, starts),
             statistic_kind="t", B=999, seed=1)
print(f"RI    P {ri.p2:.3f} over {ri.S} re-assignments")

ci = ci_inversion(fit, j, B=999, seed=1)
print(f"\n95% WCR interval [{ci.lower:.4f}, {ci.upper:.4f}]")
