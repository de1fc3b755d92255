"""Cluster-robust inference for linear regression models.

Sandwich covariance estimators (CV1, CV2, CV3, two-way), wild and pairs
cluster bootstraps with fast score-level replicates, cluster diagnostics,
tests for the level of clustering, randomization inference and Monte Carlo
tools for studying test size.
"""

from .core import (ClusterPartition, CrossedPartition, DataError, Dataset, build_partition,
                   cross, dummies, is_nested, singletons, within_transform)
from .crve import (CovEstimate, TestResult, cv1, cv2, cv3, cv3_jackknife, deleted_estimates,
                   hc1, student_t_cdf, t_test, twoway_cv1, wald_test)
from .diagnostics import (DiagnosticsReport, diagnose, effective_clusters, influence, leverage,
                          moulton_factor, partial_leverage, size_summary)
from .estimation import RankDeficiencyError, RegressionFit, Restriction, fit_ols, fit_restricted
from .level_tests import (LevelTestResult, PanelDesign, PlaceboSpec, placebo_experiment,
                          score_variance_test, sequential_score_tests)
from .randomization import RIResult, TreatmentSpec, count_assignments, ri_p_values, ri_test
from .rng import RADEMACHER, WEBB, AuxDistribution, aux_distribution
from .simulation import (DGPSpec, MonteCarloReport, gen_demeaned_covariance_check,
                         gen_disturbances, run_size_experiment, simulate)
from .wild import (BootstrapError, BootstrapResult, ConfidenceInterval, boot_p_values,
                   ci_bootstrap_se, ci_inversion, ci_percentile_t, pairs_cluster_test,
                   wcr_test, wcu_test, wr_test, wu_test)

__version__ = "0.1.0"
