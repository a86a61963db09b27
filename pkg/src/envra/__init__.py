"""Permutation-based global envelope tests for comparing distributions."""
from .envelope import (CurveSet, EnvelopeBand, GlobalTestResult, MeasureVector, combined_two_step,
                       critical_index_set, envelope, erl_measures, global_rank_test, mc_p_value,
                       pointwise_midranks)
from .ks import KsResult, kolmogorov_cdf, kolmogorov_critical_value, ks_statistic, ks_test_asymptotic
from .permutation import (PermutationPlan, TestSpec, enumerate_splits, ks_permutation_test,
                          permute_labels, run_many, run_test)
from .report import ResultDocument, emit_svg, load_csv, load_iris
from .stats import (GroupedSample, ecdf_eval, kde_eval, make_grid, quantile_eval,
                    silverman_bandwidth)

__version__ = "0.1.0"
