"""polgrav: political-distance indexes and structural gravity estimation.

Pipeline stages: coded-event aggregates -> coverage-normalized monthly
index -> particle-filtered latent distance -> gravity panel assembly ->
PPML / fixed-effects logit estimation -> one-SD effect sizes.
"""

from .event_index import (
    DistanceSeries,
    EventPanel,
    aggregate_period,
    apply_coverage_threshold,
    build_monthly_series,
    ihs,
    negate_for_regression,
    normalize_month,
)
from .latent_filter import (
    FilteredSeries,
    StateSpaceParams,
    estimate_process_variance,
    filter_panel,
    filter_series,
    observation_variance,
)
from .panel_builder import (
    apply_sample_filters,
    assemble_panel,
    attach_fe_labels,
    build_domestic_trade,
    build_interactions,
    insert_structural_zeros,
)
from .ppml import FitResult, cluster_vcov, fit_ppml, foc_residual_sums
from .fe_logit import LogitFit, fit_fe_logit, pair_bootstrap, split_panel_jackknife
from .effects import EffectReport, logit_effect_pp, one_sd_effect
from .synth import DgpSpec, dummy_oracle_fit, gen_panel, kalman_oracle

__version__ = "0.1.0"
