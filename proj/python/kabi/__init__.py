"""Python access to the kabi C++ core."""

import json as _json

from ._kabi import (
    ConfigError,
    DependencyError,
    DomainError,
    NumericError,
    __version__,
    critical_coupling,
    drift_meanfield,
    drift_pairwise,
    ks_uniform,
    order_parameter,
    pit,
    posterior_sample,
    run_cli,
    sample_prior,
    simulate_features,
    simulate_mean_field,
    summarize_rows,
    summarize_step,
)
from ._kabi import evaluate as _evaluate


def evaluate(draws, truths, lower, upper, seed=41):
    """Metrics report for a list of (n_d x d) draw arrays and their truths, as a dict."""
    return _json.loads(_evaluate(list(draws), [list(t) for t in truths], list(lower), list(upper), seed))
