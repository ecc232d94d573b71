"""Evaluation of predictive uncertainties for regression with n-MeRCI."""

__version__ = "0.1.0"

from .metric import EvalSet, MetricConfig, MetricReport, Sample, binned_eval, merci, n_merci  # noqa: E402

__all__ = ["EvalSet", "MetricConfig", "MetricReport", "Sample", "binned_eval", "merci", "n_merci"]
