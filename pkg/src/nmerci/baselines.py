"""Reference metrics that predate n-MeRCI: sparsification/AUSE and NLPD."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .metric import EvalSet, EvalSetError, abs_errors

__all__ = ["SparsificationCurve", "ause", "nlpd", "sparsification"]


@dataclass(frozen=True)
class SparsificationCurve:
    fractions_removed: np.ndarray
    mae_remaining: np.ndarray
    oracle_mae_remaining: np.ndarray

    def __post_init__(self) -> None:
        f = np.asarray(self.fractions_removed, dtype=np.float64)
        m = np.asarray(self.mae_remaining, dtype=np.float64)
        o = np.asarray(self.oracle_mae_remaining, dtype=np.float64)
        if not (f.shape == m.shape == o.shape) or f.ndim != 1:
            raise ValueError("curve arrays must be 1-D and of equal length")
        if f.size and (f[0] != 0.0 or np.any(np.diff(f) <= 0) or f[-1] >= 1.0):
            raise ValueError("fractions must start at 0, increase strictly and stay below 1")
        object.__setattr__(self, "fractions_removed", f)
        object.__setattr__(self, "mae_remaining", m)
        object.__setattr__(self, "oracle_mae_remaining", o)


def _remaining_mae(eps: np.ndarray, order: np.ndarray, removed: list[int]) -> np.ndarray:
    # eps sorted so that the first items are removed first; the MAE of the
    # tail is a suffix mean.
    ranked = eps[order]
    suffix = np.cumsum(ranked[::-1])[::-1]
    n = len(eps)
    return np.array([suffix[r] / (n - r) for r in removed])


def sparsification(data: EvalSet, steps: int) -> SparsificationCurve:
    """MAE of the retained samples as the most uncertain ones are dropped.

    At fraction ``i/steps`` the ``floor(i*N/steps)`` samples with the largest
    sigma are removed; ties go in input order. The oracle curve removes by
    true error instead.
    """
    if steps < 2:
        raise ValueError(f"steps must be >= 2, got {steps}")
    eps = abs_errors(data)
    n = data.n
    if n < steps:
        raise EvalSetError(f"evaluation set of {n} samples is smaller than steps={steps}")
    removed = [i * n // steps for i in range(steps)]
    by_sigma = np.argsort(-data.sigma, kind="stable")
    by_error = np.argsort(-eps, kind="stable")
    return SparsificationCurve(
        fractions_removed=np.arange(steps) / steps,
        mae_remaining=_remaining_mae(eps, by_sigma, removed),
        oracle_mae_remaining=_remaining_mae(eps, by_error, removed),
    )


def ause(curve: SparsificationCurve) -> float:
    """Area between the sparsification curve and its oracle (trapezoid rule)."""
    gap = curve.mae_remaining - curve.oracle_mae_remaining
    f = curve.fractions_removed
    area = float(np.sum((gap[1:] + gap[:-1]) * np.diff(f)) / 2.0)
    # the oracle is optimal at every fraction, so negative area is roundoff
    return max(area, 0.0)


def nlpd(data: EvalSet) -> float:
    """Average negative log predictive density under N(y_hat, sigma^2)."""
    eps = abs_errors(data)
    sigma = data.sigma
    if np.any(sigma <= 0):
        raise EvalSetError("NLPD undefined for zero variance")
    terms = np.log(sigma) + 0.5 * math.log(2 * math.pi) + eps**2 / (2 * sigma**2)
    return float(np.mean(terms))
