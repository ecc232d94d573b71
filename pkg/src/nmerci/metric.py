"""Normalized Mean Rescaled Confidence Interval (n-MeRCI) and its building blocks.

Every function here is pure: it reads an :class:`EvalSet` (prediction,
uncertainty, ground truth triplets) and returns plain numbers or frozen
dataclasses.

The metric in short::

    eps_i      = |y_hat_i - y_true_i|
    lambda_i   = eps_i / sigma_i
    lambda^a   = nearest-rank a-th percentile of lambda_i
    MeRCI^a    = lambda^a * mean(sigma_i)
    n-MeRCI^a  = (MeRCI^a - MAE) / (max^a(eps) - MAE)

``max^a(eps)`` is the same nearest-rank percentile taken over the errors. An
oracle (``sigma = eps``) scores 0, a constant uncertainty scores 1 and
anything above 1 is worse than predicting no uncertainty at all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

__all__ = [
    "BinReport",
    "BinnedEval",
    "EvalSet",
    "EvalSetError",
    "MerciValue",
    "MetricConfig",
    "MetricReport",
    "Sample",
    "abs_errors",
    "binned_eval",
    "lambda_ratios",
    "mae",
    "merci",
    "n_merci",
    "nearest_rank",
    "percentile_nearest_rank",
]


class EvalSetError(ValueError):
    """Raised for empty or malformed evaluation data."""


@dataclass(frozen=True)
class Sample:
    """One (prediction, uncertainty, ground truth) triplet."""

    y_hat: float
    sigma: float
    y_true: float

    def __post_init__(self) -> None:
        for name in ("y_hat", "sigma", "y_true"):
            if not math.isfinite(getattr(self, name)):
                raise EvalSetError(f"non-finite {name}: {getattr(self, name)!r}")
        if self.sigma < 0:
            raise EvalSetError(f"invalid uncertainty: sigma={self.sigma!r} < 0")


@dataclass(frozen=True, eq=False)
class EvalSet:
    """Ordered collection of evaluation triplets stored column-wise.

    The arrays are copied, converted to float64 and made read-only. Sample
    order is kept as given; no metric in this module depends on it.
    """

    y_hat: np.ndarray
    sigma: np.ndarray
    y_true: np.ndarray

    def __post_init__(self) -> None:
        cols = []
        for name in ("y_hat", "sigma", "y_true"):
            col = np.array(getattr(self, name), dtype=np.float64).reshape(-1)
            if not np.all(np.isfinite(col)):
                raise EvalSetError(f"non-finite value in {name}")
            col.setflags(write=False)
            object.__setattr__(self, name, col)
            cols.append(col)
        if not (len(cols[0]) == len(cols[1]) == len(cols[2])):
            raise EvalSetError(
                f"column lengths differ: {len(cols[0])}, {len(cols[1])}, {len(cols[2])}"
            )
        if np.any(self.sigma < 0):
            i = int(np.argmax(self.sigma < 0))
            raise EvalSetError(f"invalid uncertainty: sigma[{i}]={self.sigma[i]!r} < 0")

    @classmethod
    def from_samples(cls, samples: Iterable[Sample]) -> "EvalSet":
        samples = list(samples)
        return cls(
            y_hat=[s.y_hat for s in samples],
            sigma=[s.sigma for s in samples],
            y_true=[s.y_true for s in samples],
        )

    @property
    def n(self) -> int:
        return len(self.y_hat)

    def __len__(self) -> int:
        return self.n

    def samples(self) -> list[Sample]:
        return [Sample(float(a), float(b), float(c)) for a, b, c in zip(self.y_hat, self.sigma, self.y_true)]

    def subset(self, index) -> "EvalSet":
        """Select samples by boolean mask or integer index array."""
        return EvalSet(self.y_hat[index], self.sigma[index], self.y_true[index])

    def with_sigma(self, sigma) -> "EvalSet":
        return EvalSet(self.y_hat, sigma, self.y_true)


@dataclass(frozen=True)
class MetricConfig:
    """Percentile and trimming policy for one evaluation.

    ``trim_mae=None`` resolves to ``alpha < 100``. With trimming on, the MAE
    and the MeRCI average are both restricted to the inliers, i.e. the samples
    whose error does not exceed ``max^alpha(eps)``; ``lambda^alpha`` and
    ``max^alpha`` are always taken over the full set.
    """

    alpha: float = 95.0
    trim_mae: Optional[bool] = None

    def __post_init__(self) -> None:
        alpha = float(self.alpha)
        if not (0.0 < alpha <= 100.0):
            raise ValueError(f"alpha must be in (0, 100], got {self.alpha!r}")
        object.__setattr__(self, "alpha", alpha)
        if self.trim_mae is None:
            object.__setattr__(self, "trim_mae", alpha < 100.0)


@dataclass(frozen=True)
class MetricReport:
    """All scores from one n-MeRCI evaluation.

    ``mae`` and ``merci`` are the untrimmed values; ``mae_used`` and
    ``merci_used`` are what enters the normalization (they coincide with the
    untrimmed ones when ``trim_mae`` is off). ``n_merci`` is ``None`` when the
    report is degenerate.
    """

    alpha: float
    trim_mae: bool
    n: int
    mae: float
    mae_used: float
    lambda_alpha: float
    merci: float
    merci_used: float
    max_alpha_error: float
    n_merci: Optional[float]
    n_used: int
    degenerate: bool
    reason: str = ""

    def as_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "trim_mae": self.trim_mae,
            "n": self.n,
            "mae": self.mae,
            "mae_used": self.mae_used,
            "lambda_alpha": self.lambda_alpha,
            "merci": self.merci,
            "merci_used": self.merci_used,
            "max_alpha_error": self.max_alpha_error,
            "n_merci": self.n_merci,
            "n_used": self.n_used,
            "degenerate": self.degenerate,
            "reason": self.reason,
        }


REPORT_FIELDS = tuple(MetricReport.__dataclass_fields__)


def _require_nonempty(data: EvalSet) -> None:
    if data.n == 0:
        raise EvalSetError("empty evaluation set")


def abs_errors(data: EvalSet) -> np.ndarray:
    """Absolute errors ``|y_hat - y_true|`` in input order."""
    _require_nonempty(data)
    return np.abs(data.y_hat - data.y_true)


def mae(data: EvalSet) -> float:
    return float(np.mean(abs_errors(data)))


def nearest_rank(n: int, alpha: float) -> int:
    """1-based rank ``ceil(alpha * n / 100)`` computed without rounding error."""
    if n < 1:
        raise EvalSetError("empty evaluation set")
    alpha = float(alpha)
    if not (0.0 < alpha <= 100.0):
        raise ValueError(f"alpha must be in (0, 100], got {alpha!r}")
    k = math.ceil(Fraction(alpha) * n / 100)
    return min(max(k, 1), n)


def percentile_nearest_rank(values: Sequence[float], alpha: float) -> float:
    """Nearest-rank percentile: the ``ceil(alpha/100 * N)``-th smallest value.

    Unlike interpolating estimators, the result is always one of the inputs.
    ``+inf`` entries are allowed and sort last.

    >>> percentile_nearest_rank(range(1, 11), 50)
    5.0
    >>> percentile_nearest_rank([3, 1, 2], 67)
    3.0
    """
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise EvalSetError("empty input to percentile")
    if np.any(np.isnan(v)):
        raise ValueError("NaN in percentile input")
    k = nearest_rank(v.size, alpha)
    return float(np.partition(v, k - 1)[k - 1])


def lambda_ratios(data: EvalSet) -> np.ndarray:
    """Per-sample rescaling factors ``eps_i / sigma_i``.

    ``sigma = 0`` gives 0 when the error is also 0 and ``+inf`` otherwise.
    """
    eps = abs_errors(data)
    sigma = data.sigma
    out = np.empty_like(eps)
    pos = sigma > 0
    with np.errstate(over="ignore"):  # tiny sigma overflows to +inf, which is the right answer
        np.divide(eps, sigma, out=out, where=pos)
    zero = ~pos
    out[zero] = np.where(eps[zero] > 0, np.inf, 0.0)
    return out


class MerciValue(NamedTuple):
    lambda_alpha: float
    merci: float


def merci(data: EvalSet, cfg: MetricConfig) -> MerciValue:
    """Mean Rescaled Confidence Interval, averaged over all N samples.

    Returns ``(inf, inf)`` when more than ``100 - alpha`` percent of the
    samples have zero uncertainty with a nonzero error.
    """
    lam = percentile_nearest_rank(lambda_ratios(data), cfg.alpha)
    if math.isinf(lam):
        return MerciValue(lam, math.inf)
    return MerciValue(lam, lam * float(np.mean(data.sigma)))


def n_merci(data: EvalSet, cfg: MetricConfig = MetricConfig()) -> MetricReport:
    """Score an evaluation set; see the module docstring for the formula.

    Degenerate cases are reported, never raised: an infinite ``lambda^alpha``
    or ``max^alpha(eps) <= MAE`` (constant errors, or heavy outliers with the
    untrimmed MAE) yields
    ``degenerate=True`` and ``n_merci=None``.
    """
    eps = abs_errors(data)
    lam_alpha, merci_full = merci(data, cfg)
    max_alpha = percentile_nearest_rank(eps, cfg.alpha)
    mae_full = float(np.mean(eps))

    if cfg.trim_mae:
        inliers = eps <= max_alpha
        n_used = int(np.count_nonzero(inliers))
        mae_used = float(np.mean(eps[inliers]))
        merci_used = math.inf if math.isinf(lam_alpha) else lam_alpha * float(np.mean(data.sigma[inliers]))
    else:
        n_used = data.n
        mae_used = mae_full
        merci_used = merci_full

    reason = ""
    if math.isinf(lam_alpha):
        reason = "infinite lambda: too many zero-uncertainty samples with nonzero error"
    elif max_alpha == mae_used:
        reason = "max_alpha_error equals MAE: errors are constant over the inliers"
    elif max_alpha < mae_used:
        reason = "max_alpha_error below MAE: errors beyond the percentile dominate the untrimmed MAE"
    score = None if reason else (merci_used - mae_used) / (max_alpha - mae_used)

    return MetricReport(
        alpha=cfg.alpha,
        trim_mae=bool(cfg.trim_mae),
        n=data.n,
        mae=mae_full,
        mae_used=mae_used,
        lambda_alpha=lam_alpha,
        merci=merci_full,
        merci_used=merci_used,
        max_alpha_error=max_alpha,
        n_merci=score,
        n_used=n_used,
        degenerate=bool(reason),
        reason=reason,
    )


@dataclass(frozen=True)
class BinReport:
    low: float
    high: float
    n: int
    report: Optional[MetricReport]

    @property
    def skipped(self) -> bool:
        return self.report is None


@dataclass(frozen=True)
class BinnedEval:
    bins: list[BinReport] = field(default_factory=list)

    @property
    def scored(self) -> list[BinReport]:
        return [b for b in self.bins if b.report is not None and not b.report.degenerate]

    @property
    def mean_n_merci(self) -> Optional[float]:
        """Plain average of per-bin scores over non-skipped, non-degenerate bins."""
        scores = [b.report.n_merci for b in self.scored]
        return float(np.mean(scores)) if scores else None

    @property
    def mean_mae(self) -> Optional[float]:
        maes = [b.report.mae_used for b in self.bins if b.report is not None]
        return float(np.mean(maes)) if maes else None


MIN_BIN_SAMPLES = 2


def _bin_index(y: np.ndarray, width: float) -> np.ndarray:
    # floor(y / w) can land one bin off near edges; snap so that
    # k*w <= y < (k+1)*w holds for the float products themselves.
    k = np.floor(y / width)
    k = np.where(y < k * width, k - 1, k)
    k = np.where(y >= (k + 1) * width, k + 1, k)
    return k.astype(np.int64)


def binned_eval(data: EvalSet, cfg: MetricConfig, bin_width: float) -> BinnedEval:
    """Score samples separately per ground-truth interval ``[k*w, (k+1)*w)``.

    Bins are anchored at 0 and only nonempty bins are returned, in increasing
    order. Bins with fewer than two samples are kept but not scored.
    """
    if not bin_width > 0 or not math.isfinite(bin_width):
        raise ValueError(f"bin_width must be a positive finite number, got {bin_width!r}")
    _require_nonempty(data)
    idx = _bin_index(data.y_true, bin_width)
    bins = []
    for k in np.unique(idx):
        member = idx == k
        count = int(np.count_nonzero(member))
        report = n_merci(data.subset(member), cfg) if count >= MIN_BIN_SAMPLES else None
        bins.append(BinReport(low=float(k * bin_width), high=float((k + 1) * bin_width), n=count, report=report))
    return BinnedEval(bins)
