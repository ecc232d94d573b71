"""Uncertainty estimators built on :mod:`nmerci.nn`.

Every estimator yields a predictor whose ``predict(x)`` returns an
:class:`UncertainPrediction`. Ensembles report the member mean as the
prediction and the population standard deviation (divide by M) of the member
outputs as the uncertainty; the raw member outputs are kept so both can be
recomputed.

Networks are trained on z-normalized inputs and targets (statistics of the
full training set) and their outputs are mapped back to target units.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from . import nn
from .nn import MlpSpec, MlpState, Scaler, TrainConfig, TrainingDiverged

__all__ = [
    "Ensemble",
    "FittedNet",
    "LearnedErrorPredictor",
    "McDropoutPredictor",
    "MethodKind",
    "UncertainPrediction",
    "bagging",
    "bootstrap_indices",
    "fit_net",
    "learned_error",
    "mc_dropout",
    "member_seeds",
    "moments",
    "multi_epochs",
    "multi_inits",
    "multi_networks",
]


class MethodKind(str, Enum):
    MC_DROPOUT = "mcd"
    MULTI_INITS = "mi"
    BAGGING = "bagging"
    MULTI_EPOCHS = "me"
    MULTI_NETWORKS = "mn"
    LEARNED_ERROR = "le"

    @property
    def label(self) -> str:
        return _LABELS[self]


_LABELS = {
    MethodKind.MC_DROPOUT: "Monte Carlo Dropout",
    MethodKind.MULTI_INITS: "Multi Inits",
    MethodKind.BAGGING: "Bagging",
    MethodKind.MULTI_EPOCHS: "Multi Epochs",
    MethodKind.MULTI_NETWORKS: "Multi Networks",
    MethodKind.LEARNED_ERROR: "Learned Error",
}

DEFAULT_MC_SAMPLES = 50
DEFAULT_MEMBERS = 20
DEFAULT_WINDOW = 20
DEFAULT_ARCHITECTURES = ((50,), (100,), (200,), (100, 100))


@dataclass(frozen=True, eq=False)
class UncertainPrediction:
    y_hat: np.ndarray
    sigma: np.ndarray
    member_outputs: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if np.any(self.sigma < 0):
            raise ValueError("negative uncertainty")


def moments(outputs: np.ndarray) -> UncertainPrediction:
    """Mean and population standard deviation over axis 0 of ``(M, n)`` outputs."""
    outputs = np.asarray(outputs, dtype=np.float64)
    if outputs.ndim != 2 or outputs.shape[0] < 2:
        raise ValueError("need at least two member outputs to form an ensemble")
    return UncertainPrediction(outputs.mean(axis=0), outputs.std(axis=0), outputs)


@dataclass(frozen=True, eq=False)
class FittedNet:
    """A trained network together with the normalization it was trained under."""

    state: MlpState
    scaler: Scaler

    def __call__(self, x) -> np.ndarray:
        return self.scaler.y_inverse(nn.forward(self.state, self.scaler.x(x)))

    def sample(self, x, n_samples: int, rng: np.random.Generator) -> np.ndarray:
        """Dropout-active outputs, shape ``(n_samples, len(x))``."""
        return self.scaler.y_inverse(nn.forward_samples(self.state, self.scaler.x(x), n_samples, rng))


@dataclass(frozen=True, eq=False)
class Ensemble:
    kind: MethodKind
    members: tuple[FittedNet, ...]
    info: dict = field(default_factory=dict, repr=False)

    def member_outputs(self, x) -> np.ndarray:
        return np.stack([m(x) for m in self.members])

    def predict(self, x) -> UncertainPrediction:
        return moments(self.member_outputs(x))


def member_seeds(seed: int, count: int, stream: int = 0) -> list[int]:
    """``count`` distinct non-negative seeds derived from ``seed``."""
    seeds = np.random.SeedSequence([seed, stream]).generate_state(count, dtype=np.uint64)
    seeds = [int(s) >> 1 for s in seeds]
    if len(set(seeds)) != count:  # pragma: no cover - 2**-63 odds
        raise RuntimeError("seed collision")
    return seeds


def _train_members(specs: Sequence[MlpSpec], data, cfg: TrainConfig, **kw) -> list[MlpState]:
    states = [nn.init(s) for s in specs]
    try:
        return nn.train_many(states, data, cfg, **kw)
    except TrainingDiverged as exc:
        if exc.member is None:
            raise
        raise TrainingDiverged(
            f"training diverged for member {exc.member} (seed {specs[exc.member].seed})",
            member=exc.member,
            epoch=exc.epoch,
        ) from exc


def fit_net(spec: MlpSpec, x, y, cfg: TrainConfig, scaler: Optional[Scaler] = None) -> FittedNet:
    """Train one network on z-normalized data."""
    scaler = scaler or Scaler.fit(x, y)
    (state,) = _train_members([spec], [(scaler.x(x), scaler.y(y))], cfg)
    return FittedNet(state, scaler)


def mc_dropout(model: FittedNet, x, n_samples: int = DEFAULT_MC_SAMPLES, seed: int = 0) -> UncertainPrediction:
    """Moments of ``n_samples`` forward passes with dropout left on."""
    if model.state.dropout_p <= 0:
        raise ValueError("MCD requires dropout")
    if n_samples < 2:
        raise ValueError("MCD needs at least two samples")
    rng = np.random.default_rng(seed)
    return moments(model.sample(x, n_samples, rng))


@dataclass(frozen=True, eq=False)
class McDropoutPredictor:
    net: FittedNet
    n_samples: int = DEFAULT_MC_SAMPLES
    seed: int = 0
    kind: MethodKind = MethodKind.MC_DROPOUT

    def predict(self, x) -> UncertainPrediction:
        return mc_dropout(self.net, x, self.n_samples, self.seed)


def _check_members(count: int) -> None:
    if count < 2:
        raise ValueError(f"an ensemble needs at least 2 members, got {count}")


def multi_inits(
    spec: MlpSpec, x, y, cfg: TrainConfig, n_members: int = DEFAULT_MEMBERS, seeds: Optional[Sequence[int]] = None
) -> Ensemble:
    """Same network trained from ``n_members`` different random seeds."""
    seeds = list(seeds) if seeds is not None else member_seeds(spec.seed, n_members, stream=1)
    _check_members(len(seeds))
    if len(set(seeds)) != len(seeds):
        raise ValueError("multi-inits seeds must be distinct")
    scaler = Scaler.fit(x, y)
    states = _train_members([replace(spec, seed=s) for s in seeds], (scaler.x(x), scaler.y(y)), cfg)
    return Ensemble(MethodKind.MULTI_INITS, tuple(FittedNet(s, scaler) for s in states), {"seeds": seeds})


def bootstrap_indices(n: int, seed: int) -> np.ndarray:
    """Indices of a size-``n`` resample with replacement."""
    return np.random.default_rng([seed, 2]).integers(0, n, size=n)


def bagging(
    spec: MlpSpec, x, y, cfg: TrainConfig, n_members: int = DEFAULT_MEMBERS, seeds: Optional[Sequence[int]] = None
) -> Ensemble:
    """One network per bootstrap resample of the training set.

    Member ``i`` uses ``seeds[i]`` both for its initialization and for its
    resample (see :func:`bootstrap_indices`).
    """
    seeds = list(seeds) if seeds is not None else member_seeds(spec.seed, n_members, stream=2)
    _check_members(len(seeds))
    scaler = Scaler.fit(x, y)
    xs, ys = scaler.x(x), scaler.y(y)
    resamples = [bootstrap_indices(len(ys), s) for s in seeds]
    data = [(xs[idx], ys[idx]) for idx in resamples]
    states = _train_members([replace(spec, seed=s) for s in seeds], data, cfg)
    return Ensemble(
        MethodKind.BAGGING,
        tuple(FittedNet(s, scaler) for s in states),
        {"seeds": seeds, "resamples": resamples},
    )


def multi_epochs(spec: MlpSpec, x, y, cfg: TrainConfig, window: int = DEFAULT_WINDOW) -> Ensemble:
    """Snapshots of one training run taken after each of its last ``window`` epochs.

    The learning rate is left untouched; the final window stands in for the
    loss plateau.
    """
    _check_members(window)
    if window >= cfg.epochs:
        raise ValueError(f"window ({window}) must be smaller than the epoch count ({cfg.epochs})")
    scaler = Scaler.fit(x, y)
    snapshots: list[MlpState] = []
    _train_members(
        [spec],
        [(scaler.x(x), scaler.y(y))],
        cfg,
        snapshot_hook=lambda epoch, states: snapshots.append(states[0]),
        snapshot_from=cfg.epochs - window + 1,
    )
    return Ensemble(MethodKind.MULTI_EPOCHS, tuple(FittedNet(s, scaler) for s in snapshots), {"window": window})


def multi_networks(specs: Sequence[MlpSpec], x, y, cfg: TrainConfig) -> Ensemble:
    """One member per architecture."""
    specs = list(specs)
    _check_members(len(specs))
    scaler = Scaler.fit(x, y)
    data = [(scaler.x(x), scaler.y(y))]
    members = []
    for i, spec in enumerate(specs):
        try:
            (state,) = _train_members([spec], data, cfg)
        except TrainingDiverged as exc:
            raise TrainingDiverged(f"training diverged for member {i} ({spec.hidden_sizes})", member=i) from exc
        members.append(FittedNet(state, scaler))
    return Ensemble(MethodKind.MULTI_NETWORKS, tuple(members), {"architectures": [s.hidden_sizes for s in specs]})


@dataclass(frozen=True, eq=False)
class LearnedErrorPredictor:
    base: FittedNet
    error_net: FittedNet
    targets: np.ndarray = field(repr=False)
    kind: MethodKind = MethodKind.LEARNED_ERROR

    def predict(self, x) -> UncertainPrediction:
        return UncertainPrediction(self.base(x), np.maximum(self.error_net(x), 0.0))


def learned_error(base: FittedNet, error_spec: MlpSpec, x, y, cfg: TrainConfig) -> LearnedErrorPredictor:
    """Second network regressing the base network's absolute training errors.

    Trained on the same points the base saw, so it tends to be optimistic
    there.
    """
    targets = np.abs(base(x) - np.asarray(y, dtype=np.float64).reshape(-1))
    error_net = fit_net(error_spec, x, targets, cfg)
    return LearnedErrorPredictor(base, error_net, targets)
