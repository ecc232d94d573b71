"""One-dimensional cubic regression benchmark for uncertainty estimators.

Training data: ``y = x**3 + N(0, noise_std**2)`` at ``n_train`` points drawn
uniformly in ``[x_low, x_high]``; points inside ``[outlier_low,
outlier_high]`` get ``outlier_bias`` added. Evaluation uses a noise-free grid
that extends beyond the training range so extrapolation is scored too.

Each method is trained ``n_runs`` times; the per-point predictions and
uncertainties are averaged over runs and the averages are scored.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import ensembles as ens
from .ensembles import MethodKind
from .metric import EvalSet, MetricConfig, MetricReport, n_merci
from .nn import MlpSpec, TrainConfig, TrainingDiverged

log = logging.getLogger(__name__)

__all__ = [
    "DEFAULT_ALPHAS",
    "DEFAULT_METHODS",
    "METHOD_NAMES",
    "REFERENCE_METHODS",
    "RunResult",
    "ToyConfig",
    "ToyData",
    "alpha_sweep",
    "generate_toy",
    "run_methods",
]

DEFAULT_METHODS = ("mi", "bagging", "mcd", "me")
# Injected references: the oracle sets sigma to the true error of the
# run-averaged prediction, the constant sets sigma to 1 everywhere.
REFERENCE_METHODS = ("oracle", "constant")
METHOD_NAMES = tuple(k.value for k in MethodKind) + REFERENCE_METHODS
DEFAULT_ALPHAS = tuple(float(a) for a in range(5, 101, 5))

# stable ids keep per-method seed streams independent of the order methods are requested in
_METHOD_IDS = {name: i for i, name in enumerate(METHOD_NAMES)}


@dataclass(frozen=True)
class ToyConfig:
    n_train: int = 20
    x_low: float = -4.0
    x_high: float = 4.0
    noise_std: float = 3.0
    outlier_low: float = -2.3
    outlier_high: float = -1.3
    outlier_bias: float = 20.0
    pin_outliers: Optional[int] = None
    n_runs: int = 20
    test_low: float = -6.0
    test_high: float = 6.0
    n_test: int = 200
    master_seed: int = 0
    # network and optimizer
    hidden_sizes: tuple[int, ...] = (100,)
    dropout_p: float = 0.2
    epochs: int = 500
    learning_rate: float = 0.1
    # method parameters
    mc_samples: int = ens.DEFAULT_MC_SAMPLES
    n_members: int = ens.DEFAULT_MEMBERS
    me_window: int = ens.DEFAULT_WINDOW
    mn_architectures: tuple[tuple[int, ...], ...] = ens.DEFAULT_ARCHITECTURES
    le_hidden_sizes: tuple[int, ...] = (100,)
    # scoring: None trims the MAE to the inliers for alpha < 100 (metric default)
    trim_mae: Optional[bool] = None

    def __post_init__(self) -> None:
        if not (self.x_low <= self.outlier_low <= self.outlier_high <= self.x_high):
            raise ValueError("outlier interval must lie inside [x_low, x_high]")
        if not self.noise_std >= 0:
            raise ValueError("noise_std must be >= 0")
        if self.n_train < 1 or self.n_runs < 1 or self.n_test < 2:
            raise ValueError("n_train and n_runs must be >= 1, n_test >= 2")
        if self.pin_outliers is not None and not (0 <= self.pin_outliers <= self.n_train):
            raise ValueError("pin_outliers must be between 0 and n_train")

    @property
    def train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, learning_rate=self.learning_rate)

    def spec(self, seed: int, hidden_sizes: Optional[Sequence[int]] = None, dropout_p: Optional[float] = None) -> MlpSpec:
        return MlpSpec(
            input_dim=1,
            hidden_sizes=tuple(hidden_sizes or self.hidden_sizes),
            dropout_p=self.dropout_p if dropout_p is None else dropout_p,
            seed=seed,
        )

    def as_dict(self) -> dict:
        out = {}
        for k in self.__dataclass_fields__:
            v = getattr(self, k)
            out[k] = [list(a) for a in v] if k == "mn_architectures" else (list(v) if isinstance(v, tuple) else v)
        return out


@dataclass(frozen=True, eq=False)
class ToyData:
    x_train: np.ndarray
    y_train: np.ndarray
    is_outlier: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray


def generate_toy(cfg: ToyConfig, seed: int) -> ToyData:
    """Draw a training set and build the noise-free test grid.

    With ``pin_outliers=k`` exactly ``k`` training inputs fall in the outlier
    interval and the others are drawn uniformly from the rest of the range.
    """
    rng = np.random.default_rng([seed, 7])
    if cfg.pin_outliers is None:
        x = rng.uniform(cfg.x_low, cfg.x_high, cfg.n_train)
    else:
        k = cfg.pin_outliers
        inside = rng.uniform(cfg.outlier_low, cfg.outlier_high, k)
        left = cfg.outlier_low - cfg.x_low
        right = cfg.x_high - cfg.outlier_high
        u = rng.uniform(0.0, left + right, cfg.n_train - k)
        outside = np.where(u < left, cfg.x_low + u, cfg.outlier_high + (u - left))
        # an endpoint draw would land on the interval boundary and count as inside
        outside = np.where(outside == cfg.outlier_high, np.nextafter(cfg.outlier_high, np.inf), outside)
        x = rng.permutation(np.concatenate([inside, outside]))
    noise = rng.normal(0.0, cfg.noise_std, cfg.n_train) if cfg.noise_std > 0 else np.zeros(cfg.n_train)
    is_outlier = (x >= cfg.outlier_low) & (x <= cfg.outlier_high)
    y = x**3 + noise + np.where(is_outlier, cfg.outlier_bias, 0.0)
    x_test = np.linspace(cfg.test_low, cfg.test_high, cfg.n_test)
    return ToyData(x, y, is_outlier, x_test, x_test**3)


@dataclass(frozen=True, eq=False)
class RunResult:
    """Scores and logs of one method over all runs.

    ``run_y_hat``/``run_sigma`` hold each run's test-grid outputs (shape
    ``(n_runs, n_test)``); ``samples`` holds their run averages and is what
    gets scored.
    """

    method: str
    x_test: np.ndarray
    samples: EvalSet
    run_y_hat: np.ndarray = field(repr=False)
    run_sigma: np.ndarray = field(repr=False)
    n_merci_by_alpha: dict = field(default_factory=dict, repr=False)
    normalization: dict = field(default_factory=dict, repr=False)
    seeds: list = field(default_factory=list, repr=False)

    @property
    def label(self) -> str:
        try:
            return MethodKind(self.method).label
        except ValueError:
            return self.method.capitalize()

    def score(self, alpha: float) -> Optional[float]:
        return self.n_merci_by_alpha[float(alpha)].n_merci


def run_seed(master_seed: int, method: str, run: int) -> int:
    return ens.member_seeds(master_seed, 1, stream=1000 * (_METHOD_IDS[method] + 1) + run)[0]


def _one_run(method: str, cfg: ToyConfig, data: ToyData, seed: int) -> tuple[ens.UncertainPrediction, dict]:
    x, y, grid = data.x_train, data.y_train, data.x_test
    tc = cfg.train_config
    if method == "mi":
        model = ens.multi_inits(cfg.spec(seed), x, y, tc, cfg.n_members)
        return model.predict(grid), model.members[0].scaler.as_dict()
    if method == "bagging":
        model = ens.bagging(cfg.spec(seed), x, y, tc, cfg.n_members)
        return model.predict(grid), model.members[0].scaler.as_dict()
    if method == "mcd":
        net = ens.fit_net(cfg.spec(seed), x, y, tc)
        return ens.mc_dropout(net, grid, cfg.mc_samples, seed), net.scaler.as_dict()
    if method == "me":
        model = ens.multi_epochs(cfg.spec(seed), x, y, tc, cfg.me_window)
        return model.predict(grid), model.members[0].scaler.as_dict()
    if method == "mn":
        seeds = ens.member_seeds(seed, len(cfg.mn_architectures), stream=3)
        specs = [cfg.spec(s, hidden_sizes=h) for s, h in zip(seeds, cfg.mn_architectures)]
        model = ens.multi_networks(specs, x, y, tc)
        return model.predict(grid), model.members[0].scaler.as_dict()
    if method == "le":
        base = ens.fit_net(cfg.spec(seed), x, y, tc)
        error_spec = cfg.spec(ens.member_seeds(seed, 1, stream=4)[0], hidden_sizes=cfg.le_hidden_sizes)
        model = ens.learned_error(base, error_spec, x, y, tc)
        return model.predict(grid), base.scaler.as_dict()
    if method in REFERENCE_METHODS:
        net = ens.fit_net(cfg.spec(seed), x, y, tc)
        pred = net(grid)
        return ens.UncertainPrediction(pred, np.zeros_like(pred)), net.scaler.as_dict()
    raise ValueError(f"unknown method {method!r}; valid: {', '.join(METHOD_NAMES)}")


def check_methods(methods: Iterable[str]) -> list[str]:
    methods = list(methods)
    if not methods:
        raise ValueError("at least one method is required")
    unknown = [m for m in methods if m not in METHOD_NAMES]
    if unknown:
        raise ValueError(f"unknown method(s) {', '.join(unknown)}; valid: {', '.join(METHOD_NAMES)}")
    return methods


def run_methods(
    cfg: ToyConfig,
    methods: Sequence[str] = DEFAULT_METHODS,
    alphas: Sequence[float] = DEFAULT_ALPHAS,
    data: Optional[ToyData] = None,
) -> list[RunResult]:
    """Train and score every method on one toy dataset.

    The dataset is drawn once from ``cfg.master_seed`` and shared by all
    methods and runs; runs differ only in their training seeds.
    """
    methods = check_methods(methods)
    data = data if data is not None else generate_toy(cfg, cfg.master_seed)
    results = []
    for method in methods:
        preds, seeds, norm = [], [], {}
        for run in range(cfg.n_runs):
            seed = run_seed(cfg.master_seed, method, run)
            try:
                pred, norm = _one_run(method, cfg, data, seed)
            except TrainingDiverged as exc:
                raise TrainingDiverged(f"{method} run {run}: {exc}", member=exc.member, epoch=exc.epoch) from exc
            preds.append(pred)
            seeds.append(seed)
        run_y_hat = np.stack([p.y_hat for p in preds])
        run_sigma = np.stack([p.sigma for p in preds])
        y_hat = run_y_hat.mean(axis=0)
        if method == "oracle":
            sigma = np.abs(y_hat - data.y_test)
        elif method == "constant":
            sigma = np.ones_like(y_hat)
        else:
            sigma = run_sigma.mean(axis=0)
        samples = EvalSet(y_hat, sigma, data.y_test)
        result = RunResult(
            method=method,
            x_test=data.x_test,
            samples=samples,
            run_y_hat=run_y_hat,
            run_sigma=run_sigma,
            normalization=norm,
            seeds=seeds,
        )
        result.n_merci_by_alpha.update(_score_row(samples, alphas, cfg.trim_mae))
        log.info("%s: n-MeRCI@85 = %s", method, result.n_merci_by_alpha.get(85.0))
        results.append(result)
    return results


def _score_row(samples: EvalSet, alphas: Sequence[float], trim_mae: Optional[bool] = None) -> dict[float, MetricReport]:
    return {float(a): n_merci(samples, MetricConfig(alpha=a, trim_mae=trim_mae)) for a in alphas}


def alpha_sweep(
    results: Sequence[RunResult], alphas: Sequence[float] = DEFAULT_ALPHAS, trim_mae: Optional[bool] = None
) -> dict[str, dict[float, MetricReport]]:
    """Method x alpha table of n-MeRCI reports; degenerate cells keep their flag."""
    for a in alphas:
        if not (0 < float(a) <= 100):
            raise ValueError(f"alpha must be in (0, 100], got {a!r}")
    return {r.method: _score_row(r.samples, alphas, trim_mae) for r in results}
