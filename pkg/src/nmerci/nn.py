"""Small fully connected ReLU regressor trained by full-batch gradient descent.

Parameters are stored with a leading *stack* axis so that several networks of
the same architecture can be evaluated and trained together (ensembles are
the main customer). A single network is simply a stack of one; every public
function accepts and returns plain per-network :class:`MlpState` values.

Each network draws its dropout masks from its own generator, so training a
network inside a stack gives the same trajectory as training it alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels

__all__ = [
    "Gradient",
    "MlpSpec",
    "MlpState",
    "Scaler",
    "TrainConfig",
    "TrainingDiverged",
    "forward",
    "grad",
    "init",
    "loss",
    "train",
    "train_many",
]


class TrainingDiverged(RuntimeError):
    """The loss became non-finite during training."""

    def __init__(self, message: str, member: Optional[int] = None, epoch: Optional[int] = None):
        super().__init__(message)
        self.member = member
        self.epoch = epoch


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int = 1
    hidden_sizes: tuple[int, ...] = (100,)
    dropout_p: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if not self.hidden_sizes or min(self.hidden_sizes) < 1:
            raise ValueError("hidden_sizes must be a nonempty sequence of positive sizes")
        if not (0.0 <= self.dropout_p < 1.0):
            raise ValueError(f"dropout_p must be in [0, 1), got {self.dropout_p!r}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_sizes, 1)


@dataclass(frozen=True, eq=False)
class MlpState:
    """Weights ``(fan_in, fan_out)`` and biases ``(fan_out,)`` per layer.

    ``rng_state`` is the bit-generator state of the dropout stream; training
    resumes from it and stores the advanced state in the returned value.
    """

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    dropout_p: float
    rng_state: dict = field(repr=False)

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0], *(w.shape[1] for w in self.weights))

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    def params(self) -> list[np.ndarray]:
        """Flat parameter list ``[W0, b0, W1, b1, ...]`` (copies)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w.copy(), b.copy()]
        return out

    def equals(self, other: "MlpState") -> bool:
        """Bit-for-bit comparison of parameters and generator state."""
        return (
            self.dropout_p == other.dropout_p
            and self.rng_state == other.rng_state
            and len(self.weights) == len(other.weights)
            and all(np.array_equal(a, b) for a, b in zip(self.params(), other.params()))
        )


@dataclass(frozen=True)
class Gradient:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    learning_rate: float = 1e-3
    full_batch: bool = True

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not self.full_batch:
            raise ValueError("only full-batch gradient descent is supported")


@dataclass(frozen=True)
class Scaler:
    """Z-normalization of inputs and targets fitted on training data."""

    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float

    @classmethod
    def fit(cls, x, y) -> "Scaler":
        x = _as_2d(x)
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        x_std = x.std(axis=0)
        y_std = float(y.std())
        return cls(
            x_mean=x.mean(axis=0),
            x_std=np.where(x_std > 0, x_std, 1.0),
            y_mean=float(y.mean()),
            y_std=y_std if y_std > 0 else 1.0,
        )

    @classmethod
    def identity(cls, input_dim: int = 1) -> "Scaler":
        return cls(np.zeros(input_dim), np.ones(input_dim), 0.0, 1.0)

    def x(self, x) -> np.ndarray:
        return (_as_2d(x) - self.x_mean) / self.x_std

    def y(self, y) -> np.ndarray:
        return (np.asarray(y, dtype=np.float64) - self.y_mean) / self.y_std

    def y_inverse(self, z) -> np.ndarray:
        return np.asarray(z) * self.y_std + self.y_mean

    def as_dict(self) -> dict:
        return {
            "x_mean": [float(v) for v in self.x_mean],
            "x_std": [float(v) for v in self.x_std],
            "y_mean": self.y_mean,
            "y_std": self.y_std,
        }


def _as_2d(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0:
        return x.reshape(1, 1)
    if x.ndim == 1:
        return x[:, None]
    return x


def _init_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([seed, 0])


def _dropout_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([seed, 1])


def init(spec: MlpSpec) -> MlpState:
    """Scaled-uniform (Glorot) weights ``U(-r, r)``, ``r = sqrt(6/(fan_in+fan_out))``; zero biases."""
    rng = _init_rng(spec.seed)
    sizes = spec.layer_sizes
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        r = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-r, r, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpState(
        weights=tuple(weights),
        biases=tuple(biases),
        dropout_p=spec.dropout_p,
        rng_state=_dropout_rng(spec.seed).bit_generator.state,
    )


# --- stacked internals -------------------------------------------------------
# Shapes: weights (S, fan_in, fan_out), biases (S, 1, fan_out), inputs either
# (N, d) shared by all members or (S, N, d), activations (S, N, h).


def _mm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # batched matmul with a unit inner dimension is far slower than broadcasting
    if a.shape[-1] == 1:
        return a * b
    return a @ b


def _stack(states: Sequence[MlpState]) -> tuple[list[np.ndarray], list[np.ndarray]]:
    sizes = states[0].layer_sizes
    for s in states:
        if s.layer_sizes != sizes or s.dropout_p != states[0].dropout_p:
            raise ValueError("stacked networks must share architecture and dropout rate")
    ws = [np.stack([s.weights[i] for s in states]) for i in range(len(sizes) - 1)]
    bs = [np.stack([s.biases[i] for s in states])[:, None, :] for i in range(len(sizes) - 1)]
    return ws, bs


def _unstack(ws, bs, p: float, rng_states: Sequence[dict]) -> list[MlpState]:
    return [
        MlpState(
            weights=tuple(w[i].copy() for w in ws),
            biases=tuple(b[i].reshape(-1).copy() for b in bs),
            dropout_p=p,
            rng_state=rng_states[i],
        )
        for i in range(len(rng_states))
    ]


def _keep_threshold(p: float) -> int:
    # a unit survives when its uniform 32-bit word is >= ceil(p * 2**32), so
    # the drop probability is within 2**-32 of p
    return math.ceil(p * 2**32)


def _draw_words(rng: np.random.Generator, n_passes: int, shapes: Sequence[tuple[int, int]]) -> list[np.ndarray]:
    """Raw dropout draws, one ``(n_passes, N, h)`` uint32 array per hidden layer.

    The stream is consumed pass by pass and, within a pass, layer by layer,
    each layer taking ``ceil(N*h/2)`` 64-bit words. Drawing ``k`` passes at
    once therefore gives the same masks as ``k`` single-pass draws.
    """
    sizes = [a * b for a, b in shapes]
    words64 = [(n + 1) // 2 for n in sizes]
    raw = rng.bit_generator.random_raw(n_passes * sum(words64)).reshape(n_passes, sum(words64))
    out = []
    offset = 0
    for (a, b), size, w in zip(shapes, sizes, words64):
        block = np.ascontiguousarray(raw[:, offset : offset + w]).view(np.uint32)[:, :size]
        # contiguous so every layer has the same array type in the kernel
        out.append(np.ascontiguousarray(block).reshape(n_passes, a, b))
        offset += w
    return out


def _keep_masks(rng: np.random.Generator, n_passes: int, shapes, p: float) -> list[np.ndarray]:
    thr = _keep_threshold(p)
    return [w >= thr for w in _draw_words(rng, n_passes, shapes)]


def _forward_stack(ws, bs, x, keep=None, p: float = 0.0) -> np.ndarray:
    """Stacked outputs (S, N); ``keep`` holds boolean keep-masks (S, N, h) per hidden layer."""
    h = x
    for layer in range(len(ws) - 1):
        z = _mm(h, ws[layer])
        z += bs[layer]
        if keep is None:
            h = np.maximum(z, 0.0)
        else:
            h = z * np.multiply(keep[layer] & (z > 0), 1.0 / (1.0 - p))
    out = _mm(h, ws[-1]) + bs[-1]
    return out[..., 0]


class _Kernel:
    """Parameter, gradient and loss buffers laid out for :mod:`._kernels`."""

    def __init__(self, ws, bs, X, Y, p: float, thr: int):
        S = ws[0].shape[0]
        self.S = S
        self.ws = tuple(np.ascontiguousarray(w) for w in ws)
        self.bs = tuple(np.ascontiguousarray(b.reshape(S, -1)) for b in bs)
        self.gws = tuple(np.zeros_like(w) for w in self.ws)
        self.gbs = tuple(np.zeros_like(b) for b in self.bs)
        self.X = np.ascontiguousarray(X)
        self.Y = np.ascontiguousarray(Y)
        self.p = p
        self.thr = thr
        self.scale = 1.0 / (1.0 - p)
        self._no_words = tuple(np.zeros((1, 0, 1, w.shape[-1]), dtype=np.uint32) for w in ws[:-1])

    def run(self, lr: float, n_epochs: int, words=None, members: Optional[range] = None) -> np.ndarray:
        """Advance ``members`` (default: all) by ``n_epochs``; returns their losses ``(len, n_epochs)``."""
        members = members if members is not None else range(self.S)
        losses = np.full((self.S, n_epochs), np.nan)
        dropout = words is not None
        _kernels.descend(
            self.ws, self.bs, self.X, self.Y, words if dropout else self._no_words,
            self.thr, self.scale, dropout, lr, n_epochs, self.gws, self.gbs, losses,
            members.start, members.stop,
        )
        return losses[members.start : members.stop]

    def params(self):
        return list(self.ws), [b[:, None, :] for b in self.bs]


def _check_input(state: MlpState, x: np.ndarray) -> None:
    if x.shape[-1] != state.input_dim:
        raise ValueError(f"input dimension mismatch: expected {state.input_dim}, got {x.shape[-1]}")


def forward(
    state: MlpState,
    x,
    mode: str = "eval",
    dropout_active: bool = False,
    rng: Optional[np.random.Generator] = None,
):
    """Network output for one input vector (returns a float) or a batch (returns (N,)).

    Dropout is applied in ``mode="train"`` or when ``dropout_active`` is set;
    it then needs an explicit ``rng``. A 1-D ``x`` is one input vector unless
    the network has scalar input, in which case it is a batch of scalars.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 0 or (arr.ndim == 1 and state.input_dim > 1)
    X = arr.reshape(1, -1) if single else _as_2d(arr)
    _check_input(state, X)
    ws, bs = _stack([state])
    keep = None
    if (mode == "train" or dropout_active) and state.dropout_p > 0:
        if rng is None:
            raise ValueError("stochastic forward pass needs an rng")
        keep = _keep_masks(rng, 1, [(X.shape[0], w.shape[-1]) for w in ws[:-1]], state.dropout_p)
    out = _forward_stack(ws, bs, X, keep, state.dropout_p)
    return float(out[0, 0]) if single else out[0]


def forward_samples(state: MlpState, x, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """``n_samples`` dropout-active passes over a batch, shape (n_samples, N).

    Pass ``t`` uses the same masks that the ``t``-th of ``n_samples``
    consecutive ``forward(..., dropout_active=True, rng=rng)`` calls would.
    """
    X = _as_2d(x)
    _check_input(state, X)
    ws, bs = _stack([state])
    keep = None
    if state.dropout_p > 0:
        keep = _keep_masks(rng, n_samples, [(X.shape[0], w.shape[-1]) for w in ws[:-1]], state.dropout_p)
    return _forward_stack(ws, bs, X, keep, state.dropout_p)


def loss(state: MlpState, x, y) -> float:
    """Mean squared error of the deterministic network."""
    pred = forward(state, _as_2d(x))
    return float(np.mean((pred - np.asarray(y, dtype=np.float64).reshape(-1)) ** 2))


def grad(state: MlpState, x, y, keep: Optional[Sequence[np.ndarray]] = None) -> Gradient:
    """Exact gradient of the mean squared error over a batch.

    ``keep`` optionally fixes dropout: one boolean ``(N, h)`` keep-mask per
    hidden layer, survivors scaled by ``1/(1-p)``. Without it the network is
    deterministic.
    """
    X = _as_2d(x)
    _check_input(state, X)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if len(y) == 0 or len(y) != X.shape[0]:
        raise ValueError("batch must be nonempty with one target per input")
    ws, bs = _stack([state])
    if keep is None:
        p, words = 0.0, None
    else:
        p = state.dropout_p
        if p == 0:
            raise ValueError("keep-masks given for a network without dropout")
        words = tuple(np.asarray(k, dtype=bool).astype(np.uint32)[None, None] for k in keep)
        if len(words) != len(ws) - 1 or any(w.shape[2:] != (len(y), ws[i].shape[-1]) for i, w in enumerate(words)):
            raise ValueError("keep-masks must be one (N, h) array per hidden layer")
    kernel = _Kernel(ws, bs, X[None], y[None], p, 1)
    kernel.run(0.0, 1, words)
    return Gradient(weights=tuple(g[0].copy() for g in kernel.gws), biases=tuple(g[0].copy() for g in kernel.gbs))


SnapshotHook = Callable[[int, MlpState], None]

_CHUNK_EPOCHS = 64


def train(
    state: MlpState,
    x,
    y,
    cfg: TrainConfig,
    snapshot_hook: Optional[SnapshotHook] = None,
    snapshot_from: int = 1,
) -> MlpState:
    """Full-batch gradient descent on mean squared error.

    ``snapshot_hook(epoch, state)`` is called after every epoch ``>=
    snapshot_from`` (epochs count from 1) with an independent copy of the
    parameters.
    """
    hook = None
    if snapshot_hook is not None:
        def hook(epoch, states):
            snapshot_hook(epoch, states[0])
    return train_many([state], [(x, y)], cfg, hook, snapshot_from)[0]


def train_many(
    states: Sequence[MlpState],
    data,
    cfg: TrainConfig,
    snapshot_hook: Optional[Callable[[int, list[MlpState]], None]] = None,
    snapshot_from: int = 1,
) -> list[MlpState]:
    """Train several same-architecture networks side by side.

    ``data`` is either one ``(x, y)`` tuple shared by every network or a list
    with one ``(x, y)`` pair per network (all of the same size). Each network
    follows exactly the trajectory it would follow if trained alone. The hook,
    if given, receives the list of member states after each epoch from
    ``snapshot_from`` on.
    """
    states = list(states)
    if not states:
        raise ValueError("no networks to train")
    S = len(states)
    if isinstance(data, tuple):
        X = _as_2d(data[0])[None]
        Y = np.asarray(data[1], dtype=np.float64).reshape(1, -1)
    else:
        if len(data) != S:
            raise ValueError(f"expected {S} datasets, got {len(data)}")
        X = np.stack([_as_2d(d[0]) for d in data])
        Y = np.stack([np.asarray(d[1], dtype=np.float64).reshape(-1) for d in data])
    n = Y.shape[-1]
    if n == 0 or X.shape[-2] != n:
        raise ValueError("training data must be nonempty with one target per input")
    _check_input(states[0], X)
    X = np.ascontiguousarray(X)
    Y = np.ascontiguousarray(Y)

    ws, bs = _stack(states)
    p = states[0].dropout_p
    kernel = _Kernel(ws, bs, X, Y, p, _keep_threshold(p))
    rngs = []
    for s in states:
        g = np.random.default_rng()
        g.bit_generator.state = s.rng_state
        rngs.append(g)
    shapes = [(n, w.shape[-1]) for w in ws[:-1]]

    def unstacked():
        return _unstack(*kernel.params(), p, [g.bit_generator.state for g in rngs])

    epoch = 0
    while epoch < cfg.epochs:
        todo = min(_CHUNK_EPOCHS, cfg.epochs - epoch)
        if snapshot_hook is not None:
            # single steps once snapshots are due
            todo = 1 if epoch + 1 >= snapshot_from else min(todo, snapshot_from - 1 - epoch)
        for i, g in enumerate(rngs):
            words = None
            if p > 0:
                words = tuple(w[None] for w in _draw_words(g, todo, shapes))
            losses = kernel.run(cfg.learning_rate, todo, words, range(i, i + 1))
            if not np.all(np.isfinite(losses)):
                at = epoch + int(np.argmax(~np.isfinite(losses[0]))) + 1
                raise TrainingDiverged(f"training diverged (member {i}, epoch {at})", member=i, epoch=at)
        epoch += todo
        if snapshot_hook is not None and epoch >= snapshot_from:
            snapshot_hook(epoch, unstacked())

    out = unstacked()
    for i, st in enumerate(out):
        if not all(np.all(np.isfinite(a)) for a in st.params()):
            raise TrainingDiverged(f"training diverged (member {i}, non-finite final parameters)", member=i)
    return out
