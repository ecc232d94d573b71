import numpy as np
import pytest
from hypothesis import given, strategies as st

from nmerci import ensembles as ens
from nmerci import nn
from nmerci.ensembles import FittedNet, MethodKind, moments
from nmerci.nn import MlpSpec, Scaler, TrainConfig, TrainingDiverged

SPEC = MlpSpec(1, (16,), 0.2, seed=3)
CFG = TrainConfig(epochs=120, learning_rate=0.05)
X = np.linspace(-2, 2, 12)
Y = X**3 / 4 + np.sin(3 * X)
GRID = np.linspace(-3, 3, 25)


def recompute(outputs):
    outputs = np.asarray(outputs)
    m = outputs.shape[0]
    mean = outputs.sum(axis=0) / m
    std = np.sqrt(((outputs - mean) ** 2).sum(axis=0) / m)
    return mean, std


def assert_moments_match(pred):
    mean, std = recompute(pred.member_outputs)
    np.testing.assert_allclose(pred.y_hat, mean, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(pred.sigma, std, rtol=1e-10, atol=1e-12)


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=2))
def test_two_member_population_std(pair):
    p = moments(np.array(pair)[:, None])
    assert p.sigma[0] == pytest.approx(abs(pair[0] - pair[1]) / 2, rel=1e-12, abs=1e-12)


def test_moments_need_two_members():
    with pytest.raises(ValueError):
        moments(np.ones((1, 4)))
    assert np.all(moments(np.ones((3, 4))).sigma == 0)


def test_member_seeds_distinct_and_deterministic():
    a = ens.member_seeds(7, 20, stream=1)
    assert a == ens.member_seeds(7, 20, stream=1)
    assert len(set(a)) == 20 and all(s >= 0 for s in a)
    assert a != ens.member_seeds(7, 20, stream=2)


def test_mc_dropout_moments_and_determinism():
    net = ens.fit_net(SPEC, X, Y, CFG)
    p = ens.mc_dropout(net, GRID, 50, seed=4)
    assert p.member_outputs.shape == (50, len(GRID))
    assert_moments_match(p)
    q = ens.mc_dropout(net, GRID, 50, seed=4)
    np.testing.assert_array_equal(p.sigma, q.sigma)
    assert np.any(p.sigma > 0)
    np.testing.assert_array_equal(ens.McDropoutPredictor(net, 50, 4).predict(GRID).y_hat, p.y_hat)


def test_mc_dropout_needs_dropout():
    net = ens.fit_net(MlpSpec(1, (8,), 0.0, seed=1), X, Y, CFG)
    with pytest.raises(ValueError, match="MCD requires dropout"):
        ens.mc_dropout(net, GRID, 10)


def test_mc_dropout_dead_units_give_zero_sigma():
    # every hidden unit is inactive on positive inputs: masks cannot matter
    state = nn.MlpState(
        weights=(-np.ones((1, 6)), np.ones((6, 1))),
        biases=(np.zeros(6), np.array([0.5])),
        dropout_p=0.3,
        rng_state=np.random.default_rng(0).bit_generator.state,
    )
    p = ens.mc_dropout(FittedNet(state, Scaler.identity()), np.linspace(0.1, 2, 5), 20)
    assert np.all(p.sigma == 0) and np.all(p.y_hat == 0.5)


def test_identical_masks_give_zero_sigma():
    net = ens.fit_net(SPEC, X, Y, CFG)
    a = net.sample(GRID, 1, np.random.default_rng(8))
    b = net.sample(GRID, 1, np.random.default_rng(8))
    assert np.all(moments(np.concatenate([a, b])).sigma == 0)


def test_multi_inits():
    model = ens.multi_inits(SPEC, X, Y, CFG, n_members=5)
    assert model.kind is MethodKind.MULTI_INITS and len(model.members) == 5
    pred = model.predict(GRID)
    assert pred.member_outputs.shape == (5, len(GRID))
    assert_moments_match(pred)
    assert np.any(pred.sigma > 0)
    with pytest.raises(ValueError, match="distinct"):
        ens.multi_inits(SPEC, X, Y, CFG, seeds=[1, 1])
    with pytest.raises(ValueError):
        ens.multi_inits(SPEC, X, Y, CFG, n_members=1)


def test_members_match_solo_training():
    model = ens.multi_inits(SPEC, X, Y, CFG, seeds=[4, 9])
    scaler = Scaler.fit(X, Y)
    for seed, member in zip([4, 9], model.members):
        solo = nn.train(nn.init(MlpSpec(1, (16,), 0.2, seed=seed)), scaler.x(X), scaler.y(Y), CFG)
        assert solo.equals(member.state)


def test_bagging_resamples_reproducible():
    a = ens.bagging(SPEC, X, Y, CFG, n_members=4)
    b = ens.bagging(SPEC, X, Y, CFG, n_members=4)
    assert len(a.members) == 4 and a.kind is MethodKind.BAGGING
    for ra, rb in zip(a.info["resamples"], b.info["resamples"]):
        np.testing.assert_array_equal(ra, rb)
    np.testing.assert_array_equal(a.predict(GRID).sigma, b.predict(GRID).sigma)
    assert_moments_match(a.predict(GRID))
    idx = ens.bootstrap_indices(12, 5)
    assert idx.min() >= 0 and idx.max() < 12 and len(idx) == 12


def test_multi_epochs():
    model = ens.multi_epochs(SPEC, X, Y, CFG, window=6)
    assert len(model.members) == 6
    assert_moments_match(model.predict(GRID))
    final = ens.fit_net(SPEC, X, Y, CFG)
    assert model.members[-1].state.equals(final.state)
    with pytest.raises(ValueError):
        ens.multi_epochs(SPEC, X, Y, CFG, window=CFG.epochs)
    two = ens.multi_epochs(SPEC, X, Y, CFG, window=2).predict(GRID)
    outs = two.member_outputs
    np.testing.assert_allclose(two.sigma, np.abs(outs[0] - outs[1]) / 2, rtol=1e-10, atol=1e-12)


def test_multi_epochs_converged_net_zero_sigma():
    # a zero-loss fit has zero gradient, so every snapshot is the same net
    state = nn.MlpState(
        weights=(np.ones((1, 4)), np.ones((4, 1))),
        biases=(np.zeros(4), np.zeros(1)),
        dropout_p=0.0,
        rng_state=np.random.default_rng(0).bit_generator.state,
    )
    x = np.array([1.0, 2.0, 3.0])
    snaps = []
    nn.train(state, x, 4 * x, TrainConfig(epochs=5, learning_rate=0.1), lambda e, s: snaps.append(s), 3)
    outs = np.stack([nn.forward(s, x) for s in snaps])
    assert np.all(moments(outs).sigma == 0)


def test_multi_networks():
    specs = [MlpSpec(1, h, 0.2, seed=i) for i, h in enumerate([(8,), (16,), (8, 8)])]
    model = ens.multi_networks(specs, X, Y, CFG)
    assert model.info["architectures"] == [(8,), (16,), (8, 8)]
    assert_moments_match(model.predict(GRID))
    same = ens.multi_networks([SPEC, SPEC], X, Y, CFG).predict(GRID)
    assert np.all(same.sigma == 0)


def test_learned_error():
    base = ens.fit_net(SPEC, X, Y, CFG)
    err_spec = MlpSpec(1, (16,), 0.0, seed=5)
    model = ens.learned_error(base, err_spec, X, Y, CFG)
    np.testing.assert_allclose(model.targets, np.abs(base(X) - Y), rtol=0, atol=0)
    pred = model.predict(GRID)
    assert np.all(pred.sigma >= 0)
    np.testing.assert_array_equal(pred.y_hat, base(GRID))
    np.testing.assert_array_equal(pred.sigma, np.maximum(model.error_net(GRID), 0))


def test_learned_error_on_perfect_base():
    x = np.linspace(-1, 1, 8)
    state = nn.MlpState(
        weights=(np.ones((1, 2)), np.ones((2, 1))),
        biases=(np.array([2.0, 2.0]), np.zeros(1)),
        dropout_p=0.0,
        rng_state=np.random.default_rng(0).bit_generator.state,
    )
    base = FittedNet(state, Scaler.identity())
    model = ens.learned_error(base, MlpSpec(1, (8,), 0.0, seed=2), x, base(x), TrainConfig(epochs=3000, learning_rate=0.05))
    assert np.all(model.targets == 0)
    assert np.all(model.predict(x).sigma < 1e-4)


def test_divergence_names_member():
    with pytest.raises(TrainingDiverged, match="member"):
        ens.multi_inits(MlpSpec(1, (32,), 0.0, seed=1), X, 1e6 * Y, TrainConfig(epochs=50, learning_rate=50.0), n_members=3)
