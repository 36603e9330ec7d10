import json
import math

import numpy as np
import pytest

from regime_ensemble.ensemble import (FORMAT_VERSION, EnsembleModel, GateNetwork, GateParams, GateTrainingSet, blend,
                                      composite_loss, dumps_model, fit_gate, gate_loss, gate_training_set,
                                      interpolation_target, interpolation_targets, load_model,
                                      loads_model, save_model, softmax_pair, train_gate)
from regime_ensemble.errors import (ConfigurationError, FormatError, InputError,
                                    UnsupportedVersionError)
from regime_ensemble.features import FEATURE_NAMES
from regime_ensemble.forecaster import forecaster_to_archive
from regime_ensemble.gbdt import GbdtModel
from regime_ensemble.nn import check_gradients


N_FEATURES = len(FEATURE_NAMES)


#------------------------------------------------------------------------------
# Softmax
#------------------------------------------------------------------------------

def test_zero_logits_give_equal_weights():
    w1, w2, _ = softmax_pair(np.zeros((3, 2)))
    assert np.all(w1 == 0.5)
    assert np.all(w2 == 0.5)


def test_weights_sum_to_one(rng):
    logits = rng.normal(scale=20.0, size=(10000, 2))
    w1, w2, _ = softmax_pair(logits)
    assert np.max(np.abs(w1 + w2 - 1.0)) <= 1e-12
    assert np.all((w1 >= 0) & (w2 >= 0))


def test_extreme_logits_stay_inside_the_interval():
    w1, w2, active = softmax_pair(np.array([[1e4, -1e4], [-1e4, 1e4]]))
    assert np.all((w1 > 0) & (w1 < 1))
    assert np.all((w2 > 0) & (w2 < 1))
    assert not active.any()


def test_softmax_value():
    w1, w2, _ = softmax_pair(np.array([[math.log(3.0), 0.0]]))
    assert w1[0] == pytest.approx(0.75, abs=1e-12)
    assert w2[0] == pytest.approx(0.25, abs=1e-12)


#------------------------------------------------------------------------------
# Interpolation targets and blending
#------------------------------------------------------------------------------

@pytest.mark.parametrize('a, b, y, expected', [
    (10.0, 6.0, 7.0, 0.25),
    (6.0, 10.0, 7.0, 0.75),
    (10.0, 6.0, 10.0, 1.0),
    (10.0, 6.0, 6.0, 0.0),
    (10.0, 6.0, 12.0, None),
    (10.0, 6.0, 5.0, None),
    (5.0, 5.0, 5.0, None),
])
def test_interpolation_target(a, b, y, expected):
    assert interpolation_target(a, b, y) == expected


def test_interpolation_target_reproduces_truth(rng):
    a = rng.normal(size=1000) * 100
    b = a + rng.choice([-1.0, 1.0], size=1000) * rng.uniform(0.1, 50.0, size=1000)
    y = b + rng.uniform(0.01, 0.99, size=1000) * (a - b)
    w_star, member = interpolation_targets(a, b, y)
    assert member.all()
    assert np.max(np.abs(w_star * a + (1 - w_star) * b - y)) <= 1e-9
    for i in range(0, 1000, 97):
        assert interpolation_target(a[i], b[i], y[i]) == pytest.approx(w_star[i], abs=1e-12)


def test_blend_stays_in_envelope(rng):
    a, b = rng.normal(size=(50, 3)), rng.normal(size=(50, 3))
    w1 = rng.uniform(size=50)
    mixed = blend(a, b, w1, 1.0 - w1)
    assert np.all(mixed >= np.minimum(a, b))
    assert np.all(mixed <= np.maximum(a, b))
    assert np.array_equal(blend(a, b, np.ones(50), np.zeros(50)), a)


def test_composite_loss_without_supervision_is_mse(rng):
    a, b, y = rng.normal(size=20), rng.normal(size=20), rng.normal(size=20)
    w1 = rng.uniform(size=20)
    w_star, member = interpolation_targets(a, b, y)
    parts, _, _ = composite_loss(a, b, y, w1, 1 - w1, w_star, member, 0.0)
    assert parts.total == pytest.approx(np.mean((w1 * a + (1 - w1) * b - y) ** 2), rel=1e-12)
    assert parts.supervised == int(member.sum())


def test_composite_loss_rejects_bad_input():
    one = np.ones(1)
    with pytest.raises(ConfigurationError):
        composite_loss(one, one, one, one, one, one, one > 0, -1.0)
    empty = np.zeros(0)
    with pytest.raises(InputError):
        composite_loss(empty, empty, empty, empty, empty, empty, empty > 0, 0.5)


#------------------------------------------------------------------------------
# Gate training
#------------------------------------------------------------------------------

def random_training_set(rng, n, horizon=1):
    a = rng.normal(size=(n, horizon))
    b = rng.normal(size=(n, horizon))
    y = rng.normal(size=(n, horizon))
    w_star, member = interpolation_targets(a[:, 0], b[:, 0], y[:, 0])
    return GateTrainingSet(features=rng.normal(size=(n, N_FEATURES)), pred_a=a, pred_b=b,
                           truth=y, w_star=w_star, member=member)


@pytest.mark.parametrize('seed', range(10))
@pytest.mark.parametrize('multi_step', [False, True])
def test_gate_gradients(seed, multi_step):
    rng = np.random.default_rng(seed)
    data = random_training_set(rng, 6, horizon=2)
    gate = GateNetwork(hidden=(6, 4))
    gate.network.initialize(rng)
    rows = np.arange(len(data))

    def loss_of():
        return gate_loss(gate, data, rows, 0.7, multi_step)[0].total

    gate.network.zero_grad()
    _, dlogits = gate_loss(gate, data, rows, 0.7, multi_step)
    gate.network.backward(dlogits)
    report = check_gradients(loss_of, gate.network.parameters(), gate.network.gradients())
    assert report.checked >= 0.8 * gate.network.n_parameters
    assert report.max_error < 1e-4, report.worst


def test_initialized_gate_is_neutral(rng):
    gate = GateNetwork(hidden=(8, 4))
    gate.initialize(rng)
    w1, w2 = gate.forward(rng.normal(size=(5, N_FEATURES)))
    assert np.all(w1 == 0.5) and np.all(w2 == 0.5)


def test_identical_submodels_keep_equal_weights(rng):
    a = rng.normal(size=(40, 1))
    y = a + rng.normal(size=(40, 1))
    data = gate_training_set(rng.normal(size=(40, 6)), a, a.copy(), y, GateParams())
    assert not data.member.any()
    gate = fit_gate(data, GateParams(hidden=(8, 4), epochs=5, batch_size=8))
    w1, w2 = gate.forward(data.features)
    assert np.all(w1 == 0.5) and np.all(w2 == 0.5)


def test_gate_learns_a_planted_selector():
    rng = np.random.default_rng(7)
    n = 256
    flag = rng.integers(0, 2, size=n).astype(float)
    a = rng.normal(size=(n, 1))
    b = a + rng.choice([-1.0, 1.0], size=(n, 1)) * (1.0 + rng.uniform(size=(n, 1)))
    y = np.where(flag[:, None] > 0, a, b)
    features = rng.normal(size=(n, N_FEATURES))
    features[:, 0] = flag
    w_star, member = interpolation_targets(a[:, 0], b[:, 0], y[:, 0])
    data = GateTrainingSet(features=features, pred_a=a, pred_b=b, truth=y, w_star=w_star, member=member)
    params = GateParams(hidden=(16, 8), lr=1e-2, epochs=100, batch_size=32, lam=1.0, seed=0)
    gate = fit_gate(data, params)
    w1, _ = gate.forward(features)
    assert np.mean(w1[flag > 0]) > 0.8
    assert np.mean(w1[flag == 0]) < 0.2
    assert gate.loss_history[-1] < gate.loss_history[0]


def crafted_gate(bias, hidden=(4, 4)):
    """ Gate whose weights are all zero except the output bias. """
    gate = GateNetwork(hidden=hidden)
    gate.network.layers[-1].params['bias'] = np.asarray(bias, dtype=np.float64)
    return gate


def test_zero_gate_gives_equal_weights(rng):
    w1, w2 = crafted_gate([0.0, 0.0]).forward(rng.normal(size=(6, N_FEATURES)))
    assert np.all(w1 == 0.5) and np.all(w2 == 0.5)


def test_crafted_head_gives_three_to_one_weights(rng):
    w1, w2 = crafted_gate([math.log(3.0), 0.0]).forward(rng.normal(size=(6, N_FEATURES)))
    assert np.allclose(w1, 0.75, rtol=0, atol=1e-12)
    assert np.allclose(w2, 0.25, rtol=0, atol=1e-12)


def test_gate_rejects_non_finite_features(rng):
    gate = GateNetwork(hidden=(4, 4))
    gate.initialize(rng)
    features = np.zeros((2, N_FEATURES))
    features[1, 3] = np.nan
    with pytest.raises(InputError):
        gate.forward(features)


def test_gate_params_validation():
    with pytest.raises(ConfigurationError):
        GateParams(lam=-0.1).validate()
    with pytest.raises(ConfigurationError):
        GateParams(hidden=(8,)).validate()


def test_train_gate_needs_fitted_submodels(trained):
    samples = trained.outputs['samples.train_ens']
    with pytest.raises(ConfigurationError):
        train_gate(samples, GbdtModel(), trained.model.convnet, GateParams())


def test_train_gate_leaves_submodels_frozen(trained):
    model = trained.model
    samples = trained.outputs['samples.train_ens']
    before = [json.dumps(forecaster_to_archive(m), sort_keys=True) for m in (model.gbdt, model.convnet)]
    train_gate(samples, model.gbdt, model.convnet, model.config.gate, model.scaler)
    after = [json.dumps(forecaster_to_archive(m), sort_keys=True) for m in (model.gbdt, model.convnet)]
    assert before == after


#------------------------------------------------------------------------------
# Ensemble model and persistence
#------------------------------------------------------------------------------

def test_forecast_shapes(trained):
    model = trained.model
    samples = trained.outputs['samples.test']
    fc = model.forecast_samples(samples)
    n, horizon = len(samples), model.config.horizon
    assert fc.pred_a.shape == fc.pred_b.shape == fc.ensemble.shape == (n, horizon)
    assert np.max(np.abs(fc.w1 + fc.w2 - 1.0)) <= 1e-12
    single = model.forecast(samples.history[0], samples.exog[0])
    assert single.ensemble.shape == (1, horizon)


def test_saved_model_reproduces_forecasts(trained, tmp_path):
    model = trained.model
    path = str(tmp_path / 'model.json')
    save_model(model, path)
    loaded = load_model(path)
    samples = trained.outputs['samples.test']
    original, restored = model.forecast_samples(samples), loaded.forecast_samples(samples)
    for name in ('pred_a', 'pred_b', 'ensemble', 'w1', 'w2'):
        assert np.array_equal(getattr(original, name), getattr(restored, name))
    assert dumps_model(loaded) == dumps_model(model)


def test_truncated_model_file(trained):
    text = dumps_model(trained.model)
    with pytest.raises(FormatError):
        loads_model(text[:len(text) // 2])
    with pytest.raises(FormatError):
        loads_model('{"format": "something-else", "version": 1}')


def test_newer_model_version(trained):
    archive = json.loads(dumps_model(trained.model))
    archive['version'] = 99
    with pytest.raises(UnsupportedVersionError) as info:
        loads_model(json.dumps(archive))
    assert info.value.supported == FORMAT_VERSION


def test_incomplete_model_file(trained):
    archive = json.loads(dumps_model(trained.model))
    del archive['gate']
    with pytest.raises(FormatError):
        loads_model(json.dumps(archive))


def test_forced_gate_follows_gbdt(trained):
    model = trained.model
    forced = EnsembleModel(gbdt=model.gbdt, convnet=model.convnet, scaler=model.scaler,
                           config=model.config, gate=crafted_gate([100.0, -100.0], model.gate.hidden))
    fc = forced.forecast_samples(trained.outputs['samples.test'])
    spread = np.max(np.abs(fc.pred_a - fc.pred_b))
    assert np.all(fc.w1 > 1.0 - 1e-12)
    assert np.max(np.abs(fc.ensemble - fc.pred_a)) <= 1e-12 * (spread + 1.0)


def test_equal_weights_give_midpoint_trajectory(trained):
    model = trained.model
    samples = trained.outputs['samples.test']
    neutral = EnsembleModel(gbdt=model.gbdt, convnet=model.convnet, scaler=model.scaler,
                            config=model.config, gate=crafted_gate([0.0, 0.0], model.gate.hidden))
    fc = neutral.forecast(samples.history[:3], samples.exog[:3])
    assert np.all(fc.w1 == 0.5)
    assert np.allclose(fc.ensemble, 0.5 * (fc.pred_a + fc.pred_b), rtol=0, atol=1e-12)
