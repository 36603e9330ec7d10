import math

import numpy as np
import pytest

from regime_ensemble.baselines import PersistenceForecaster
from regime_ensemble.ensemble import EnsembleConfig, EnsembleModel, GateNetwork, GateParams
from regime_ensemble.errors import InputError, NormalizationError, ShapeError
from regime_ensemble.eval import (Evaluation, MetricReport, compare_pairs, fit_static_weight, metrics, pairs_frame,
                                  per_regime_metrics, relative_improvement, sigma_rh, talagrand)
from regime_ensemble.ingest import prepare
from regime_ensemble.model import PowerTrace, Regime, make_samples
from regime_ensemble.model.trace import EXOG_CHANNELS
from regime_ensemble.workflow import evaluate_model, model_samples

from atom.api import Float


class OffsetForecaster(PersistenceForecaster):
    """ Persistence shifted by a constant. """

    offset = Float()

    def predict(self, history, exog):
        return super(OffsetForecaster, self).predict(history, exog) + self.offset


class BrokenForecaster(PersistenceForecaster):

    def predict(self, history, exog):
        return np.full_like(super(BrokenForecaster, self).predict(history, exog), np.nan)


#------------------------------------------------------------------------------
# Metrics
#------------------------------------------------------------------------------

def test_metric_example():
    report = metrics([100.0, 200.0], [110.0, 190.0])
    assert report.nrmse == pytest.approx(5.0)
    assert report.nmae == pytest.approx(5.0)
    assert report.p_max == 200.0
    assert report.n_samples == 2


def test_perfect_forecast():
    truth = np.array([3.0, 5.0, 4.0])
    report = metrics(truth, truth.copy())
    assert report.nrmse == 0.0 and report.nmae == 0.0


def test_constant_error_gives_equal_metrics(rng):
    truth = rng.uniform(100.0, 200.0, size=50)
    report = metrics(truth, truth + 7.0)
    assert report.nrmse == pytest.approx(report.nmae, rel=1e-12)


def test_metrics_need_positive_power():
    with pytest.raises(NormalizationError):
        metrics(np.zeros(4), np.ones(4))
    with pytest.raises(ShapeError):
        metrics(np.ones(3), np.ones(4))
    with pytest.raises(InputError):
        metrics(np.zeros(0), np.zeros(0))


def test_per_regime_partition(rng):
    truth = rng.uniform(50.0, 150.0, size=200)
    forecast = truth + rng.normal(scale=5.0, size=200)
    labels = rng.integers(0, 4, size=200)
    overall = metrics(truth, forecast)
    reports = per_regime_metrics(truth, forecast, labels)
    assert set(reports) == set(Regime)
    assert sum(r.n_samples for r in reports.values()) == 200
    squared = sum(r.n_samples * r.nrmse ** 2 for r in reports.values()) / 200
    absolute = sum(r.n_samples * r.nmae for r in reports.values()) / 200
    assert math.sqrt(squared) == pytest.approx(overall.nrmse, abs=1e-12)
    assert absolute == pytest.approx(overall.nmae, abs=1e-12)


def test_empty_regimes_are_omitted():
    reports = per_regime_metrics([1.0, 2.0], [1.0, 2.5], [int(Regime.HIGH), int(Regime.HIGH)])
    assert list(reports) == [Regime.HIGH]


def test_relative_improvement():
    assert relative_improvement(2.0, 1.5) == pytest.approx(25.0)
    with pytest.raises(NormalizationError):
        relative_improvement(0.0, 1.0)


def test_summary_reports_reduction_against_better_submodel():
    def report(nrmse, nmae):
        return MetricReport(nrmse=nrmse, nmae=nmae, n_samples=10, p_max=100.0)
    evaluation = Evaluation(one_step={'gbdt': report(4.0, 2.0), 'convnet': report(5.0, 4.0),
                                      'ensemble': report(3.0, 1.5)},
                            horizon={'gbdt': report(6.0, 3.0), 'convnet': report(7.0, 5.0),
                                     'ensemble': report(5.0, 2.5)})
    assert evaluation.reduction('ensemble') == pytest.approx(25.0)
    assert evaluation.reduction('ensemble', 'nrmse', evaluation.horizon) == pytest.approx(100.0 / 6.0)

    frame = evaluation.summary().set_index('series')
    assert frame.loc['ensemble', 'nmae_reduction_pct'] == pytest.approx(25.0)
    assert frame.loc['ensemble', 'nrmse_reduction_pct'] == pytest.approx(25.0)
    assert frame.loc['gbdt', 'nmae_reduction_pct'] == 0.0
    assert frame.loc['convnet', 'nmae_reduction_pct'] == pytest.approx(-100.0)
    assert frame.loc['ensemble', 'h_step_nmae_pct'] == 2.5


#------------------------------------------------------------------------------
# Rank histogram
#------------------------------------------------------------------------------

@pytest.mark.parametrize('frequencies, expected', [
    ((0.3307, 0.3145, 0.3547), 0.0165),
    ((0.2291, 0.2602, 0.5107), 0.1261),
])
def test_sigma_rh_reference_values(frequencies, expected):
    assert sigma_rh(frequencies) == pytest.approx(expected, abs=5e-4)


def test_sigma_rh_bounds():
    assert sigma_rh((1 / 3, 1 / 3, 1 / 3)) == pytest.approx(0.0, abs=1e-15)
    assert sigma_rh((1.0, 0.0, 0.0)) == pytest.approx(math.sqrt(6.0 / 27.0), abs=1e-12)


@pytest.mark.parametrize('delta', [0.01, -0.05, 0.2])
@pytest.mark.parametrize('source, target', [(0, 1), (1, 2), (2, 0)])
def test_sigma_rh_is_smallest_when_uniform(delta, source, target):
    f = [1 / 3] * 3
    f[source] -= delta
    f[target] += delta
    assert sigma_rh(f) > sigma_rh((1 / 3, 1 / 3, 1 / 3))


def test_planted_cycle_is_uniform():
    a = np.tile([10.0, 10.0, 10.0], 100)
    b = np.tile([20.0, 20.0, 20.0], 100)
    truth = np.tile([25.0, 15.0, 5.0], 100)
    report = talagrand(truth, a, b)
    assert report.counts == (100, 100, 100)
    assert report.sigma_rh == pytest.approx(0.0, abs=1e-12)
    assert sum(report.frequencies) == pytest.approx(1.0, abs=1e-12)
    assert report.ties == 0


def test_ties_count_as_between():
    report = talagrand([10.0, 20.0, 15.0], [10.0, 10.0, 10.0], [20.0, 20.0, 20.0])
    assert report.counts == (0, 3, 0)
    assert report.ties == 2
    assert report.sigma_rh == pytest.approx(math.sqrt(6.0 / 27.0), abs=1e-12)


def test_static_weight():
    a = np.array([0.0, 10.0, 20.0])
    b = np.array([10.0, 20.0, 30.0])
    truth = 0.3 * a + 0.7 * b
    assert fit_static_weight(a, b, truth) == pytest.approx(0.3)
    assert fit_static_weight(a, a, truth) == 0.5
    assert fit_static_weight(a, b, a - 5.0) == 1.0


#------------------------------------------------------------------------------
# Pair harness and ensemble evaluation
#------------------------------------------------------------------------------

def _offset_model(samples, offset):
    model = OffsetForecaster(offset=offset)
    return model.fit(samples)


def test_compare_pairs_sorted(trained):
    outputs = trained.outputs
    sub = outputs['samples.train_sub']
    submodels = {'low': _offset_model(sub, -0.1), 'exact': _offset_model(sub, 0.0),
                 'high': _offset_model(sub, 0.1)}
    results = compare_pairs(submodels, outputs['samples.train_ens'], outputs['samples.test'],
                            GateParams(hidden=(4, 4), epochs=2), outputs['prepare.prepared'].scaler)
    assert len(results) == 3
    assert sorted(r.pair for r in results) == sorted([('low', 'exact'), ('low', 'high'), ('exact', 'high')])
    sigmas = [r.talagrand.sigma_rh for r in results]
    assert sigmas == sorted(sigmas)
    assert all(not r.error for r in results)
    assert len(pairs_frame(results)) == 3


def test_failed_pairs_are_listed_last(trained):
    outputs = trained.outputs
    sub = outputs['samples.train_sub']
    submodels = {'broken': BrokenForecaster().fit(sub), 'low': _offset_model(sub, -0.1),
                 'high': _offset_model(sub, 0.1)}
    results = compare_pairs(submodels, outputs['samples.train_ens'], outputs['samples.test'],
                            GateParams(hidden=(4, 4), epochs=2), outputs['prepare.prepared'].scaler)
    assert results[0].pair == ('low', 'high')
    assert not results[0].error
    assert all(r.error for r in results[1:])
    assert 'error' in pairs_frame(results).columns


def test_compare_pairs_needs_two_models(trained):
    outputs = trained.outputs
    with pytest.raises(InputError):
        compare_pairs({'only': trained.model.gbdt}, outputs['samples.train_ens'],
                      outputs['samples.test'], GateParams(), outputs['prepare.prepared'].scaler)


def idle_trace(n=200, power=25.0):
    timestamps = 1704067200 + 60 * np.arange(n, dtype=np.int64)
    exog = np.tile(np.arange(1.0, len(EXOG_CHANNELS) + 1.0), (n, 1))
    return PowerTrace(timestamps=timestamps, power=np.full(n, power), exog=exog)


def persistence_ensemble(trace, window=8, horizon=2):
    config = EnsembleConfig(window=window, horizon=horizon)
    prepared = prepare(trace, config.baseline, config.split, window, horizon)
    samples = make_samples(prepared.scaled[0], window, horizon)
    gate = GateNetwork(hidden=(4, 4))
    gate.initialize(np.random.default_rng(0))
    return EnsembleModel(gbdt=PersistenceForecaster().fit(samples),
                         convnet=PersistenceForecaster().fit(samples),
                         gate=gate, scaler=prepared.scaler, config=config)


def test_persistence_is_exact_on_a_flat_trace():
    trace = idle_trace()
    model = persistence_ensemble(trace)
    labels = np.full(len(trace), int(Regime.IDLE))
    evaluation = evaluate_model(model, trace, labels)
    _, samples = model_samples(model, trace)

    frame = evaluation.frame()
    assert len(frame) == len(samples.test)
    assert list(frame.columns) == ['t', 'truth', 'pred_a', 'pred_b', 'pred_ens', 'w1', 'w2']
    assert np.all(frame['truth'] == 25.0)
    for name in ('gbdt', 'convnet', 'ensemble', 'static'):
        assert evaluation.one_step[name].nrmse == 0.0
        assert evaluation.horizon[name].nmae == 0.0
    assert evaluation.static_weight == 0.5
    assert list(evaluation.one_step['ensemble'].per_regime) == [Regime.IDLE]
    assert set(evaluation.summary()['series']) == {'gbdt', 'convnet', 'ensemble', 'static'}
    # zero submodel error leaves the reduction undefined
    assert evaluation.summary()['nmae_reduction_pct'].isna().all()


def test_evaluation_timestamps_follow_targets():
    trace = idle_trace()
    model = persistence_ensemble(trace)
    parts, samples = model_samples(model, trace)
    frame = evaluate_model(model, trace).frame()
    expected = parts[2].timestamps[samples.test.anchors + 1]
    assert np.array_equal(frame['t'].to_numpy(), expected)
