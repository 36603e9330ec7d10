""" Error metrics, rank-histogram complementarity and the submodel pair harness.

All metrics are computed in watts and normalized by the largest actual power
of the evaluated series:

    NRMSE = 100 * sqrt(mean(((forecast - truth) / P_max)^2))
    NMAE  = 100 * mean(|forecast - truth| / P_max)

The rank histogram of a two-member ensemble has three bins: truth below both
one-step forecasts, inside the closed interval between them, above both.
Truth equal to a forecast counts as inside; such ties are reported.

"""
import itertools
import logging
import math

import numpy as np
import pandas as pd
from atom.api import Atom, Dict, Float, Int, Str, Tuple, Typed

from regime_ensemble.ensemble import (EnsembleForecast, blend, fit_gate, gate_training_set)
from regime_ensemble.errors import InputError, NormalizationError, RegimeEnsembleError, ShapeError
from regime_ensemble.model.trace import Regime

log = logging.getLogger(__name__)

#: series the ensemble is measured against
SUBMODELS = ('gbdt', 'convnet')

UNIFORM = 1.0 / 3.0


class MetricReport(Atom):
    nrmse = Float()
    nmae = Float()
    n_samples = Int()
    p_max = Float()

    #: Regime -> MetricReport, filled by per_regime_metrics
    per_regime = Dict()

    def as_row(self):
        return {'nrmse_pct': self.nrmse, 'nmae_pct': self.nmae, 'n': self.n_samples}


def _paired(truth, forecast):
    truth = np.asarray(truth, dtype=np.float64)
    forecast = np.asarray(forecast, dtype=np.float64)
    if truth.shape != forecast.shape:
        raise ShapeError("truth %s and forecast %s differ in shape" % (truth.shape, forecast.shape))
    if truth.size == 0:
        raise InputError("metrics need at least one sample")
    return truth, forecast


def metrics(truth, forecast, p_max=None):
    """ NRMSE and NMAE in percent; 2-D inputs average over every horizon step. """
    truth, forecast = _paired(truth, forecast)
    if p_max is None:
        p_max = float(np.max(truth))
    if not p_max > 0:
        raise NormalizationError("maximum actual power is %r; cannot normalize" % p_max)
    error = (forecast - truth) / p_max
    return MetricReport(nrmse=100.0 * math.sqrt(float(np.mean(error * error))),
                        nmae=100.0 * float(np.mean(np.abs(error))),
                        n_samples=int(truth.shape[0]), p_max=float(p_max))


def per_regime_metrics(truth, forecast, labels, p_max=None):
    """ Metrics restricted to each labelled regime, normalized by the global P_max. """
    truth, forecast = _paired(truth, forecast)
    labels = np.asarray(labels)
    if labels.shape[0] != truth.shape[0]:
        raise ShapeError("%d labels for %d samples" % (labels.shape[0], truth.shape[0]))
    if p_max is None:
        p_max = float(np.max(truth))
    reports = {}
    for regime in Regime:
        mask = labels == int(regime)
        if not mask.any():
            log.info("no samples in regime '%s'; omitted", regime.label)
            continue
        reports[regime] = metrics(truth[mask], forecast[mask], p_max)
    return reports


def relative_improvement(baseline, candidate):
    """ Percent error reduction of ``candidate`` against ``baseline``. """
    if baseline == 0:
        raise NormalizationError("baseline error is zero")
    return 100.0 * (baseline - candidate) / baseline


#------------------------------------------------------------------------------
# Rank histogram
#------------------------------------------------------------------------------

class TalagrandReport(Atom):
    frequencies = Tuple(Float())
    counts = Tuple(Int())
    total = Int()
    sigma_rh = Float()

    #: samples where truth equals one of the forecasts exactly
    ties = Int()


def sigma_rh(frequencies):
    f = np.asarray(frequencies, dtype=np.float64)
    return float(np.sqrt(np.mean((f - UNIFORM) ** 2)))


def talagrand(truth, pred_a, pred_b):
    truth, pred_a = _paired(truth, pred_a)
    _, pred_b = _paired(truth, pred_b)
    lo, hi = np.minimum(pred_a, pred_b), np.maximum(pred_a, pred_b)
    below = int(np.count_nonzero(truth < lo))
    above = int(np.count_nonzero(truth > hi))
    total = int(truth.size)
    inside = total - below - above
    frequencies = (below / total, inside / total, above / total)
    ties = int(np.count_nonzero((truth == pred_a) | (truth == pred_b)))
    return TalagrandReport(frequencies=frequencies, counts=(below, inside, above), total=total,
                           sigma_rh=sigma_rh(frequencies), ties=ties)


#------------------------------------------------------------------------------
# Static-weight reference
#------------------------------------------------------------------------------

def fit_static_weight(pred_a, pred_b, truth):
    """ Single least-squares convex weight on ``pred_a``, clipped to [0, 1]. """
    truth, pred_a = _paired(truth, pred_a)
    _, pred_b = _paired(truth, pred_b)
    diff = pred_a - pred_b
    denominator = float(np.sum(diff * diff))
    if denominator == 0:
        return 0.5
    return min(max(float(np.sum(diff * (truth - pred_b))) / denominator, 0.0), 1.0)


#------------------------------------------------------------------------------
# Evaluation of a trained ensemble
#------------------------------------------------------------------------------

class Evaluation(Atom):
    """ Forecasts of one ensemble over a test split, in watts, plus metrics. """

    forecast = Typed(EnsembleForecast)
    truth = Typed(np.ndarray)
    timestamps = Typed(np.ndarray)
    static_weight = Float(float('nan'))

    #: series name -> MetricReport on the first forecast step
    one_step = Dict()

    #: series name -> MetricReport over all H steps
    horizon = Dict()

    def frame(self):
        fc = self.forecast
        return pd.DataFrame({'t': self.timestamps,
                             'truth': self.truth[:, 0],
                             'pred_a': fc.pred_a[:, 0],
                             'pred_b': fc.pred_b[:, 0],
                             'pred_ens': fc.ensemble[:, 0],
                             'w1': fc.w1,
                             'w2': fc.w2})

    def reduction(self, name, key='nmae', reports=None):
        """ Percent error reduction of series ``name`` against the better submodel. """
        reports = self.one_step if reports is None else reports
        best = min(getattr(reports[s], key) for s in SUBMODELS)
        return relative_improvement(best, getattr(reports[name], key))

    def summary(self):
        rows = []
        for name in self.one_step:
            row = {'series': name}
            row.update({'one_step_' + k: v for k, v in self.one_step[name].as_row().items()})
            row.update({'h_step_' + k: v for k, v in self.horizon[name].as_row().items()})
            for key in ('nrmse', 'nmae'):
                try:
                    row['%s_reduction_pct' % key] = self.reduction(name, key)
                except NormalizationError:
                    row['%s_reduction_pct' % key] = float('nan')
            rows.append(row)
        return pd.DataFrame(rows)


def evaluate(model, samples, timestamps=None, labels=None, static_weight=None):
    """ Rolling one-step and H-step evaluation of ``model`` over scaled ``samples``.

    ``timestamps`` are those of the split the samples were cut from; ``labels``
    are regime labels aligned with the same split.

    """
    fc = model.forecast_samples(samples)
    watts = model.scaler.power_to_watts
    fc = EnsembleForecast(pred_a=watts(fc.pred_a), pred_b=watts(fc.pred_b),
                          ensemble=watts(fc.ensemble), w1=fc.w1, w2=fc.w2)
    truth = watts(samples.targets)
    targets = samples.anchors + 1
    stamps = targets if timestamps is None else np.asarray(timestamps)[targets]
    result = Evaluation(forecast=fc, truth=truth, timestamps=stamps)

    series = {'gbdt': fc.pred_a, 'convnet': fc.pred_b, 'ensemble': fc.ensemble}
    if static_weight is not None:
        result.static_weight = static_weight
        series['static'] = blend(fc.pred_a, fc.pred_b, np.full(len(samples), static_weight),
                                 np.full(len(samples), 1.0 - static_weight))
    p_max = float(np.max(truth[:, 0]))
    one_step, horizon = {}, {}
    for name, prediction in series.items():
        one_step[name] = metrics(truth[:, 0], prediction[:, 0])
        horizon[name] = metrics(truth, prediction)
        if labels is not None:
            one_step[name].per_regime = per_regime_metrics(truth[:, 0], prediction[:, 0],
                                                           np.asarray(labels)[targets], p_max)
    result.one_step = one_step
    result.horizon = horizon
    log.info("ensemble one-step NRMSE %.3f%% NMAE %.3f%%",
             one_step['ensemble'].nrmse, one_step['ensemble'].nmae)
    return result


#------------------------------------------------------------------------------
# Pair harness
#------------------------------------------------------------------------------

class PairResult(Atom):
    pair = Tuple(Str())
    talagrand = Typed(TalagrandReport)
    metrics = Typed(MetricReport)
    error = Str()

    @property
    def sort_key(self):
        return (self.talagrand is None, self.talagrand.sigma_rh if self.talagrand else 0.0)

    def as_row(self):
        row = {'pair': '-'.join(self.pair)}
        if self.talagrand is not None:
            f1, f2, f3 = self.talagrand.frequencies
            row.update({'f1': f1, 'f2': f2, 'f3': f3, 'sigma_rh': self.talagrand.sigma_rh,
                        'ties': self.talagrand.ties})
        if self.metrics is not None:
            row.update({'nrmse_pct': self.metrics.nrmse, 'nmae_pct': self.metrics.nmae})
        if self.error:
            row['error'] = self.error
        return row


def _pair_result(name_a, name_b, ens_preds, test_preds, ens_samples, test_samples, gate_params, scaler):
    pa, pb = test_preds[name_a], test_preds[name_b]
    result = PairResult(pair=(name_a, name_b))
    result.talagrand = talagrand(test_samples.targets[:, 0], pa[:, 0], pb[:, 0])
    data = gate_training_set(ens_samples.history, ens_preds[name_a], ens_preds[name_b],
                             ens_samples.targets, gate_params, scaler)
    gate = fit_gate(data, gate_params)
    test = gate_training_set(test_samples.history, pa, pb, test_samples.targets, gate_params, scaler)
    w1, w2 = gate.forward(test.features)
    ensemble = blend(pa[:, 0], pb[:, 0], w1, w2)
    result.metrics = metrics(scaler.power_to_watts(test_samples.targets[:, 0]), scaler.power_to_watts(ensemble))
    return result


def compare_pairs(submodels, ens_samples, test_samples, gate_params, scaler):
    """ Rank histogram and pair-ensemble errors for every unordered submodel pair.

    ``submodels`` maps names to trained forecasters. Each pair gets a fresh gate
    trained on ``ens_samples`` with the same ``gate_params``. Rows are sorted by
    ascending sigma_rh; pairs that fail are logged and listed last.

    """
    if len(submodels) < 2:
        raise InputError("pair comparison needs at least two submodels")
    names = list(submodels)
    ens_preds = {n: submodels[n].predict_samples(ens_samples) for n in names}
    test_preds = {n: submodels[n].predict_samples(test_samples) for n in names}
    results = []
    for name_a, name_b in itertools.combinations(names, 2):
        try:
            result = _pair_result(name_a, name_b, ens_preds, test_preds, ens_samples,
                                  test_samples, gate_params, scaler)
        except RegimeEnsembleError as e:
            log.warning("pair %s-%s failed: %s", name_a, name_b, e)
            result = PairResult(pair=(name_a, name_b), error=str(e))
        results.append(result)
    results.sort(key=lambda r: r.sort_key)
    return results


def pairs_frame(results):
    return pd.DataFrame([r.as_row() for r in results])
