""" The ingest -> submodels -> gate workflow expressed as stage pipelines. """
import logging

import numpy as np
import pandas as pd
from atom.api import Atom, Dict, Typed

from regime_ensemble.baselines import MlpModel
from regime_ensemble.convnet import ConvNetModel
from regime_ensemble.ensemble import EnsembleModel, train_gate
from regime_ensemble.errors import FormatError, SizingError
from regime_ensemble.eval import compare_pairs, evaluate, fit_static_weight
from regime_ensemble.gbdt import GbdtModel
from regime_ensemble.ingest import apply_scaler, prepare, reindex_and_fill, split
from regime_ensemble.model.trace import SampleSet, make_samples
from regime_ensemble.pipeline import Pipeline, Port, Stage, run

log = logging.getLogger(__name__)

SPLITS = ('train_sub', 'train_ens', 'test')


class SplitSamples(Atom):
    """ Scaled sample sets of the three chronological splits. """

    train_sub = Typed(SampleSet)
    train_ens = Typed(SampleSet)
    test = Typed(SampleSet)

    def as_dict(self):
        return {name: getattr(self, name) for name in SPLITS}


def cut_samples(prepared, window, horizon):
    sets = [make_samples(part, window, horizon) for part in prepared.scaled]
    return SplitSamples(**dict(zip(SPLITS, sets)))


def _inputs(*specs):
    return [Port(name=name, data_type=data_type, degree=1) for name, data_type in specs]


def _outputs(*specs):
    return [Port(name=name, data_type=data_type) for name, data_type in specs]


def _fit(forecaster_cls, params):
    def stage_func(samples):
        return forecaster_cls(params=params.copy()).fit(samples)
    return stage_func


def submodel_pipeline(config, extra_models=()):
    """ prepare -> samples -> one training stage per submodel.

    ``extra_models`` adds reference submodels, e.g. ``[('mlp', MlpModel, params)]``.

    """
    window, horizon = config.window, config.horizon
    p = Pipeline(name='submodels')
    p.add_stage(Stage(name='prepare',
                      inputs=_inputs(('trace', 'trace')),
                      outputs=_outputs(('prepared', 'prepared')),
                      func=lambda trace: prepare(trace, config.baseline, config.split, window, horizon)))
    p.add_stage(Stage(name='samples',
                      inputs=_inputs(('prepared', 'prepared')),
                      outputs=_outputs(('train_sub', 'samples'), ('train_ens', 'samples'), ('test', 'samples')),
                      func=lambda prepared: cut_samples(prepared, window, horizon).as_dict()))
    models = [('gbdt', GbdtModel, config.gbdt), ('convnet', ConvNetModel, config.convnet)] + list(extra_models)
    p.connect('prepare.prepared', 'samples.prepared')
    for name, cls, params in models:
        p.add_stage(Stage(name=name,
                          inputs=_inputs(('samples', 'samples')),
                          outputs=_outputs(('model', 'forecaster')),
                          func=_fit(cls, params),
                          attributes=params))
        p.connect('samples.train_sub', '%s.samples' % name)
    return p


def training_pipeline(config):
    """ Submodel pipeline plus gate training on train_ens and final assembly. """
    p = submodel_pipeline(config)
    p.add_stage(Stage(name='gate',
                      inputs=_inputs(('samples', 'samples'), ('model_a', 'forecaster'),
                                     ('model_b', 'forecaster'), ('prepared', 'prepared')),
                      outputs=_outputs(('gate', 'gate')),
                      attributes=config.gate,
                      func=lambda samples, model_a, model_b, prepared:
                          train_gate(samples, model_a, model_b, config.gate, prepared.scaler)))
    p.add_stage(Stage(name='assemble',
                      inputs=_inputs(('gbdt', 'forecaster'), ('convnet', 'forecaster'),
                                     ('gate', 'gate'), ('prepared', 'prepared')),
                      outputs=_outputs(('model', 'ensemble')),
                      func=lambda gbdt, convnet, gate, prepared:
                          EnsembleModel(gbdt=gbdt, convnet=convnet, gate=gate,
                                        scaler=prepared.scaler, config=config.copy())))
    for start, end in (('samples.train_ens', 'gate.samples'),
                       ('gbdt.model', 'gate.model_a'),
                       ('convnet.model', 'gate.model_b'),
                       ('prepare.prepared', 'gate.prepared'),
                       ('gbdt.model', 'assemble.gbdt'),
                       ('convnet.model', 'assemble.convnet'),
                       ('gate.gate', 'assemble.gate'),
                       ('prepare.prepared', 'assemble.prepared')):
        p.connect(start, end)
    return p


def check_length(trace, config):
    """ Fail before any training when a split cannot hold one window plus horizon. """
    span = len(reindex_and_fill(trace, config.baseline))
    config.split.check(span, config.window + config.horizon)


class TrainingResult(Atom):
    model = Typed(EnsembleModel)

    #: every stage output keyed by '<stage>.<port>'
    outputs = Dict()

    def summary(self):
        m = self.model
        rows = [{'stage': 'gbdt', 'final_loss': float(np.mean([h[-1] for h in m.gbdt.loss_history])),
                 'detail': 'trees per step %s' % [len(t) for t in m.gbdt.trees]},
                {'stage': 'convnet', 'final_loss': m.convnet.loss_history[-1],
                 'detail': '%d parameters' % m.convnet.network.n_parameters},
                {'stage': 'gate', 'final_loss': m.gate.loss_history[-1],
                 'detail': 'lambda %g' % m.config.gate.lam}]
        return pd.DataFrame(rows)


def train_ensemble(trace, config):
    check_length(trace, config)
    pipeline = training_pipeline(config)
    log.debug("training pipeline: %s", pipeline.serialize({}))
    outputs = run(pipeline, trace=trace)
    return TrainingResult(model=outputs['assemble.model'], outputs=outputs)


def check_schema(model, trace):
    expected = tuple(model.scaler.channels[1:])
    if tuple(trace.channels) != expected:
        raise FormatError("trace channels %s do not match the model's %s" % (tuple(trace.channels), expected))


def model_samples(model, trace):
    """ Split ``trace`` as at training time and scale it with the model's own scaler. """
    cfg = model.config
    check_schema(model, trace)
    complete = reindex_and_fill(trace, cfg.baseline)
    parts = split(complete, cfg.split, cfg.window + cfg.horizon)
    scaled = [apply_scaler(part, model.scaler) for part in parts]
    sets = [make_samples(part, cfg.window, cfg.horizon) for part in scaled]
    return parts, SplitSamples(**dict(zip(SPLITS, sets)))


def evaluate_model(model, trace, labels=None):
    """ Test-split evaluation; ``labels`` is a regime label per step of the complete trace. """
    parts, samples = model_samples(model, trace)
    ens = samples.train_ens
    weight = fit_static_weight(model.gbdt.predict_samples(ens)[:, 0],
                               model.convnet.predict_samples(ens)[:, 0], ens.targets[:, 0])
    test_labels = None
    if labels is not None:
        offset = len(parts[0]) + len(parts[1])
        test_labels = np.asarray(labels)[offset:offset + len(parts[2])]
    return evaluate(model, samples.test, parts[2].timestamps, test_labels, static_weight=weight)


def forecast_latest(model, trace):
    """ H-step forecast in watts from the last complete window of ``trace``. """
    cfg = model.config
    check_schema(model, trace)
    complete = reindex_and_fill(trace, cfg.baseline)
    if len(complete) < cfg.window:
        raise SizingError("trace shorter than the forecast window", required=cfg.window, actual=len(complete))
    scaled = apply_scaler(complete.slice(len(complete) - cfg.window, len(complete)), model.scaler)
    fc = model.forecast(scaled.power, scaled.exog)
    watts = model.scaler.power_to_watts
    last = int(complete.timestamps[-1])
    steps = np.arange(1, cfg.horizon + 1)
    return pd.DataFrame({'step': steps,
                         't': last + 60 * steps,
                         'pred_a': watts(fc.pred_a[0]),
                         'pred_b': watts(fc.pred_b[0]),
                         'pred_ens': watts(fc.ensemble[0]),
                         'w1': np.repeat(fc.w1[0], cfg.horizon),
                         'w2': np.repeat(fc.w2[0], cfg.horizon)})


def compare_submodel_pairs(trace, config, mlp_params):
    """ Train gbdt, convnet and the mlp reference, then rank every pair. """
    check_length(trace, config)
    outputs = run(submodel_pipeline(config, [('mlp', MlpModel, mlp_params)]), trace=trace)
    submodels = {name: outputs['%s.model' % name] for name in ('gbdt', 'convnet', 'mlp')}
    return compare_pairs(submodels, outputs['samples.train_ens'], outputs['samples.test'],
                         config.gate, outputs['prepare.prepared'].scaler)


def lambda_sweep(trace, config, lambdas):
    """ Train the submodels once and a gate per lambda; test metrics per lambda. """
    check_length(trace, config)
    outputs = run(submodel_pipeline(config), trace=trace)
    scaler = outputs['prepare.prepared'].scaler
    gbdt, convnet = outputs['gbdt.model'], outputs['convnet.model']
    test = outputs['samples.test']
    rows = []
    for lam in lambdas:
        gate_params = config.gate.copy(lam=float(lam))
        gate = train_gate(outputs['samples.train_ens'], gbdt, convnet, gate_params, scaler)
        model = EnsembleModel(gbdt=gbdt, convnet=convnet, gate=gate, scaler=scaler,
                              config=config.copy(gate=gate_params))
        result = evaluate(model, test)
        one, multi = result.one_step['ensemble'], result.horizon['ensemble']
        rows.append({'lambda': float(lam), 'nrmse_pct': one.nrmse, 'nmae_pct': one.nmae,
                     'h_step_nrmse_pct': multi.nrmse, 'h_step_nmae_pct': multi.nmae,
                     'mean_w1': float(np.mean(result.forecast.w1))})
        log.info("lambda %g: NRMSE %.3f%% NMAE %.3f%%", lam, one.nrmse, one.nmae)
    return pd.DataFrame(rows)
