""" Adaptive weighting gate over two frozen submodels, composite-loss training
and model persistence.

The gate maps the 12 increment-informed features to two softmax weights; one
weight pair blends the whole H-step trajectory. Training minimizes

    L = mean((w1 * a + w2 * b - y)^2) + lambda * mean_V((w1 - w*)^2)

where V holds the samples whose truth lies between the two one-step forecasts
(and whose forecasts differ by at least eps_div), and w* is the convex weight
that reproduces the truth exactly. Submodels are constants during training.

"""
import json
import logging

import numpy as np
from atom.api import Atom, Bool, Enum, Float, Int, List, Tuple, Typed
from sklearn.preprocessing import StandardScaler as _SkStandardScaler

from regime_ensemble.convnet import ConvNetParams
from regime_ensemble.errors import (ConfigurationError, FormatError, InputError, ShapeError,
                                    UnsupportedVersionError)
from regime_ensemble.features import EPS_NORM, FEATURE_NAMES, gate_features
from regime_ensemble.files import atomic_write_text
from regime_ensemble.forecaster import Forecaster, forecaster_from_archive, forecaster_to_archive
from regime_ensemble.gbdt import GbdtParams
from regime_ensemble.ingest import IdleBaseline, SplitSpec, StandardScaler
from regime_ensemble.model.base import Attributes, array_from_archive, array_to_archive
from regime_ensemble.model.trace import check_window
from regime_ensemble.nn import Dense, NetParams, ReLU, Sequential, train_network

log = logging.getLogger(__name__)

FORMAT_NAME = 'regime-ensemble-model'
FORMAT_VERSION = 1

#: logit differences are clipped so both weights stay strictly inside (0, 1)
LOGIT_CLIP = 30.0


class GateParams(NetParams):
    lam = Float(0.5)
    hidden = Tuple(Int(), default=(32, 16))
    eps_div = Float(1e-6)
    eps_norm = Float(EPS_NORM)

    #: average the prediction loss over all H steps instead of step one (experimental)
    multi_step_loss = Bool(False)

    #: compute gate features on scaled power or on watts
    feature_space = Enum('scaled', 'raw')

    epochs = Int(50)
    batch_size = Int(128)

    def validate(self):
        super(GateParams, self).validate()
        if self.lam < 0:
            raise ConfigurationError('lambda', "must be non-negative")
        if len(self.hidden) != 2 or any(h < 1 for h in self.hidden):
            raise ConfigurationError('hidden', "the gate has exactly two positive hidden widths")
        if not self.eps_div > 0:
            raise ConfigurationError('eps_div', "must be positive")
        if not self.eps_norm > 0:
            raise ConfigurationError('eps_norm', "must be positive")
        return self


class EnsembleConfig(Attributes):
    window = Int(30)
    horizon = Int(5)
    gbdt = Typed(GbdtParams, ())
    convnet = Typed(ConvNetParams, ())
    gate = Typed(GateParams, ())
    split = Typed(SplitSpec, ())
    baseline = Typed(IdleBaseline, ())

    def validate(self):
        check_window(self.window, self.horizon)
        for block in (self.gbdt, self.convnet, self.gate, self.split, self.baseline):
            block.validate()
        return self


#------------------------------------------------------------------------------
# Gate
#------------------------------------------------------------------------------

def softmax_pair(logits):
    """ Two-class softmax; returns (w1, w2, unclipped mask). """
    diff = logits[:, 0] - logits[:, 1]
    active = np.abs(diff) < LOGIT_CLIP
    diff = np.clip(diff, -LOGIT_CLIP, LOGIT_CLIP)
    w1 = 1.0 / (1.0 + np.exp(-diff))
    w2 = 1.0 / (1.0 + np.exp(diff))
    return w1, w2, active


def softmax_pair_backward(w1, w2, active, grad_w1, grad_w2):
    d = np.where(active, w1 * w2 * (grad_w1 - grad_w2), 0.0)
    return np.column_stack([d, -d])


class GateNetwork(Atom):
    """ Three-layer ReLU MLP emitting one softmax weight per submodel. """

    hidden = Tuple(Int(), default=(32, 16))
    network = Typed(Sequential)

    #: input standardization fitted on the ensemble-training features
    feature_mean = Typed(np.ndarray)
    feature_scale = Typed(np.ndarray)

    loss_history = List()

    def _default_network(self):
        h1, h2 = self.hidden
        n_in = len(FEATURE_NAMES)
        return Sequential(layers=[Dense(n_in, h1), ReLU(), Dense(h1, h2), ReLU(), Dense(h2, 2)])

    def _default_feature_mean(self):
        return np.zeros(len(FEATURE_NAMES))

    def _default_feature_scale(self):
        return np.ones(len(FEATURE_NAMES))

    def initialize(self, rng):
        self.network.initialize(rng)
        # equal weights at the start of training
        head = self.network.layers[-1]
        for name in head.params:
            head.params[name] = np.zeros_like(head.params[name])

    def fit_standardization(self, features):
        sk = _SkStandardScaler().fit(features)
        scale = np.sqrt(np.asarray(sk.var_, dtype=np.float64))
        constant = ~(scale > 0)
        self.feature_mean = np.where(constant, 0.0, sk.mean_)
        self.feature_scale = np.where(constant, 1.0, scale)

    def standardize(self, features):
        features = np.asarray(features, dtype=np.float64)
        if features.ndim == 1:
            features = features[None, :]
        if features.shape[1] != len(FEATURE_NAMES):
            raise ShapeError("gate expects %d features, got %d" % (len(FEATURE_NAMES), features.shape[1]))
        if not np.all(np.isfinite(features)):
            raise InputError("gate features must be finite")
        return (features - self.feature_mean) / self.feature_scale

    def logits(self, features):
        return self.network.forward(self.standardize(features))

    def forward(self, features):
        """ (w1, w2) per row of ``features``. """
        w1, w2, _ = softmax_pair(self.logits(features))
        return w1, w2

    def serialize(self, archive):
        archive['hidden'] = list(self.hidden)
        archive['weights'] = self.network.to_archive()
        archive['feature_mean'] = array_to_archive(self.feature_mean)
        archive['feature_scale'] = array_to_archive(self.feature_scale)
        return archive

    @classmethod
    def from_archive(cls, archive):
        gate = cls(hidden=tuple(archive['hidden']))
        gate.network.load_archive(archive['weights'])
        gate.feature_mean = array_from_archive(archive['feature_mean'])
        gate.feature_scale = array_from_archive(archive['feature_scale'])
        return gate


#------------------------------------------------------------------------------
# Blending and losses
#------------------------------------------------------------------------------

def blend(pred_a, pred_b, w1, w2):
    """ Convex combination of two trajectories with one weight pair per row. """
    pred_a = np.asarray(pred_a, dtype=np.float64)
    pred_b = np.asarray(pred_b, dtype=np.float64)
    w1 = np.asarray(w1, dtype=np.float64)
    w2 = np.asarray(w2, dtype=np.float64)
    if pred_a.ndim == 2:
        w1, w2 = w1[:, None], w2[:, None]
    mixed = w1 * pred_a + w2 * pred_b
    # rounding must not leave the envelope of the two forecasts
    return np.clip(mixed, np.minimum(pred_a, pred_b), np.maximum(pred_a, pred_b))


def interpolation_target(pred_a, pred_b, truth, eps_div=1e-6):
    """ Convex weight w* on ``pred_a`` reproducing ``truth``, or None outside V. """
    lo, hi = min(pred_a, pred_b), max(pred_a, pred_b)
    if abs(pred_a - pred_b) < eps_div or not lo <= truth <= hi:
        return None
    return min(max((truth - pred_b) / (pred_a - pred_b), 0.0), 1.0)


def interpolation_targets(pred_a, pred_b, truth, eps_div=1e-6):
    """ Vectorized interpolation_target: (w*, membership mask); w* is 0 outside V. """
    pred_a, pred_b, truth = (np.asarray(v, dtype=np.float64) for v in (pred_a, pred_b, truth))
    diff = pred_a - pred_b
    member = (np.abs(diff) >= eps_div) & (np.minimum(pred_a, pred_b) <= truth) \
        & (truth <= np.maximum(pred_a, pred_b))
    safe = np.where(member, diff, 1.0)
    w_star = np.where(member, np.clip((truth - pred_b) / safe, 0.0, 1.0), 0.0)
    return w_star, member


class LossParts(Atom):
    total = Float()
    prediction = Float()
    weight = Float()
    supervised = Int()


def composite_loss(pred_a, pred_b, truth, w1, w2, w_star, member, lam):
    """ Prediction loss plus lambda times the weight-supervision loss.

    ``pred_a``, ``pred_b`` and ``truth`` are (n,) for the one-step loss or
    (n, H) for the multi-step variant. Returns (LossParts, dL/dw1, dL/dw2).

    """
    if pred_a.shape[0] == 0:
        raise InputError("composite loss needs a non-empty batch")
    if lam < 0:
        raise ConfigurationError('lambda', "must be non-negative")
    multi = pred_a.ndim == 2
    w1c, w2c = (w1[:, None], w2[:, None]) if multi else (w1, w2)
    residual = w1c * pred_a + w2c * pred_b - truth
    prediction = float(np.mean(residual ** 2))
    scale = 2.0 / residual.size
    grad_w1 = scale * residual * pred_a
    grad_w2 = scale * residual * pred_b
    if multi:
        grad_w1, grad_w2 = grad_w1.sum(axis=1), grad_w2.sum(axis=1)

    supervised = int(member.sum())
    weight = 0.0
    if supervised:
        gap = np.where(member, w1 - w_star, 0.0)
        weight = float(np.sum(gap ** 2) / supervised)
        grad_w1 = grad_w1 + lam * 2.0 * gap / supervised
    parts = LossParts(total=prediction + lam * weight, prediction=prediction,
                      weight=weight, supervised=supervised)
    return parts, grad_w1, grad_w2


class GateTrainingSet(Atom):
    """ Precomputed gate inputs and submodel forecasts for the ensemble split. """

    features = Typed(np.ndarray)
    pred_a = Typed(np.ndarray)
    pred_b = Typed(np.ndarray)
    truth = Typed(np.ndarray)
    w_star = Typed(np.ndarray)
    member = Typed(np.ndarray)

    def __len__(self):
        return int(self.features.shape[0])


def build_gate_inputs(history, pred_a, pred_b, params, scaler=None):
    """ Gate features from scaled windows and one-step forecasts. """
    if params.feature_space == 'raw':
        if scaler is None:
            raise ConfigurationError('feature_space', "raw features need the fitted scaler")
        history = scaler.power_to_watts(history)
        pred_a, pred_b = scaler.power_to_watts(pred_a), scaler.power_to_watts(pred_b)
    return gate_features(history, pred_a, pred_b, params.eps_norm)


def gate_training_set(history, pred_a, pred_b, truth, params, scaler=None):
    features = build_gate_inputs(history, pred_a[:, 0], pred_b[:, 0], params, scaler)
    w_star, member = interpolation_targets(pred_a[:, 0], pred_b[:, 0], truth[:, 0], params.eps_div)
    return GateTrainingSet(features=features, pred_a=pred_a, pred_b=pred_b, truth=truth,
                           w_star=w_star, member=member)


def gate_loss(gate, data, rows, lam, multi_step=False, logits=None):
    """ Composite loss of ``gate`` on ``rows`` of ``data`` with dL/dlogits. """
    if logits is None:
        logits = gate.logits(data.features[rows])
    w1, w2, active = softmax_pair(logits)
    if multi_step:
        a, b, y = data.pred_a[rows], data.pred_b[rows], data.truth[rows]
    else:
        a, b, y = data.pred_a[rows, 0], data.pred_b[rows, 0], data.truth[rows, 0]
    parts, g1, g2 = composite_loss(a, b, y, w1, w2, data.w_star[rows], data.member[rows], lam)
    return parts, softmax_pair_backward(w1, w2, active, g1, g2)


def fit_gate(data, params):
    """ Train a fresh gate on a precomputed GateTrainingSet. """
    params = params.validate()
    if len(data) == 0:
        raise InputError("gate training needs at least one sample")
    if not np.all(np.isfinite(data.features)):
        raise InputError("gate features must be finite; a submodel produced NaN or inf")
    gate = GateNetwork(hidden=params.hidden)
    gate.fit_standardization(data.features)
    gate.initialize(np.random.default_rng(params.seed))
    inputs = gate.standardize(data.features)

    def loss_fn(logits, rows):
        parts, grad = gate_loss(gate, data, rows, params.lam, params.multi_step_loss, logits)
        return parts.total, grad

    gate.loss_history = train_network(gate.network, inputs, loss_fn, params, initialize=False)
    log.info("trained gate on %d samples (%d supervised), final loss %.6g",
             len(data), int(data.member.sum()), gate.loss_history[-1])
    return gate


def train_gate(samples, submodel_a, submodel_b, params, scaler=None):
    """ Train the gate on ensemble-split ``samples`` over two frozen submodels. """
    for submodel in (submodel_a, submodel_b):
        if not submodel.fitted:
            raise ConfigurationError('submodels', "%s must be trained before the gate" % submodel.kind)
    pred_a = submodel_a.predict_samples(samples)
    pred_b = submodel_b.predict_samples(samples)
    data = gate_training_set(samples.history, pred_a, pred_b, samples.targets, params, scaler)
    return fit_gate(data, params)


#------------------------------------------------------------------------------
# Ensemble model
#------------------------------------------------------------------------------

class EnsembleForecast(Atom):
    pred_a = Typed(np.ndarray)
    pred_b = Typed(np.ndarray)
    ensemble = Typed(np.ndarray)
    w1 = Typed(np.ndarray)
    w2 = Typed(np.ndarray)


class EnsembleModel(Atom):
    """ Deployment unit: two submodels, the gate, the scaler and the config. """

    #: submodel (a), a GbdtModel in the standard pipeline
    gbdt = Typed(Forecaster)

    #: submodel (b), a ConvNetModel in the standard pipeline
    convnet = Typed(Forecaster)

    gate = Typed(GateNetwork)
    scaler = Typed(StandardScaler)
    config = Typed(EnsembleConfig, ())

    format_version = Int(FORMAT_VERSION)

    def forecast(self, history, exog):
        """ Scaled H-step forecasts of both submodels, the blend and the weights. """
        pred_a = self.gbdt.predict(history, exog)
        pred_b = self.convnet.predict(history, exog)
        history = np.asarray(history, dtype=np.float64)
        if history.ndim == 1:
            history = history[None, :]
        features = build_gate_inputs(history, pred_a[:, 0], pred_b[:, 0], self.config.gate, self.scaler)
        w1, w2 = self.gate.forward(features)
        return EnsembleForecast(pred_a=pred_a, pred_b=pred_b, ensemble=blend(pred_a, pred_b, w1, w2),
                                w1=w1, w2=w2)

    def forecast_samples(self, samples):
        return self.forecast(samples.history, samples.exog)

    def to_archive(self):
        return {'format': FORMAT_NAME,
                'version': self.format_version,
                'config': self.config.serialize({}),
                'scaler': self.scaler.serialize({}),
                'submodels': {'a': forecaster_to_archive(self.gbdt),
                              'b': forecaster_to_archive(self.convnet)},
                'gate': self.gate.serialize({})}

    @classmethod
    def from_archive(cls, archive):
        scaler = StandardScaler.from_archive(archive['scaler'])
        scaler.freeze()
        return cls(config=EnsembleConfig.from_archive(archive['config']),
                   scaler=scaler,
                   gbdt=forecaster_from_archive(archive['submodels']['a']),
                   convnet=forecaster_from_archive(archive['submodels']['b']),
                   gate=GateNetwork.from_archive(archive['gate']))


def dumps_model(model):
    return json.dumps(model.to_archive(), sort_keys=True, indent=1, allow_nan=False) + '\n'


def save_model(model, path):
    return atomic_write_text(path, dumps_model(model))


def loads_model(text):
    try:
        archive = json.loads(text)
    except ValueError as e:
        raise FormatError("model file is corrupt or truncated: %s" % e)
    if not isinstance(archive, dict) or archive.get('format') != FORMAT_NAME:
        raise FormatError("not a %s file" % FORMAT_NAME)
    version = archive.get('version')
    if not isinstance(version, int):
        raise FormatError("model file has no version tag")
    if version > FORMAT_VERSION:
        raise UnsupportedVersionError(version, FORMAT_VERSION)
    try:
        return EnsembleModel.from_archive(archive)
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError("model file is incomplete: %r" % (e,))


def load_model(path):
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            text = handle.read()
    except UnicodeDecodeError as e:
        raise FormatError("model file is not text: %s" % e)
    return loads_model(text)
