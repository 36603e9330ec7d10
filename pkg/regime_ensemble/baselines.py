""" Reference forecasters beside the two ensemble submodels. """
import logging

import numpy as np
from atom.api import Int, List, Tuple, Typed

from regime_ensemble.errors import ConfigurationError, InputError
from regime_ensemble.forecaster import Forecaster, register_forecaster
from regime_ensemble.nn import Dense, Flatten, NetParams, ReLU, Sequential, mse, train_network

log = logging.getLogger(__name__)


class MlpParams(NetParams):
    hidden = Tuple(Int(), default=(64, 32))

    def validate(self):
        super(MlpParams, self).validate()
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ConfigurationError('hidden', "need at least one positive layer width")
        return self


def build_mlp(n_in, n_out, hidden):
    layers = [Flatten()]
    for width in hidden:
        layers.extend([Dense(n_in, width), ReLU()])
        n_in = width
    layers.append(Dense(n_in, n_out))
    return Sequential(layers=layers)


@register_forecaster
class MlpModel(Forecaster):
    """ Dense network over the flattened (W, 1 + channels) window. """

    kind = 'mlp'

    params = Typed(MlpParams, ())
    network = Typed(Sequential)
    loss_history = List()

    def build(self, window, horizon, channels):
        self.window, self.horizon, self.channels = window, horizon, channels
        self.network = build_mlp(window * (channels + 1), horizon, self.params.validate().hidden)
        return self

    def fit(self, samples):
        if len(samples) == 0:
            raise InputError("cannot fit mlp on an empty sample set")
        self.build(samples.window, samples.horizon, samples.exog.shape[2])
        inputs = samples.sequence_inputs()
        targets = samples.targets
        self.loss_history = train_network(self.network, inputs,
                                          lambda output, rows: mse(output, targets[rows]),
                                          self.params)
        self.fitted = True
        log.info("fitted mlp (%d parameters), final loss %.6g",
                 self.network.n_parameters, self.loss_history[-1])
        return self

    def forward(self, inputs):
        return self.network.forward(np.asarray(inputs, dtype=np.float64))

    def predict(self, history, exog):
        history, exog = self._check_inputs(history, exog)
        return self.forward(np.concatenate([history[:, :, None], exog], axis=2))

    def serialize(self, archive):
        archive.update(self.describe())
        archive['channels'] = self.channels
        archive['params'] = self.params.serialize({})
        archive['weights'] = self.network.to_archive()
        return archive

    def deserialize(self, archive):
        self.params = MlpParams.from_archive(archive['params'])
        self.build(archive['window'], archive['horizon'], archive['channels'])
        self.network.load_archive(archive['weights'])
        self.fitted = True
        return self


@register_forecaster
class PersistenceForecaster(Forecaster):
    """ Repeats the last observed power over the whole horizon. """

    kind = 'persistence'

    def fit(self, samples):
        self._adopt_layout(samples)
        self.fitted = True
        return self

    def predict(self, history, exog):
        history, exog = self._check_inputs(history, exog)
        return np.repeat(history[:, -1:], self.horizon, axis=1)

    def serialize(self, archive):
        archive.update(self.describe())
        archive['channels'] = self.channels
        return archive

    def deserialize(self, archive):
        self.window, self.horizon = archive['window'], archive['horizon']
        self.channels = archive['channels']
        self.fitted = True
        return self
