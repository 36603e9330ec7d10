""" Submodel (b): causal 1-D convolutional network over the input window. """
import logging

import numpy as np
from atom.api import Enum, Int, List, Typed

from regime_ensemble.errors import ConfigurationError, InputError
from regime_ensemble.forecaster import Forecaster, register_forecaster
from regime_ensemble.nn import (Conv1d, Dense, GlobalAvgPool, NetParams, ReLU, Sequential,
                                mse, train_network)

log = logging.getLogger(__name__)


class ConvNetParams(NetParams):
    conv_channels = Int(16)
    kernel_size = Int(3)
    n_conv_layers = Int(2)
    activation = Enum('relu', 'identity')

    def validate(self):
        super(ConvNetParams, self).validate()
        if self.conv_channels < 1:
            raise ConfigurationError('conv_channels', "must be at least 1")
        if self.kernel_size < 1:
            raise ConfigurationError('kernel_size', "must be at least 1")
        if self.n_conv_layers < 1:
            raise ConfigurationError('n_conv_layers', "must be at least 1")
        return self


def build_convnet(in_channels, horizon, params):
    layers = []
    c_in = in_channels
    for _ in range(params.n_conv_layers):
        layers.append(Conv1d(c_in, params.conv_channels, params.kernel_size))
        if params.activation == 'relu':
            layers.append(ReLU())
        c_in = params.conv_channels
    layers.append(GlobalAvgPool())
    layers.append(Dense(c_in, horizon))
    return Sequential(layers=layers)


@register_forecaster
class ConvNetModel(Forecaster):
    """ Conv1d stack -> global average pool over time -> dense head with H outputs.

    Input is the (W, 1 + channels) window, power first.

    """

    kind = 'convnet'

    params = Typed(ConvNetParams, ())
    network = Typed(Sequential)
    loss_history = List()

    def build(self, window, horizon, channels):
        self.window, self.horizon, self.channels = window, horizon, channels
        self.network = build_convnet(channels + 1, horizon, self.params.validate())
        return self

    def fit(self, samples):
        if len(samples) == 0:
            raise InputError("cannot fit convnet on an empty sample set")
        self.build(samples.window, samples.horizon, samples.exog.shape[2])
        inputs = samples.sequence_inputs()
        targets = samples.targets
        self.loss_history = train_network(self.network, inputs,
                                          lambda output, rows: mse(output, targets[rows]),
                                          self.params)
        self.fitted = True
        log.info("fitted convnet (%d parameters) on %d samples, final loss %.6g",
                 self.network.n_parameters, len(samples), self.loss_history[-1])
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
        self.params = ConvNetParams.from_archive(archive['params'])
        self.build(archive['window'], archive['horizon'], archive['channels'])
        self.network.load_archive(archive['weights'])
        self.fitted = True
        return self
