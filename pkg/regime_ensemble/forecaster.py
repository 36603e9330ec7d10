import numpy as np
from atom.api import Atom, Bool, Int, Str

from regime_ensemble.errors import FormatError, ShapeError

#: kind string -> Forecaster subclass, filled by register_forecaster
FORECASTERS = {}


def register_forecaster(cls):
    FORECASTERS[cls.kind] = cls
    return cls


class Forecaster(Atom):
    """ Common contract of every submodel: fit on samples, forecast H steps.

    Inputs and outputs are in scaled units.

    """

    kind = 'forecaster'

    window = Int()
    horizon = Int()
    channels = Int()

    fitted = Bool(False)

    def fit(self, samples):
        raise NotImplementedError

    def predict(self, history, exog):
        raise NotImplementedError

    def predict_samples(self, samples):
        return self.predict(samples.history, samples.exog)

    def serialize(self, archive):
        raise NotImplementedError

    def deserialize(self, archive):
        raise NotImplementedError

    def describe(self):
        return {'kind': self.kind, 'window': self.window, 'horizon': self.horizon}

    #--------------------------------------------------------------------------
    # Shared helpers
    #--------------------------------------------------------------------------

    def _adopt_layout(self, samples):
        self.window = samples.window
        self.horizon = samples.horizon
        self.channels = samples.exog.shape[2]

    def _check_inputs(self, history, exog):
        history = np.asarray(history, dtype=np.float64)
        exog = np.asarray(exog, dtype=np.float64)
        if history.ndim == 1:
            history, exog = history[None, :], exog[None, :, :]
        if history.shape[1:] != (self.window,) or exog.shape[1:] != (self.window, self.channels) \
                or exog.shape[0] != history.shape[0]:
            raise ShapeError("%s expects windows (n, %d) and (n, %d, %d), got %s and %s"
                             % (self.kind, self.window, self.window, self.channels, history.shape, exog.shape))
        return history, exog


def forecaster_to_archive(forecaster):
    archive = {'kind': forecaster.kind}
    forecaster.serialize(archive)
    return archive


def forecaster_from_archive(archive):
    try:
        cls = FORECASTERS[archive['kind']]
    except KeyError:
        raise FormatError("unknown submodel kind %r" % archive.get('kind'))
    forecaster = cls()
    forecaster.deserialize(archive)
    return forecaster
