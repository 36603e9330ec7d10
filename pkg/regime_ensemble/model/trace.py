import logging
from enum import IntEnum

import numpy as np
import pandas as pd
from atom.api import Atom, Int, Str, Tuple, Typed
from numpy.lib.stride_tricks import sliding_window_view

from regime_ensemble.errors import ConfigurationError, InputError, ShapeError, SizingError

log = logging.getLogger(__name__)

STEP_SECONDS = 60
MINUTES_PER_DAY = 1440

#: exogenous channel order carried by every trace
EXOG_CHANNELS = ('gpu_util', 'mem_util', 'gpu_temp', 'mem_temp', 'active_jobs', 'minute_of_day')

#: trace channel -> csv column; minute_of_day is derived from the timestamp
CSV_COLUMNS = (('gpu_util', 'gpu_util'),
               ('mem_util', 'mem_util'),
               ('gpu_temp', 'gpu_temp_c'),
               ('mem_temp', 'mem_temp_c'),
               ('active_jobs', 'active_jobs'))

CSV_HEADER = ('timestamp', 'power_w') + tuple(c for _, c in CSV_COLUMNS)


class Regime(IntEnum):
    IDLE = 0
    RAMP_UP = 1
    HIGH = 2
    RAMP_DOWN = 3

    @property
    def label(self):
        return self.name.lower()

    @classmethod
    def from_label(cls, label):
        return cls[str(label).strip().upper()]


def minute_of_day(timestamps):
    return ((np.asarray(timestamps, dtype=np.int64) // STEP_SECONDS) % MINUTES_PER_DAY).astype(np.float64)


class PowerTrace(Atom):
    """ Cluster power with the aligned exogenous channels, one row per minute.

    """

    #: epoch seconds, int64
    timestamps = Typed(np.ndarray)

    #: cluster power in watts (or scaled units after ingest.apply_scaler)
    power = Typed(np.ndarray)

    #: (n, channels) exogenous matrix
    exog = Typed(np.ndarray)

    channels = Tuple(Str(), default=EXOG_CHANNELS)

    def __len__(self):
        return 0 if self.power is None else int(self.power.shape[0])

    def __repr__(self):
        return '<PowerTrace n=%d channels=%d>' % (len(self), len(self.channels))

    @property
    def is_complete(self):
        if len(self) < 2:
            return True
        return bool(np.all(np.diff(self.timestamps) == STEP_SECONDS))

    def validate(self, require_grid=True):
        n = len(self)
        if self.timestamps is None or self.timestamps.shape != (n,):
            raise ShapeError("timestamps must have one entry per power step")
        if self.exog is None or self.exog.shape != (n, len(self.channels)):
            raise ShapeError("exog must be (%d, %d), got %s"
                             % (n, len(self.channels), None if self.exog is None else self.exog.shape))
        if n > 1 and np.any(np.diff(self.timestamps) <= 0):
            raise InputError("timestamps must be strictly increasing")
        if require_grid and not self.is_complete:
            raise InputError("trace has gaps; run ingest.reindex_and_fill first")
        if not np.all(np.isfinite(self.power)) or not np.all(np.isfinite(self.exog)):
            raise InputError("trace contains non-finite values")
        return self

    def channel(self, name):
        return self.exog[:, self.channels.index(name)]

    def slice(self, start, stop):
        return PowerTrace(timestamps=self.timestamps[start:stop].copy(),
                          power=self.power[start:stop].copy(),
                          exog=self.exog[start:stop].copy(),
                          channels=self.channels)

    def with_values(self, power, exog):
        return PowerTrace(timestamps=self.timestamps.copy(), power=np.asarray(power, dtype=np.float64),
                          exog=np.asarray(exog, dtype=np.float64), channels=self.channels)

    def matrix(self):
        """ Power followed by every exogenous channel, shape (n, 1 + channels). """
        return np.column_stack([self.power, self.exog])

    def to_frame(self):
        data = {'timestamp': self.timestamps, 'power_w': self.power}
        for name, column in CSV_COLUMNS:
            data[column] = self.channel(name)
        return pd.DataFrame(data, columns=list(CSV_HEADER))

    @classmethod
    def from_frame(cls, frame):
        timestamps = frame['timestamp'].to_numpy(dtype=np.int64)
        columns = [frame[column].to_numpy(dtype=np.float64) for _, column in CSV_COLUMNS]
        columns.append(minute_of_day(timestamps))
        return cls(timestamps=timestamps,
                   power=frame['power_w'].to_numpy(dtype=np.float64),
                   exog=np.column_stack(columns))


class SampleSet(Atom):
    """ Sliding-window supervised samples cut from one contiguous trace.

    """

    #: (n, W) power history ending at the anchor
    history = Typed(np.ndarray)

    #: (n, W, channels) exogenous history ending at the anchor
    exog = Typed(np.ndarray)

    #: (n, H) power at anchor+1 .. anchor+H
    targets = Typed(np.ndarray)

    #: anchor positions t in the source trace
    anchors = Typed(np.ndarray)

    window = Int()
    horizon = Int()

    def __len__(self):
        return 0 if self.history is None else int(self.history.shape[0])

    @property
    def last_power(self):
        return self.history[:, -1]

    def sequence_inputs(self):
        """ Time-major (n, W, 1 + channels) stack, power first. """
        return np.concatenate([self.history[:, :, None], self.exog], axis=2)

    def flat_inputs(self, exog_only=False):
        n = len(self)
        exog = self.exog.reshape(n, -1)
        if exog_only:
            return exog
        return np.concatenate([self.history, exog], axis=1)

    def subset(self, index):
        return SampleSet(history=self.history[index], exog=self.exog[index],
                         targets=self.targets[index], anchors=self.anchors[index],
                         window=self.window, horizon=self.horizon)


def check_window(window, horizon):
    if window < 2:
        raise ConfigurationError('window', "W must be at least 2 (increments need two points), got %d" % window)
    if horizon < 1:
        raise ConfigurationError('horizon', "H must be at least 1, got %d" % horizon)


def make_samples(trace, window, horizon):
    check_window(window, horizon)
    n = len(trace)
    if n < window + horizon:
        raise SizingError("trace too short for window %d and horizon %d" % (window, horizon),
                          required=window + horizon, actual=n)
    if not trace.is_complete:
        raise InputError("samples need a gap-free trace")
    count = n - window - horizon + 1
    history = sliding_window_view(trace.power, window)[:count]
    exog = sliding_window_view(trace.exog, window, axis=0)[:count].transpose(0, 2, 1)
    targets = sliding_window_view(trace.power, horizon)[window:window + count]
    return SampleSet(history=np.array(history, dtype=np.float64, order='C'),
                     exog=np.array(exog, dtype=np.float64, order='C'),
                     targets=np.array(targets, dtype=np.float64, order='C'),
                     anchors=np.arange(window - 1, window - 1 + count, dtype=np.int64),
                     window=window, horizon=horizon)
