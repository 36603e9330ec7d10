""" Telemetry ingestion: CSV parsing, 1-minute reindexing with idle fill,
chronological splitting and standard scaling.

Node-level aggregation of raw logs (unweighted means of temperatures and
utilizations across nodes, active-job counts per minute) happens before a
trace reaches this module; ``read_trace_csv`` expects one cluster-level row per
timestamp.

"""
import logging
import math
import re

import numpy as np
import pandas as pd
from atom.api import Atom, Float, Int, Str, Tuple, Typed
from sklearn.preprocessing import StandardScaler as _SkStandardScaler

from regime_ensemble.errors import (ConfigurationError, InputError, ParseError,
                                    SchemaError, SizingError)
from regime_ensemble.model.base import Attributes
from regime_ensemble.model.trace import (CSV_COLUMNS, CSV_HEADER, EXOG_CHANNELS, PowerTrace,
                                         Regime, STEP_SECONDS)

log = logging.getLogger(__name__)

SPLIT_NAMES = ('train_sub', 'train_ens', 'test')


class IdleBaseline(Attributes):
    """ Values written into minutes that are missing from the raw logs. """

    power = Float(25.0)
    gpu_util = Float(0.0)
    mem_util = Float(0.0)
    gpu_temp = Float(25.34)
    mem_temp = Float(24.0)
    active_jobs = Float(0.0)

    def validate(self):
        for name in ('power', 'gpu_util', 'mem_util', 'gpu_temp', 'mem_temp', 'active_jobs'):
            if not math.isfinite(getattr(self, name)):
                raise ConfigurationError(name, "must be finite")
        if self.power < 0:
            raise ConfigurationError('power', "must be non-negative")
        return self


class SplitSpec(Attributes):
    fractions = Tuple(Float(), default=(0.6, 0.2, 0.2))

    def validate(self):
        if len(self.fractions) != 3 or any(f <= 0 for f in self.fractions):
            raise ConfigurationError('fractions', "need three positive fractions")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ConfigurationError('fractions', "must sum to 1, got %r" % (self.fractions,))
        return self

    def boundaries(self, n):
        # the epsilon keeps e.g. 0.6 * 10 from flooring to 5
        first = int(math.floor(self.fractions[0] * n + 1e-9))
        second = int(math.floor((self.fractions[0] + self.fractions[1]) * n + 1e-9))
        return first, second

    def part_lengths(self, n):
        first, second = self.boundaries(n)
        return first, second - first, n - second

    def required_length(self, min_length):
        """ Shortest trace whose three parts each hold ``min_length`` steps. """
        n = 3 * min_length
        while min(self.part_lengths(n)) < min_length:
            n += 1
        return n

    def check(self, n, min_length):
        """ Raise SizingError unless every part of an ``n``-step trace holds ``min_length`` steps. """
        self.validate()
        if min(self.part_lengths(n)) < min_length:
            raise SizingError("trace of %d steps cannot give every split %d steps" % (n, min_length),
                              required=self.required_length(min_length), actual=n)


class StandardScaler(Attributes):
    """ Per-channel standardization fitted on the submodel-training split.

    Channel 0 is power, the rest follow the trace's exogenous channels.
    Constant channels pass through unchanged (mean 0, scale 1). Standard
    deviations use the population definition (divide by n).

    """

    mean = Typed(np.ndarray)
    scale = Typed(np.ndarray)
    passthrough = Typed(np.ndarray)
    channels = Tuple(Str(), default=('power',) + EXOG_CHANNELS)
    fitted_on = Str('train_sub')

    def transform_matrix(self, matrix):
        return (matrix - self.mean) / self.scale

    def inverse_matrix(self, matrix):
        return matrix * self.scale + self.mean

    def power_to_watts(self, values):
        return np.asarray(values) * self.scale[0] + self.mean[0]

    def power_to_scaled(self, values):
        return (np.asarray(values) - self.mean[0]) / self.scale[0]


def _parse_timestamps(column):
    numeric = pd.to_numeric(column, errors='coerce')
    if numeric.notna().all():
        return numeric.to_numpy(dtype=np.float64)
    parsed = pd.to_datetime(column, errors='coerce', utc=True)
    bad = parsed.isna()
    if bad.any():
        raise ParseError(int(np.argmax(bad.to_numpy())) + 2, "unparseable timestamp %r"
                         % column[bad].iloc[0])
    return (parsed - pd.Timestamp(0, tz='UTC')) // pd.Timedelta(seconds=1)


def read_trace_csv(path, schema=CSV_HEADER):
    """ Read a cluster-level telemetry CSV into a (possibly gappy) PowerTrace.

    Timestamps may be ISO-8601 strings or integer epoch seconds. Rows are
    sorted; rows falling into the same minute are averaged.

    """
    try:
        frame = pd.read_csv(path, dtype=str, skipinitialspace=True, keep_default_na=False)
    except pd.errors.ParserError as e:
        match = re.search(r'line (\d+)', str(e))
        raise ParseError(match.group(1) if match else '?', str(e))
    except pd.errors.EmptyDataError:
        raise SchemaError(schema)

    missing = [c for c in schema if c not in frame.columns]
    if missing:
        raise SchemaError(missing)
    extra = [c for c in frame.columns if c not in schema]
    if extra:
        log.warning("ignoring extra columns in %s: %s" % (path, ", ".join(extra)))
    frame = frame[list(schema)]
    if frame.empty:
        raise InputError("%s contains no rows" % path)

    values = {}
    for column in schema[1:]:
        numeric = pd.to_numeric(frame[column], errors='coerce')
        bad = numeric.isna().to_numpy() | ~np.isfinite(numeric.to_numpy(dtype=np.float64, na_value=np.nan))
        if bad.any():
            row = int(np.argmax(bad))
            raise ParseError(row + 2, "bad value %r in column '%s'" % (frame[column].iloc[row], column))
        values[column] = numeric.to_numpy(dtype=np.float64)
    seconds = np.asarray(_parse_timestamps(frame['timestamp']), dtype=np.float64)
    values['timestamp'] = (np.floor(seconds / STEP_SECONDS) * STEP_SECONDS).astype(np.int64)

    data = pd.DataFrame(values, columns=list(schema))
    data = data.groupby('timestamp', sort=True).mean().reset_index()
    if (data['power_w'] < 0).any():
        raise InputError("negative power in %s" % path)
    log.info("read %d minutes from %s", len(data), path)
    return PowerTrace.from_frame(data)


def reindex_and_fill(trace, baseline=None):
    """ Put ``trace`` on a complete 1-minute grid, filling holes with ``baseline``. """
    baseline = (baseline or IdleBaseline()).validate()
    if len(trace) == 0:
        raise InputError("cannot reindex an empty trace")
    frame = trace.to_frame().set_index('timestamp')
    grid = np.arange(trace.timestamps[0], trace.timestamps[-1] + STEP_SECONDS, STEP_SECONDS, dtype=np.int64)
    missing = len(grid) - len(frame)
    if missing == 0:
        return trace
    fill = {'power_w': baseline.power}
    for name, column in CSV_COLUMNS:
        fill[column] = getattr(baseline, name)
    frame = frame.reindex(grid).fillna(value=fill)
    frame.index.name = 'timestamp'
    log.info("filled %d missing minutes with idle baseline", missing)
    return PowerTrace.from_frame(frame.reset_index())


def split(trace, spec=None, min_length=1):
    """ Chronological (train_sub, train_ens, test) partition of ``trace``.

    ``min_length`` is W + H; the trace must hold at least three times that.
    ``SplitSpec.check`` is the stricter test that every part holds it.

    """
    spec = (spec or SplitSpec()).validate()
    n = len(trace)
    if n < 3 * min_length:
        raise SizingError("trace too short to split", required=3 * min_length, actual=n)
    first, second = spec.boundaries(n)
    if not 0 < first < second < n:
        raise SizingError("split boundaries collapse for %d steps" % n)
    return trace.slice(0, first), trace.slice(first, second), trace.slice(second, n)


def fit_scaler(train_sub):
    if len(train_sub) < 2:
        raise SizingError("scaler needs at least two steps", required=2, actual=len(train_sub))
    matrix = train_sub.matrix()
    sk = _SkStandardScaler().fit(matrix)
    mean = np.array(sk.mean_, dtype=np.float64)
    scale = np.sqrt(np.array(sk.var_, dtype=np.float64))
    passthrough = np.ptp(matrix, axis=0) == 0
    channels = ('power',) + tuple(train_sub.channels)
    for i in np.flatnonzero(passthrough):
        log.warning("channel '%s' is constant on the training split; passing it through unscaled" % channels[i])
    mean[passthrough] = 0.0
    scale[passthrough] = 1.0
    scaler = StandardScaler(mean=mean, scale=scale, passthrough=passthrough, channels=channels)
    scaler.freeze()
    return scaler


def apply_scaler(trace, scaler):
    scaled = scaler.transform_matrix(trace.matrix())
    return trace.with_values(scaled[:, 0], scaled[:, 1:])


def invert_scaler(trace, scaler):
    raw = scaler.inverse_matrix(trace.matrix())
    return trace.with_values(raw[:, 0], raw[:, 1:])


class PreparedData(Atom):
    """ Raw and scaled splits of one trace plus the scaler fitted on train_sub. """

    raw = Tuple()
    scaled = Tuple()
    scaler = Typed(StandardScaler)
    offsets = Tuple(Int())


def prepare(trace, baseline=None, spec=None, window=30, horizon=5):
    complete = reindex_and_fill(trace, baseline)
    parts = split(complete, spec, window + horizon)
    scaler = fit_scaler(parts[0])
    scaled = tuple(apply_scaler(p, scaler) for p in parts)
    offsets = (0, len(parts[0]), len(parts[0]) + len(parts[1]))
    return PreparedData(raw=parts, scaled=scaled, scaler=scaler, offsets=offsets)


def read_regime_labels(path):
    """ Read a ``timestamp,regime`` CSV into a Series of Regime values keyed by timestamp. """
    frame = pd.read_csv(path)
    missing = [c for c in ('timestamp', 'regime') if c not in frame.columns]
    if missing:
        raise SchemaError(missing)
    try:
        regimes = [int(Regime.from_label(v)) for v in frame['regime']]
    except KeyError as e:
        raise ParseError('?', "unknown regime label %s" % e)
    return pd.Series(regimes, index=frame['timestamp'].astype(np.int64), name='regime')


def write_regime_labels(timestamps, labels):
    return pd.DataFrame({'timestamp': timestamps,
                         'regime': [Regime(int(v)).label for v in labels]})


def align_labels(trace, labels):
    """ Regime label per step of ``trace``; -1 where no label is known. """
    aligned = labels.reindex(trace.timestamps)
    return aligned.fillna(-1).to_numpy(dtype=np.int64)
