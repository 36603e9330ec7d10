""" Synthetic regime-switching power traces.

Regimes cycle idle -> ramp-up -> high -> ramp-down -> idle with uniformly
sampled integer dwell times. Exogenous channels are deterministic functions of
the generated power so every sample is reproducible from the config alone.

"""
import logging
import math

import numpy as np
import pandas as pd
from atom.api import Int, Float, Str, Tuple, Dict

from regime_ensemble.errors import ConfigurationError
from .base import Attributes
from .trace import PowerTrace, Regime, STEP_SECONDS, minute_of_day

log = logging.getLogger(__name__)

CYCLE = (Regime.IDLE, Regime.RAMP_UP, Regime.HIGH, Regime.RAMP_DOWN)

#: temperature rise between idle and full utilization, degC
TEMP_SPAN = 40.0


class SynthConfig(Attributes):
    seed = Int(7)
    n_steps = Int(20000)

    idle_power = Float(250.0)
    high_power_mean = Float(1200.0)

    #: ramp length range, minutes (inclusive)
    ramp_minutes = Tuple(Int(), default=(5, 20))

    #: dwell ranges for the two plateau regimes, minutes (inclusive)
    dwell_minutes = Dict(Str(), Tuple(Int()))

    noise_std = Float(10.0)
    fluctuation_amplitude = Float(60.0)
    fluctuation_period = Float(15.0)

    max_jobs = Int(8)
    thermal_tau = Float(5.0)
    idle_gpu_temp = Float(25.34)
    idle_mem_temp = Float(24.0)

    start_epoch = Int(1704067200)
    initial_regime = Str('idle')

    #: when set, the whole trace is a single segment of this regime
    forced_regime = Str('')

    def _default_dwell_minutes(self):
        return {'idle': (30, 120), 'high': (60, 240)}

    def validate(self):
        if self.n_steps < 1:
            raise ConfigurationError('n_steps', "must be positive")
        if self.idle_power < 0:
            raise ConfigurationError('idle_power', "must be non-negative")
        if not self.idle_power < self.high_power_mean:
            raise ConfigurationError('high_power_mean', "must exceed idle_power")
        if self.noise_std < 0:
            raise ConfigurationError('noise_std', "must be non-negative")
        if self.fluctuation_period <= 0:
            raise ConfigurationError('fluctuation_period', "must be positive")
        if self.thermal_tau < 1:
            raise ConfigurationError('thermal_tau', "must be at least one minute")
        if self.max_jobs < 0:
            raise ConfigurationError('max_jobs', "must be non-negative")
        self._check_range('ramp_minutes', self.ramp_minutes, minimum=2)
        for key in ('idle', 'high'):
            if key not in self.dwell_minutes:
                raise ConfigurationError('dwell_minutes', "missing range for '%s'" % key)
            self._check_range('dwell_minutes', self.dwell_minutes[key], minimum=1)
        for name in ('initial_regime', 'forced_regime'):
            label = getattr(self, name)
            if label and label.upper() not in Regime.__members__:
                raise ConfigurationError(name, "unknown regime '%s'" % label)
        if self.forced_regime in ('ramp_up', 'ramp_down') and self.n_steps < 2:
            raise ConfigurationError('n_steps', "a forced ramp needs at least two steps")
        return self

    @staticmethod
    def _check_range(field, value, minimum):
        if len(value) != 2 or value[0] > value[1] or value[0] < minimum:
            raise ConfigurationError(field, "expected (lo, hi) with %d <= lo <= hi, got %r" % (minimum, value))

    def dwell_range(self, regime):
        if regime in (Regime.RAMP_UP, Regime.RAMP_DOWN):
            return self.ramp_minutes
        return self.dwell_minutes[regime.label]

    def jobs_for(self, regime):
        if regime == Regime.IDLE:
            return 0
        if regime == Regime.HIGH:
            return self.max_jobs
        return int(math.ceil(self.max_jobs / 2.0))


def stationary_occupancy(cfg):
    """ Long-run fraction of minutes spent in each regime by the dwell process. """
    means = {r: 0.5 * (cfg.dwell_range(r)[0] + cfg.dwell_range(r)[1]) for r in CYCLE}
    total = sum(means.values())
    return {r: means[r] / total for r in CYCLE}


def _segments(cfg, rng):
    if cfg.forced_regime:
        return [(Regime.from_label(cfg.forced_regime), cfg.n_steps)]
    segments = []
    position = CYCLE.index(Regime.from_label(cfg.initial_regime))
    total = 0
    while total < cfg.n_steps:
        regime = CYCLE[position % len(CYCLE)]
        lo, hi = cfg.dwell_range(regime)
        length = int(rng.integers(lo, hi + 1))
        segments.append((regime, length))
        total += length
        position += 1
    return segments


def _segment_power(cfg, regime, length, start):
    idle, high = cfg.idle_power, cfg.high_power_mean
    k = np.arange(length, dtype=np.float64)
    if regime == Regime.IDLE:
        return np.full(length, idle)
    if regime == Regime.RAMP_UP:
        return idle + (high - idle) * k / (length - 1) if length > 1 else np.full(1, high)
    if regime == Regime.RAMP_DOWN:
        return high + (idle - high) * k / (length - 1) if length > 1 else np.full(1, idle)
    phase = 2.0 * np.pi * (start + k) / cfg.fluctuation_period
    return high + cfg.fluctuation_amplitude * np.sin(phase)


def generate_synthetic(cfg):
    """ Generate a trace and its per-step regime labels from ``cfg``.

    Returns
    -------
    result : (PowerTrace, numpy.ndarray)
        The trace and an int8 array of Regime values, one per step.

    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_steps

    power = np.empty(n)
    labels = np.empty(n, dtype=np.int8)
    jobs = np.empty(n)
    start = 0
    for regime, length in _segments(cfg, rng):
        stop = min(start + length, n)
        power[start:stop] = _segment_power(cfg, regime, length, start)[:stop - start]
        labels[start:stop] = int(regime)
        jobs[start:stop] = cfg.jobs_for(regime)
        start = stop
        if start >= n:
            break

    if cfg.noise_std > 0:
        power = power + rng.normal(0.0, cfg.noise_std, n)
    power = np.maximum(power, 0.0)

    gpu_util = np.clip((power - cfg.idle_power) / (cfg.high_power_mean - cfg.idle_power), 0.0, 1.0)
    mem_util = 0.85 * gpu_util
    heat = pd.Series(gpu_util).ewm(alpha=1.0 / cfg.thermal_tau, adjust=False).mean().to_numpy()
    gpu_temp = cfg.idle_gpu_temp + TEMP_SPAN * heat
    mem_temp = cfg.idle_mem_temp + TEMP_SPAN * heat

    timestamps = cfg.start_epoch + STEP_SECONDS * np.arange(n, dtype=np.int64)
    exog = np.column_stack([gpu_util, mem_util, gpu_temp, mem_temp, jobs, minute_of_day(timestamps)])
    log.debug("synthesized %d steps (seed %d)", n, cfg.seed)
    return PowerTrace(timestamps=timestamps, power=power, exog=exog), labels
