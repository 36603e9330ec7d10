""" Increment-informed gate features.

phi_hist describes the recent load dynamics from the power window alone;
phi_exp describes how the two submodels' one-step forecasts relate to each
other and to the current power. Both accept a single window (1-D) or a batch
of windows (2-D, one row per sample).

The second submodel's predicted increment is taken as pred_b - P_t, mirroring
the first submodel's term.

"""
import numpy as np
from atom.api import Atom, Float

from regime_ensemble.errors import ConfigurationError, ShapeError

HIST_NAMES = ('power', 'abs_increment', 'mean_abs_increment', 'std_increment', 'slope')
EXP_NAMES = ('pred_a', 'pred_b', 'divergence', 'abs_divergence', 'relative_divergence',
             'increment_a', 'increment_b')
FEATURE_NAMES = HIST_NAMES + EXP_NAMES

#: guards the power-level normalizer of the relative divergence
EPS_NORM = 1e-8


class GateFeatures(Atom):
    """ Named view of one 12-entry gate input row. """

    power = Float()
    abs_increment = Float()
    mean_abs_increment = Float()
    std_increment = Float()
    slope = Float()
    pred_a = Float()
    pred_b = Float()
    divergence = Float()
    abs_divergence = Float()
    relative_divergence = Float()
    increment_a = Float()
    increment_b = Float()

    @classmethod
    def from_array(cls, row):
        row = np.asarray(row, dtype=np.float64)
        if row.shape != (len(FEATURE_NAMES),):
            raise ShapeError("gate features need %d values, got %s" % (len(FEATURE_NAMES), row.shape))
        return cls(**{name: float(v) for name, v in zip(FEATURE_NAMES, row)})

    def to_array(self):
        return np.array([getattr(self, name) for name in FEATURE_NAMES])


def _as_windows(window):
    window = np.asarray(window, dtype=np.float64)
    if window.ndim not in (1, 2):
        raise ShapeError("window must be 1-D or (n, W), got %s" % (window.shape,))
    return window


def phi_hist(window):
    """ [P_t, |dP_t|, mean |dP|, std dP, slope] over a window of W >= 2 points. """
    window = _as_windows(window)
    width = window.shape[-1]
    if width < 2:
        raise ConfigurationError('window', "increment features need W >= 2, got %d" % width)
    increments = np.diff(window, axis=-1)
    return np.stack([window[..., -1],
                     np.abs(increments[..., -1]),
                     np.mean(np.abs(increments), axis=-1),
                     np.std(increments, axis=-1),
                     (window[..., -1] - window[..., 0]) / (width - 1)], axis=-1)


def phi_exp(pred_a, pred_b, window, eps_norm=EPS_NORM):
    """ [pred_a, pred_b, d, |d|, r, pred_a - P_t, pred_b - P_t] with d = pred_a - pred_b. """
    window = _as_windows(window)
    if window.shape[-1] < 1:
        raise ConfigurationError('window', "need at least one power value")
    pred_a = np.asarray(pred_a, dtype=np.float64)
    pred_b = np.asarray(pred_b, dtype=np.float64)
    current = window[..., -1]
    divergence = pred_a - pred_b
    level = np.maximum(np.mean(np.abs(window), axis=-1), eps_norm)
    return np.stack([pred_a, pred_b, divergence, np.abs(divergence), np.abs(divergence) / level,
                     pred_a - current, pred_b - current], axis=-1)


def gate_features(window, pred_a, pred_b, eps_norm=EPS_NORM):
    """ Concatenated 12-entry gate input (phi_hist then phi_exp). """
    return np.concatenate([phi_hist(window), phi_exp(pred_a, pred_b, window, eps_norm)], axis=-1)
