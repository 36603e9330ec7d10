""" SVG figures of evaluation results, rendered off-screen with matplotlib.

Every plotted series carries an SVG group id ``series-<name>`` so the output
can be checked structurally.

"""
import io
import logging

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402

from regime_ensemble.files import atomic_write_text  # noqa: E402

log = logging.getLogger(__name__)

FORECAST_SERIES = ('truth', 'pred_a', 'pred_b', 'pred_ens')
WEIGHT_SERIES = ('w1',)

_STYLE = {'truth': dict(color='black', linewidth=1.2, label='actual'),
          'pred_a': dict(color='tab:orange', linewidth=0.8, label='gbdt'),
          'pred_b': dict(color='tab:green', linewidth=0.8, label='convnet'),
          'pred_ens': dict(color='tab:blue', linewidth=1.0, label='ensemble'),
          'w1': dict(color='tab:orange', linewidth=0.8, label='w1 (gbdt)')}


def series_id(name):
    return 'series-%s' % name


def _render(fig):
    buffer = io.StringIO()
    with matplotlib.rc_context({'svg.hashsalt': 'regime-ensemble', 'svg.fonttype': 'none'}):
        fig.savefig(buffer, format='svg', metadata={'Date': None})
    plt.close(fig)
    return buffer.getvalue()


def forecast_figure(frame, title='one-step forecast'):
    """ Power overlay of truth and forecasts above the gate weight on submodel (a).

    ``frame`` holds the evaluation columns t, truth, pred_a, pred_b, pred_ens, w1.

    """
    fig, (power_ax, weight_ax) = plt.subplots(2, 1, sharex=True, figsize=(10, 6),
                                              gridspec_kw={'height_ratios': [3, 1]})
    minutes = (frame['t'] - frame['t'].iloc[0]) / 60.0
    for name in FORECAST_SERIES:
        power_ax.plot(minutes, frame[name], gid=series_id(name), **_STYLE[name])
    for name in WEIGHT_SERIES:
        weight_ax.plot(minutes, frame[name], gid=series_id(name), **_STYLE[name])
    power_ax.set_ylabel('power [W]')
    power_ax.set_title(title)
    power_ax.legend(loc='upper right', fontsize='small')
    weight_ax.set_ylim(0.0, 1.0)
    weight_ax.set_ylabel('weight')
    weight_ax.set_xlabel('minutes since first target')
    fig.tight_layout()
    return _render(fig)


def rank_histogram_figure(report, title='rank histogram'):
    fig, ax = plt.subplots(figsize=(4, 3))
    ax.bar(['below', 'between', 'above'], report.frequencies, color='tab:gray')
    ax.axhline(1.0 / 3.0, color='black', linestyle='--', linewidth=0.8)
    ax.set_ylim(0.0, 1.0)
    ax.set_title('%s (sigma_rh %.4f)' % (title, report.sigma_rh))
    fig.tight_layout()
    return _render(fig)


def write_svg(text, path):
    atomic_write_text(path, text)
    log.info("wrote figure %s", path)
    return path
