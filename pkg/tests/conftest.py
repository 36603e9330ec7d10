import numpy as np
import pytest

from regime_ensemble.baselines import MlpParams
from regime_ensemble.convnet import ConvNetParams
from regime_ensemble.ensemble import EnsembleConfig, GateParams
from regime_ensemble.gbdt import GbdtParams
from regime_ensemble.model import PowerTrace, SynthConfig, generate_synthetic
from regime_ensemble.model.trace import EXOG_CHANNELS


TINY_YAML = """\
window: 8
horizon: 2
seed: 1
gbdt: {n_trees: 5, max_depth: 2}
convnet: {epochs: 2, conv_channels: 4}
mlp: {epochs: 2, hidden: [8]}
gate: {epochs: 3, hidden: [8, 4]}
synth: {n_steps: 600}
"""


def ramp_trace(n, start_epoch=1704067200):
    """ Power 0, 1, 2, ... with deterministic exogenous channels. """
    timestamps = start_epoch + 60 * np.arange(n, dtype=np.int64)
    power = np.arange(n, dtype=np.float64)
    exog = np.column_stack([power * (k + 1) for k in range(len(EXOG_CHANNELS))])
    return PowerTrace(timestamps=timestamps, power=power, exog=exog)


def tiny_ensemble_config(window=8, horizon=2, seed=1):
    return EnsembleConfig(window=window, horizon=horizon,
                          gbdt=GbdtParams(n_trees=5, max_depth=2),
                          convnet=ConvNetParams(epochs=2, conv_channels=4, seed=seed),
                          gate=GateParams(epochs=3, hidden=(8, 4), seed=seed))


def tiny_mlp_params(seed=1):
    return MlpParams(epochs=2, hidden=(8,), seed=seed)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope='session')
def synthetic():
    return generate_synthetic(SynthConfig(n_steps=600, seed=3))


@pytest.fixture(scope='session')
def trained():
    from regime_ensemble.workflow import train_ensemble
    trace, _ = generate_synthetic(SynthConfig(n_steps=600, seed=3))
    return train_ensemble(trace, tiny_ensemble_config())


@pytest.fixture
def tiny_yaml(tmp_path):
    path = tmp_path / 'tiny.yaml'
    path.write_text(TINY_YAML)
    return path


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: end-to-end checks on full-size synthetic traces')
