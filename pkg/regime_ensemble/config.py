""" Run configuration: defaults, an optional YAML file, then command-line flags.

A config file mirrors the flags at the top level and carries the nested
hyper-parameter blocks::

    window: 30
    horizon: 5
    lambda: 0.5
    seed: 0
    gbdt: {n_trees: 200, max_depth: 4}
    convnet: {epochs: 30, conv_channels: 16}
    gate: {epochs: 50, hidden: [32, 16]}

Unknown keys are rejected.

"""
import logging

import yaml
from atom.api import Bool, Float, Int, Str, Tuple, Typed

from regime_ensemble.baselines import MlpParams
from regime_ensemble.convnet import ConvNetParams
from regime_ensemble.ensemble import EnsembleConfig, GateParams
from regime_ensemble.errors import ConfigurationError
from regime_ensemble.gbdt import GbdtParams
from regime_ensemble.ingest import IdleBaseline, SplitSpec
from regime_ensemble.model.base import Attributes, deserialize
from regime_ensemble.model.synth import SynthConfig
from regime_ensemble.model.trace import check_window

log = logging.getLogger(__name__)

EMIT_KINDS = ('csv', 'svg')

#: top-level keys that are spelled differently from the member they set
KEY_ALIASES = {'lambda': 'lam', 'exog-only': 'exog_only'}

BLOCKS = ('synth', 'gbdt', 'convnet', 'mlp', 'gate', 'split', 'baseline')


class RunConfig(Attributes):
    command = Str()
    input = Str()
    output = Str()
    model = Str()
    labels = Str()

    window = Int(30)
    horizon = Int(5)
    lam = Float(0.5)
    seed = Int(0)
    exog_only = Bool(False)
    emit = Tuple(Str(), default=('csv',))
    lambdas = Tuple(Float(), default=(0.0, 0.1, 0.25, 0.5, 1.0, 2.0))

    synth = Typed(SynthConfig, ())
    gbdt = Typed(GbdtParams, ())
    convnet = Typed(ConvNetParams, ())
    mlp = Typed(MlpParams, ())
    gate = Typed(GateParams, ())
    split = Typed(SplitSpec, ())
    baseline = Typed(IdleBaseline, ())

    def set_shared(self, name, value):
        """ Set a top-level option and copy it into the blocks it governs. """
        setattr(self, name, value)
        value = getattr(self, name)
        if name == 'seed':
            for block in (self.synth, self.convnet, self.mlp, self.gate):
                block.seed = value
        elif name == 'lam':
            self.gate.lam = value
        elif name == 'exog_only':
            self.gbdt.exog_only = value

    def validate(self):
        check_window(self.window, self.horizon)
        unknown = [e for e in self.emit if e not in EMIT_KINDS]
        if unknown:
            raise ConfigurationError('emit', "unknown kinds %s (choose from %s)"
                                     % (", ".join(unknown), ", ".join(EMIT_KINDS)))
        if any(v < 0 for v in self.lambdas):
            raise ConfigurationError('lambdas', "must be non-negative")
        for name in BLOCKS:
            getattr(self, name).validate()
        return self

    def ensemble_config(self):
        return EnsembleConfig(window=self.window, horizon=self.horizon,
                              gbdt=self.gbdt.copy(), convnet=self.convnet.copy(),
                              gate=self.gate.copy(), split=self.split.copy(),
                              baseline=self.baseline.copy()).validate()


def _apply_block(block, name, mapping):
    if not isinstance(mapping, dict):
        raise ConfigurationError(name, "expected a mapping, got %r" % (mapping,))
    members = block.members()
    unknown = sorted(k for k in mapping if k not in members or k.startswith('_'))
    if unknown:
        raise ConfigurationError(name, "unknown keys %s" % ", ".join(unknown))
    try:
        block.deserialize(mapping)
    except (TypeError, ValueError) as e:
        raise ConfigurationError(name, str(e))


def apply_mapping(cfg, mapping):
    """ Merge a parsed config mapping into ``cfg``; flat keys first, then blocks. """
    if mapping is None:
        return cfg
    if not isinstance(mapping, dict):
        raise ConfigurationError('config', "top level must be a mapping")
    flat, nested = {}, {}
    for key, value in mapping.items():
        key = KEY_ALIASES.get(key, key)
        if key in BLOCKS:
            nested[key] = value
        elif key in cfg.members() and key != 'command':
            flat[key] = value
        else:
            raise ConfigurationError(key, "unknown configuration key")
    for key in flat:
        try:
            cfg.set_shared(key, deserialize(flat, cfg.get_member(key)))
        except (TypeError, ValueError) as e:
            raise ConfigurationError(key, str(e))
    for name, value in nested.items():
        _apply_block(getattr(cfg, name), name, value)
    return cfg


def load_config_file(path):
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            return yaml.safe_load(handle)
    except yaml.YAMLError as e:
        raise ConfigurationError('config', "cannot parse %s: %s" % (path, e))


def build_run_config(command, config_path=None, **flags):
    """ Defaults, then the YAML file at ``config_path``, then non-None ``flags``. """
    cfg = RunConfig(command=command)
    if config_path:
        apply_mapping(cfg, load_config_file(config_path))
        log.debug("loaded configuration from %s", config_path)
    for name, value in flags.items():
        if value is not None:
            cfg.set_shared(name, value)
    return cfg.validate()
