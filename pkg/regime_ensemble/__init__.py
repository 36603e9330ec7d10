from .errors import RegimeEnsembleError
from .model import PowerTrace, Regime, SampleSet, SynthConfig, generate_synthetic, make_samples
from .gbdt import GbdtModel, GbdtParams
from .convnet import ConvNetModel, ConvNetParams
from .baselines import MlpModel, MlpParams, PersistenceForecaster
from .ensemble import (EnsembleConfig, EnsembleModel, GateNetwork, GateParams,
                       load_model, save_model, train_gate)
from .eval import compare_pairs, metrics, per_regime_metrics, talagrand

__version__ = '0.1'
