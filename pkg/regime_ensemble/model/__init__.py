from .base import Attributes, array_to_archive, array_from_archive
from .trace import (PowerTrace, Regime, SampleSet, EXOG_CHANNELS, make_samples)
from .synth import SynthConfig, generate_synthetic
