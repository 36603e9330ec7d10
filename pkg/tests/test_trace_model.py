import numpy as np
import pytest

from regime_ensemble.errors import ConfigurationError, InputError, SizingError
from regime_ensemble.model import PowerTrace, Regime, SynthConfig, generate_synthetic, make_samples
from regime_ensemble.model.synth import CYCLE, stationary_occupancy
from regime_ensemble.model.trace import CSV_HEADER, EXOG_CHANNELS, minute_of_day

from conftest import ramp_trace


def test_regime_labels():
    for regime in Regime:
        assert Regime.from_label(regime.label) is regime
    assert Regime.from_label(' High ') is Regime.HIGH
    with pytest.raises(KeyError):
        Regime.from_label('busy')


def test_make_samples_windows():
    trace = ramp_trace(10)
    samples = make_samples(trace, 3, 2)

    assert len(samples) == 6
    assert samples.history.shape == (6, 3)
    assert samples.exog.shape == (6, 3, len(EXOG_CHANNELS))
    assert samples.targets.shape == (6, 2)
    assert samples.history[0].tolist() == [0.0, 1.0, 2.0]
    assert samples.targets[0].tolist() == [3.0, 4.0]
    assert samples.history[-1].tolist() == [5.0, 6.0, 7.0]
    assert samples.targets[-1].tolist() == [8.0, 9.0]
    assert samples.anchors.tolist() == [2, 3, 4, 5, 6, 7]
    assert samples.exog[1, :, 2].tolist() == [3.0, 6.0, 9.0]
    assert samples.last_power.tolist() == samples.history[:, -1].tolist()

    seq = samples.sequence_inputs()
    assert seq.shape == (6, 3, 1 + len(EXOG_CHANNELS))
    assert np.array_equal(seq[:, :, 0], samples.history)


def test_make_samples_exact_fit():
    samples = make_samples(ramp_trace(5), 3, 2)
    assert len(samples) == 1


def test_make_samples_copies_the_trace():
    trace = ramp_trace(10)
    samples = make_samples(trace, 3, 1)
    trace.power[:] = -1.0
    assert samples.history[0].tolist() == [0.0, 1.0, 2.0]
    assert samples.targets[0].tolist() == [3.0]


def test_make_samples_errors():
    with pytest.raises(SizingError) as info:
        make_samples(ramp_trace(4), 3, 2)
    assert info.value.required == 5 and info.value.actual == 4

    with pytest.raises(ConfigurationError):
        make_samples(ramp_trace(10), 1, 1)
    with pytest.raises(ConfigurationError):
        make_samples(ramp_trace(10), 3, 0)

    gappy = ramp_trace(10)
    gappy.timestamps[5:] += 60
    with pytest.raises(InputError):
        make_samples(gappy, 3, 1)


def test_trace_validate_and_slice():
    trace = ramp_trace(10).validate()
    part = trace.slice(2, 5)
    assert len(part) == 3
    assert part.power.tolist() == [2.0, 3.0, 4.0]
    assert part.timestamps[0] == trace.timestamps[2]
    assert trace.channel('gpu_util').tolist() == trace.exog[:, 0].tolist()

    frame = trace.to_frame()
    assert tuple(frame.columns) == CSV_HEADER
    again = PowerTrace.from_frame(frame)
    assert np.array_equal(again.power, trace.power)
    assert np.array_equal(again.channel('minute_of_day'), minute_of_day(trace.timestamps))


def test_synthetic_is_deterministic():
    a, la = generate_synthetic(SynthConfig(n_steps=500, seed=11))
    b, lb = generate_synthetic(SynthConfig(n_steps=500, seed=11))
    c, _ = generate_synthetic(SynthConfig(n_steps=500, seed=12))

    assert np.array_equal(a.power, b.power)
    assert np.array_equal(a.exog, b.exog)
    assert np.array_equal(la, lb)
    assert not np.array_equal(a.power, c.power)


def test_synthetic_noise_free_idle():
    cfg = SynthConfig(n_steps=50, forced_regime='idle', noise_std=0.0)
    trace, labels = generate_synthetic(cfg)

    assert np.all(trace.power == cfg.idle_power)
    assert np.all(labels == int(Regime.IDLE))
    assert np.all(trace.channel('active_jobs') == 0.0)
    assert np.all(trace.channel('gpu_temp') == cfg.idle_gpu_temp)


def test_synthetic_ramp_is_linear():
    cfg = SynthConfig(n_steps=11, forced_regime='ramp_up', noise_std=0.0)
    trace, _ = generate_synthetic(cfg)

    assert trace.power[0] == cfg.idle_power
    assert trace.power[-1] == cfg.high_power_mean
    assert np.allclose(np.diff(trace.power), (cfg.high_power_mean - cfg.idle_power) / 10.0)


def test_synthetic_exogenous_channels():
    cfg = SynthConfig(n_steps=3000, seed=5)
    trace, labels = generate_synthetic(cfg)
    gpu = trace.channel('gpu_util')

    assert trace.validate() is trace
    assert np.all((gpu >= 0.0) & (gpu <= 1.0))
    assert np.array_equal(trace.channel('mem_util'), 0.85 * gpu)
    jobs = trace.channel('active_jobs')
    assert np.all(jobs[labels == int(Regime.IDLE)] == 0)
    assert np.all(jobs[labels == int(Regime.HIGH)] == cfg.max_jobs)
    assert set(np.unique(labels)) == {0, 1, 2, 3}


def test_synthetic_long_run_occupancy():
    cfg = SynthConfig(n_steps=200000, seed=2)
    _, labels = generate_synthetic(cfg)
    expected = stationary_occupancy(cfg)
    for regime, share in expected.items():
        observed = float(np.mean(labels == int(regime)))
        assert observed == pytest.approx(share, abs=0.02)


def simulated_occupancy(cfg, n_steps, seed):
    """ Share of steps per regime in an independent run of the dwell chain. """
    rng = np.random.default_rng(seed)
    counts = dict.fromkeys(CYCLE, 0)
    position = CYCLE.index(Regime.from_label(cfg.initial_regime))
    total = 0
    while total < n_steps:
        regime = CYCLE[position % len(CYCLE)]
        lo, hi = cfg.dwell_range(regime)
        length = min(int(rng.integers(lo, hi + 1)), n_steps - total)
        counts[regime] += length
        total += length
        position += 1
    return {regime: count / float(n_steps) for regime, count in counts.items()}


def test_default_seed_occupancy_matches_long_simulation():
    cfg = SynthConfig(seed=7, n_steps=10000)
    _, labels = generate_synthetic(cfg)
    reference = simulated_occupancy(cfg, 10 ** 6, seed=0)
    expected = stationary_occupancy(cfg)
    for regime, share in reference.items():
        assert share == pytest.approx(expected[regime], abs=0.01)
        assert float(np.mean(labels == int(regime))) == pytest.approx(share, abs=0.05)


def test_synth_config_validation():
    with pytest.raises(ConfigurationError) as info:
        SynthConfig(n_steps=0).validate()
    assert info.value.field == 'n_steps'

    with pytest.raises(ConfigurationError) as info:
        SynthConfig(ramp_minutes=(5, 1)).validate()
    assert info.value.field == 'ramp_minutes'

    with pytest.raises(ConfigurationError) as info:
        SynthConfig(forced_regime='busy').validate()
    assert info.value.field == 'forced_regime'

    cfg = SynthConfig(seed=4)
    assert SynthConfig.from_archive(cfg.serialize({})).seed == 4
