import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jcrsim.errors import ConfigError
from jcrsim.photonic_link import analytic_period
from jcrsim.radar_proc import (
    C_LIGHT,
    DetectionError,
    RadarReceiver,
    RangeProfile,
    Scatterer,
    TargetScene,
    decimate_dechirped,
    dechirp,
    dechirp_decimate,
    estimate_distances,
    image_peaks,
    isar_image,
    peak_beat_frequency,
    predict_resolution,
    psf_widths,
    range_profile,
    synth_echo,
    wavelength_of,
)
from jcrsim.signal_core import SampledSignal
from jcrsim.waveform_gen import LfmParams, gen_qpsk_frame

FS = 40e9
OUT = 20e6


def tx_period(lfm, data=False, seed=0, rate=105.26e6):
    frame = gen_qpsk_frame(rate, lfm, 1, seed)
    return SampledSignal(FS, analytic_period(lfm, frame, 0, 1.0, FS, phase_enabled=data)), frame


def beat_of(lfm, distance, window="hann", data=False):
    frame = gen_qpsk_frame(105.26e6, lfm, 1, 0)
    x = RadarReceiver().pulse(lfm, frame, TargetScene.static([distance]), 0, FS,
                              phase_enabled=data)
    return peak_beat_frequency(range_profile(x, lfm.chirp_rate, window=window, sample_rate=OUT))


def tone(freq, fs=FS, n=160_000, amp=1.0):
    return SampledSignal(fs, amp * np.cos(2 * np.pi * freq * np.arange(n) / fs))


class TestSynthEcho:
    def test_zero_delay_is_tx(self, lfm_full):
        tx, _ = tx_period(lfm_full, data=True)
        scene = TargetScene((Scatterer(0.0, -1.0),), 1.0)
        echo = synth_echo(tx, scene, 0, lfm_full)
        np.testing.assert_allclose(echo.samples, tx.samples, atol=1e-12)

    def test_delay_of_096m(self):
        assert TargetScene.static([0.96]).delays()[0] == pytest.approx(6.404e-9, rel=1e-4)

    def test_delayed_chirp_matches_closed_form(self, lfm_full):
        tx, _ = tx_period(lfm_full)
        tau = TargetScene.static([0.96]).delays()[0]
        echo = synth_echo(tx, TargetScene.static([0.96]), 0, lfm_full)
        t = np.arange(len(tx)) / FS
        want = np.sqrt(2) * np.cos(lfm_full.phase(t - tau))
        inner = slice(2000, 150_000)
        assert np.max(np.abs(echo.samples[inner] - want[inner])) < 1e-3

    def test_linearity(self, lfm_half):
        tx, _ = tx_period(lfm_half, data=True, seed=3)
        a = Scatterer(0.0, 0.0, 0.7)
        b = Scatterer(0.05, 0.33, 1.3)
        both = synth_echo(tx, TargetScene((a, b), 0.96, 40.0), 5, lfm_half)
        ea = synth_echo(tx, TargetScene((a,), 0.96, 40.0), 5, lfm_half)
        eb = synth_echo(tx, TargetScene((b,), 0.96, 40.0), 5, lfm_half)
        np.testing.assert_allclose(both.samples, ea.samples + eb.samples, atol=1e-12)

    def test_beyond_unambiguous_range(self, lfm_half):
        tx, _ = tx_period(lfm_half)
        with pytest.raises(ConfigError, match="target beyond unambiguous range"):
            synth_echo(tx, TargetScene.static([600.0]), 0, lfm_half)

    def test_rotating_scatterer_range(self):
        scene = TargetScene((Scatterer(0.1, 0.0),), 2.0, omega=100.0)
        assert scene.ranges(0.0)[0] == pytest.approx(2.0)
        assert scene.ranges(math.pi / 200)[0] == pytest.approx(2.1)

    def test_scene_validation(self):
        with pytest.raises(ConfigError):
            TargetScene((), 1.0)
        with pytest.raises(ConfigError):
            TargetScene((Scatterer(0, 0),), 0.0)
        with pytest.raises(ConfigError):
            Scatterer(0, 0, -1.0)


class TestDechirp:
    def test_self_mix_peaks_at_dc(self, lfm_full):
        tx, _ = tx_period(lfm_full, data=True)
        y = decimate_dechirped(dechirp(tx, tx))
        assert peak_beat_frequency(range_profile(y, lfm_full.chirp_rate)) == 0.0

    def test_plain_chirp_beat_at_0p96m(self, lfm_full):
        # k * tau = 2.6316e14 * 6.404e-9
        assert lfm_full.chirp_rate == pytest.approx(2.6316e14, rel=1e-4)
        assert beat_of(lfm_full, 0.96) == pytest.approx(1.685e6, rel=2e-3)

    def test_half_bandwidth_pair_with_data(self, lfm_half):
        frame = gen_qpsk_frame(105.26e6, lfm_half, 1, 0)
        x = RadarReceiver().pulse(lfm_half, frame, TargetScene.static([0.96, 1.29]), 0, FS)
        prof = range_profile(x, lfm_half.chirp_rate, window="rect", sample_rate=OUT)
        beats = [2 * lfm_half.chirp_rate * d / C_LIGHT for d in estimate_distances(prof, 2)]
        assert beats[0] == pytest.approx(0.84e6, abs=0.035e6)
        assert beats[1] == pytest.approx(1.13e6, abs=0.035e6)

    def test_full_bandwidth_pair_resolved(self, lfm_full):
        frame = gen_qpsk_frame(105.26e6, lfm_full, 1, 0)
        x = RadarReceiver().pulse(lfm_full, frame, TargetScene.static([0.96, 1.13]), 0, FS)
        prof = range_profile(x, lfm_full.chirp_rate, window="rect", sample_rate=OUT)
        beats = [2 * lfm_full.chirp_rate * d / C_LIGHT for d in estimate_distances(prof, 2)]
        assert beats[0] == pytest.approx(1.69e6, abs=0.07e6)
        assert beats[1] == pytest.approx(1.99e6, abs=0.07e6)

    def test_fused_equals_composed(self, lfm_half):
        tx, _ = tx_period(lfm_half, data=True, seed=2)
        echo = synth_echo(tx, TargetScene.static([0.7, 1.2]), 0, lfm_half)
        composed = decimate_dechirped(dechirp(echo, tx))
        fused = dechirp_decimate(echo, tx)
        assert fused.sample_rate == composed.sample_rate == OUT
        np.testing.assert_allclose(fused.samples, composed.samples, atol=1e-9)


class TestDecimate:
    def test_dc(self):
        y = decimate_dechirped(SampledSignal(FS, np.full(160_000, 0.3)))
        assert len(y) == 80
        np.testing.assert_allclose(y.samples, 0.3, atol=1e-3)

    def test_1mhz_tone_amplitude(self):
        y = decimate_dechirped(tone(1e6))
        want = np.cos(2 * np.pi * 1e6 * np.arange(80) / OUT)
        gain_db = 20 * np.log10(np.max(np.abs(np.fft.rfft(y.samples))) / 40)
        assert abs(gain_db) <= 0.1
        np.testing.assert_allclose(y.samples, want, atol=0.012)

    @pytest.mark.parametrize("freq", [10.5e6, 13e6, 50e6, 1e9])
    def test_above_nyquist_suppressed(self, freq):
        y = decimate_dechirped(tone(freq))
        assert 20 * np.log10(np.sqrt(2) * np.std(y.samples)) <= -60

    def test_non_integer_factor_names_nearest(self):
        # 40e9 / 30e6 = 1333.33 -> 1333 -> 30.0075 MHz
        with pytest.raises(ConfigError, match=r"3\.00075e\+07"):
            decimate_dechirped(tone(1e6), 30e6)


class TestEstimateDistances:
    def test_symmetric_peak_is_exact(self):
        f = np.arange(64) * 1e5
        mag = -np.abs(np.arange(64) - 20.0) * 3.0
        prof = RangeProfile(f, mag, 1e14)
        assert estimate_distances(prof)[0] == C_LIGHT * 2e6 / 2e14

    def test_tone_on_bin_centre(self):
        k = 2.6316e14
        f = 10 * OUT / 80  # bin 10 of the unpadded record, bin 80 once padded 8x
        x = np.cos(2 * np.pi * f * np.arange(80) / OUT)
        prof = range_profile(x, k, window="rect", sample_rate=OUT)
        assert np.argmax(prof.magnitude_db) == 80
        assert prof.distances[80] == pytest.approx(C_LIGHT * f / (2 * k), rel=1e-12)
        # the negative-frequency image tilts the parabola by a small fraction of a bin
        bin_width = prof.distances[1]
        assert abs(estimate_distances(prof)[0] - prof.distances[80]) < 0.1 * bin_width

    @settings(max_examples=25, deadline=None)
    @given(f=st.floats(1.0e6, 8.0e6), phase=st.floats(0, 2 * math.pi))
    def test_between_bins_matches_fine_grid(self, f, phase):
        k = 1.3158e14
        x = np.cos(2 * np.pi * f * np.arange(80) / OUT + phase)
        coarse = estimate_distances(range_profile(x, k, zero_pad=8, sample_rate=OUT))[0]
        fine = range_profile(x, k, zero_pad=1024, sample_rate=OUT)
        oracle = fine.distances[np.argmax(fine.magnitude_db)]
        assert coarse == pytest.approx(oracle, rel=0.02)

    def test_too_few_peaks(self):
        x = np.cos(2 * np.pi * 2e6 * np.arange(80) / OUT)
        prof = range_profile(x, 1e14, sample_rate=OUT)
        with pytest.raises(DetectionError, match="found 1 peak"):
            estimate_distances(prof, 2)

    def test_num_targets_positive(self):
        prof = range_profile(np.ones(80), 1e14, sample_rate=OUT)
        with pytest.raises(ConfigError):
            estimate_distances(prof, 0)

    def test_zero_delay_profile_peaks_at_zero(self, lfm_full):
        tx, _ = tx_period(lfm_full)
        scene = TargetScene((Scatterer(0.0, -1.0),), 1.0)
        y = dechirp_decimate(synth_echo(tx, scene, 0, lfm_full), tx)
        prof = range_profile(y, lfm_full.chirp_rate)
        assert prof.distances[np.argmax(prof.magnitude_db)] == 0.0


class TestBeatLaw:
    @settings(max_examples=8, deadline=None)
    @given(d=st.floats(0.3, 1.5))
    def test_peak_at_k_tau(self, d):
        lfm = LfmParams(8.5e9, 1e9, 4e-6)
        want = lfm.chirp_rate * 2 * d / C_LIGHT
        assert beat_of(lfm, d) == pytest.approx(want, rel=5e-3)

    def test_ranging_regression(self, lfm_full):
        rng = np.random.default_rng(7)
        truth = rng.uniform(0.3, 1.5, 20)
        est = [C_LIGHT * beat_of(lfm_full, d) / (2 * lfm_full.chirp_rate) for d in truth]
        slope, intercept = np.polyfit(truth, est, 1)
        assert abs(slope - 1) <= 0.005
        assert abs(intercept) <= 0.01

    def test_superposition(self, lfm_full):
        frame = gen_qpsk_frame(105.26e6, lfm_full, 1, 0)
        rx = RadarReceiver()

        def spectrum(distances):
            x = rx.pulse(lfm_full, frame, TargetScene.static(distances), 0, FS, phase_enabled=False)
            return 10 ** (range_profile(x, lfm_full.chirp_rate, sample_rate=OUT).magnitude_db / 20)

        both, a, b = spectrum([0.5, 1.4]), spectrum([0.5]), spectrum([1.4])
        peak = both.max()
        cross = np.abs(both - np.maximum(a, b)) / peak
        assert 20 * np.log10(cross.max()) <= -30


class TestResolution:
    def test_full_bandwidth(self):
        assert round(predict_resolution(1e9, 0.0333, 1.0, 0.5125)[0], 4) == 0.1499

    def test_half_bandwidth(self):
        assert round(predict_resolution(0.5e9, 0.0333, 1.0, 0.5125)[0], 4) == 0.2998

    def test_crossrange_from_rotation(self):
        assert round(predict_resolution(1e9, 0.0333, 2.048e-3, 0.5125 / 2.048e-3)[1], 4) == 0.0325

    def test_half_bandwidth_scene_cell(self):
        lfm = LfmParams(8.5e9, 0.5e9, 4e-6)
        wl = wavelength_of(lfm)
        rotation = wl / (2 * 0.0670)
        _, rc = predict_resolution(lfm.bandwidth, wl, 512 * 4e-6, rotation / (512 * 4e-6))
        assert rc == pytest.approx(0.0670, rel=1e-12)

    @pytest.mark.parametrize("args", [(0, 0.03, 1, 1), (1e9, -0.03, 1, 1), (1e9, 0.03, 0, 1),
                                      (1e9, 0.03, 1, 0)])
    def test_non_positive(self, args):
        with pytest.raises(ConfigError):
            predict_resolution(*args)


def collect_scene(lfm, scatterers, num_pulses, rotation, standoff=1.0, threads=1):
    t_r = num_pulses * lfm.period
    omega = rotation / t_r
    frame = gen_qpsk_frame(105.26e6, lfm, num_pulses, 0)
    scene = TargetScene(scatterers, standoff, omega)
    x = RadarReceiver().collect(lfm, frame, scene, num_pulses, FS, phase_enabled=False,
                                threads=threads)
    return x, t_r, omega


class TestIsar:
    def test_centre_scatterer_at_standoff(self, lfm_full):
        x, t_r, omega = collect_scene(lfm_full, (Scatterer(0.0, 0.0),), 32, 0.3, standoff=1.2)
        img = isar_image(x, OUT, lfm_full, wavelength_of(lfm_full), t_r, omega)
        (r, xc, level), = image_peaks(img, 1)
        assert level == 0.0
        assert r == pytest.approx(1.2, abs=0.5 * img.predicted_res[0])
        assert xc == pytest.approx(0.0, abs=1e-12)

    def test_psf_matches_prediction(self, lfm_full):
        # small-angle regime; resolution depends only on the product Tr * Omega
        x, t_r, omega = collect_scene(lfm_full, (Scatterer(0.0, 0.0),), 64, 0.1)
        img = isar_image(x, OUT, lfm_full, wavelength_of(lfm_full), t_r, omega, window="rect",
                         range_pad=16, doppler_pad=16)
        wr, wx = psf_widths(img)
        rl, rc = img.predicted_res
        assert wr == pytest.approx(rl, rel=0.25)
        assert wx == pytest.approx(rc, rel=0.25)

    def test_no_rotation(self, lfm_full):
        with pytest.raises(ConfigError, match="no cross-range diversity"):
            isar_image(np.ones((80, 32)), OUT, lfm_full, 0.0333, 1e-4, 0.0)

    def test_too_few_pulses(self, lfm_full):
        with pytest.raises(ConfigError, match="at least 16"):
            isar_image(np.ones((80, 8)), OUT, lfm_full, 0.0333, 1e-4, 1.0)

    def test_axes_scaling(self, lfm_full):
        img = isar_image(np.random.default_rng(0).normal(size=(80, 32)), OUT, lfm_full,
                         0.0333, 1e-4, 100.0)
        # one-sided range span c * fs / (4k)
        assert img.range_axis[-1] == pytest.approx(C_LIGHT * OUT / (4 * lfm_full.chirp_rate))
        assert np.all(np.diff(img.range_axis) > 0)
        assert img.pixels.max() == 0.0

    def test_threaded_collect_matches_serial(self, lfm_half):
        scat = (Scatterer(0.1, 0.1), Scatterer(-0.1, 0.0))
        serial, _, _ = collect_scene(lfm_half, scat, 6, 0.2)
        threaded, _, _ = collect_scene(lfm_half, scat, 6, 0.2, threads=3)
        np.testing.assert_array_equal(serial, threaded)
