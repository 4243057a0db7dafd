import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from attacksig.corpus import UtteranceRecord, Waveform
from attacksig.features import (
    DB_FLOOR, FEATURE_NAMES, FrameConfig, PitchTrack, amplitude_power_energy, extract_signature, f0_stats,
    gender_flag, hnr, jitter, loudness_dbfs, read_feature_table, relative_mean_abs_diff, track_pitch,
    write_feature_table,
)

from conftest import SR, sine, square


def _track(f0, hop=0.01):
    f0 = np.asarray(f0, dtype=float)
    return PitchTrack(np.arange(f0.size) * hop, f0, f0 > 0, np.where(f0 > 0, 0.9, 0.0))


def _noise(seed, seconds=1.0):
    x = np.random.default_rng(seed).standard_normal(int(SR * seconds))
    return x / np.abs(x).max()


class TestPitch:
    def test_sine_220(self):
        t = track_pitch(sine(220.0))
        assert t.voiced.all()
        assert np.all(np.abs(t.f0 - 220.0) < 2.0)

    @pytest.mark.parametrize("f", [65.0, 100.0, 150.3, 310.0, 480.0])
    def test_sine_range(self, f):
        t = track_pitch(sine(f))
        assert t.voiced.all()
        assert np.all(np.abs(t.f0 - f) < 0.01 * f)

    @pytest.mark.parametrize("seed", range(5))
    def test_white_noise_unvoiced(self, seed):
        assert track_pitch(Waveform(_noise(seed), SR)).voiced.mean() < 0.2

    def test_silence_unvoiced(self):
        assert not track_pitch(Waveform(np.zeros(SR), SR)).voiced.any()

    def test_short_input(self):
        w = Waveform(np.full(100, 0.5), SR)
        assert track_pitch(w).f0.size == 0
        s = extract_signature(w)
        assert s.degraded and s.energy == pytest.approx(25.0)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            FrameConfig(f0_min=500.0, f0_max=60.0)
        with pytest.raises(ValueError):
            FrameConfig(voicing_threshold=1.5)


class TestF0Stats:
    def test_constant(self):
        assert f0_stats(_track([220.0] * 5)) == (220.0, 220.0, 220.0, 0.0, 0.0)

    def test_mas_two_frames(self):
        assert f0_stats(_track([200.0, 210.0]))[4] == pytest.approx(1000.0)

    def test_mas_skips_unvoiced_gaps(self):
        # only the adjacent voiced pair (0, 1) contributes
        assert f0_stats(_track([200.0, 210.0, 0.0, 100.0]))[4] == pytest.approx(1000.0)

    def test_chirp(self):
        t = np.arange(SR) / SR
        w = Waveform(np.sin(2 * np.pi * (180.0 * t + 20.0 * t ** 2)), SR)
        assert f0_stats(track_pitch(w))[4] == pytest.approx(40.0, abs=5.0)


class TestPerturbation:
    def test_constant_track_zero_jitter(self):
        assert jitter(_track([150.0] * 10)) == 0.0

    def test_jitter_hand_oracle(self):
        periods = np.array([5.0e-3, 5.5e-3, 5.0e-3])
        assert jitter(_track(1.0 / periods)) == pytest.approx(0.5 / (15.5 / 3), rel=1e-9)
        assert jitter(_track(1.0 / periods)) == pytest.approx(0.0968, abs=1e-4)

    def test_shimmer_hand_oracle(self):
        assert relative_mean_abs_diff([0.5, 0.6, 0.5]) == pytest.approx(0.1875, rel=1e-9)

    def test_sine_shimmer(self):
        w = sine(220.0, amp=0.7)
        s = extract_signature(w)
        assert s.shimmer < 0.01 and s.jitter < 0.005

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(50.0, 600.0), min_size=2, max_size=40))
    def test_nonnegative(self, f0):
        assert jitter(_track(f0)) >= 0.0
        assert relative_mean_abs_diff(f0) >= 0.0


class TestHNR:
    def test_pure_sine(self):
        assert hnr(sine(220.0))[0] >= 40.0

    @pytest.mark.parametrize("seed", range(3))
    def test_equal_power_noise(self, seed):
        t = np.arange(SR) / SR
        x = np.sin(2 * np.pi * 220.0 * t) + np.random.default_rng(seed).standard_normal(SR) * np.sqrt(0.5)
        assert hnr(Waveform(x / np.abs(x).max(), SR))[0] == pytest.approx(0.0, abs=3.0)

    def test_silence(self):
        assert hnr(Waveform(np.zeros(SR), SR)) == (0.0, 0.0)

    def test_clamp_bound(self):
        bound = 10 * np.log10((1 - 1e-6) / 1e-6)
        for w in (sine(220.0), sine(100.0), square(150.0)):
            assert abs(hnr(w)[0]) <= bound + 1e-9


class TestLevels:
    def test_square_zero_dbfs(self):
        assert loudness_dbfs(square()) == 0.0

    def test_sine_dbfs(self):
        assert loudness_dbfs(sine()) == pytest.approx(-3.01, abs=0.05)

    def test_silence_floor(self):
        assert loudness_dbfs(Waveform(np.zeros(10), SR)) == DB_FLOOR

    def test_two_sample_arithmetic(self):
        peak, peak_db, power, energy = amplitude_power_energy(Waveform(np.array([0.5, -0.5]), 2))
        assert (peak, power, energy) == (0.5, 0.5, 0.5)
        assert peak_db == pytest.approx(-6.0206, abs=1e-4)

    def test_square_energy(self):
        w = square(seconds=0.25)
        assert amplitude_power_energy(w)[3] == len(w)

    def test_silence_levels(self):
        assert amplitude_power_energy(Waveform(np.zeros(8), SR)) == (0.0, DB_FLOOR, 0.0, 0.0)


class TestGender:
    def test_metadata_wins(self):
        rec = UtteranceRecord("u", None, "A0", "female")
        assert gender_flag(rec, _track([100.0] * 5)) == 1

    def test_fallback(self):
        assert gender_flag(None, _track([210.0] * 5)) == 1
        assert gender_flag(None, _track([110.0] * 5)) == 0


class TestSignature:
    def test_sine(self):
        s = extract_signature(sine(220.0))
        assert s.duration == 1.0 and not s.degraded
        assert s.f0_mean == pytest.approx(220.0, abs=2.0)
        assert s.jitter < 0.005 and s.shimmer < 0.01 and s.hnr_mean >= 40.0
        assert s.loudness_dbfs == pytest.approx(-3.01, abs=0.05)
        assert s.as_array().shape == (16,)

    def test_silence_degraded(self):
        s = extract_signature(Waveform(np.zeros(SR // 2), SR))
        assert s.degraded
        for name in ("f0_mean", "f0_min", "f0_max", "f0_std", "f0_mas", "jitter", "shimmer", "hnr_mean", "hnr_std"):
            assert getattr(s, name) == 0.0
        assert s.duration == 0.5 and s.energy == 0.0

    def test_deterministic(self, small_corpus):
        r = small_corpus.records[0]
        assert extract_signature(r).as_array().tobytes() == extract_signature(r).as_array().tobytes()

    @pytest.mark.parametrize("s", [0.9, 0.5, 0.1])
    def test_amplitude_scaling(self, small_corpus, s):
        w = small_corpus.records[1].load()
        a = extract_signature(w)
        b = extract_signature(Waveform(w.samples * s, w.sample_rate))
        for name in ("f0_mean", "f0_min", "f0_max", "f0_std", "f0_mas", "jitter", "gender", "duration"):
            assert getattr(b, name) == pytest.approx(getattr(a, name), abs=1e-9, rel=1e-9)
        for name in ("loudness_dbfs", "peak_dbfs"):
            assert getattr(b, name) - getattr(a, name) == pytest.approx(20 * np.log10(s), abs=1e-6)

    def test_time_shift(self):
        w = sine(220.0)
        shifted = Waveform(np.concatenate([np.zeros(160), w.samples]), SR)
        a, b = extract_signature(w), extract_signature(shifted)
        assert b.f0_mean == pytest.approx(a.f0_mean, rel=0.05)
        assert b.hnr_mean == pytest.approx(a.hnr_mean, rel=0.05)
        # both near zero on a pure tone; compare absolutely
        assert abs(b.jitter - a.jitter) < 0.05 * max(a.jitter, 1e-3)
        assert abs(b.shimmer - a.shimmer) < 0.05 * max(a.shimmer, 1e-2)


class TestTable:
    def test_round_trip(self, tmp_path, small_corpus):
        recs = small_corpus.records[:4]
        sigs = [extract_signature(r) for r in recs]
        write_feature_table([(r.utterance_id, r.label, s) for r, s in zip(recs, sigs)], tmp_path / "f.csv")
        ids, labels, X, deg = read_feature_table(tmp_path / "f.csv")
        assert ids == [r.utterance_id for r in recs] and labels == [r.label for r in recs]
        np.testing.assert_allclose(X, [s.as_array() for s in sigs], rtol=1e-8)
        assert X.shape[1] == len(FEATURE_NAMES) == 16 and not deg.any()
