import hashlib
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from attacksig.corpus import (
    ConfigError, DatasetManifest, UtteranceRecord, Waveform, WavFormatError, WavTruncatedError,
    default_synth_config, materialize, parse_asvspoof_protocol, parse_split, read_manifest, read_wav,
    split_in_domain, split_out_of_domain, synth_corpus, write_manifest, write_wav,
)
from attacksig.features import extract_signature, hnr, jitter, shimmer, track_pitch

from conftest import SR, five_attacker_config, profile, sine


def _wav_bytes(samples, sr=SR, channels=1, bits=16):
    data = np.asarray(samples, dtype="<i2").tobytes() if bits == 16 else bytes(samples)
    fmt = struct.pack("<HHIIHH", 1, channels, sr, sr * channels * bits // 8, channels * bits // 8, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", len(data)) + data
    return b"RIFF" + struct.pack("<I", len(body)) + body


class TestWav:
    def test_pcm_scaling(self, tmp_path):
        p = tmp_path / "a.wav"
        p.write_bytes(_wav_bytes([16384, -16384]))
        w = read_wav(p)
        np.testing.assert_array_equal(w.samples, [0.5, -0.5])
        assert w.sample_rate == 16000

    def test_stereo_rejected(self, tmp_path):
        p = tmp_path / "s.wav"
        p.write_bytes(_wav_bytes([0, 0, 1, 1], channels=2))
        with pytest.raises(WavFormatError, match="unsupported channel count"):
            read_wav(p)

    def test_8bit_rejected(self, tmp_path):
        p = tmp_path / "b.wav"
        p.write_bytes(_wav_bytes([128, 130], bits=8))
        with pytest.raises(WavFormatError, match="unsupported bit depth"):
            read_wav(p)

    def test_truncated(self, tmp_path):
        p = tmp_path / "t.wav"
        p.write_bytes(_wav_bytes(np.zeros(100, dtype=int))[:-20])
        with pytest.raises(WavTruncatedError):
            read_wav(p)

    def test_round_trip_sine(self, tmp_path):
        w = sine(220.0)
        write_wav(w, tmp_path / "x.wav")
        r = read_wav(tmp_path / "x.wav")
        assert r.sample_rate == 16000
        assert np.max(np.abs(r.samples - w.samples)) <= 1 / 32768

    def test_empty_waveform(self):
        with pytest.raises(ValueError, match="empty waveform"):
            Waveform(np.zeros(0), SR)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-1.0, 1.0), min_size=1, max_size=200), st.sampled_from([8000, 16000, 44100]))
    def test_round_trip_property(self, tmp_path_factory, xs, sr):
        path = tmp_path_factory.mktemp("wav") / "p.wav"
        write_wav(Waveform(np.array(xs), sr), path)
        r = read_wav(path)
        assert r.sample_rate == sr
        assert np.max(np.abs(r.samples - np.array(xs))) <= 1 / 32768 + 1e-12


class TestSynth:
    def test_counts(self):
        m = synth_corpus(five_attacker_config(n=40, seed=7))
        assert len(m) == 200
        assert {k: len(v) for k, v in m.by_label().items()} == {lab: 40 for lab in ["A0", "A01", "A02", "A03", "A04"]}

    def test_deterministic(self):
        cfg = five_attacker_config(n=3)
        a, b = synth_corpus(cfg, seed=11), synth_corpus(cfg, seed=11)
        for ra, rb in zip(a, b):
            assert ra.utterance_id == rb.utterance_id
            assert ra.load().samples.tobytes() == rb.load().samples.tobytes()
        c = synth_corpus(cfg, seed=12)
        assert a.records[0].load().samples.tobytes() != c.records[0].load().samples.tobytes()

    def test_materialized_manifest_hash(self, tmp_path):
        cfg = five_attacker_config(n=2)
        digests = []
        for run in range(2):
            out = tmp_path / "c"
            m = materialize(synth_corpus(cfg), out)
            write_manifest(m, out / "manifest.jsonl", relative=True)
            h = hashlib.sha256((out / "manifest.jsonl").read_bytes())
            for r in m:
                h.update(open(r.path, "rb").read())
            digests.append(h.hexdigest())
        assert digests[0] == digests[1]
        back = read_manifest(tmp_path / "c" / "manifest.jsonl")
        assert back.records[0].load().sample_rate == SR

    def test_samples_in_range(self, small_corpus):
        for r in small_corpus:
            assert np.max(np.abs(r.load().samples)) <= 1.0

    def test_bad_jitter_names_field(self):
        cfg = five_attacker_config()
        bad = cfg.attackers[:1] + (profile("A01", jitter=0.9),) + cfg.attackers[2:]
        with pytest.raises(ConfigError) as exc:
            synth_corpus(type(cfg)(bad, utterances_per_attacker=2))
        assert "A01.jitter" in exc.value.fields

    def test_requires_bonafide(self):
        with pytest.raises(ConfigError, match="bonafide"):
            type(five_attacker_config())((profile("A01"), profile("A02")), utterances_per_attacker=2).validate()

    def test_default_config_layout(self):
        cfg = default_synth_config(utterances_per_attacker=2)
        labels = [a.label for a in cfg.attackers]
        assert labels[0] == "A0" and len(labels) == 8

    @staticmethod
    def _mean_feature(level_name, level, fn, n=6):
        kw = dict(jitter=0.0, shimmer=0.0, noise_ratio=0.0)
        kw[level_name] = level
        cfg = type(five_attacker_config())((profile("A0", **kw), profile("A01")), utterances_per_attacker=n, seed=5)
        m = synth_corpus(cfg)
        return np.mean([fn(r.load()) for r in m.by_label()["A0"]])

    def test_jitter_monotone(self):
        f = lambda w: jitter(track_pitch(w))
        assert self._mean_feature("jitter", 0.0, f) < self._mean_feature("jitter", 0.1, f)

    def test_shimmer_monotone(self):
        f = lambda w: shimmer(w, track_pitch(w))
        assert self._mean_feature("shimmer", 0.0, f) < self._mean_feature("shimmer", 0.1, f)

    def test_noise_lowers_hnr(self):
        f = lambda w: -hnr(w)[0]
        levels = [self._mean_feature("noise_ratio", v, f) for v in (0.0, 0.1, 0.3)]
        assert levels == sorted(levels)


class TestProtocol:
    def test_rows(self, tmp_path):
        (tmp_path / "audio").mkdir()
        write_wav(sine(seconds=0.1), tmp_path / "audio" / "LA_T_1138215.wav")
        proto = tmp_path / "p.txt"
        proto.write_text("LA_0079 LA_T_1138215 - - bonafide\nLA_0079 LA_T_1271820 - A01 spoof\n")
        m = parse_asvspoof_protocol(proto, tmp_path / "audio")
        assert m.labels == ["A0", "A01"]
        assert m.records[0].path.endswith(".wav")
        assert m.records[1].source is None

    def test_flac_without_soundfile(self, tmp_path, monkeypatch):
        import sys
        monkeypatch.setitem(sys.modules, "soundfile", None)
        (tmp_path / "x.flac").write_bytes(b"fLaC")
        with pytest.raises(WavFormatError, match="soundfile"):
            UtteranceRecord("x", str(tmp_path / "x.flac")).load()

    def test_three_fields(self, tmp_path):
        proto = tmp_path / "p.txt"
        proto.write_text("LA_0079 LA_T_1 - - bonafide\nLA_0079 LA_T_2 spoof\n")
        with pytest.raises(ValueError, match=":2:"):
            parse_asvspoof_protocol(proto, tmp_path)


def _manifest(n_labels=5, per=100):
    recs = [UtteranceRecord(f"L{i}_{j}", None, f"L{i}") for i in range(n_labels) for j in range(per)]
    return DatasetManifest(tuple(recs))


class TestSplits:
    def test_in_domain_counts(self):
        tr, te = split_in_domain(_manifest(), 0.9, seed=0)
        assert (len(tr), len(te)) == (450, 50)
        assert all(len(v) == 10 for v in te.by_label().values())

    def test_in_domain_deterministic(self):
        a = split_in_domain(_manifest(), 0.9, seed=4)[1]
        b = split_in_domain(_manifest(), 0.9, seed=4)[1]
        assert [r.utterance_id for r in a] == [r.utterance_id for r in b]

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(2, 30), min_size=1, max_size=6), st.floats(0.05, 0.95), st.integers(0, 99))
    def test_in_domain_partition(self, sizes, frac, seed):
        recs = [UtteranceRecord(f"L{i}_{j}", None, f"L{i}") for i, n in enumerate(sizes) for j in range(n)]
        m = DatasetManifest(tuple(recs))
        n_train = sum(int(round(n * frac)) for n in sizes)
        if n_train in (0, len(m)):
            with pytest.raises(ValueError, match="empty"):
                split_in_domain(m, frac, seed)
            return
        tr, te = split_in_domain(m, frac, seed)
        assert len(tr) + len(te) == len(m)
        assert not {r.utterance_id for r in tr} & {r.utterance_id for r in te}
        counts = {k: len(v) for k, v in tr.by_label().items()}
        for i, n in enumerate(sizes):
            assert abs(counts.get(f"L{i}", 0) - n * frac) <= 1

    def test_out_of_domain(self):
        labels = ["A0"] + [f"A{i:02d}" for i in range(1, 20)]
        m = DatasetManifest(tuple(UtteranceRecord(f"{lab}_{j}", None, lab) for lab in labels for j in range(3)))
        tr, te = split_out_of_domain(m, {"A02", "A04", "A12", "A14"})
        assert set(te.label_names()) == {"A02", "A04", "A12", "A14"} and len(te) == 12
        assert not set(tr.label_names()) & set(te.label_names())

    def test_out_of_domain_single_label(self):
        m = synth_corpus(five_attacker_config(n=40))
        _, te = split_out_of_domain(m, {"A03"})
        assert len(te) == 40

    def test_out_of_domain_errors(self):
        m = _manifest(2, 3)
        with pytest.raises(ValueError, match="no training labels remain"):
            split_out_of_domain(m, {"L0", "L1"})
        with pytest.raises(ValueError, match="not present"):
            split_out_of_domain(m, {"X"})

    def test_parse_split(self):
        assert parse_split("in-domain:0.9") == ("in-domain", 0.9)
        assert parse_split("out-of-domain:A02,A04,A12,A14") == ("out-of-domain", ("A02", "A04", "A12", "A14"))
        with pytest.raises(ValueError):
            parse_split("both:1")
