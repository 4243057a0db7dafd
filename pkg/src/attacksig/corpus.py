"""Audio I/O, manifests, the synthetic attacker corpus and dataset splits."""

from __future__ import annotations

import json
import logging
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

BONAFIDE = "A0"
GENDERS = ("male", "female")


class WavFormatError(ValueError):
    """The file is RIFF/WAVE but not 16-bit PCM mono."""


class WavTruncatedError(OSError):
    """The file ends before the declared chunk data."""


class ConfigError(ValueError):
    """Invalid generator or pipeline configuration.

    ``fields`` lists the offending field names.
    """

    def __init__(self, problems: Sequence[str]):
        self.fields = [p.split(":", 1)[0] for p in problems]
        super().__init__("invalid configuration: " + "; ".join(problems))


@dataclass(frozen=True, eq=False)
class Waveform:
    """Mono PCM audio with samples in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "samples", x)
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate}")
        object.__setattr__(self, "sample_rate", int(self.sample_rate))
        if x.size == 0:
            raise ValueError("empty waveform")
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > 1.0:
            raise ValueError("samples must be finite and within [-1, 1]")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def __len__(self):
        return self.samples.size


# --------------------------------------------------------------------------
# WAV I/O

def read_wav(path) -> Waveform:
    """Read a 16-bit PCM mono RIFF/WAVE file.

    Samples are scaled by 1/32768; no resampling is done.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12:
        raise WavTruncatedError(f"{path}: truncated RIFF header")
    if data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file (bad magic)")

    fmt = None
    pcm = None
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, pos)
        body = data[pos + 8:pos + 8 + size]
        if len(body) < size:
            raise WavTruncatedError(f"{path}: chunk {cid!r} truncated ({len(body)} of {size} bytes)")
        if cid == b"fmt ":
            if size < 16:
                raise WavFormatError(f"{path}: fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data":
            pcm = body
            break
        pos += 8 + size + (size & 1)

    if fmt is None:
        raise WavFormatError(f"{path}: missing fmt chunk")
    audio_format, channels, rate, _, _, bits = fmt
    if audio_format not in (1, 0xFFFE):
        raise WavFormatError(f"{path}: unsupported audio format {audio_format} (PCM required)")
    if channels != 1:
        raise WavFormatError(f"{path}: unsupported channel count {channels}")
    if bits != 16:
        raise WavFormatError(f"{path}: unsupported bit depth {bits}")
    if pcm is None:
        raise WavTruncatedError(f"{path}: missing data chunk")
    if len(pcm) % 2:
        raise WavTruncatedError(f"{path}: odd byte count in 16-bit data")
    ints = np.frombuffer(pcm, dtype="<i2")
    return Waveform(ints.astype(np.float64) / 32768.0, rate)


def read_flac(path) -> Waveform:
    """Read mono FLAC through the optional ``soundfile`` package."""
    try:
        import soundfile
    except ImportError:
        raise WavFormatError(
            f"{path}: FLAC input needs the optional 'soundfile' package (pip install soundfile), "
            "or convert the audio to 16-bit PCM WAV"
        ) from None
    x, sr = soundfile.read(str(path), dtype="float64", always_2d=True)
    if x.shape[1] != 1:
        raise WavFormatError(f"unsupported channel count {x.shape[1]}")
    return Waveform(np.clip(x[:, 0], -1.0, 1.0), int(sr))


def write_wav(w: Waveform, path) -> None:
    """Write ``w`` as 16-bit PCM mono, little-endian."""
    if w.samples.size == 0:
        raise ValueError("empty waveform")
    q = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype("<i2")
    payload = q.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, 1, 1, w.sample_rate, w.sample_rate * 2, 2, 16,
        b"data", len(payload),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


# --------------------------------------------------------------------------
# Records and manifests

@dataclass(frozen=True, eq=False)
class UtteranceRecord:
    """One utterance; ``source`` is a file path, an inline Waveform or None when unresolved."""

    utterance_id: str
    source: object
    label: str | None = None
    gender: str | None = None

    def __post_init__(self):
        if self.gender is not None and self.gender not in GENDERS:
            raise ValueError(f"gender must be one of {GENDERS}, got {self.gender!r}")

    def load(self) -> Waveform:
        if isinstance(self.source, Waveform):
            return self.source
        if self.source is None:
            raise FileNotFoundError(f"{self.utterance_id}: unresolved audio source")
        if str(self.source).lower().endswith(".flac"):
            return read_flac(self.source)
        return read_wav(self.source)

    @property
    def path(self) -> str | None:
        return None if isinstance(self.source, Waveform) or self.source is None else str(self.source)


@dataclass(frozen=True, eq=False)
class DatasetManifest:
    records: tuple
    provenance: dict = field(default_factory=dict)
    label_set: tuple | None = None

    def __post_init__(self):
        recs = tuple(self.records)
        object.__setattr__(self, "records", recs)
        if not recs:
            raise ValueError("manifest must contain at least one record")
        seen = set()
        for r in recs:
            if r.utterance_id in seen:
                raise ValueError(f"duplicate utterance_id {r.utterance_id!r}")
            seen.add(r.utterance_id)
        if self.label_set is not None:
            allowed = set(self.label_set)
            for r in recs:
                if r.label is not None and r.label not in allowed:
                    raise ValueError(f"{r.utterance_id}: label {r.label!r} not in declared label set")

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def labels(self) -> list[str | None]:
        return [r.label for r in self.records]

    def label_names(self) -> list[str]:
        """Sorted distinct labels present."""
        return sorted({r.label for r in self.records if r.label is not None})

    def by_label(self) -> dict[str, list[UtteranceRecord]]:
        out: dict[str, list[UtteranceRecord]] = {}
        for r in self.records:
            out.setdefault(r.label, []).append(r)
        return out

    def subset(self, records: Iterable[UtteranceRecord], **provenance) -> "DatasetManifest":
        return DatasetManifest(tuple(records), {**self.provenance, **provenance}, self.label_set)


def write_manifest(m: DatasetManifest, path, relative: bool = False) -> None:
    """JSON Lines: one {utterance_id, path, label, gender} object per record.

    With ``relative`` set, audio paths are written relative to the manifest's
    directory so the corpus directory can be moved as a whole.
    """
    base = Path(path).resolve().parent
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in m.records:
            if isinstance(r.source, Waveform):
                raise ValueError(f"{r.utterance_id}: inline waveform cannot be written to a manifest")
            src = r.path
            if relative and src is not None:
                src = os.path.relpath(Path(src).resolve(), base)
            row = {"utterance_id": r.utterance_id, "path": src, "label": r.label}
            if r.gender is not None:
                row["gender"] = r.gender
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_manifest(path) -> DatasetManifest:
    """Read a JSON Lines manifest; relative paths resolve against the manifest's directory."""
    base = Path(path).resolve().parent
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                uid = row["utterance_id"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed manifest row ({exc})") from None
            src = row.get("path")
            if src is not None and not os.path.isabs(src):
                src = str(base / src)
            records.append(UtteranceRecord(uid, src, row.get("label"), row.get("gender")))
    return DatasetManifest(tuple(records), {"manifest": str(path)})


# --------------------------------------------------------------------------
# Synthetic attackers

@dataclass(frozen=True)
class AttackerProfile:
    """Generative parameters of one synthetic attacker.

    ``noise_ratio`` is the noise-to-harmonic power ratio; ``spectral_tilt``
    is in dB/octave above 100 Hz. ``formant_hz`` > 0 adds a Gaussian-shaped
    resonance of ``formant_gain_db`` and ``formant_bandwidth`` (Hz, one
    standard deviation), standing in for vocoder-specific coloration.
    """

    label: str
    f0_range: tuple = (100.0, 200.0)
    jitter: float = 0.01
    shimmer: float = 0.02
    noise_ratio: float = 0.05
    spectral_tilt: float = -9.0
    duration_range: tuple = (0.8, 1.6)
    amplitude_range: tuple = (0.3, 0.9)
    formant_hz: float = 0.0
    formant_gain_db: float = 12.0
    formant_bandwidth: float = 150.0
    gender: str | None = None

    def problems(self) -> list[str]:
        out = []
        p = self.label
        lo, hi = self.f0_range
        if not 60.0 <= lo <= hi <= 500.0:
            out.append(f"{p}.f0_range: must satisfy 60 <= lo <= hi <= 500 Hz, got {self.f0_range}")
        for name in ("jitter", "shimmer", "noise_ratio"):
            v = getattr(self, name)
            if not 0.0 <= v <= 0.5:
                out.append(f"{p}.{name}: must be in [0, 0.5], got {v}")
        if not -30.0 <= self.spectral_tilt <= 12.0:
            out.append(f"{p}.spectral_tilt: must be in [-30, 12] dB/octave, got {self.spectral_tilt}")
        dlo, dhi = self.duration_range
        if not 0.0 < dlo <= dhi:
            out.append(f"{p}.duration_range: must satisfy 0 < lo <= hi, got {self.duration_range}")
        alo, ahi = self.amplitude_range
        if not 0.0 < alo <= ahi <= 1.0:
            out.append(f"{p}.amplitude_range: must satisfy 0 < lo <= hi <= 1, got {self.amplitude_range}")
        if self.formant_hz < 0:
            out.append(f"{p}.formant_hz: must be >= 0, got {self.formant_hz}")
        if self.formant_bandwidth <= 0:
            out.append(f"{p}.formant_bandwidth: must be > 0, got {self.formant_bandwidth}")
        if not -40.0 <= self.formant_gain_db <= 40.0:
            out.append(f"{p}.formant_gain_db: must be in [-40, 40], got {self.formant_gain_db}")
        if self.gender is not None and self.gender not in GENDERS:
            out.append(f"{p}.gender: must be one of {GENDERS}")
        return out


@dataclass(frozen=True)
class SynthAttackerConfig:
    attackers: tuple
    sample_rate: int = 16000
    utterances_per_attacker: int = 60
    seed: int = 0

    def validate(self) -> None:
        problems = []
        labels = [a.label for a in self.attackers]
        if len(self.attackers) < 2:
            problems.append("attackers: at least two attacker profiles required")
        if BONAFIDE not in labels:
            problems.append(f"attackers: one profile must be the bonafide class {BONAFIDE}")
        if len(set(labels)) != len(labels):
            problems.append("attackers: duplicate labels")
        if self.sample_rate <= 0:
            problems.append(f"sample_rate: must be positive, got {self.sample_rate}")
        elif any(a.f0_range[1] >= self.sample_rate / 4 for a in self.attackers):
            problems.append("sample_rate: too low for the configured F0 ranges")
        elif any(a.formant_hz >= self.sample_rate / 2 for a in self.attackers):
            problems.append("sample_rate: formant above Nyquist")
        if self.utterances_per_attacker < 2:
            problems.append(f"utterances_per_attacker: must be >= 2, got {self.utterances_per_attacker}")
        for a in self.attackers:
            problems.extend(a.problems())
        if problems:
            raise ConfigError(problems)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthAttackerConfig":
        try:
            attackers = tuple(
                AttackerProfile(**{k: tuple(v) if isinstance(v, list) else v for k, v in a.items()})
                for a in d["attackers"]
            )
            rest = {k: v for k, v in d.items() if k != "attackers"}
            return cls(attackers=attackers, **rest)
        except (KeyError, TypeError) as exc:
            raise ConfigError([f"attackers: {exc}"]) from None

    def to_dict(self) -> dict:
        return {
            "attackers": [a.__dict__.copy() for a in self.attackers],
            "sample_rate": self.sample_rate,
            "utterances_per_attacker": self.utterances_per_attacker,
            "seed": self.seed,
        }


# (jitter, shimmer, noise_ratio, spectral_tilt) shared by each attacker pair
_FAMILIES = (
    (0.020, 0.060, 0.030, -10.0),
    (0.004, 0.020, 0.120, -8.0),
    (0.010, 0.040, 0.060, -12.0),
    (0.015, 0.030, 0.090, -9.0),
)
_FORMANTS = (700.0, 1600.0, 900.0, 2000.0, 600.0, 1400.0, 800.0, 1800.0)


def default_synth_config(utterances_per_attacker: int = 100, seed: int = 0) -> SynthAttackerConfig:
    """Bonafide plus seven attackers; A06 and A07 are the default held-out pair.

    All attackers share F0, duration and level ranges. They come in pairs with
    identical perturbation, noise and tilt settings that differ only in the
    position of a spectral resonance, which none of the 16 low-level features
    measures directly.
    """
    labels = (BONAFIDE,) + tuple(f"A{i:02d}" for i in range(1, 8))
    profiles = tuple(
        AttackerProfile(label, (90.0, 240.0), *_FAMILIES[i // 2], formant_hz=_FORMANTS[i])
        for i, label in enumerate(labels)
    )
    return SynthAttackerConfig(profiles, 16000, utterances_per_attacker, seed)


DEFAULT_HELD_OUT = ("A06", "A07")


def _coloration_gain(n_fft: int, sample_rate: int, profile: AttackerProfile) -> np.ndarray:
    freqs = np.fft.rfftfreq(n_fft, 1.0 / sample_rate)
    gain_db = profile.spectral_tilt * np.log2(np.maximum(freqs, 100.0) / 100.0)
    if profile.formant_hz > 0:
        gain_db += profile.formant_gain_db * np.exp(
            -0.5 * ((freqs - profile.formant_hz) / profile.formant_bandwidth) ** 2
        )
    gain = 10.0 ** (gain_db / 20.0)
    gain[0] = 0.0
    return gain


def synth_utterance(profile: AttackerProfile, sample_rate: int, rng: np.random.Generator) -> np.ndarray:
    """One harmonic pulse-train utterance with period/amplitude perturbations and additive noise."""
    duration = rng.uniform(*profile.duration_range)
    f0 = rng.uniform(*profile.f0_range)
    peak = rng.uniform(*profile.amplitude_range)
    n = max(int(round(duration * sample_rate)), 1)
    base_period = sample_rate / f0

    excitation = np.zeros(n + 2)
    t = rng.uniform(0.0, base_period)
    while t < n:
        amp = max(1.0 + profile.shimmer * rng.uniform(-1.0, 1.0), 0.0)
        i = int(t)
        frac = t - i
        # split each pulse between neighbouring samples to keep fractional timing
        excitation[i] += amp * (1.0 - frac)
        excitation[i + 1] += amp * frac
        t += base_period * (1.0 + profile.jitter * rng.uniform(-1.0, 1.0))
    excitation = excitation[:n]

    n_fft = int(2 ** np.ceil(np.log2(n + 1)))
    spec = np.fft.rfft(excitation, n_fft) * _coloration_gain(n_fft, sample_rate, profile)
    harmonic = np.fft.irfft(spec, n_fft)[:n]
    p_h = np.mean(harmonic ** 2)
    noise = rng.standard_normal(n) * np.sqrt(profile.noise_ratio * p_h)
    x = harmonic + noise
    m = np.max(np.abs(x))
    if m > 0:
        x = x * (peak / m)
    return x


def synth_corpus(cfg: SynthAttackerConfig, seed: int | None = None) -> DatasetManifest:
    """Generate the labelled synthetic corpus with inline waveforms.

    Deterministic in ``(cfg, seed)``: every utterance draws from its own
    generator seeded by ``(seed, attacker index, utterance index)``.
    """
    cfg.validate()
    seed = cfg.seed if seed is None else seed
    records = []
    for a_idx, profile in enumerate(cfg.attackers):
        for u_idx in range(cfg.utterances_per_attacker):
            rng = np.random.default_rng(np.random.SeedSequence([seed, a_idx, u_idx]))
            x = synth_utterance(profile, cfg.sample_rate, rng)
            uid = f"{profile.label}_{u_idx:05d}"
            records.append(UtteranceRecord(uid, Waveform(x, cfg.sample_rate), profile.label, profile.gender))
    return DatasetManifest(
        tuple(records),
        {"generator": cfg.to_dict(), "seed": seed},
        tuple(a.label for a in cfg.attackers),
    )


def materialize(m: DatasetManifest, out_dir) -> DatasetManifest:
    """Write inline waveforms to ``out_dir/audio`` and return a path-based manifest."""
    out_dir = Path(out_dir)
    audio = out_dir / "audio"
    audio.mkdir(parents=True, exist_ok=True)
    records = []
    for r in m.records:
        rel = Path("audio") / f"{r.utterance_id}.wav"
        write_wav(r.load(), out_dir / rel)
        records.append(UtteranceRecord(r.utterance_id, str(out_dir / rel), r.label, r.gender))
    return m.subset(records)


# --------------------------------------------------------------------------
# ASVspoof protocol files

def parse_asvspoof_protocol(protocol_path, audio_dir) -> DatasetManifest:
    """Parse an ASVspoof LA protocol file.

    Rows are ``speaker_id file_id _ attack_id key``; bonafide rows map to A0,
    spoof rows to their attack id. Missing audio is logged and the record is
    kept with ``source=None``.
    """
    audio_dir = Path(audio_dir)
    records = []
    with open(protocol_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 5:
                raise ValueError(f"{protocol_path}:{lineno}: expected 5 fields, got {len(fields)}")
            _, file_id, _, attack_id, key = fields
            if key == "bonafide":
                label = BONAFIDE
            elif key == "spoof":
                if attack_id == "-":
                    raise ValueError(f"{protocol_path}:{lineno}: spoof row without attack id")
                label = attack_id
            else:
                raise ValueError(f"{protocol_path}:{lineno}: unknown key {key!r}")
            source = None
            for ext in (".flac", ".wav"):
                cand = audio_dir / f"{file_id}{ext}"
                if cand.exists():
                    source = str(cand)
                    break
            if source is None:
                logger.warning("%s:%d: no audio found for %s", protocol_path, lineno, file_id)
            records.append(UtteranceRecord(file_id, source, label))
    if not records:
        raise ValueError(f"{protocol_path}: no rows")
    return DatasetManifest(tuple(records), {"protocol": str(protocol_path), "audio_dir": str(audio_dir)})


# --------------------------------------------------------------------------
# Splits

def split_in_domain(m: DatasetManifest, train_fraction: float = 0.9, seed: int = 0):
    """Stratified split: per label, round(n * train_fraction) records go to train."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    if any(r.label is None for r in m.records):
        raise ValueError("in-domain split requires every record to be labelled")
    groups = m.by_label()
    train_ids = set()
    for i, label in enumerate(sorted(groups)):
        recs = groups[label]
        if len(recs) < 2:
            raise ValueError(f"label {label!r} has {len(recs)} record(s); cannot stratify")
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        order = rng.permutation(len(recs))
        k = int(round(len(recs) * train_fraction))
        train_ids.update(recs[j].utterance_id for j in order[:k])
    train = [r for r in m.records if r.utterance_id in train_ids]
    test = [r for r in m.records if r.utterance_id not in train_ids]
    if not train or not test:
        raise ValueError(f"train_fraction {train_fraction} leaves the {'train' if not train else 'test'} part empty")
    split = {"split": f"in-domain:{train_fraction}", "split_seed": seed}
    return m.subset(train, **split, part="train"), m.subset(test, **split, part="test")


def split_out_of_domain(m: DatasetManifest, held_out: Iterable[str]):
    """All records of the held-out labels form the test set; the rest train."""
    held = set(held_out)
    if not held:
        raise ValueError("held_out must not be empty")
    present = {r.label for r in m.records}
    for label in sorted(held):
        if label not in present:
            raise ValueError(f"held-out label {label!r} not present in manifest")
    if not present - held:
        raise ValueError("no training labels remain")
    train = [r for r in m.records if r.label not in held]
    test = [r for r in m.records if r.label in held]
    split = {"split": "out-of-domain:" + ",".join(sorted(held))}
    return m.subset(train, **split, part="train"), m.subset(test, **split, part="test")


def parse_split(spec: str):
    """Parse ``in-domain:0.9`` or ``out-of-domain:A02,A04`` into (mode, value)."""
    mode, _, arg = spec.partition(":")
    if mode == "in-domain":
        try:
            return mode, float(arg or 0.9)
        except ValueError:
            raise ValueError(f"bad in-domain fraction {arg!r}") from None
    if mode == "out-of-domain":
        labels = tuple(s for s in arg.split(",") if s)
        if not labels:
            raise ValueError("out-of-domain split needs a label list")
        return mode, labels
    raise ValueError(f"unknown split mode {mode!r}")


def apply_split(m: DatasetManifest, spec: str, seed: int = 0):
    mode, value = parse_split(spec)
    if mode == "in-domain":
        return split_in_domain(m, value, seed)
    return split_out_of_domain(m, value)
