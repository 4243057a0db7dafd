"""The 16-dimensional low-level acoustic signature.

Pitch comes from a short-time autocorrelation tracker: each frame is
mean-removed and Hann-windowed, its autocorrelation is normalized by
``r(0)`` and divided by the window's own normalized autocorrelation so that
a stationary periodic signal peaks near 1 at its period. Jitter, shimmer and
HNR are derived from that track.
"""

from __future__ import annotations

import csv
from dataclasses import astuple, dataclass, fields

import numpy as np

from .corpus import UtteranceRecord, Waveform

DB_FLOOR = -120.0
HNR_CLAMP = 1e-6
GENDER_F0_THRESHOLD = 165.0
OCTAVE_COST = 0.1

FEATURE_NAMES = (
    "f0_mean", "f0_min", "f0_max", "f0_std", "f0_mas",
    "jitter", "shimmer", "gender", "duration",
    "loudness_dbfs", "peak_amplitude", "peak_dbfs",
    "power", "energy", "hnr_mean", "hnr_std",
)


@dataclass(frozen=True)
class FrameConfig:
    frame_length: float = 0.040
    hop: float = 0.010
    f0_min: float = 60.0
    f0_max: float = 500.0
    voicing_threshold: float = 0.45

    def __post_init__(self):
        if not 0 < self.f0_min < self.f0_max:
            raise ValueError("need 0 < f0_min < f0_max")
        if self.frame_length < 2.0 / self.f0_min - 1e-12:
            raise ValueError(f"frame_length must cover two periods of f0_min ({2.0 / self.f0_min:.4f} s)")
        if not 0 < self.hop <= self.frame_length:
            raise ValueError("need 0 < hop <= frame_length")
        if not 0 < self.voicing_threshold < 1:
            raise ValueError("voicing_threshold must be in (0, 1)")


@dataclass(frozen=True, eq=False)
class PitchTrack:
    frame_times: np.ndarray
    f0: np.ndarray
    voiced: np.ndarray
    autocorr_peak: np.ndarray

    @property
    def hop(self) -> float:
        if self.frame_times.size > 1:
            return float(self.frame_times[1] - self.frame_times[0])
        return 0.0


@dataclass(frozen=True)
class LowLevelSignature:
    f0_mean: float
    f0_min: float
    f0_max: float
    f0_std: float
    f0_mas: float
    jitter: float
    shimmer: float
    gender: float
    duration: float
    loudness_dbfs: float
    peak_amplitude: float
    peak_dbfs: float
    power: float
    energy: float
    hnr_mean: float
    hnr_std: float
    degraded: bool = False

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self)[:16], dtype=np.float64)


assert tuple(f.name for f in fields(LowLevelSignature))[:16] == FEATURE_NAMES


# --------------------------------------------------------------------------
# Pitch tracking

def _frames(x: np.ndarray, n: int, hop: int) -> np.ndarray:
    count = 1 + (x.size - n) // hop
    idx = np.arange(n)[None, :] + hop * np.arange(count)[:, None]
    return x[idx]


def _normalized_autocorr(frames: np.ndarray, n_fft: int) -> np.ndarray:
    spec = np.fft.rfft(frames, n_fft, axis=-1)
    ac = np.fft.irfft(spec.real ** 2 + spec.imag ** 2, n_fft, axis=-1)
    r0 = ac[..., :1]
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(r0 > 0, ac / np.where(r0 > 0, r0, 1.0), 0.0)
    return out


def track_pitch(w: Waveform, cfg: FrameConfig = FrameConfig()) -> PitchTrack:
    """Frame-wise F0 from the normalized autocorrelation peak.

    Candidates are local maxima within ``[sr/f0_max, sr/f0_min]``; the chosen
    peak maximizes ``r - OCTAVE_COST * log2(lag * f0_min / sr)`` and is
    refined by parabolic interpolation. A frame is voiced when the refined
    peak reaches ``voicing_threshold``. Inputs shorter than one frame give
    an empty track.
    """
    sr = w.sample_rate
    n = int(round(cfg.frame_length * sr))
    hop = max(int(round(cfg.hop * sr)), 1)
    if w.samples.size < n:
        empty = np.zeros(0)
        return PitchTrack(empty, empty, np.zeros(0, dtype=bool), empty)

    lag_min = max(int(np.ceil(sr / cfg.f0_max)), 2)
    lag_max = min(int(np.floor(sr / cfg.f0_min)), n - 2)
    n_fft = 1 << int(np.ceil(np.log2(2 * n)))

    window = np.hanning(n + 2)[1:-1]
    r_win = _normalized_autocorr(window[None, :], n_fft)[0]

    frames = _frames(w.samples, n, hop)
    frames = (frames - frames.mean(axis=1, keepdims=True)) * window
    r = _normalized_autocorr(frames, n_fft)
    lags = np.arange(lag_min - 1, lag_max + 2)
    rc = r[:, lags] / r_win[lags]

    count = frames.shape[0]
    f0 = np.zeros(count)
    peak = np.zeros(count)
    voiced = np.zeros(count, dtype=bool)
    cost = OCTAVE_COST * np.log2(lags * cfg.f0_min / sr)
    for i in range(count):
        row = rc[i]
        mid = row[1:-1]
        is_peak = (mid > row[:-2]) & (mid >= row[2:])
        cand = np.flatnonzero(is_peak) + 1
        if cand.size == 0:
            continue
        j = cand[np.argmax(row[cand] - cost[cand])]
        a, b, c = row[j - 1], row[j], row[j + 1]
        denom = a - 2 * b + c
        delta = 0.5 * (a - c) / denom if denom < 0 else 0.0
        delta = float(np.clip(delta, -0.5, 0.5))
        value = b - 0.25 * (a - c) * delta
        lag = lags[j] + delta
        if value >= cfg.voicing_threshold:
            voiced[i] = True
            f0[i] = float(np.clip(sr / lag, cfg.f0_min, cfg.f0_max))
        peak[i] = float(np.clip(value, 0.0, 1.0))

    times = (np.arange(count) * hop + n / 2) / sr
    return PitchTrack(times, f0, voiced, peak)


# --------------------------------------------------------------------------
# Pitch-derived statistics

def _voiced_pairs(t: PitchTrack) -> np.ndarray:
    """Indices i such that frames i and i+1 are both voiced."""
    v = t.voiced
    return np.flatnonzero(v[:-1] & v[1:])


def relative_mean_abs_diff(values, pairs=None) -> float:
    """mean(|v[i+1] - v[i]|) / mean(v) over the given consecutive pairs.

    The denominator averages every value taking part in at least one pair.
    """
    v = np.asarray(values, dtype=np.float64)
    if pairs is None:
        pairs = np.arange(v.size - 1)
    pairs = np.asarray(pairs, dtype=int)
    if pairs.size == 0:
        return 0.0
    members = np.union1d(pairs, pairs + 1)
    mean = v[members].mean()
    if mean <= 0:
        return 0.0
    return float(np.mean(np.abs(v[pairs + 1] - v[pairs])) / mean)


def f0_stats(t: PitchTrack):
    """(mean, min, max, std, mas) over voiced frames; zeros below two voiced frames."""
    f = t.f0[t.voiced]
    if f.size < 2:
        return 0.0, 0.0, 0.0, 0.0, 0.0
    pairs = _voiced_pairs(t)
    if pairs.size:
        dt = t.frame_times[pairs + 1] - t.frame_times[pairs]
        mas = float(np.mean(np.abs(t.f0[pairs + 1] - t.f0[pairs]) / dt))
    else:
        mas = 0.0
    return float(f.mean()), float(f.min()), float(f.max()), float(f.std()), mas


def jitter(t: PitchTrack) -> float:
    """Local jitter of the frame-level period sequence."""
    pairs = _voiced_pairs(t)
    if pairs.size == 0:
        return 0.0
    periods = np.zeros_like(t.f0)
    periods[t.voiced] = 1.0 / t.f0[t.voiced]
    return relative_mean_abs_diff(periods, pairs)


def period_amplitudes(w: Waveform, t: PitchTrack) -> np.ndarray:
    """Peak |sample| within one period centred on each voiced frame (0 elsewhere)."""
    sr = w.sample_rate
    x = np.abs(w.samples)
    amps = np.zeros(t.f0.size)
    for i in np.flatnonzero(t.voiced):
        period = max(int(round(sr / t.f0[i])), 1)
        centre = int(round(t.frame_times[i] * sr))
        lo = max(centre - period // 2, 0)
        amps[i] = x[lo:lo + period].max(initial=0.0)
    return amps


def shimmer(w: Waveform, t: PitchTrack) -> float:
    pairs = _voiced_pairs(t)
    if pairs.size == 0:
        return 0.0
    return relative_mean_abs_diff(period_amplitudes(w, t), pairs)


def hnr(w: Waveform, cfg: FrameConfig = FrameConfig(), track: PitchTrack | None = None):
    """Mean and population std of frame HNR in dB over voiced frames."""
    t = track_pitch(w, cfg) if track is None else track
    if not t.voiced.any():
        return 0.0, 0.0
    r = np.clip(t.autocorr_peak[t.voiced], HNR_CLAMP, 1.0 - HNR_CLAMP)
    h = 10.0 * np.log10(r / (1.0 - r))
    return float(h.mean()), float(h.std())


# --------------------------------------------------------------------------
# Level features

def _db(value: float) -> float:
    return float(20.0 * np.log10(value)) if value > 0 else DB_FLOOR


def loudness_dbfs(w: Waveform) -> float:
    """RMS level relative to full scale, floored at -120 dB."""
    return max(_db(np.sqrt(np.mean(w.samples ** 2))), DB_FLOOR)


def amplitude_power_energy(w: Waveform):
    """(peak_amplitude, peak_dbfs, power, energy); power is energy per second."""
    x = w.samples
    peak = float(np.max(np.abs(x)))
    energy = float(np.dot(x, x))
    return peak, max(_db(peak), DB_FLOOR), energy / w.duration, energy


def gender_flag(rec: UtteranceRecord | None, t: PitchTrack) -> int:
    """1 for female, 0 for male; falls back to median voiced F0 > 165 Hz."""
    if rec is not None and rec.gender is not None:
        return 1 if rec.gender == "female" else 0
    f = t.f0[t.voiced]
    if f.size == 0:
        return 0
    return int(np.median(f) > GENDER_F0_THRESHOLD)


def extract_signature(rec, cfg: FrameConfig = FrameConfig()) -> LowLevelSignature:
    """All 16 features for an UtteranceRecord (or a bare Waveform)."""
    if isinstance(rec, Waveform):
        w, rec = rec, None
    else:
        w = rec.load()
    t = track_pitch(w, cfg)
    n_voiced = int(t.voiced.sum())
    has_pairs = _voiced_pairs(t).size > 0
    has_metadata = rec is not None and rec.gender is not None
    degraded = n_voiced < 2 or not has_pairs or (n_voiced == 0 and not has_metadata)

    f0_mean, f0_min, f0_max, f0_std, f0_mas = f0_stats(t)
    hnr_mean, hnr_std = hnr(w, cfg, track=t)
    peak, peak_db, power, energy = amplitude_power_energy(w)
    return LowLevelSignature(
        f0_mean=f0_mean, f0_min=f0_min, f0_max=f0_max, f0_std=f0_std, f0_mas=f0_mas,
        jitter=jitter(t), shimmer=shimmer(w, t), gender=float(gender_flag(rec, t)),
        duration=w.duration, loudness_dbfs=loudness_dbfs(w),
        peak_amplitude=peak, peak_dbfs=peak_db, power=power, energy=energy,
        hnr_mean=hnr_mean, hnr_std=hnr_std, degraded=bool(degraded),
    )


# --------------------------------------------------------------------------
# Feature tables

TABLE_COLUMNS = ("utterance_id", "label") + FEATURE_NAMES + ("degraded",)


def write_feature_table(rows, path) -> None:
    """rows: iterable of (utterance_id, label, LowLevelSignature)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(TABLE_COLUMNS)
        for uid, label, sig in rows:
            values = [f"{v:.9g}" for v in sig.as_array()]
            out.writerow([uid, "" if label is None else label, *values, "true" if sig.degraded else "false"])


def read_feature_table(path):
    """Return (utterance_ids, labels, X [n x 16], degraded)."""
    ids, labels, rows, degraded = [], [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in TABLE_COLUMNS if c not in (reader.fieldnames or ())]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        for row in reader:
            ids.append(row["utterance_id"])
            labels.append(row["label"] or None)
            rows.append([float(row[c]) for c in FEATURE_NAMES])
            degraded.append(row["degraded"] == "true")
    return ids, labels, np.array(rows, dtype=np.float64).reshape(-1, 16), np.array(degraded)
