"""Log-mel frontend."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..corpus import Waveform


@dataclass(frozen=True)
class MelConfig:
    n_mels: int = 40
    window: float = 0.025
    hop: float = 0.010
    fft_size: int = 512
    log_floor: float = 1e-6

    def validate(self, sample_rate: int) -> None:
        if self.n_mels < 1:
            raise ValueError("n_mels must be >= 1")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be > 0")
        if not 0 < self.hop:
            raise ValueError("hop must be > 0")
        if self.fft_size < round(self.window * sample_rate):
            raise ValueError(
                f"fft_size {self.fft_size} shorter than the {round(self.window * sample_rate)}-sample window"
            )


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=16)
def mel_filterbank(n_mels: int, fft_size: int, sample_rate: int) -> np.ndarray:
    """Triangular HTK-scale filters spanning 0 Hz to Nyquist, shape [n_mels x fft_size//2+1]."""
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2))
    freqs = np.fft.rfftfreq(fft_size, 1.0 / sample_rate)
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lo) / (mid - lo)
    falling = (hi - freqs[None, :]) / (hi - mid)
    fb = np.clip(np.minimum(rising, falling), 0.0, None)
    fb.setflags(write=False)
    return fb


def log_mel(w: Waveform, cfg: MelConfig = MelConfig()) -> np.ndarray:
    """Natural-log mel magnitudes, shape [frames x n_mels]."""
    sr = w.sample_rate
    cfg.validate(sr)
    win = int(round(cfg.window * sr))
    hop = max(int(round(cfg.hop * sr)), 1)
    x = w.samples
    if x.size < win:
        raise ValueError(f"waveform shorter than one analysis window ({x.size} < {win} samples)")
    count = 1 + (x.size - win) // hop
    idx = np.arange(win)[None, :] + hop * np.arange(count)[:, None]
    frames = x[idx] * np.hanning(win + 2)[1:-1]
    mag = np.abs(np.fft.rfft(frames, cfg.fft_size, axis=1))
    return np.log(mag @ mel_filterbank(cfg.n_mels, cfg.fft_size, sr).T + cfg.log_floor)
