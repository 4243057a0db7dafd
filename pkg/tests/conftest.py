import numpy as np
import pytest

from attacksig.corpus import AttackerProfile, SynthAttackerConfig, Waveform

SR = 16000


def sine(freq=220.0, seconds=1.0, amp=1.0, sr=SR):
    t = np.arange(int(round(seconds * sr))) / sr
    return Waveform(amp * np.sin(2 * np.pi * freq * t), sr)


def square(freq=220.0, seconds=1.0, sr=SR):
    t = np.arange(int(round(seconds * sr))) / sr
    x = np.sign(np.sin(2 * np.pi * freq * t))
    x[x == 0] = 1.0
    return Waveform(x, sr)


def profile(label, **kw):
    base = dict(f0_range=(100.0, 200.0), jitter=0.01, shimmer=0.03, noise_ratio=0.05, spectral_tilt=-10.0)
    base.update(kw)
    return AttackerProfile(label, **base)


def five_attacker_config(n=40, seed=7, **kw):
    labels = ["A0", "A01", "A02", "A03", "A04"]
    attackers = tuple(profile(lab, jitter=0.005 * (i + 1), **kw) for i, lab in enumerate(labels))
    return SynthAttackerConfig(attackers, utterances_per_attacker=n, seed=seed)


@pytest.fixture(scope="session")
def small_corpus():
    from attacksig.corpus import synth_corpus
    return synth_corpus(five_attacker_config(n=8, seed=3))


# --------------------------------------------------------------------------
# acceptance reporting: one PASS/FAIL line per criterion in the terminal summary

ACCEPTANCE = {}


def pytest_addoption(parser):
    parser.addoption("--asvspoof-protocol", default=None, help="ASVspoof 2019 LA protocol file (optional)")
    parser.addoption("--asvspoof-audio", default=None, help="directory holding the protocol's audio files")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
