"""Synthetic desk-scale corpus generation.

Real corpora are out of reach here, so tests and the end-to-end harness run
on generated stand-ins: harmonic speech-like signals, FIR channel
colorations, and spectrally shaped noise mixed at a chosen SNR. Everything
is seeded and deterministic.
"""

from __future__ import annotations

import hashlib

import numpy as np
from scipy.signal import lfilter

from .frontend import SAMPLE_RATE, AudioClip


def stable_seed(*parts) -> int:
    """Order-stable 64-bit seed derived from arbitrary string/int parts.

    Python's builtin hash() is salted per process, so it cannot be used for
    reproducible per-utterance RNG streams.
    """
    h = hashlib.sha256("\x1f".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(h[:8], "little")


def speech_like(duration: float, seed: int, utterance_id: str = "synth",
                domain_tag: str = "source") -> AudioClip:
    """Harmonic source with drifting pitch, formant-ish coloration, and
    syllabic amplitude modulation. Not speech, but spectrally close enough
    for desk-scale adaptation experiments."""
    rng = np.random.default_rng(seed)
    n = int(duration * SAMPLE_RATE)
    t = np.arange(n) / SAMPLE_RATE
    f0 = rng.uniform(90.0, 220.0)
    vibrato = f0 * 0.06 * np.sin(2 * np.pi * rng.uniform(2.0, 5.0) * t + rng.uniform(0, 2 * np.pi))
    phase = 2 * np.pi * np.cumsum(f0 + vibrato) / SAMPLE_RATE
    sig = np.zeros(n)
    for k in range(1, 13):
        sig += rng.uniform(0.3, 1.0) / k * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
    # two moving formant-like resonances
    for _ in range(2):
        fc = rng.uniform(400.0, 2800.0)
        bw = rng.uniform(80.0, 300.0)
        r = np.exp(-np.pi * bw / SAMPLE_RATE)
        theta = 2 * np.pi * fc / SAMPLE_RATE
        sig = lfilter([1.0], [1.0, -2 * r * np.cos(theta), r * r], sig)
    # syllable-rate energy envelope
    syl = rng.uniform(2.0, 4.0)
    env = 0.55 + 0.45 * np.sin(2 * np.pi * syl * t + rng.uniform(0, 2 * np.pi))
    sig = sig * env + 1e-4 * rng.standard_normal(n)
    sig = sig / (np.max(np.abs(sig)) + 1e-9) * 0.5
    return AudioClip(samples=sig.astype(np.float32), sample_rate=SAMPLE_RATE,
                     utterance_id=utterance_id, domain_tag=domain_tag)


# A small bank of strongly distinct FIR colorations standing in for
# recording channels. Keys double as channel_ids.
def channel_fir(name: str, n_taps: int = 64) -> np.ndarray:
    rng = np.random.default_rng(stable_seed("channel_fir", name))
    n = np.arange(n_taps)
    presets = {
        "flat": np.r_[1.0, np.zeros(n_taps - 1)],
        "lowpass": np.sinc((n - n_taps / 2) * 0.15) * np.hamming(n_taps),
        "highpass": (np.r_[1.0, np.zeros(n_taps - 1)]
                     - np.sinc((n - n_taps / 2) * 0.12) * np.hamming(n_taps)),
        "bandpass": np.sinc((n - n_taps / 2) * 0.3) * np.hamming(n_taps)
                    * np.cos(2 * np.pi * 0.22 * n),
        "comb": np.r_[1.0, np.zeros(30), 0.7, np.zeros(n_taps - 32)],
        "tilt": np.r_[1.0, -0.85, np.zeros(n_taps - 2)],
    }
    if name in presets:
        taps = presets[name]
    else:  # arbitrary names get a random sparse echo pattern
        taps = np.zeros(n_taps)
        taps[0] = 1.0
        for pos in rng.choice(np.arange(4, n_taps), size=5, replace=False):
            taps[pos] = rng.uniform(-0.6, 0.6)
    taps = taps / (np.sqrt(np.sum(taps ** 2)) + 1e-12)
    return taps.astype(np.float64)


def apply_channel(clip: AudioClip, taps: np.ndarray, channel_id: str) -> AudioClip:
    out = lfilter(taps, [1.0], clip.samples.astype(np.float64))
    peak = np.max(np.abs(out)) + 1e-9
    if peak > 1.0:
        out = out / peak
    return AudioClip(samples=out.astype(np.float32), sample_rate=clip.sample_rate,
                     utterance_id=clip.utterance_id, domain_tag=clip.domain_tag,
                     channel_id=channel_id, noise_class=clip.noise_class)


def shaped_noise(n_samples: int, seed: int, kind: str = "pink") -> np.ndarray:
    """Colored noise: white noise through a one-pole/FIR shaping filter."""
    rng = np.random.default_rng(seed)
    white = rng.standard_normal(n_samples)
    if kind == "white":
        out = white
    elif kind == "pink":  # -3 dB/oct approximation (Paul Kellet's filter)
        b = [0.049922035, -0.095993537, 0.050612699, -0.004408786]
        a = [1.0, -2.494956002, 2.017265875, -0.522189400]
        out = lfilter(b, a, white)
    elif kind == "lowband":
        out = lfilter(np.hamming(33) / np.hamming(33).sum(), [1.0], white)
    elif kind == "tone500":
        t = np.arange(n_samples) / SAMPLE_RATE
        out = np.sin(2 * np.pi * 500.0 * t) + 0.1 * white
    else:
        raise ValueError(f"unknown noise kind {kind!r}")
    return (out / (np.std(out) + 1e-12)).astype(np.float64)


def mix_at_snr(clean: AudioClip, noise: np.ndarray, snr_db: float) -> AudioClip:
    x = clean.samples.astype(np.float64)
    n = noise[: x.size]
    p_sig = np.mean(x ** 2)
    p_noise = np.mean(n ** 2) + 1e-12
    scale = np.sqrt(p_sig / (p_noise * 10 ** (snr_db / 10.0)))
    out = x + scale * n
    peak = np.max(np.abs(out)) + 1e-9
    if peak > 1.0:
        out = out / peak
    return AudioClip(samples=out.astype(np.float32), sample_rate=clean.sample_rate,
                     utterance_id=clean.utterance_id, domain_tag=clean.domain_tag,
                     channel_id=clean.channel_id, noise_class=clean.noise_class)


def render_target_condition(clip: AudioClip, channel: str = "lowpass",
                            noise_kind: str = "pink", snr_db: float = 5.0,
                            seed: int = 0) -> AudioClip:
    """The canonical synthetic target domain: FIR coloration then additive
    shaped noise at a fixed SNR."""
    colored = apply_channel(clip, channel_fir(channel), channel_id=channel)
    noise = shaped_noise(colored.samples.size, stable_seed(seed, clip.utterance_id, "mix"),
                         kind=noise_kind)
    out = mix_at_snr(colored, noise, snr_db)
    out.noise_class = noise_kind
    out.domain_tag = "target"
    return out


def make_clean_set(n: int, seed: int, prefix: str = "utt", duration: float = 1.0,
                   domain_tag: str = "source") -> list[AudioClip]:
    return [
        speech_like(duration, stable_seed(seed, prefix, i),
                    utterance_id=f"{prefix}{i:03d}", domain_tag=domain_tag)
        for i in range(n)
    ]
