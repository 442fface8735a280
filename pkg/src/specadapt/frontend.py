"""Audio ingestion, spectrograms, fixed-size patches, and reconstruction.

The whole pipeline operates on 16 kHz mono audio and 129-bin log-magnitude
spectrograms (256-point FFT, hop 128, periodic Hann window, centered with
reflect padding). Magnitudes are floored at 1e-5 before the log so values
never reach -inf; the same floor value is used to pad the final partial
patch, which keeps padding acoustically silent.

Inverse transforms reuse stored phase: simulated magnitudes are combined
with the source utterance's phase, so `istft` never estimates phase.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.io import wavfile
from scipy.signal import get_window, resample_poly

from .errors import (
    EmptyAudio,
    EmptySpectrogram,
    FrameCountMismatch,
    GapOrOverlap,
    TooShort,
    UnreadableFile,
    UnsupportedFormat,
    ValidationError,
)

SAMPLE_RATE = 16000
FFT_SIZE = 256
HOP = 128
N_FREQ = FFT_SIZE // 2 + 1  # 129
PATCH_FRAMES = 128
LOG_FLOOR = 1e-5

CACHE_VERSION = 1
_CACHE_HEADER = struct.Struct("<BIIII")  # version, freq, frames, hop, fft


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate: int
    utterance_id: str
    domain_tag: str = "source"
    channel_id: str | None = None
    noise_class: str | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise EmptyAudio(f"clip {self.utterance_id!r} has no samples")
        if not np.all(np.isfinite(self.samples)):
            raise ValidationError(f"clip {self.utterance_id!r} contains non-finite samples")
        if self.domain_tag not in ("source", "target"):
            raise ValidationError(f"bad domain_tag {self.domain_tag!r}")


@dataclass
class Spectrogram:
    log_mag: np.ndarray  # [N_FREQ, T]
    phase: np.ndarray    # [N_FREQ, T], radians in (-pi, pi]
    frame_hop: int = HOP
    fft_size: int = FFT_SIZE

    def __post_init__(self):
        self.log_mag = np.asarray(self.log_mag, dtype=np.float32)
        self.phase = np.asarray(self.phase, dtype=np.float32)
        if self.log_mag.ndim != 2 or self.log_mag.shape[0] != self.fft_size // 2 + 1:
            raise ValidationError(
                f"log_mag must be [{self.fft_size // 2 + 1} x T], got {self.log_mag.shape}"
            )
        if self.phase.shape != self.log_mag.shape:
            raise ValidationError("phase shape must match log_mag")

    @property
    def n_frames(self) -> int:
        return self.log_mag.shape[1]


@dataclass
class SpectroPatch:
    values: np.ndarray  # [N_FREQ, PATCH_FRAMES]
    origin_frame: int
    parent_utterance: str
    pad_frames: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.shape != (N_FREQ, PATCH_FRAMES):
            raise ValidationError(
                f"patch must be {N_FREQ}x{PATCH_FRAMES}, got {self.values.shape}"
            )
        if not 0 <= self.pad_frames < PATCH_FRAMES:
            raise ValidationError(f"pad_frames out of range: {self.pad_frames}")


@dataclass
class ManifestEntry:
    audio_path: str
    domain: str
    utterance_id: str
    channel_id: str | None = None
    noise_class: str | None = None
    reference_text: str | None = None
    extras: dict = field(default_factory=dict)


def read_manifest(path: str | Path) -> list[ManifestEntry]:
    """Parse a JSON Lines dataset manifest; unknown keys are kept in `extras`."""
    entries = []
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UnreadableFile(f"cannot read manifest {path}: {exc}") from exc
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}:{lineno}: bad JSON: {exc}") from exc
        for key in ("audio_path", "domain", "utterance_id"):
            if key not in rec:
                raise ValidationError(f"{path}:{lineno}: missing {key!r}")
        if rec["domain"] not in ("source", "target"):
            raise ValidationError(f"{path}:{lineno}: bad domain {rec['domain']!r}")
        known = {"audio_path", "domain", "utterance_id", "channel_id", "noise_class",
                 "reference_text"}
        entries.append(ManifestEntry(
            audio_path=rec["audio_path"],
            domain=rec["domain"],
            utterance_id=rec["utterance_id"],
            channel_id=rec.get("channel_id"),
            noise_class=rec.get("noise_class"),
            reference_text=rec.get("reference_text"),
            extras={k: v for k, v in rec.items() if k not in known},
        ))
    return entries


def write_manifest(entries: list[ManifestEntry], path: str | Path) -> None:
    with open(path, "w") as fh:
        for e in entries:
            rec = {"audio_path": e.audio_path, "domain": e.domain,
                   "utterance_id": e.utterance_id}
            if e.channel_id is not None:
                rec["channel_id"] = e.channel_id
            if e.noise_class is not None:
                rec["noise_class"] = e.noise_class
            if e.reference_text is not None:
                rec["reference_text"] = e.reference_text
            fh.write(json.dumps(rec) + "\n")


def _pcm_to_float(data: np.ndarray) -> np.ndarray:
    if data.dtype == np.uint8:      # 8-bit WAV is unsigned
        return (data.astype(np.float32) - 128.0) / 128.0
    if data.dtype == np.int16:
        return data.astype(np.float32) / 32768.0
    if data.dtype == np.int32:      # covers 24-bit (scipy shifts into the high bytes)
        return (data.astype(np.float64) / 2147483648.0).astype(np.float32)
    if data.dtype in (np.float32, np.float64):
        return data.astype(np.float32)
    raise UnsupportedFormat(f"unsupported WAV sample dtype {data.dtype}")


def load_audio(path: str | Path, manifest_entry: ManifestEntry | None = None) -> AudioClip:
    """Decode a PCM WAV file into a 16 kHz mono AudioClip.

    Multi-channel audio is averaged to mono; other sample rates are
    resampled with a polyphase filter.
    """
    path = Path(path)
    if not path.exists():
        raise UnreadableFile(f"no such file: {path}")
    if path.suffix.lower() != ".wav":
        raise UnsupportedFormat(f"only PCM WAV is supported, got {path.suffix!r}")
    try:
        rate, data = wavfile.read(str(path))
    except ValueError as exc:
        raise UnsupportedFormat(f"{path}: {exc}") from exc
    except OSError as exc:
        raise UnreadableFile(f"{path}: {exc}") from exc
    if data.size == 0:
        raise EmptyAudio(f"{path} contains no samples")
    samples = _pcm_to_float(data)
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    if rate != SAMPLE_RATE:
        g = math.gcd(int(rate), SAMPLE_RATE)
        samples = resample_poly(samples.astype(np.float64), SAMPLE_RATE // g, rate // g)
        samples = samples.astype(np.float32)
    if samples.size == 0:
        raise EmptyAudio(f"{path} empty after resampling")
    ent = manifest_entry
    return AudioClip(
        samples=samples,
        sample_rate=SAMPLE_RATE,
        utterance_id=ent.utterance_id if ent else path.stem,
        domain_tag=ent.domain if ent else "source",
        channel_id=ent.channel_id if ent else None,
        noise_class=ent.noise_class if ent else None,
    )


def _hann() -> np.ndarray:
    return get_window("hann", FFT_SIZE, fftbins=True).astype(np.float64)


def stft(clip: AudioClip, log_floor: float = LOG_FLOOR) -> Spectrogram:
    """Centered STFT with reflect padding; returns floored log magnitude + phase.

    The clip is zero-extended to a whole number of hops, so the frame count
    is 1 + ceil(len/hop) and `istft` reconstructs hop*(T-1) samples.
    """
    x = np.asarray(clip.samples, dtype=np.float64)
    if x.size < FFT_SIZE:
        raise TooShort(f"need at least {FFT_SIZE} samples, got {x.size}")
    n_hops = -(-x.size // HOP)  # ceil
    x = np.pad(x, (0, n_hops * HOP - x.size))
    x = np.pad(x, (FFT_SIZE // 2, FFT_SIZE // 2), mode="reflect")
    frames = sliding_window_view(x, FFT_SIZE)[::HOP]  # [T, FFT_SIZE]
    spec = np.fft.rfft(frames * _hann(), axis=1).T  # [N_FREQ, T]
    log_mag = np.log(np.maximum(np.abs(spec), log_floor))
    phase = np.angle(spec)
    phase = np.where(phase <= -np.pi, np.pi, phase)  # normalize to (-pi, pi]
    return Spectrogram(log_mag=log_mag, phase=phase)


def istft(spec: Spectrogram, utterance_id: str = "istft", domain_tag: str = "source") -> AudioClip:
    """Weighted overlap-add inverse using exp(log_mag) and the stored phase."""
    mag = np.exp(spec.log_mag.astype(np.float64))
    z = mag * np.exp(1j * spec.phase.astype(np.float64))
    frames = np.fft.irfft(z.T, n=spec.fft_size, axis=1)  # [T, fft]
    window = _hann()
    hop, fft = spec.frame_hop, spec.fft_size
    n_frames = spec.n_frames
    total = hop * (n_frames - 1) + fft
    acc = np.zeros(total)
    norm = np.zeros(total)
    wsq = window * window
    for m in range(n_frames):
        start = m * hop
        acc[start:start + fft] += frames[m] * window
        norm[start:start + fft] += wsq
    out = acc / np.maximum(norm, 1e-11)
    out = out[fft // 2: total - fft // 2]
    return AudioClip(samples=out.astype(np.float32), sample_rate=SAMPLE_RATE,
                     utterance_id=utterance_id, domain_tag=domain_tag)


def segment_patches(spec: Spectrogram, parent_utterance: str = "") -> list[SpectroPatch]:
    """Split into non-overlapping 128-frame patches; the last one is padded
    at the log floor and records how many trailing frames are padding."""
    n = spec.n_frames
    if n < 1:
        raise EmptySpectrogram("spectrogram has no frames")
    floor_val = np.float32(np.log(LOG_FLOOR))
    patches = []
    for start in range(0, n, PATCH_FRAMES):
        chunk = spec.log_mag[:, start:start + PATCH_FRAMES]
        pad = PATCH_FRAMES - chunk.shape[1]
        if pad:
            chunk = np.pad(chunk, ((0, 0), (0, pad)), constant_values=floor_val)
        patches.append(SpectroPatch(values=chunk, origin_frame=start,
                                    parent_utterance=parent_utterance, pad_frames=pad))
    return patches


def reassemble(patches: list[SpectroPatch], phase_source: Spectrogram) -> Spectrogram:
    """Concatenate contiguous patches of one utterance, strip trailing
    padding, and attach the phase of `phase_source`."""
    if not patches:
        raise GapOrOverlap("no patches to reassemble")
    parent = patches[0].parent_utterance
    for i, p in enumerate(patches):
        if p.parent_utterance != parent:
            raise GapOrOverlap(
                f"patch {i} belongs to {p.parent_utterance!r}, expected {parent!r}")
        if p.origin_frame != i * PATCH_FRAMES:
            raise GapOrOverlap(
                f"patch {i} starts at frame {p.origin_frame}, expected {i * PATCH_FRAMES}")
        if p.pad_frames and i != len(patches) - 1:
            raise GapOrOverlap(f"interior patch {i} carries padding")
    total = PATCH_FRAMES * len(patches) - patches[-1].pad_frames
    if phase_source.n_frames != total:
        raise FrameCountMismatch(
            f"phase source has {phase_source.n_frames} frames, patches cover {total}")
    log_mag = np.concatenate([p.values for p in patches], axis=1)[:, :total]
    return Spectrogram(log_mag=log_mag, phase=phase_source.phase,
                       frame_hop=phase_source.frame_hop, fft_size=phase_source.fft_size)


def write_cache(spec: Spectrogram, path: str | Path) -> None:
    """Binary spectrogram cache: header + row-major float32 log_mag, phase."""
    freq, frames = spec.log_mag.shape
    header = _CACHE_HEADER.pack(CACHE_VERSION, freq, frames, spec.frame_hop, spec.fft_size)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(spec.log_mag, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(spec.phase, dtype="<f4").tobytes())


def read_cache(path: str | Path) -> Spectrogram:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise UnreadableFile(f"cannot read cache {path}: {exc}") from exc
    if len(blob) < _CACHE_HEADER.size:
        raise UnsupportedFormat(f"{path}: truncated cache header")
    version, freq, frames, hop, fft = _CACHE_HEADER.unpack_from(blob)
    if version != CACHE_VERSION:
        raise UnsupportedFormat(f"{path}: cache version {version}, expected {CACHE_VERSION}")
    count = freq * frames
    expected = _CACHE_HEADER.size + 2 * 4 * count
    if len(blob) != expected:
        raise UnsupportedFormat(f"{path}: expected {expected} bytes, got {len(blob)}")
    flat = np.frombuffer(blob, dtype="<f4", offset=_CACHE_HEADER.size)
    log_mag = flat[:count].reshape(freq, frames).copy()
    phase = flat[count:].reshape(freq, frames).copy()
    return Spectrogram(log_mag=log_mag, phase=phase, frame_hop=hop, fft_size=fft)


def write_wav(clip: AudioClip, path: str | Path) -> None:
    data = np.clip(clip.samples, -1.0, 1.0)
    wavfile.write(str(path), clip.sample_rate, (data * 32767.0).astype(np.int16))
