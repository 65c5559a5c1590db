"""PCM16 WAV files, length normalization, and labeled clip corpora.

Sample mapping is int/32768, so -32768 -> -1.0 and 32767 -> 32767/32768,
and a load/save round trip is bit exact.  The parser is strict about
the fields the trainer depends on (PCM format code, 16-bit, mono) and
names whichever one is wrong.
"""

import struct
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

__all__ = [
    "AudioClip",
    "Corpus",
    "CorpusError",
    "WavFormatError",
    "WavParseError",
    "batch_iter",
    "load_corpus",
    "load_wav",
    "normalize_length",
    "save_wav",
    "synth_corpus",
]

SAMPLE_RATE = 16000
SILENCE_THRESHOLD = 0.01


class WavParseError(ValueError):
    """Structurally broken RIFF container."""


class WavFormatError(ValueError):
    """Well-formed file in an encoding the trainer does not accept."""


class CorpusError(ValueError):
    """Corpus directory layout problem."""


class AudioClip(NamedTuple):
    samples: np.ndarray  # float32 in [-1, 1)
    sample_rate: int


@dataclass
class Corpus:
    x: np.ndarray  # (n_clips, out_len) float32
    labels: np.ndarray  # (n_clips,) int64
    class_names: list
    sample_rate: int

    @property
    def num_classes(self):
        return len(self.class_names)

    def __len__(self):
        return len(self.labels)


def load_wav(path):
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF":
        raise WavFormatError(f"{path}: missing RIFF header")
    if raw[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: RIFF form type is not WAVE")
    fmt = data = None
    off = 12
    while off + 8 <= len(raw):
        cid, size = struct.unpack_from("<4sI", raw, off)
        start = off + 8
        if start + size > len(raw):
            raise WavParseError(
                f"{path}: chunk {cid!r} truncated at byte offset {start}: "
                f"declares {size} bytes, {len(raw) - start} available"
            )
        if cid == b"fmt ":
            fmt = raw[start : start + size]
        elif cid == b"data":
            data = raw[start : start + size]
        off = start + size + (size & 1)  # chunks are word aligned
    if fmt is None or len(fmt) < 16:
        raise WavParseError(f"{path}: missing or short fmt chunk")
    if data is None:
        raise WavParseError(f"{path}: missing data chunk")
    code, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt)
    if code != 1:
        raise WavFormatError(f"{path}: format code {code}, expected PCM (1)")
    if bits != 16:
        raise WavFormatError(f"{path}: bit depth {bits}, expected 16")
    if channels != 1:
        raise WavFormatError(f"{path}: channel count {channels}, expected mono")
    if len(data) % 2:
        raise WavParseError(f"{path}: data chunk has an odd byte count")
    samples = np.frombuffer(data, "<i2").astype(np.float32) / 32768.0
    return AudioClip(samples, rate)


def save_wav(path, samples, sample_rate=SAMPLE_RATE):
    """Write mono PCM16; returns how many samples fell outside [-1, 1]."""
    s = np.asarray(samples)
    clipped = int(np.sum((s < -1.0) | (s > 1.0)))
    ints = np.clip(np.round(s * 32768.0), -32768, 32767).astype("<i2")
    data = ints.tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(data)) + b"WAVE"
    header += b"fmt " + struct.pack(
        "<IHHIIHH", 16, 1, 1, sample_rate, sample_rate * 2, 2, 16
    )
    header += b"data" + struct.pack("<I", len(data))
    Path(path).write_bytes(header + data)
    return clipped


def normalize_length(samples, out_len, threshold=SILENCE_THRESHOLD):
    """Trim silent ends (|x| < threshold), then center-crop or zero-pad.

    Returns (clip, was_silent); an all-silent input becomes zeros.
    Odd padding puts the extra zero at the end.
    """
    s = np.asarray(samples, dtype=np.float32)
    voiced = np.flatnonzero(np.abs(s) >= np.float32(threshold))
    if voiced.size == 0:
        return np.zeros(out_len, np.float32), True
    s = s[voiced[0] : voiced[-1] + 1]
    if len(s) > out_len:
        start = (len(s) - out_len) // 2
        s = s[start : start + out_len]
    elif len(s) < out_len:
        pad = out_len - len(s)
        s = np.pad(s, (pad // 2, pad - pad // 2))
    return np.ascontiguousarray(s), False


def load_corpus(root, out_len, threshold=SILENCE_THRESHOLD):
    """Each subdirectory of root is one class, labeled in sorted name order."""
    root = Path(root)
    class_names = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not class_names:
        raise CorpusError(f"no class directories under {root}")
    clips, labels = [], []
    rate = None
    n_silent = 0
    for label, name in enumerate(class_names):
        files = sorted((root / name).glob("*.wav"))
        if not files:
            raise CorpusError(f"class directory {name!r} contains no .wav files")
        for f in files:
            clip = load_wav(f)
            if rate is None:
                rate = clip.sample_rate
            elif clip.sample_rate != rate:
                raise CorpusError(
                    f"{f}: sample rate {clip.sample_rate} != corpus rate {rate}"
                )
            x, silent = normalize_length(clip.samples, out_len, threshold)
            n_silent += silent
            clips.append(x)
            labels.append(label)
    if n_silent:
        warnings.warn(f"{n_silent} all-silence clip(s) normalized to zeros")
    return Corpus(np.stack(clips), np.asarray(labels, np.int64), class_names, rate)


def synth_corpus(num_classes, per_class, out_len, rng, sample_rate=SAMPLE_RATE):
    """Sine-tone corpus: class k is 250*2^k Hz with random phase, amplitude 0.8.

    Octave spacing keeps every pair of classes equally far apart on a log
    scale and well inside the band for typical class counts (250 Hz to
    4 kHz covers 5 classes at 16 kHz sampling).
    """
    t = np.arange(out_len) / sample_rate
    clips, labels = [], []
    for k in range(num_classes):
        freq = 250.0 * 2.0 ** k
        if freq >= sample_rate / 2:
            raise ValueError(
                f"class {k} tone {freq:g} Hz is at or above Nyquist "
                f"({sample_rate / 2:g} Hz); fewer classes or a higher "
                f"sample rate needed")
        for _ in range(per_class):
            phase = rng.uniform(0.0, 2.0 * np.pi)
            clips.append((0.8 * np.sin(2.0 * np.pi * freq * t + phase)).astype(np.float32))
            labels.append(k)
    names = [f"tone{int(250 * 2 ** k):04d}" for k in range(num_classes)]
    return Corpus(np.stack(clips), np.asarray(labels, np.int64), names, sample_rate)


def batch_iter(corpus, batch_size, rng):
    """One shuffled epoch of (x, labels) batches; a short tail is dropped."""
    n = len(corpus)
    perm = rng.permutation(n)
    for i in range(n // batch_size):
        idx = perm[i * batch_size : (i + 1) * batch_size]
        yield corpus.x[idx][:, :, None], corpus.labels[idx]
