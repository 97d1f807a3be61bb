"""Stationary spectral gating and silence-based segmentation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage, signal

from . import VOWELS
from .audio_io import AudioBuffer
from .errors import InvalidInputError, TooShortError

WINDOW_MS = 10.0
MIN_SEGMENT_MS = 150.0


@dataclass(frozen=True)
class GateParams:
    frame_len: int = 1024
    hop: int = 256
    noise_k: float = 1.5
    strength: float = 1.0
    smooth_freq_bins: int = 3
    smooth_time_frames: int = 3

    def __post_init__(self):
        if self.frame_len <= 0 or self.frame_len & (self.frame_len - 1):
            raise InvalidInputError("frame_len must be a power of two")
        if not 0 < self.hop <= self.frame_len:
            raise InvalidInputError("hop must be in (0, frame_len]")
        if not 0.0 <= self.strength <= 1.0:
            raise InvalidInputError("strength must be in [0, 1]")


@dataclass(frozen=True)
class Segment:
    audio: AudioBuffer
    subject: str
    vowel: str
    source_index: int

    def __post_init__(self):
        if self.vowel not in VOWELS:
            raise InvalidInputError(f"unknown vowel {self.vowel!r}")

    @property
    def id(self) -> str:
        return f"{self.subject}/{self.vowel}/{self.source_index}"


def spectral_gate(buf: AudioBuffer, p: GateParams = GateParams()) -> AudioBuffer:
    """Attenuate time-frequency bins that do not rise above the stationary noise floor.

    The per-frequency threshold is ``mean + noise_k * std`` of the STFT
    magnitude over all frames. Bins are kept with the soft mask
    ``clip((|X| - thr) / thr, 0, 1)`` after box smoothing.
    """
    x = buf.samples
    n = x.size
    if n < p.frame_len:
        raise TooShortError(f"need at least {p.frame_len} samples, got {n}")
    kw = dict(fs=buf.sample_rate, window="hann", nperseg=p.frame_len, noverlap=p.frame_len - p.hop)
    _, _, z = signal.stft(x, boundary="zeros", padded=True, **kw)
    mag = np.abs(z)
    thr = mag.mean(axis=1, keepdims=True) + p.noise_k * mag.std(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        mask = np.where(thr > 0, np.clip((mag - thr) / thr, 0.0, 1.0), 0.0)
    mask = ndimage.uniform_filter(mask, size=(p.smooth_freq_bins, p.smooth_time_frames), mode="nearest")
    gain = 1.0 - p.strength * (1.0 - mask)
    _, y = signal.istft(z * gain, input_onesided=True, boundary=True, **kw)
    y = y[:n]
    if y.size < n:
        y = np.concatenate([y, np.zeros(n - y.size)])
    return AudioBuffer(np.clip(y, -1.0, 1.0), buf.sample_rate)


def window_dbfs(buf: AudioBuffer, window_ms: float = WINDOW_MS) -> tuple[np.ndarray, int]:
    """RMS level in dBFS of consecutive windows; the last may be partial."""
    win = max(1, int(round(buf.sample_rate * window_ms / 1000.0)))
    x = buf.samples
    n_win = -(-x.size // win)
    padded = np.zeros(n_win * win)
    padded[: x.size] = x
    sq = (padded ** 2).reshape(n_win, win).sum(axis=1)
    counts = np.full(n_win, win)
    if x.size % win:
        counts[-1] = x.size % win
    rms = np.sqrt(sq / counts)
    with np.errstate(divide="ignore"):
        return 20.0 * np.log10(rms), win


def nonsilent_ranges(buf: AudioBuffer, min_silence_ms: float = 300.0, silence_thresh_db: float = -40.0,
                     window_ms: float = WINDOW_MS) -> list[tuple[int, int]]:
    """Sample ranges between silent runs lasting at least ``min_silence_ms``."""
    if min_silence_ms <= 0:
        raise InvalidInputError("min_silence_ms must be positive")
    if len(buf) == 0:
        return []
    db, win = window_dbfs(buf, window_ms)
    quiet = db < silence_thresh_db
    min_run = int(np.ceil(min_silence_ms / window_ms))
    loud = ~quiet
    # quiet runs shorter than min_run are not silences
    edges = np.flatnonzero(np.diff(np.concatenate([[0], quiet.astype(np.int8), [0]])))
    for s, e in zip(edges[::2], edges[1::2]):
        if e - s < min_run:
            loud[s:e] = True
    edges = np.flatnonzero(np.diff(np.concatenate([[0], loud.astype(np.int8), [0]])))
    n = len(buf)
    return [(int(s * win), int(min(e * win, n))) for s, e in zip(edges[::2], edges[1::2])]


def split_on_silence(buf: AudioBuffer, min_silence_ms: float = 300.0, silence_thresh_db: float = -40.0,
                     keep_ms: float = 50.0, min_segment_ms: float = MIN_SEGMENT_MS) -> list[AudioBuffer]:
    keep = int(round(buf.sample_rate * keep_ms / 1000.0))
    min_len = buf.sample_rate * min_segment_ms / 1000.0
    out = []
    for s, e in nonsilent_ranges(buf, min_silence_ms, silence_thresh_db):
        a, b = max(0, s - keep), min(len(buf), e + keep)
        if b - a >= min_len:
            out.append(AudioBuffer(buf.samples[a:b].copy(), buf.sample_rate))
    return out
