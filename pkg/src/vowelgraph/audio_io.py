"""WAV decoding/encoding, mono mixdown and rational-ratio resampling."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from math import gcd
from pathlib import Path

import numpy as np
from scipy import signal

from .errors import InvalidInputError, UnsupportedEncodingError, WavFormatError

PIPELINE_RATE = 11025
KAISER_BETA = 8.6
TAPS_PER_PHASE = 64

_PCM = 1
_FLOAT = 3
_EXTENSIBLE = 0xFFFE


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64).ravel()
        if self.sample_rate <= 0:
            raise InvalidInputError("sample_rate must be positive")
        if not np.all(np.isfinite(x)):
            raise InvalidInputError("samples must be finite")
        object.__setattr__(self, "samples", x)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def __eq__(self, other):
        if not isinstance(other, AudioBuffer):
            return NotImplemented
        return self.sample_rate == other.sample_rate and np.array_equal(self.samples, other.samples)


def _chunks(data: bytes):
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavFormatError("not a RIFF/WAVE container")
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        (size,) = struct.unpack("<I", data[pos + 4:pos + 8])
        body = data[pos + 8:pos + 8 + size]
        if len(body) < size and cid != b"data":
            raise WavFormatError(f"truncated {cid!r} chunk")
        yield cid, body
        pos += 8 + size + (size & 1)


def decode_wav(data: bytes) -> AudioBuffer:
    """Decode integer PCM (8/16/24/32-bit) or 32-bit float WAV bytes to mono."""
    fmt = None
    payload = None
    for cid, body in _chunks(data):
        if cid == b"fmt ":
            if len(body) < 16:
                raise WavFormatError("fmt chunk too short")
            tag, channels, rate, _, block_align, bits = struct.unpack("<HHIIHH", body[:16])
            if tag == _EXTENSIBLE:
                if len(body) < 26:
                    raise WavFormatError("extensible fmt chunk too short")
                (tag,) = struct.unpack("<H", body[24:26])
            fmt = (tag, channels, rate, block_align, bits)
        elif cid == b"data":
            payload = body
    if fmt is None or payload is None:
        raise WavFormatError("missing fmt or data chunk")
    tag, channels, rate, block_align, bits = fmt
    if channels < 1 or rate < 1:
        raise WavFormatError("invalid channel count or sample rate")
    width = bits // 8
    if bits % 8 or block_align != width * channels:
        raise WavFormatError("inconsistent block alignment")

    if tag == _PCM and bits in (8, 16, 24, 32):
        n = len(payload) // block_align
        raw = np.frombuffer(payload[: n * block_align], dtype=np.uint8)
        if bits == 8:
            x = (raw.astype(np.float64) - 128.0) / 128.0
        elif bits == 24:
            b = raw.reshape(-1, 3).astype(np.int32)
            v = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
            v = np.where(v & 0x800000, v - (1 << 24), v)
            x = v / float(1 << 23)
        else:
            dt = {16: "<i2", 32: "<i4"}[bits]
            x = np.frombuffer(raw.tobytes(), dtype=dt).astype(np.float64) / float(1 << (bits - 1))
    elif tag == _FLOAT and bits == 32:
        n = len(payload) // block_align
        x = np.frombuffer(payload[: n * block_align], dtype="<f4").astype(np.float64)
        if not np.all(np.isfinite(x)):
            raise WavFormatError("non-finite float samples")
    else:
        raise UnsupportedEncodingError(f"format tag {tag:#x} with {bits} bits is not supported")

    x = x.reshape(-1, channels).mean(axis=1)
    return AudioBuffer(np.clip(x, -1.0, 1.0), int(rate))


def encode_wav(buf: AudioBuffer, bits: int = 16, channels: int = 1) -> bytes:
    """Encode as PCM (8/16/24/32-bit) or, with ``bits=-32``, 32-bit float.

    ``channels > 1`` duplicates the mono signal into every channel.
    """
    x = np.clip(buf.samples, -1.0, 1.0)
    if bits == -32:
        tag, width = _FLOAT, 4
        body = x.astype("<f4")
    elif bits in (8, 16, 24, 32):
        tag, width = _PCM, bits // 8
        scale = float(1 << (bits - 1))
        ints = np.clip(np.round(x * scale), -scale, scale - 1).astype(np.int64)
        if bits == 8:
            body = (ints + 128).astype(np.uint8)
        elif bits == 24:
            u = ints & 0xFFFFFF
            body = np.stack([u & 0xFF, (u >> 8) & 0xFF, (u >> 16) & 0xFF], axis=1).astype(np.uint8)
        else:
            body = ints.astype({16: "<i2", 32: "<i4"}[bits])
    else:
        raise UnsupportedEncodingError(f"cannot encode {bits}-bit audio")
    data = np.tile(np.asarray(body).reshape(len(x), -1), (1, channels)).tobytes()
    block = width * channels
    fmt = struct.pack("<HHIIHH", tag, channels, buf.sample_rate, buf.sample_rate * block, block, width * 8)
    riff = b"WAVE" + b"fmt " + struct.pack("<I", 16) + fmt + b"data" + struct.pack("<I", len(data)) + data
    if len(data) & 1:
        riff += b"\x00"
    return b"RIFF" + struct.pack("<I", len(riff)) + riff


def read_wav(path: str | Path) -> AudioBuffer:
    return decode_wav(Path(path).read_bytes())


def write_wav(path: str | Path, buf: AudioBuffer, bits: int = 16) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_wav(buf, bits))


def resampling_filter(up: int, down: int) -> np.ndarray:
    """Kaiser-windowed sinc lowpass for a polyphase ``up/down`` resampler."""
    max_rate = max(up, down)
    numtaps = TAPS_PER_PHASE * max_rate + 1
    return signal.firwin(numtaps, 1.0 / max_rate, window=("kaiser", KAISER_BETA))


def resample(buf: AudioBuffer, target_rate: int = PIPELINE_RATE) -> AudioBuffer:
    if target_rate <= 0:
        raise InvalidInputError("target_rate must be positive")
    if target_rate == buf.sample_rate:
        return buf
    g = gcd(int(buf.sample_rate), int(target_rate))
    up, down = int(target_rate) // g, int(buf.sample_rate) // g
    n_out = int(round(len(buf) * target_rate / buf.sample_rate))
    if len(buf) == 0:
        return AudioBuffer(np.zeros(0), int(target_rate))
    y = signal.resample_poly(buf.samples, up, down, window=resampling_filter(up, down))
    if y.size >= n_out:
        y = y[:n_out]
    else:
        y = np.concatenate([y, np.zeros(n_out - y.size)])
    return AudioBuffer(np.clip(y, -1.0, 1.0), int(target_rate))
