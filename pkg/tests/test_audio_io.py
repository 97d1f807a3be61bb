import struct

import numpy as np
import pytest

from vowelgraph.audio_io import AudioBuffer, decode_wav, encode_wav, read_wav, resample, write_wav
from vowelgraph.errors import UnsupportedEncodingError, WavFormatError


def pcm16(frames, rate=8000, channels=1):
    data = np.asarray(frames, dtype="<i2").tobytes()
    fmt = struct.pack("<HHIIHH", 1, channels, rate, rate * 2 * channels, 2 * channels, 16)
    body = b"WAVE" + b"fmt " + struct.pack("<I", 16) + fmt + b"data" + struct.pack("<I", len(data)) + data
    return b"RIFF" + struct.pack("<I", len(body)) + body


def test_stereo_opposites_mix_to_zero():
    buf = decode_wav(pcm16([16384, -16384], channels=2))
    assert buf.samples.tolist() == [0.0]


def test_full_scale_negative():
    assert decode_wav(pcm16([-32768])).samples[0] == -1.0


def test_length_bookkeeping(tmp_path):
    buf = AudioBuffer(np.zeros(3 * 44100), 44100)
    write_wav(tmp_path / "x.wav", buf)
    back = read_wav(tmp_path / "x.wav")
    assert len(back) == 132300 and back.sample_rate == 44100


@pytest.mark.parametrize("bits", [8, 16, 24, 32, -32])
def test_roundtrip_encodings(bits, rng):
    x = rng.uniform(-0.9, 0.9, 1000)
    back = decode_wav(encode_wav(AudioBuffer(x, 16000), bits))
    tol = {8: 1 / 64, 16: 1e-4, 24: 1e-6, 32: 1e-9, -32: 1e-7}[bits]
    np.testing.assert_allclose(back.samples, x, atol=tol)


def test_multichannel_encode_decodes_to_same_mono(rng):
    x = rng.uniform(-0.5, 0.5, 300)
    a = decode_wav(encode_wav(AudioBuffer(x, 8000), 16, channels=1))
    b = decode_wav(encode_wav(AudioBuffer(x, 8000), 16, channels=3))
    np.testing.assert_array_equal(a.samples, b.samples)


def test_bad_files():
    with pytest.raises(WavFormatError):
        decode_wav(b"not a wav file at all")
    raw = bytearray(pcm16([1, 2, 3]))
    raw[20:22] = struct.pack("<H", 2)  # ADPCM
    with pytest.raises(UnsupportedEncodingError):
        decode_wav(bytes(raw))


def test_resample_identity():
    buf = AudioBuffer(np.linspace(-1, 1, 100), 11025)
    assert resample(buf, 11025) is buf


def test_resample_sine_peak():
    t = np.arange(44100) / 44100
    out = resample(AudioBuffer(0.5 * np.sin(2 * np.pi * 440 * t), 44100), 11025)
    assert out.sample_rate == 11025 and len(out) == 11025
    mag = np.abs(np.fft.rfft(out.samples))
    freqs = np.fft.rfftfreq(len(out), 1 / 11025)
    assert abs(freqs[np.argmax(mag)] - 440) <= 2


def test_resample_preserves_dc():
    out = resample(AudioBuffer(np.full(44100, 0.5), 44100), 11025)
    core = out.samples[200:-200]
    assert np.max(np.abs(core - 0.5)) < 1e-3


def test_resample_idempotent(rng):
    buf = AudioBuffer(rng.uniform(-0.5, 0.5, 4800), 48000)
    once = resample(buf, 11025)
    assert resample(once, 11025) == once


def test_resample_passband_energy(rng):
    # in-band tones below 5 kHz keep their energy through 16 kHz -> 11025 Hz
    fs = 16000
    t = np.arange(2 * fs) / fs
    for f in (300.0, 1500.0, 4000.0, 5000.0):
        x = 0.5 * np.sin(2 * np.pi * f * t)
        y = resample(AudioBuffer(x, fs), 11025).samples[500:-500]
        assert np.mean(y ** 2) == pytest.approx(0.125, rel=0.02)
