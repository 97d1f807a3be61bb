"""Source-filter synthetic vowels used as ground-truth speakers.

An impulse train with cycle-to-cycle f0 jitter, shaped by a two-pole glottal
lowpass and mixed with a little white noise, drives a cascade of two-pole
formant resonators. A first difference models lip radiation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from . import VOWELS
from .audio_io import PIPELINE_RATE, AudioBuffer, write_wav
from .errors import InvalidInputError, InvalidProfileError
from .preprocess import Segment

GLOTTAL_CORNER_HZ = 100.0
NOISE_DB = -40.0


@dataclass(frozen=True)
class SpeakerProfile:
    name: str
    f0: float
    formants: dict[str, tuple[float, ...]]
    bandwidths: dict[str, tuple[float, ...]]
    jitter: float = 0.01
    formant_jitter: float = 0.02
    amplitude: float = 0.8
    extra: dict = field(default_factory=dict, compare=False)

    def validate(self, sample_rate: float) -> None:
        if self.f0 <= 0:
            raise InvalidProfileError(f"{self.name}: f0 must be positive")
        for v in VOWELS:
            fs = self.formants.get(v)
            bw = self.bandwidths.get(v)
            if fs is None or bw is None or len(fs) != len(bw):
                raise InvalidProfileError(f"{self.name}: incomplete formant table for /{v}/")
            if any(b <= a for a, b in zip(fs, fs[1:])):
                raise InvalidProfileError(f"{self.name}: formants of /{v}/ not increasing")
            if max(fs) >= sample_rate / 2.0:
                raise InvalidProfileError(f"{self.name}: formant {max(fs)} Hz at or above Nyquist")

    @classmethod
    def from_dict(cls, d: dict) -> "SpeakerProfile":
        return cls(
            name=d["name"],
            f0=float(d["f0"]),
            formants={v: tuple(map(float, f)) for v, f in d["formants"].items()},
            bandwidths={v: tuple(map(float, b)) for v, b in d["bandwidths"].items()},
            jitter=float(d.get("jitter", 0.01)),
            formant_jitter=float(d.get("formant_jitter", 0.02)),
            amplitude=float(d.get("amplitude", 0.8)),
        )


def load_profiles(path: str | Path | None = None) -> list[SpeakerProfile]:
    """Speaker profiles from a JSON file; the bundled seven speakers by default."""
    if path is None:
        text = resources.files("vowelgraph.data").joinpath("speakers.json").read_text()
    else:
        text = Path(path).read_text()
    return [SpeakerProfile.from_dict(d) for d in json.loads(text)["speakers"]]


def _excitation(f0: float, jitter: float, n: int, fs: float, rng: np.random.Generator) -> np.ndarray:
    src = np.zeros(n)
    pos = rng.uniform(0.0, fs / f0)
    while pos < n:
        src[int(pos)] = 1.0
        pos += fs / (f0 * max(0.5, 1.0 + jitter * rng.standard_normal()))
    a = np.exp(-2.0 * np.pi * GLOTTAL_CORNER_HZ / fs)
    src = lfilter([(1.0 - a) ** 2], [1.0, -2.0 * a, a * a], src)
    rms = np.sqrt(np.mean(src ** 2)) or 1.0
    return src + rms * 10.0 ** (NOISE_DB / 20.0) * rng.standard_normal(n)


def _resonate(x: np.ndarray, freq: float, bw: float, fs: float) -> np.ndarray:
    r = np.exp(-np.pi * bw / fs)
    theta = 2.0 * np.pi * freq / fs
    a1, a2 = -2.0 * r * np.cos(theta), r * r
    return lfilter([1.0 + a1 + a2], [1.0, a1, a2], x)


def synth_vowel(profile: SpeakerProfile, vowel: str, duration: float, sample_rate: int = PIPELINE_RATE,
                seed: int = 0) -> AudioBuffer:
    if duration < 0.2:
        raise InvalidInputError("duration must be at least 0.2 s")
    if vowel not in VOWELS:
        raise InvalidInputError(f"unknown vowel {vowel!r}")
    profile.validate(sample_rate)
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    if profile.amplitude == 0:
        return AudioBuffer(np.zeros(n), sample_rate)
    nyq = sample_rate / 2.0
    freqs = np.asarray(profile.formants[vowel]) * (1.0 + profile.formant_jitter * rng.standard_normal(4))
    freqs = np.clip(np.sort(freqs), 50.0, 0.95 * nyq)
    y = _excitation(profile.f0, profile.jitter, n, sample_rate, rng)
    for f, b in zip(freqs, profile.bandwidths[vowel]):
        y = _resonate(y, f, b, sample_rate)
    y = np.diff(y, prepend=0.0)
    y *= profile.amplitude / np.max(np.abs(y))
    return AudioBuffer(y, sample_rate)


def _segment_seed(seed: int, *path: int) -> int:
    return int(np.random.SeedSequence([seed, *path]).generate_state(1)[0])


def synth_corpus(profiles: list[SpeakerProfile], segments_per_vowel: int = 25, seed: int = 0,
                 sample_rate: int = PIPELINE_RATE, duration_range: tuple[float, float] = (0.4, 1.0)) -> list[Segment]:
    if segments_per_vowel < 5:
        raise InvalidInputError("segments_per_vowel must be at least 5")
    out = []
    for si, prof in enumerate(profiles):
        for vi, vowel in enumerate(VOWELS):
            for k in range(segments_per_vowel):
                s = _segment_seed(seed, si, vi, k)
                dur = np.random.default_rng(s).uniform(*duration_range)
                audio = synth_vowel(prof, vowel, dur, sample_rate, seed=s + 1)
                out.append(Segment(audio, prof.name, vowel, k))
    return out


def write_corpus(segments: list[Segment], root: str | Path) -> list[Path]:
    """Write ``{subject}/{vowel}/{index}.wav`` files under ``root``."""
    root = Path(root)
    paths = []
    for seg in segments:
        p = root / seg.subject / seg.vowel / f"{seg.source_index}.wav"
        write_wav(p, seg.audio)
        paths.append(p)
    return paths


def with_overrides(profile: SpeakerProfile, **kw) -> SpeakerProfile:
    return replace(profile, **kw)
