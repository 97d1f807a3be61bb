import json

import numpy as np
import pytest
from scipy.signal import argrelmax

from vowelgraph import VOWELS
from vowelgraph.audio_io import read_wav
from vowelgraph.errors import InvalidInputError, InvalidProfileError
from vowelgraph.rep_select import correlation_matrix
from vowelgraph.spectrum import lpc_profile
from vowelgraph.synth import SpeakerProfile, load_profiles, synth_corpus, synth_vowel, with_overrides, write_corpus

FS = 11025


def flat_profile(formants=(700.0, 1200.0, 2600.0, 3500.0)):
    table = {v: formants for v in VOWELS}
    bws = {v: (60.0, 90.0, 120.0, 150.0) for v in VOWELS}
    return SpeakerProfile("T", 120.0, table, bws, formant_jitter=0.0)


def test_amplitude_zero():
    buf = synth_vowel(with_overrides(flat_profile(), amplitude=0.0), "a", 0.3)
    assert np.all(buf.samples == 0.0)


def test_same_seed_same_buffer():
    p = flat_profile()
    assert synth_vowel(p, "a", 0.5, seed=3) == synth_vowel(p, "a", 0.5, seed=3)
    assert synth_vowel(p, "a", 0.5, seed=3) != synth_vowel(p, "a", 0.5, seed=4)


def test_peak_normalised():
    buf = synth_vowel(flat_profile(), "e", 0.4, seed=1)
    assert np.max(np.abs(buf.samples)) == pytest.approx(0.8)


@pytest.mark.parametrize("seed", range(5))
def test_lpc_recovers_formants(seed):
    formants = (700.0, 1200.0, 2600.0, 3500.0)
    buf = synth_vowel(flat_profile(formants), "a", 0.6, seed=seed)
    prof = lpc_profile(buf.samples, FS, 13, 512)
    peaks = prof.freqs[argrelmax(prof.log_power)[0]]
    for f in formants:
        assert np.min(np.abs(peaks - f)) <= 80.0


def test_validation():
    bad = SpeakerProfile("X", 100.0, {v: (700.0, 600.0) for v in VOWELS}, {v: (50.0, 50.0) for v in VOWELS})
    with pytest.raises(InvalidProfileError):
        synth_vowel(bad, "a", 0.3)
    nyq = SpeakerProfile("X", 100.0, {v: (700.0, 6000.0) for v in VOWELS}, {v: (50.0, 50.0) for v in VOWELS})
    with pytest.raises(InvalidProfileError):
        synth_vowel(nyq, "a", 0.3)
    with pytest.raises(InvalidInputError):
        synth_vowel(flat_profile(), "a", 0.1)


def test_bundled_profiles():
    profs = load_profiles()
    assert [p.name for p in profs] == [f"S0{i}" for i in range(1, 8)]
    for p in profs:
        p.validate(FS)
    ratios = [p.formants["a"][0] / 700.0 for p in profs]
    assert min(ratios) == pytest.approx(0.92, abs=1e-3) and max(ratios) == pytest.approx(1.08, abs=1e-3)


def test_corpus_labels_and_counts():
    segs = synth_corpus(load_profiles(), segments_per_vowel=5, seed=0)
    assert len(segs) == 7 * 5 * 5
    assert len({s.id for s in segs}) == len(segs)
    for s in segs:
        assert 0.4 <= s.audio.duration <= 1.0


def test_distinct_seeds_same_structure():
    profs = load_profiles()[:2]
    a = synth_corpus(profs, 5, seed=0)
    b = synth_corpus(profs, 5, seed=1)
    assert [s.id for s in a] == [s.id for s in b]
    assert any(x.audio != y.audio for x, y in zip(a, b))


def test_intra_speaker_consistency():
    profs = load_profiles()
    segs = synth_corpus(profs, 6, seed=0)
    for vowel in VOWELS:
        cell = [s for s in segs if s.vowel == vowel]
        lp = np.vstack([lpc_profile(s.audio.samples, FS).log_power for s in cell])
        c = correlation_matrix(lp)
        who = np.array([s.subject for s in cell])
        same = who[:, None] == who[None, :]
        off = ~np.eye(len(cell), dtype=bool)
        assert c[same & off].mean() > c[~same].mean()


def test_write_corpus_layout(tmp_path):
    segs = synth_corpus(load_profiles()[:1], 5, seed=0)
    paths = write_corpus(segs, tmp_path)
    assert (tmp_path / "S01" / "a" / "0.wav") in paths
    back = read_wav(tmp_path / "S01" / "u" / "4.wav")
    assert back.sample_rate == FS


def test_profiles_from_file(tmp_path):
    p = tmp_path / "one.json"
    p.write_text(json.dumps({"speakers": [{
        "name": "Z", "f0": 100,
        "formants": {v: [500, 1500, 2500, 3500] for v in VOWELS},
        "bandwidths": {v: [60, 90, 120, 150] for v in VOWELS},
    }]}))
    (prof,) = load_profiles(p)
    assert prof.name == "Z" and prof.formant_jitter == 0.02
