"""Speaker identification from vowel spectra via natural visibility graphs."""

__version__ = "0.1.0"

VOWELS = ("a", "e", "i", "o", "u")
METRICS = ("density", "aspl", "cc", "q")
