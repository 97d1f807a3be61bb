"""All-pole (LPC) spectral envelopes of vowel segments.

The model is ``H(f) = d0 / (1 - sum_k d_k exp(i k 2 pi f dt))`` with
``d0 = 1`` and ``dt = 1 / sample_rate``; coefficients follow the prediction
convention ``y[t] ~ sum_k d_k y[t - k]``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSignalError, InvalidInputError, PoleOnUnitCircleError

DEFAULT_ORDER = 13
DEFAULT_BINS = 512
REFLECTION_CLAMP = 1.0 - 1e-9


@dataclass(frozen=True)
class LpcModel:
    order: int
    coeffs: np.ndarray
    sample_rate: float
    gain: float = 1.0
    reflection: np.ndarray = field(default_factory=lambda: np.zeros(0))
    error: float = 0.0
    clamped: bool = False

    @property
    def delta(self) -> float:
        return 1.0 / self.sample_rate


@dataclass(frozen=True)
class SpectralProfile:
    freqs: np.ndarray
    log_power: np.ndarray
    meta: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["freq", "log_power"])
        for f, p in zip(self.freqs, self.log_power):
            w.writerow([repr(float(f)), repr(float(p))])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {"meta": self.meta, "freqs": self.freqs.tolist(), "log_power": self.log_power.tolist()},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "SpectralProfile":
        d = json.loads(text)
        return cls(np.asarray(d["freqs"]), np.asarray(d["log_power"]), d.get("meta", {}))


def autocorrelation(x: np.ndarray, max_lag: int) -> np.ndarray:
    """Biased autocorrelation ``r[0..max_lag]`` (unnormalised lag sums)."""
    n = x.size
    return np.array([np.dot(x[: n - k], x[k:]) for k in range(max_lag + 1)])


def levinson_durbin(r: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray, float, bool]:
    """Solve the Yule-Walker equations for ``r``.

    Returns prediction coefficients, reflection coefficients, final
    prediction error and whether any reflection coefficient was clamped.
    """
    a = np.zeros(order)
    k = np.zeros(order)
    err = float(r[0])
    clamped = False
    for i in range(order):
        acc = r[i + 1] - np.dot(a[:i], r[i:0:-1])
        ki = acc / err
        if not abs(ki) < 1.0:
            ki = np.copysign(REFLECTION_CLAMP, ki)
            clamped = True
        k[i] = ki
        prev = a[:i].copy()
        a[:i] = prev - ki * prev[::-1]
        a[i] = ki
        err *= 1.0 - ki * ki
    return a, k, err, clamped


def lpc_fit(samples, order: int = DEFAULT_ORDER, sample_rate: float = 11025.0) -> LpcModel:
    """Autocorrelation-method LPC over the whole segment (no window, no pre-emphasis)."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if order < 0:
        raise InvalidInputError("order must be non-negative")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("samples contain non-finite values")
    if x.size <= order:
        raise InvalidInputError(f"need more than {order} samples, got {x.size}")
    # normalising by the peak keeps r well scaled and leaves coefficients unchanged
    peak = np.max(np.abs(x)) if x.size else 0.0
    if peak == 0.0:
        raise DegenerateSignalError("all-zero segment")
    x = x / peak
    r = autocorrelation(x, order)
    if r[0] <= 0.0:
        raise DegenerateSignalError("zero-energy segment")
    coeffs, refl, err, clamped = levinson_durbin(r, order)
    return LpcModel(order, coeffs, float(sample_rate), 1.0, refl, err / r[0], clamped)


def frequency_grid(n_bins: int, sample_rate: float) -> np.ndarray:
    return np.arange(n_bins) * (sample_rate / 2.0) / n_bins


def frequency_response(
    model: LpcModel, n_bins: int = DEFAULT_BINS, sample_rate: float | None = None, meta: dict | None = None
) -> SpectralProfile:
    """Evaluate ``log |H(f)|^2`` on ``n_bins`` points of ``[0, fs/2)``."""
    if n_bins < 2:
        raise InvalidInputError("n_bins must be at least 2")
    fs = model.sample_rate if sample_rate is None else float(sample_rate)
    freqs = frequency_grid(n_bins, fs)
    k = np.arange(1, model.order + 1)
    phase = np.exp(1j * 2.0 * np.pi * np.outer(freqs / fs, k))
    denom = 1.0 - phase @ model.coeffs if model.order else np.ones(n_bins, dtype=complex)
    mag = np.abs(denom)
    tiny = np.flatnonzero(mag < 1e-300)
    if tiny.size:
        raise PoleOnUnitCircleError(int(tiny[0]))
    log_power = 2.0 * (np.log(model.gain) - np.log(mag))
    return SpectralProfile(freqs, log_power, dict(meta or {}))


def lpc_profile(samples, sample_rate: float, order: int = DEFAULT_ORDER, n_bins: int = DEFAULT_BINS,
                meta: dict | None = None) -> SpectralProfile:
    return frequency_response(lpc_fit(samples, order, sample_rate), n_bins, sample_rate, meta)
