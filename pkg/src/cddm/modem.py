"""DD-frame <-> sampled waveform conversion, pulse shaping and PSD estimation."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import signal
from scipy.optimize import least_squares

from .chirp_zak import GridDims

SYMBOL_DURATION_S = 66.67e-6


@dataclass(frozen=True)
class PulseSpec:
    """Square-root raised cosine pulse sampled ``oversample`` times per delay bin.

    ``span_symbols`` is the truncation half-span in delay bins. With
    ``nyquist_correct`` the truncated taps are nudged by a least-squares fit so
    the transmit/receive cascade has no residual intersymbol interference.
    """

    rolloff: float = 0.1
    span_symbols: int = 16
    oversample: int = 4
    nyquist_correct: bool = True

    def __post_init__(self):
        if not 0.0 <= self.rolloff <= 1.0:
            raise ValueError("rolloff must lie in [0, 1]")
        if self.span_symbols < 1 or self.oversample < 1:
            raise ValueError("span_symbols and oversample must be positive")

    @property
    def delay(self) -> int:
        """Group delay of one filter in samples."""
        return self.span_symbols * self.oversample

    def taps(self) -> np.ndarray:
        """Unit-energy real taps, length ``2 * span * Q + 1``."""
        return _taps(self.rolloff, self.span_symbols, self.oversample, self.nyquist_correct).copy()

    def scaled_taps(self, dims: GridDims, symbol_duration: float = SYMBOL_DURATION_S) -> np.ndarray:
        """Taps scaled so that ``sum |a|^2 dt == 1 / N_D`` with ``dt = T / (M_D Q)``."""
        dt = symbol_duration / (dims.m_d * self.oversample)
        return self.taps() / np.sqrt(dims.n_d * dt)


def srrc(t: np.ndarray, rolloff: float) -> np.ndarray:
    """SRRC impulse response at ``t`` in units of the symbol period (unnormalized)."""
    t = np.asarray(t, dtype=float)
    b = rolloff
    h = np.empty_like(t)
    zero = np.isclose(t, 0.0)
    edge = np.isclose(np.abs(4 * b * t), 1.0) if b > 0 else np.zeros_like(zero)
    rest = ~(zero | edge)
    h[zero] = 1 - b + 4 * b / np.pi
    if b > 0:
        h[edge] = b / np.sqrt(2) * ((1 + 2 / np.pi) * np.sin(np.pi / (4 * b))
                                    + (1 - 2 / np.pi) * np.cos(np.pi / (4 * b)))
    tr = t[rest]
    h[rest] = (np.sin(np.pi * tr * (1 - b)) + 4 * b * tr * np.cos(np.pi * tr * (1 + b))) / (
        np.pi * tr * (1 - (4 * b * tr) ** 2))
    return h


@lru_cache(maxsize=16)
def _taps(rolloff: float, span: int, q: int, correct: bool) -> np.ndarray:
    t = np.arange(-span * q, span * q + 1) / q
    h0 = srrc(t, rolloff)
    h0 /= np.linalg.norm(h0)
    if not correct or q == 1:
        return h0
    half0 = h0[span * q:]

    def full(half):
        h = np.concatenate([half[:0:-1], half])
        return h / np.linalg.norm(h)

    def residual(half):
        rc = np.convolve(full(half), full(half))
        isi = rc[2 * span * q + q::q]
        return np.concatenate([100.0 * isi, 1e-2 * (half - half0)])

    fit = least_squares(residual, half0, xtol=1e-15, ftol=1e-15, gtol=1e-15)
    return full(fit.x)


@dataclass(frozen=True)
class BasebandSignal:
    samples: np.ndarray
    sample_rate: float
    cp_len: int = 0
    oversample: int = 1


def dd_to_time(frame) -> np.ndarray:
    """Row-wise inverse DFT (1/sqrt(N_D)) and serialization, block-major."""
    frame = np.asarray(frame, dtype=complex)
    if frame.ndim != 2:
        raise ValueError("frame must be a 2-D M_D x N_D array")
    return np.fft.ifft(frame, axis=1, norm="ortho").T.reshape(-1)


def time_to_dd(y, dims: GridDims) -> np.ndarray:
    """Exact inverse of :func:`dd_to_time`."""
    y = np.asarray(y, dtype=complex)
    if y.shape != (dims.n,):
        raise ValueError(f"expected length {dims.n}, got shape {y.shape}")
    return np.fft.fft(y.reshape(dims.n_d, dims.m_d), axis=0, norm="ortho").T


def add_cp(x, cp_len: int) -> np.ndarray:
    x = np.asarray(x)
    if cp_len < 0 or cp_len > x.shape[0]:
        raise ValueError(f"cp_len={cp_len} outside [0, {x.shape[0]}]")
    if cp_len == 0:
        return x.copy()
    return np.concatenate([x[-cp_len:], x])


def strip_cp(x, cp_len: int) -> np.ndarray:
    return np.asarray(x)[cp_len:]


def pulse_shape(x, spec: PulseSpec, sample_rate: float = 1.0, cp_len: int = 0) -> BasebandSignal:
    """Upsample by Q and filter with the pulse; includes both filter tails.

    ``sample_rate`` is the critical (one sample per delay bin) rate; the
    returned signal runs at ``Q`` times that.
    """
    x = np.asarray(x, dtype=complex)
    q = spec.oversample
    up = np.zeros(x.shape[0] * q, dtype=complex)
    up[::q] = x
    return BasebandSignal(np.convolve(up, spec.taps()), sample_rate * q, cp_len, q)


def rect_shape(x, oversample: int, sample_rate: float = 1.0, cp_len: int = 0) -> BasebandSignal:
    """Unshaped reference: each sample held for ``oversample`` output samples."""
    x = np.asarray(x, dtype=complex)
    return BasebandSignal(np.repeat(x, oversample) / np.sqrt(oversample),
                          sample_rate * oversample, cp_len, oversample)


def matched_filter(sig: BasebandSignal, spec: PulseSpec, n: int | None = None) -> np.ndarray:
    """Matched filter, sample at bin centres, drop the CP; returns ``n`` samples.

    ``n`` defaults to the number of payload samples implied by the signal length.
    """
    taps = spec.taps()
    q = spec.oversample
    total = (sig.samples.shape[0] - 2 * spec.delay + q - 1) // q - sig.cp_len
    if n is None:
        n = total
    if n <= 0 or n > total:
        raise ValueError("signal too short for the filter span")
    filtered = np.convolve(sig.samples, taps[::-1].conj())
    start = 2 * spec.delay + sig.cp_len * q
    return filtered[start:start + n * q:q]


def psd(sig: BasebandSignal, nfft: int = 1024, overlap: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Welch PSD (Hann) folded onto ``|f|``; peak normalized to 0 dB.

    Returns ``nfft // 2 + 1`` frequencies in Hz and powers in dB. Power at
    ``|f|`` is the mean of the two-sided estimate at ``+f`` and ``-f``.
    """
    x = np.asarray(sig.samples)
    if nfft > x.shape[0]:
        raise ValueError(f"nfft={nfft} exceeds signal length {x.shape[0]}")
    if not 0.0 <= overlap < 1.0:
        raise ValueError("overlap must lie in [0, 1)")
    f, p = signal.welch(x, fs=sig.sample_rate, window="hann", nperseg=nfft,
                        noverlap=int(round(overlap * nfft)), return_onesided=False,
                        detrend=False, scaling="density")
    half = nfft // 2
    folded = np.empty(half + 1)
    folded[0] = p[0]
    folded[1:half] = 0.5 * (p[1:half] + p[-1:-half:-1])
    folded[half] = p[half]
    power_db = 10 * np.log10(np.maximum(folded, 1e-300))
    freqs = np.abs(f[:half + 1])
    freqs[half] = sig.sample_rate / 2
    return freqs, power_db - power_db.max()


def write_psd_csv(path: str | Path, freqs, power_db) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["freq_hz", "power_db"])
        for f, p in zip(freqs, power_db):
            w.writerow([f"{f:.9g}", f"{p:.9g}"])
