"""QPSK mapping and the three data detectors."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channel import ChannelMatrix, ls_equalize
from .chirp_zak import ChirpBasis, correlate, gather, iczt
from .pilots import PathEstimate, phase_beta

_SQRT2 = np.sqrt(2.0)


def qpsk_map(bits) -> np.ndarray:
    """Gray QPSK: 00 -> (1+j), 01 -> (-1+j), 11 -> (-1-j), 10 -> (1-j), all over sqrt 2."""
    bits = np.asarray(bits, dtype=np.int8).reshape(-1, 2)
    if bits.size and (bits.min() < 0 or bits.max() > 1):
        raise ValueError("bits must be 0 or 1")
    return ((1 - 2 * bits[:, 1]) + 1j * (1 - 2 * bits[:, 0])) / _SQRT2


def qpsk_demap(symbols) -> np.ndarray:
    """Hard decisions, inverse of :func:`qpsk_map`."""
    s = np.asarray(symbols)
    out = np.empty((s.shape[0], 2), dtype=np.int8)
    out[:, 0] = s.imag < 0
    out[:, 1] = s.real < 0
    return out.reshape(-1)


def ber(tx_bits, rx_bits) -> float:
    tx = np.asarray(tx_bits)
    rx = np.asarray(rx_bits)
    if tx.shape != rx.shape:
        raise ValueError("bit arrays differ in shape")
    return float(np.count_nonzero(tx != rx) / tx.size) if tx.size else 0.0


@dataclass(frozen=True, eq=False)
class DetectionReport:
    """Hard decisions plus ``soft``, the per-symbol correlation magnitude."""

    x_hat: np.ndarray
    bits: np.ndarray
    method: str
    soft: np.ndarray

    @classmethod
    def from_symbols(cls, x_hat, method: str, mask=None) -> "DetectionReport":
        """Keep only symbols selected by ``mask`` (pilot and guard symbols excluded)."""
        x_hat = np.asarray(x_hat)
        if mask is not None:
            x_hat = x_hat[np.asarray(mask)]
        return cls(x_hat, qpsk_demap(x_hat), method, np.abs(x_hat))


def strongest_path(estimates: Sequence[PathEstimate]) -> PathEstimate:
    """Largest ``|h_hat|``; ties go to the lowest delay, then lowest Doppler."""
    if not estimates:
        raise ValueError("no paths detected")
    return min(estimates, key=lambda e: (-abs(e.h_hat), e.l, e.k))


def _compensated(frame, basis: ChirpBasis, path: PathEstimate) -> np.ndarray:
    dims = basis.dims
    cells = gather(frame, basis, (path.l, path.k))
    rows = (np.arange(dims.m_d) + path.l) % dims.m_d
    cols = (basis.cols + path.k) % dims.n_d
    phase = phase_beta(path.l, path.k, rows[None, :], cols, dims)
    return cells * np.conj(phase)


def detect_maxpath(frame, estimates: Sequence[PathEstimate], basis: ChirpBasis) -> np.ndarray:
    """Correlate every chirp against the strongest path's shifted positions."""
    p = strongest_path(estimates)
    if p.h_hat == 0:
        raise ValueError("strongest path has zero gain")
    dims = basis.dims
    return correlate(_compensated(frame, basis, p), basis) / (p.h_hat * dims.m_d * dims.n_d)


def detect_maxpath_extended(frame, estimates: Sequence[PathEstimate], basis: ChirpBasis,
                            unbiased: bool = True) -> np.ndarray:
    """Max-path correlation over the received chirp plus its synthetic extension.

    The extension's known self-correlation is added and removed again; with
    ``unbiased`` the result is rescaled to be exact on a noise-free single
    path, which makes it coincide with :func:`detect_maxpath`.
    """
    p = strongest_path(estimates)
    if p.h_hat == 0:
        raise ValueError("strongest path has zero gain")
    dims = basis.dims
    m_d, n_d = dims.shape
    seg = correlate(_compensated(frame, basis, p), basis) / (p.h_hat * np.sqrt(n_d))
    # extension self-correlation; every chirp is unimodular so it is the same for all i
    ext = np.sqrt(n_d) * m_d * (n_d - 1)
    span = m_d * n_d
    x = (seg + ext) / (np.sqrt(n_d) * span) - (n_d - 1) / n_d
    return x * n_d if unbiased else x


def guarded_correlate(frame, basis: ChirpBasis, guard: np.ndarray, zeroed: np.ndarray) -> np.ndarray:
    """Per-chirp correlation skipping guard cells, normalized by the cells used.

    Symbols whose every position lies in the guard come back as zero.
    """
    dims = basis.dims
    cells = np.where(gather(guard, basis), 0, gather(frame, basis))
    used = dims.m_d - np.asarray(zeroed)
    out = correlate(cells, basis)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(used > 0, out / (dims.n_d * used), 0)


def detect_equalized(frame, H: ChannelMatrix, noise_var: float, basis: ChirpBasis,
                     es: float = 1.0, guard: np.ndarray | None = None,
                     zeroed: np.ndarray | None = None, reg: float | None = None) -> np.ndarray:
    """Regularized LS equalization of the whole frame, then chirp correlation.

    ``reg`` defaults to ``noise_var / es`` (MMSE); pass 0 for plain LS. With
    a guard mask the correlation skips guarded cells.
    """
    dims = basis.dims
    lam = noise_var / es if reg is None else reg
    xdd = ls_equalize(np.asarray(frame).reshape(-1), H, lam).reshape(dims.shape)
    if guard is None:
        return iczt(xdd, basis)
    if zeroed is None:
        raise ValueError("zeroed required with a guard mask")
    return guarded_correlate(xdd, basis, guard, zeroed)
