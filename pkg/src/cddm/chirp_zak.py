"""Discrete orthogonal chirps and the Chirp-Zak transform (CZT).

A length-N chirp, folded onto an M_D x N_D delay-Doppler grid by the discrete
Zak transform, has exactly one nonzero per delay row. ``ChirpBasis`` stores
those nonzeros (column positions plus amplitudes) so that the forward and
inverse transforms touch only M_D cells per symbol.

Symbol index ``i`` is split as ``i = r + c * N_D``: symbols with equal residue
``r`` share the same cells and are mutually orthogonal over them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import IO, Literal

import numpy as np


@dataclass(frozen=True)
class GridDims:
    """Delay-Doppler grid size; ``m_d`` delay bins by ``n_d`` Doppler bins."""

    m_d: int
    n_d: int

    def __post_init__(self):
        if self.m_d <= 0 or self.n_d <= 0:
            raise ValueError(f"grid dimensions must be positive, got {self.m_d}x{self.n_d}")
        if self.m_d % 2:
            raise ValueError(f"m_d must be even, got {self.m_d}")
        if self.m_d % self.n_d:
            raise ValueError(f"m_d ({self.m_d}) must be a multiple of n_d ({self.n_d})")

    @property
    def n(self) -> int:
        return self.m_d * self.n_d

    @property
    def shape(self) -> tuple[int, int]:
        return (self.m_d, self.n_d)


@dataclass(frozen=True)
class ChirpKind:
    """Chirp family: ``dfnt`` (discrete Fresnel) or ``daft`` (affine Fourier).

    For ``daft`` the quadratic rate is tied to ``alpha``, the largest integer
    Doppler tap the waveform is designed for.
    """

    variant: Literal["dfnt", "daft"] = "dfnt"
    alpha: int = 0

    def __post_init__(self):
        if self.variant not in ("dfnt", "daft"):
            raise ValueError(f"unknown chirp variant {self.variant!r}")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")

    @classmethod
    def dfnt(cls) -> ChirpKind:
        return cls("dfnt", 0)

    @classmethod
    def daft(cls, alpha: int) -> ChirpKind:
        return cls("daft", alpha)


def _check_index(name: str, value, n: int):
    v = np.asarray(value)
    if np.any(v < 0) or np.any(v >= n):
        raise ValueError(f"{name} out of range [0, {n})")


def dfnt_chirp(i, w, n: int):
    """Fresnel chirp ``exp(j pi/4) exp(-j pi (w - i)^2 / n)``; broadcasts over arrays."""
    _check_index("i", i, n)
    _check_index("w", w, n)
    d = np.asarray(w, dtype=np.int64) - np.asarray(i, dtype=np.int64)
    # exact integer phase: exp(-j pi q / n) has period 2n in q
    q = (d * d) % (2 * n)
    return np.exp(1j * np.pi / 4) * np.exp(-1j * np.pi * q / n)


def daft_chirp(i, u, dims: GridDims, alpha: int):
    """``exp(j pi ((2 alpha + 1) u^2 + 2 u i + i^2) / N)``.

    The exponent is an integer multiple of ``pi / N`` and is reduced exactly
    before evaluation.
    """
    n = dims.n
    _check_index("i", i, n)
    _check_index("u", u, n)
    u = np.asarray(u, dtype=np.int64)
    i = np.asarray(i, dtype=np.int64)
    q = ((2 * alpha + 1) * (u * u) + 2 * u * i + i * i) % (2 * n)
    return np.exp(1j * np.pi * q / n)


def chirp(i, u, dims: GridDims, kind: ChirpKind):
    """Evaluate chirp ``i`` of the given family at sample(s) ``u``."""
    if kind.variant == "dfnt":
        return dfnt_chirp(i, u, dims.n)
    return daft_chirp(i, u, dims, kind.alpha)


def chirp_synthesis(x, dims: GridDims, kind: ChirpKind) -> np.ndarray:
    """Unnormalized synthesis ``s(q) = sum_i x(i) chirp_i(q)`` in O(N log N)."""
    x = np.asarray(x, dtype=complex)
    n = dims.n
    if x.shape != (n,):
        raise ValueError(f"expected {n} symbols, got shape {x.shape}")
    q = np.arange(n)
    if kind.variant == "dfnt":
        # circular convolution with exp(-j pi d^2 / N); periodic because N is even
        g = np.exp(-1j * np.pi * ((q * q) % (2 * n)) / n)
        return np.exp(1j * np.pi / 4) * np.fft.ifft(np.fft.fft(x) * np.fft.fft(g))
    pre = np.exp(1j * np.pi * ((q * q) % (2 * n)) / n)
    post = np.exp(1j * np.pi * (((2 * kind.alpha + 1) * q * q) % (2 * n)) / n)
    return post * np.fft.ifft(x * pre) * n


def idfnt(x) -> np.ndarray:
    """Inverse discrete Fresnel transform without normalization (energy grows by N)."""
    x = np.asarray(x, dtype=complex)
    n = x.shape[0]
    if n % 2:
        raise ValueError("sequence length must be even")
    q = np.arange(n)
    g = np.exp(-1j * np.pi * ((q * q) % (2 * n)) / n)
    return np.exp(1j * np.pi / 4) * np.fft.ifft(np.fft.fft(x) * np.fft.fft(g))


def dzt(s, dims: GridDims) -> np.ndarray:
    """Discrete Zak transform: ``Z[m, n] = N_D^-1/2 sum_k s(m + k M_D) e^{-j2pi nk/N_D}``."""
    s = np.asarray(s, dtype=complex)
    if s.shape != (dims.n,):
        raise ValueError(f"expected length {dims.n}, got shape {s.shape}")
    blocks = s.reshape(dims.n_d, dims.m_d)
    return np.fft.fft(blocks, axis=0, norm="ortho").T


@dataclass(frozen=True, eq=False)
class ChirpBasis:
    """Sparse delay-Doppler representation of one chirp family.

    ``cols[r, m]`` is the Doppler bin of the single nonzero in delay row ``m``
    for every symbol with residue ``r = i mod N_D``. ``amps[r, c, m]`` is the
    nonzero amplitude ``sqrt(N_D) * chirp_i(m)`` for ``i = r + c N_D``.
    """

    dims: GridDims
    kind: ChirpKind
    cols: np.ndarray = field(repr=False)
    amps: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.cols.setflags(write=False)
        self.amps.setflags(write=False)

    def positions(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Nonzero cells of chirp ``i`` as (rows, cols) arrays in delay-row order."""
        _check_index("i", i, self.dims.n)
        return np.arange(self.dims.m_d), self.cols[i % self.dims.n_d]

    def values(self, i: int) -> np.ndarray:
        _check_index("i", i, self.dims.n)
        r, c = i % self.dims.n_d, i // self.dims.n_d
        return self.amps[r, c]

    @property
    def all_values(self) -> np.ndarray:
        """``N x M_D`` array of nonzeros indexed by symbol then delay row."""
        m_d, n_d = self.dims.shape
        return self.amps.transpose(1, 0, 2).reshape(m_d * n_d, m_d)

    def matrix(self, i: int) -> np.ndarray:
        """Dense delay-Doppler image of chirp ``i``, mainly for inspection."""
        out = np.zeros(self.dims.shape, dtype=complex)
        rows, cols = self.positions(i)
        out[rows, cols] = self.values(i)
        return out

    def dump_positions(self, fh: IO[str]) -> None:
        """Write the nonzero cells of every chirp as ``i m n`` lines, symbol-major."""
        m_d, n_d = self.dims.shape
        for i in range(self.dims.n):
            c = self.cols[i % n_d]
            fh.writelines(f"{i} {m} {c[m]}\n" for m in range(m_d))


def precompute_basis(dims: GridDims, kind: ChirpKind) -> ChirpBasis:
    m_d, n_d = dims.shape
    m = np.arange(m_d)
    r = np.arange(n_d)[:, None]
    if kind.variant == "dfnt":
        # [M_D/2 + m + n - i] mod N_D == 0
        cols = (r - m - m_d // 2) % n_d
    else:
        # [(2a+1) m + (2a+1) M_D/2 + i - n] mod N_D == 0
        a2 = 2 * kind.alpha + 1
        cols = (a2 * m + a2 * (m_d // 2) + r) % n_d
    idx = np.arange(dims.n).reshape(m_d, n_d).T  # idx[r, c] = r + c N_D
    amps = np.sqrt(n_d) * chirp(idx[:, :, None], m[None, None, :], dims, kind)
    return ChirpBasis(dims, kind, cols.astype(np.int64), np.ascontiguousarray(amps))


def _check_frame(frame, dims: GridDims) -> np.ndarray:
    frame = np.asarray(frame)
    if frame.shape != dims.shape:
        raise ValueError(f"frame shape {frame.shape} does not match grid {dims.shape}")
    return frame


def czt(x, basis: ChirpBasis) -> np.ndarray:
    """Spread N symbols onto the DD grid, accumulating only the stored nonzeros."""
    dims = basis.dims
    m_d, n_d = dims.shape
    x = np.asarray(x, dtype=complex)
    if x.shape != (dims.n,):
        raise ValueError(f"expected {dims.n} symbols, got shape {x.shape}")
    x_rc = x.reshape(m_d, n_d).T
    per_cell = np.matmul(x_rc[:, None, :], basis.amps)[:, 0, :]  # (N_D, M_D)
    frame = np.zeros(dims.shape, dtype=complex)
    frame[np.arange(m_d)[None, :], basis.cols] = per_cell
    return frame


def gather(frame: np.ndarray, basis: ChirpBasis, shift: tuple[int, int] = (0, 0)) -> np.ndarray:
    """Cells of every residue class, optionally displaced by a (delay, Doppler) shift.

    Returns an ``(N_D, M_D)`` array: entry ``[r, m]`` is the frame value at
    ``((m + l) mod M_D, (cols[r, m] + k) mod N_D)``.
    """
    m_d, n_d = basis.dims.shape
    l, k = shift
    rows = (np.arange(m_d) + l) % m_d
    return frame[rows[None, :], (basis.cols + k) % n_d]


def correlate(cells: np.ndarray, basis: ChirpBasis) -> np.ndarray:
    """``sum_m cells[r, m] * conj(amps[r, c, m])`` returned as a length-N symbol vector."""
    out = np.conj(np.matmul(basis.amps, np.conj(cells)[:, :, None])[:, :, 0])  # (N_D, M_D) [r, c]
    return out.T.reshape(-1)


def iczt(frame, basis: ChirpBasis) -> np.ndarray:
    """Recover symbols by correlating each symbol's M_D cells with its chirp."""
    dims = basis.dims
    frame = _check_frame(frame, dims)
    return correlate(gather(frame, basis), basis) / (dims.m_d * dims.n_d)


def extend_chirp(basis: ChirpBasis, i: int) -> np.ndarray:
    """Remaining ``M_D (N_D - 1)`` samples of chirp ``i`` scaled by ``sqrt(N_D)``."""
    dims = basis.dims
    _check_index("i", i, dims.n)
    u = np.arange(dims.m_d, dims.n)
    return np.sqrt(dims.n_d) * chirp(i, u, dims, basis.kind)


def correlation_profile(basis: ChirpBasis, i: int, extended: bool = False) -> np.ndarray:
    """Normalized correlation of symbol ``i``'s DD chirp against every symbol.

    Entry ``j`` is ``|<v_i, v_j>|`` over the M_D stored nonzeros divided by the
    energy of the reference sequence. With ``extended`` the reference is the
    full-length chirp (segment plus synthetic extension), whose known
    self-term is added back for ``j == i`` so the peak stays at one.
    """
    dims = basis.dims
    ref = basis.values(i)
    seg = np.abs(basis.all_values @ np.conj(ref))
    if not extended:
        return seg / np.vdot(ref, ref).real
    ext = extend_chirp(basis, i)
    ext_energy = np.vdot(ext, ext).real
    out = seg.copy()
    out[i] += ext_energy
    return out / (np.vdot(ref, ref).real + ext_energy)
