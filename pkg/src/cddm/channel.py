"""Integer delay-Doppler multipath channel in three equivalent forms.

* :func:`apply_dd`: twisted convolution directly on the DD grid.
* :func:`build_H`: sparse block matrix of cyclic Doppler shifts and wraparound phases.
* :func:`apply_time`: path sum on the CP-extended time sequence.

Plus AWGN with Eb/N0 calibration, the EVA-derived random generator, and the
ridge-regularized LS equalizer.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .chirp_zak import GridDims
from .modem import SYMBOL_DURATION_S, dd_to_time, time_to_dd

SPEED_OF_LIGHT = 299_792_458.0

# first four EVA taps
EVA_DELAYS_S = (0.0, 310e-9, 710e-9, 1090e-9)
EVA_PDP_DB = (0.0, -3.6, -9.1, -7.0)

DENSE_LIMIT = 4096


@dataclass(frozen=True)
class PathTap:
    l: int
    k: int
    h: complex


@dataclass(frozen=True)
class DDChannel:
    paths: tuple[PathTap, ...]
    dims: GridDims

    def __post_init__(self):
        object.__setattr__(self, "paths", tuple(self.paths))
        seen = set()
        m_d, n_d = self.dims.shape
        for p in self.paths:
            if (p.l, p.k) in seen:
                raise ValueError(f"duplicate path (l={p.l}, k={p.k})")
            seen.add((p.l, p.k))
            if not 0 <= p.l < m_d:
                raise ValueError(f"delay tap {p.l} outside [0, {m_d})")
            if not -n_d / 2 < p.k <= n_d / 2:
                raise ValueError(f"Doppler tap {p.k} outside (-{n_d / 2}, {n_d / 2}]")

    @classmethod
    def from_taps(cls, taps: Iterable[tuple[int, int, complex]], dims: GridDims) -> DDChannel:
        return cls(tuple(PathTap(int(l), int(k), complex(h)) for l, k, h in taps), dims)

    @classmethod
    def identity(cls, dims: GridDims) -> DDChannel:
        return cls((PathTap(0, 0, 1.0),), dims)

    @property
    def max_delay(self) -> int:
        return max((p.l for p in self.paths), default=0)

    def as_map(self) -> dict[tuple[int, int], complex]:
        return {(p.l, p.k): p.h for p in self.paths}

    def power(self) -> float:
        return float(sum(abs(p.h) ** 2 for p in self.paths))


def _path_phase(p: PathTap, dims: GridDims) -> np.ndarray:
    """``[m, n]`` phase applied to ``h_p X_hat`` at received cell ``(m, n)``."""
    m_d, n_d = dims.shape
    m = np.arange(m_d)[:, None]
    n = np.arange(n_d)[None, :]
    ph = np.exp(2j * np.pi * p.k * (m - p.l) / dims.n) * np.ones((1, n_d))
    wrapped = m < p.l
    n_hat = (n - p.k) % n_d
    return np.where(wrapped, ph * np.exp(-2j * np.pi * n_hat / n_d), ph)


def apply_dd(frame, ch: DDChannel) -> np.ndarray:
    frame = np.asarray(frame, dtype=complex)
    if frame.shape != ch.dims.shape:
        raise ValueError(f"frame shape {frame.shape} does not match channel grid {ch.dims.shape}")
    out = np.zeros_like(frame)
    for p in ch.paths:
        out += p.h * _path_phase(p, ch.dims) * np.roll(frame, (p.l, p.k), axis=(0, 1))
    return out


@dataclass(frozen=True, eq=False)
class ChannelMatrix:
    """DD-domain channel matrix (sparse) with its time-domain twin.

    ``dd`` acts on the row-major vectorized frame; ``time`` acts on the
    CP-stripped time sequence. Both are unitarily similar through
    :func:`dd_to_time` so either can be used to solve normal equations.
    """

    channel: DDChannel
    dd: sp.csr_matrix
    time: sp.csr_matrix

    @property
    def n(self) -> int:
        return self.channel.dims.n

    def toarray(self) -> np.ndarray:
        if self.n > DENSE_LIMIT:
            raise ValueError(f"refusing to densify a {self.n}x{self.n} channel matrix")
        return self.dd.toarray()

    def matvec(self, v) -> np.ndarray:
        return self.dd @ np.asarray(v)

    def d_blocks(self) -> set[tuple[int, int]]:
        """Block coordinates ``(row, col)`` that carry the wraparound factor ``D``."""
        m_d = self.channel.dims.m_d
        return {(m, (m - p.l) % m_d) for p in self.channel.paths for m in range(p.l)}


def phase_matrix(n_d: int) -> np.ndarray:
    return np.diag(np.exp(-2j * np.pi * np.arange(n_d) / n_d))


def cyclic_shift(n_d: int, k: int) -> np.ndarray:
    """``C^k``: ``(C^k v)[n] = v[n - k]``."""
    return np.roll(np.eye(n_d), k, axis=0)


def build_H(ch: DDChannel) -> ChannelMatrix:
    """Assemble the sparse ``N x N`` DD channel matrix block by block."""
    dims = ch.dims
    m_d, n_d = dims.shape
    d_diag = np.diag(phase_matrix(n_d))
    m = np.arange(m_d)[:, None]
    n = np.arange(n_d)[None, :]
    rows, cols, vals = [], [], []
    for p in ch.paths:
        # block (m, m - l): h e^{j2pi k(m-l)/N} C^k, times D when the row wraps;
        # C^k has its single nonzero of row n at column n - k
        n_src = (n - p.k) % n_d
        u = p.h * np.exp(2j * np.pi * p.k * (m - p.l) / dims.n) * np.ones_like(n_src)
        u = np.where(m < p.l, u * d_diag[n_src], u)
        rows.append((m * n_d + n).ravel())
        cols.append((((m - p.l) % m_d) * n_d + n_src).ravel())
        vals.append(u.ravel())
    H = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(dims.n, dims.n)).tocsr()
    return ChannelMatrix(ch, H, time_matrix(ch))


def time_matrix(ch: DDChannel) -> sp.csr_matrix:
    """Circulant-banded time-domain channel seen after CP removal."""
    n = ch.dims.n
    k = np.arange(n)
    rows, cols, vals = [], [], []
    for p in ch.paths:
        rows.append(k)
        cols.append((k - p.l) % n)
        vals.append(p.h * np.exp(2j * np.pi * p.k * (k - p.l) / n))
    return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n)).tocsr()


def apply_time(x_cp, ch: DDChannel, cp_len: int) -> np.ndarray:
    """``y[k] = sum_p h_p x[k - l_p] exp(j2pi k_p (k - l_p) / N)`` over the CP-extended frame.

    ``k`` counts from the first payload sample, so CP samples sit at negative
    indices. The output has the same length as ``x_cp``.
    """
    x_cp = np.asarray(x_cp, dtype=complex)
    if ch.max_delay > cp_len:
        raise ValueError(f"path delay {ch.max_delay} exceeds cp_len {cp_len}")
    n = ch.dims.n
    k = np.arange(x_cp.shape[0]) - cp_len
    y = np.zeros_like(x_cp)
    for p in ch.paths:
        shifted = np.zeros_like(x_cp)
        shifted[p.l:] = x_cp[:x_cp.shape[0] - p.l]
        y += p.h * np.exp(2j * np.pi * p.k * (k - p.l) / n) * shifted
    return y


def noise_variance(energy_per_symbol: float, ebn0_db: float, bits_per_symbol: int,
                   rate_scale: float = 1.0) -> float:
    """Per-sample noise variance ``Es / (bps * 10^(Eb/N0 / 10) * rate_scale)``."""
    return energy_per_symbol / (bits_per_symbol * 10 ** (ebn0_db / 10) * rate_scale)


def add_awgn(y, ebn0_db: float, bits_per_symbol: int, rate_scale: float,
             rng: np.random.Generator, reference=None) -> tuple[np.ndarray, float]:
    """Add circular complex Gaussian noise calibrated to Eb/N0.

    ``Es`` is the mean energy per sample of ``reference`` (default ``y``), the
    noise-free transmitted signal. ``rate_scale`` is information symbols per
    transmitted sample. Returns the noisy signal and the noise variance.
    """
    y = np.asarray(y, dtype=complex)
    if not np.isfinite(ebn0_db):
        raise ValueError("ebn0_db must be finite")
    ref = y if reference is None else np.asarray(reference)
    es = float(np.mean(np.abs(ref) ** 2))
    var = noise_variance(es, ebn0_db, bits_per_symbol, rate_scale)
    noise = rng.standard_normal(y.shape + (2,)) @ np.array([1.0, 1j])
    return y + np.sqrt(var / 2) * noise, var


def max_doppler_tap(speed_kmh: float, fc_hz: float, dims: GridDims,
                    symbol_duration: float = SYMBOL_DURATION_S) -> int:
    v = speed_kmh / 3.6
    return int(round(fc_hz * v / SPEED_OF_LIGHT * dims.n_d * symbol_duration))


def eva_delay_taps(dims: GridDims, symbol_duration: float = SYMBOL_DURATION_S) -> list[int]:
    return [int(round(tau * dims.m_d / symbol_duration)) for tau in EVA_DELAYS_S]


def eva_channel(speed_kmh: float, fc_hz: float, dims: GridDims, rng: np.random.Generator,
                symbol_duration: float = SYMBOL_DURATION_S, pdp_db=EVA_PDP_DB,
                max_retries: int = 100) -> DDChannel:
    """Four-path channel with EVA delays and PDP, Jakes-style integer Doppler taps.

    ``pdp_db`` may be replaced (e.g. all zeros for a uniform profile). Colliding
    ``(l, k)`` pairs are redrawn up to ``max_retries`` times.
    """
    if speed_kmh < 0:
        raise ValueError("speed must be nonnegative")
    taps = eva_delay_taps(dims, symbol_duration)
    power = 10 ** (np.asarray(pdp_db, dtype=float) / 10)
    power /= power.sum()
    gains = np.sqrt(power / 2) * (rng.standard_normal(len(taps)) + 1j * rng.standard_normal(len(taps)))
    k_max = max_doppler_tap(speed_kmh, fc_hz, dims, symbol_duration)
    theta = rng.uniform(0, 2 * np.pi, len(taps))
    k = np.round(k_max * np.cos(theta)).astype(int)
    for _ in range(max_retries):
        pairs = list(zip(taps, k))
        dup = [j for j in range(len(pairs)) if pairs[j] in pairs[:j]]
        if not dup:
            return DDChannel.from_taps(zip(taps, k, gains), dims)
        k[dup] = np.round(k_max * np.cos(rng.uniform(0, 2 * np.pi, len(dup)))).astype(int)
    raise RuntimeError(f"could not draw distinct (l, k) pairs in {max_retries} retries")


def ls_equalize(yv, H: ChannelMatrix, reg: float = 0.0, method: str = "auto") -> np.ndarray:
    """``(H^H H + reg I)^-1 H^H y`` on the vectorized DD frame.

    ``method="dense"`` solves the DD normal equations directly; ``"sparse"``
    solves the equivalent banded time-domain system (same result, since the
    DD and time matrices are unitarily similar). ``"auto"`` picks dense for
    small grids.
    """
    if reg < 0:
        raise ValueError("reg must be nonnegative")
    dims = H.channel.dims
    yv = np.asarray(yv, dtype=complex)
    if method == "auto":
        method = "dense" if H.n <= 256 else "sparse"
    if method == "dense":
        A = H.toarray()
        try:
            if reg == 0:
                # square system: solve it directly instead of squaring the condition number
                if np.linalg.cond(A) > 1e13:
                    raise np.linalg.LinAlgError("singular channel matrix")
                return np.linalg.solve(A, yv)
            return np.linalg.solve(A.conj().T @ A + reg * np.eye(H.n), A.conj().T @ yv)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError("singular normal matrix; use reg > 0") from exc
    if method != "sparse":
        raise ValueError(f"unknown method {method!r}")
    Ht = H.time
    yt = dd_to_time(yv.reshape(dims.shape))
    try:
        if reg == 0:
            lu = spla.splu(Ht.tocsc())
            pivots = np.abs(lu.U.diagonal())
            if pivots.min() <= 1e-13 * pivots.max():
                raise RuntimeError("singular channel matrix")
            xt = lu.solve(yt)
        else:
            normal = (Ht.conj().T @ Ht + reg * sp.identity(H.n, format="csr")).tocsc()
            xt = spla.splu(normal).solve(Ht.conj().T @ yt)
    except RuntimeError as exc:
        raise np.linalg.LinAlgError("singular normal matrix; use reg > 0") from exc
    if not np.all(np.isfinite(xt)):
        raise np.linalg.LinAlgError("singular normal matrix; use reg > 0")
    return time_to_dd(xt, dims).reshape(-1)


def write_channel_csv(path: str | Path, channels: Iterable[tuple[int, Iterable[PathTap]]]) -> None:
    """Rows ``trial,p,l,k,re(h),im(h)``; ``channels`` yields ``(trial, paths)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "p", "l", "k", "re(h)", "im(h)"])
        for trial, paths in channels:
            for idx, p in enumerate(paths):
                w.writerow([trial, idx, p.l, p.k, f"{p.h.real:.9g}", f"{p.h.imag:.9g}"])


def read_channel_csv(path: str | Path, dims: GridDims) -> dict[int, DDChannel]:
    out: dict[int, list[PathTap]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(int(row["trial"]), []).append(
                PathTap(int(row["l"]), int(row["k"]), complex(float(row["re(h)"]), float(row["im(h)"]))))
    return {t: DDChannel(tuple(p), dims) for t, p in out.items()}
