"""Superimposed and embedded pilots, threshold path detection, gain estimation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .channel import DDChannel, PathTap
from .chirp_zak import ChirpBasis, GridDims, chirp, czt, extend_chirp


@dataclass(frozen=True)
class SpConfig:
    """Superimposed pilot on chirp ``i_rho`` keeping ``lam`` nonzeros (None = all M_D).

    The retained nonzeros sit in ``lam`` consecutive delay rows starting at
    ``first_row`` (default ``i_rho mod M_D``), wrapping cyclically.
    """

    i_rho: int = 0
    lam: int | None = None
    sigma_p: float = 0.3
    pilot_value: complex = 1.0
    first_row: int | None = None

    def __post_init__(self):
        if not 0.0 < self.sigma_p < 1.0:
            raise ValueError("sigma_p must lie in (0, 1)")
        if self.lam is not None and self.lam < 1:
            raise ValueError("lam must be positive")
        if self.pilot_value == 0:
            raise ValueError("pilot_value must be nonzero")


@dataclass(frozen=True)
class EpConfig:
    """Embedded pilot with a zeroed guard region.

    The guard spans delay rows ``m_p +- guard_delay`` and either every Doppler
    bin (``guard_doppler=None``) or ``n_p +- 2 * guard_doppler``.
    """

    guard_delay: int
    guard_doppler: int | None = None
    snr_p_db: float = 60.0
    pilot_pos: tuple[int, int] | None = None

    def __post_init__(self):
        if self.guard_delay < 0 or (self.guard_doppler is not None and self.guard_doppler < 0):
            raise ValueError("guard extents must be nonnegative")


@dataclass(frozen=True, eq=False)
class PilotLayout:
    """Transmitted pilot cells and their complex values.

    ``symbol`` and ``amplitude`` are set for chirp pilots (the pilot equals
    ``amplitude`` times the truncated chirp ``symbol``) and enable the extended estimator.
    """

    dims: GridDims
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    symbol: int | None = None
    amplitude: complex | None = None

    def frame(self) -> np.ndarray:
        out = np.zeros(self.dims.shape, dtype=complex)
        out[self.rows, self.cols] = self.values
        return out

    @property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2))


@dataclass(frozen=True)
class PathEstimate:
    l: int
    k: int
    h_hat: complex


@dataclass(frozen=True, eq=False)
class SpFrame:
    frame: np.ndarray
    layout: PilotLayout
    data_frame: np.ndarray  # scaled data-only component
    data_scale: float
    sigma_p: float
    sigma_d: float
    info: np.ndarray  # boolean mask of data-carrying symbols


@dataclass(frozen=True, eq=False)
class EpFrame:
    frame: np.ndarray
    layout: PilotLayout
    data_frame: np.ndarray
    guard: np.ndarray  # boolean M_D x N_D mask
    zeroed: np.ndarray  # zeroed nonzeros per symbol
    info: np.ndarray


def _power(a) -> float:
    return float(np.vdot(a, a).real)


def sp_layout(basis: ChirpBasis, cfg: SpConfig) -> PilotLayout:
    """Unscaled pilot: ``pilot_value`` times the truncated chirp ``i_rho``."""
    dims = basis.dims
    lam = dims.m_d if cfg.lam is None else cfg.lam
    if lam > dims.m_d:
        raise ValueError(f"lam={lam} exceeds M_D={dims.m_d}")
    if not 0 <= cfg.i_rho < dims.n:
        raise ValueError("i_rho out of range")
    start = cfg.i_rho if cfg.first_row is None else cfg.first_row
    rows = (start + np.arange(lam)) % dims.m_d
    cols = basis.cols[cfg.i_rho % dims.n_d, rows]
    values = cfg.pilot_value * basis.values(cfg.i_rho)[rows]
    return PilotLayout(dims, rows, cols, values, cfg.i_rho, complex(cfg.pilot_value))


def daft_delay_guard(n_d: int, alpha: int) -> int:
    """Largest delay for which DAFT pilot replicas with ``|k| <= alpha`` stay apart (M_D = N_D)."""
    return (n_d - 2 * alpha - 1) // (2 * alpha + 1)


def pilot_shifts_separable(layout: PilotLayout, window: tuple[int, int]) -> bool:
    """True when no two distinct window shifts of the pilot share a grid cell."""
    m_d, n_d = layout.dims.shape
    seen: set[int] = set()
    total = 0
    for l, k in search_window(*window):
        cells = ((layout.rows + l) % m_d) * n_d + (layout.cols + k) % n_d
        seen.update(cells.tolist())
        total += cells.shape[0]
    return len(seen) == total


def insert_sp(x, basis: ChirpBasis, cfg: SpConfig) -> SpFrame:
    """Superimpose the scaled truncated chirp ``i_rho`` on the remaining data chirps.

    Pilot and data amplitudes are solved so the frame's total energy equals
    that of an all-data frame and the pilot share (pilot-only energy over
    frame energy) equals ``sigma_p`` exactly.
    """
    dims = basis.dims
    x = np.asarray(x, dtype=complex)
    base = sp_layout(basis, cfg)
    info = np.ones(dims.n, dtype=bool)
    info[cfg.i_rho] = False
    data0 = czt(np.where(info, x, 0), basis)
    rows, cols, unit = base.rows, base.cols, base.values
    pilot0 = base.frame()

    target = dims.n * dims.n * float(np.mean(np.abs(x[info]) ** 2))
    if target == 0:
        raise ValueError("data symbols carry no energy; use sp_layout for a pilot-only frame")
    p, d = _power(pilot0), _power(data0)
    cross = float(np.vdot(data0, pilot0).real)
    a = np.sqrt(cfg.sigma_p * target / p)
    # b^2 d + 2 a b C - (1 - sigma_p) target = 0
    b = (-a * cross + np.sqrt((a * cross) ** 2 + d * (1 - cfg.sigma_p) * target)) / d if d > 0 else 0.0
    frame = a * pilot0 + b * data0
    total = _power(frame)
    layout = PilotLayout(dims, rows, cols, a * unit, cfg.i_rho, a * cfg.pilot_value)
    return SpFrame(frame, layout, b * data0, float(b), a * a * p / total, b * b * d / total, info)


def guard_mask(dims: GridDims, cfg: EpConfig) -> np.ndarray:
    m_d, n_d = dims.shape
    m_p, n_p = cfg.pilot_pos or (m_d // 2, n_d // 2)
    rows = (m_p + np.arange(-cfg.guard_delay, cfg.guard_delay + 1)) % m_d
    if cfg.guard_doppler is None:
        cols = np.arange(n_d)
    else:
        cols = (n_p + np.arange(-2 * cfg.guard_doppler, 2 * cfg.guard_doppler + 1)) % n_d
    mask = np.zeros(dims.shape, dtype=bool)
    mask[np.ix_(rows, cols)] = True
    if mask.all():
        raise ValueError("guard region covers the entire grid")
    return mask


def insert_ep(x, basis: ChirpBasis, cfg: EpConfig, noise_var: float = 1.0) -> EpFrame:
    """Zero every chirp inside the guard region and place one pilot in its centre.

    Pilot power is ``10^(snr_p_db / 10) * noise_var``.
    """
    dims = basis.dims
    m_d, n_d = dims.shape
    pos = cfg.pilot_pos or (m_d // 2, n_d // 2)
    guard = guard_mask(dims, cfg)
    data = czt(x, basis)
    data[guard] = 0
    hit = guard[np.arange(m_d)[None, :], basis.cols]  # (N_D, M_D) per residue class
    zeroed = np.tile(hit.sum(axis=1), m_d)  # symbol i = r + c N_D
    value = np.sqrt(10 ** (cfg.snr_p_db / 10) * noise_var)
    layout = PilotLayout(dims, np.array([pos[0]]), np.array([pos[1]]), np.array([value + 0j]))
    frame = data.copy()
    frame[pos] += value
    return EpFrame(frame, layout, data, guard, zeroed, np.ones(dims.n, dtype=bool))


def phase_beta(l: int, k: int, m, n, dims: GridDims):
    """Phase a path ``(l, k)`` imprints on received cell ``(m, n)``."""
    m = np.asarray(m)
    n = np.asarray(n)
    ph = np.exp(2j * np.pi * k * (m - l) / dims.n)
    wrap = np.exp(-2j * np.pi * ((n - k) % dims.n_d) / dims.n_d)
    return np.where(m < l, ph * wrap, ph)


def phase_beta_symbol(path: PathTap | tuple[int, int], i: int, m, basis: ChirpBasis):
    """Phase for symbol ``i`` observed at received delay row ``m`` after ``path``.

    Evaluated from the stored transmit position ``(m', n')`` of symbol ``i``
    in row ``[m - l]_{M_D}``; ``m'`` is unwrapped to ``m' - M_D`` when the
    path pushes it past the frame edge.
    """
    l, k = (path.l, path.k) if isinstance(path, PathTap) else path
    dims = basis.dims
    m = np.asarray(m)
    t = (m - l) % dims.m_d
    n_src = basis.cols[i % dims.n_d][t]
    wrapped = m < l
    m_src = np.where(wrapped, t - dims.m_d, t)
    ph = np.exp(2j * np.pi * k * m_src / dims.n)
    return np.where(wrapped, ph * np.exp(-2j * np.pi * n_src / dims.n_d), ph)


def _shifted(layout: PilotLayout, l: int, k: int):
    m_d, n_d = layout.dims.shape
    rows = (layout.rows + l) % m_d
    cols = (layout.cols + k) % n_d
    return rows, cols, phase_beta(l, k, rows, cols, layout.dims)


def pilot_statistic(frame, layout: PilotLayout, l: int, k: int) -> float:
    """``|sum Y conj(v phase)| / ||v||`` over the pilot cells displaced by ``(l, k)``.

    For a single-cell pilot this is the received grid magnitude itself.
    """
    rows, cols, phase = _shifted(layout, l, k)
    corr = np.sum(frame[rows, cols] * np.conj(layout.values * phase))
    return float(abs(corr) / np.sqrt(layout.energy))


def detection_threshold(noise_var: float, interference_var: float = 0.0, floor: float = 1e-9) -> float:
    """``3 sqrt(noise + interference)``, never below ``floor``."""
    return max(3.0 * np.sqrt(noise_var + interference_var), floor)


def search_window(l_max: int, k_max: int) -> list[tuple[int, int]]:
    return [(l, k) for l in range(l_max + 1) for k in range(-k_max, k_max + 1)]


def detect_paths(frame, layout: PilotLayout, window: tuple[int, int] | Sequence[tuple[int, int]],
                 eps: float) -> list[tuple[int, int]]:
    """Candidate shifts whose pilot statistic reaches ``eps``, strongest first."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    cands = search_window(*window) if isinstance(window, tuple) and len(window) == 2 and \
        all(isinstance(w, (int, np.integer)) for w in window) else list(window)
    stats = [(pilot_statistic(frame, layout, l, k), l, k) for l, k in cands]
    hits = [(s, l, k) for s, l, k in stats if s >= eps]
    hits.sort(key=lambda t: (-t[0], t[1], t[2]))
    return [(l, k) for _, l, k in hits]


def estimate_gain_basic(frame, path: tuple[int, int], layout: PilotLayout) -> complex:
    """Phase-compensated correlation against the known pilot, per correlated cell."""
    rows, cols, phase = _shifted(layout, *path)
    return complex(np.sum(frame[rows, cols] * np.conj(layout.values * phase)) / layout.energy)


def estimate_gain_extended(frame, path: tuple[int, int], layout: PilotLayout, basis: ChirpBasis,
                           unbiased: bool = True) -> complex:
    """Correlation over the received segment plus the synthetic chirp extension.

    The known extension self-term is added and then subtracted. Taken
    literally that leaves the segment correlation divided by the full length
    ``lam + M_D (N_D - 1)``; ``unbiased`` rescales by the factor that makes
    the noise-free single-path estimate exact, which recovers the basic
    estimator.
    """
    if layout.symbol is None:
        raise ValueError("extended estimation needs a chirp pilot")
    dims = basis.dims
    rows, cols, phase = _shifted(layout, *path)
    lam = layout.rows.shape[0]
    unit = chirp(layout.symbol, layout.rows, dims, basis.kind)
    seg = np.sum(frame[rows, cols] * np.conj(unit) / (layout.amplitude * phase))
    ext = extend_chirp(basis, layout.symbol)
    tail = chirp(layout.symbol, np.arange(dims.m_d, dims.n), dims, basis.kind)
    ext_sum = np.sum(ext * np.conj(tail))
    span = lam + dims.m_d * (dims.n_d - 1)
    h = (seg + ext_sum) / (np.sqrt(dims.n_d) * span) - dims.m_d * (dims.n_d - 1) / span
    return complex(h * span / lam) if unbiased else complex(h)


def estimate_channel(frame, layout: PilotLayout, window, eps: float, basis: ChirpBasis | None = None,
                     extended: bool = False) -> list[PathEstimate]:
    out = []
    for l, k in detect_paths(frame, layout, window, eps):
        if extended:
            h = estimate_gain_extended(frame, (l, k), layout, basis)
        else:
            h = estimate_gain_basic(frame, (l, k), layout)
        out.append(PathEstimate(l, k, h))
    return out


def estimates_to_channel(est: Iterable[PathEstimate], dims: GridDims) -> DDChannel:
    return DDChannel(tuple(PathTap(e.l, e.k, e.h_hat) for e in est), dims)


def nmse(h_hat, h_true: DDChannel) -> float:
    """``sum |h_hat - h|^2 / sum |h|^2`` over the union of (l, k) taps.

    ``h_hat`` may be a mapping ``(l, k) -> gain``, a list of
    :class:`PathEstimate`, or a :class:`DDChannel`.
    """
    if isinstance(h_hat, DDChannel):
        est = h_hat.as_map()
    elif isinstance(h_hat, dict):
        est = dict(h_hat)
    else:
        est = {(e.l, e.k): e.h_hat for e in h_hat}
    true = h_true.as_map()
    power = sum(abs(h) ** 2 for h in true.values())
    if power == 0:
        raise ValueError("true channel has zero power")
    keys = set(est) | set(true)
    err = sum(abs(est.get(key, 0) - true.get(key, 0)) ** 2 for key in keys)
    return float(err / power)
