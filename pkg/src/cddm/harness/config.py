"""Line-oriented ``key = value`` experiment configuration with a typed schema.

Blank lines and ``#`` comments are ignored. Lists are comma separated.
Physical quantities carry their unit in the key (``_db``, ``_hz``, ``_us``,
``_kmh``). ``auto`` selects a value derived from the channel model.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from ..channel import eva_delay_taps, max_doppler_tap
from ..chirp_zak import ChirpKind, GridDims
from ..modem import PulseSpec


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


CHANNELS = ("awgn", "eva", "uniform", "fixed")
PILOTS = ("none", "sp", "ep")
DETECTORS = ("maxpath", "maxpath_ext", "mmse", "ls")
ESTIMATORS = ("basic", "extended")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    m_d: int = 512
    n_d: int = 32
    chirp: str = "dfnt"
    alpha: int | None = None  # None: the channel's largest Doppler tap
    symbol_duration_us: float = 66.67
    carrier_hz: float = 5e9
    channel: str = "eva"
    speed_kmh: float = 500.0
    taps: tuple = ()  # fixed channel: (l, k, h) triples
    cp_len: int | None = None
    pilot: str = "none"
    i_rho: int = 0
    lam: int | None = None
    sigma_p: float = 0.3
    sigma_p_list: tuple = ()
    guard_delay: int | None = None
    guard_doppler: int | None = None  # None: full Doppler strip
    snr_p_db: float = 60.0
    cancel_pilot: bool = True
    csi: str = "perfect"
    estimator: str = "basic"
    detector: str = "mmse"
    l_max: int | None = None
    k_max: int | None = None
    ebn0_db: tuple = (0.0, 5.0, 10.0)
    trials: int = 100
    max_trials: int = 0
    target_errors: int = 0
    seed: int = 1
    workers: int = 1
    rolloff: float = 0.1
    span_symbols: int = 16
    oversample: int = 4
    nfft: int = 1024
    overlap: float = 0.5
    timing: bool = False
    out: str = "results.csv"
    source: str = field(default="", compare=False)

    @property
    def dims(self) -> GridDims:
        return GridDims(self.m_d, self.n_d)

    @property
    def kind(self) -> ChirpKind:
        if self.chirp == "dfnt":
            return ChirpKind.dfnt()
        return ChirpKind.daft(self.channel_extent()[1] if self.alpha is None else self.alpha)

    @property
    def symbol_duration(self) -> float:
        return self.symbol_duration_us * 1e-6

    @property
    def pulse(self) -> PulseSpec:
        return PulseSpec(self.rolloff, self.span_symbols, self.oversample)

    def channel_extent(self) -> tuple[int, int]:
        """Largest delay and |Doppler| tap the channel model can produce."""
        if self.channel == "awgn":
            return 0, 0
        if self.channel == "fixed":
            return max(t[0] for t in self.taps), max(abs(t[1]) for t in self.taps)
        dims = self.dims
        return (max(eva_delay_taps(dims, self.symbol_duration)),
                max_doppler_tap(self.speed_kmh, self.carrier_hz, dims, self.symbol_duration))

    @property
    def window(self) -> tuple[int, int]:
        l_ch, k_ch = self.channel_extent()
        return (l_ch if self.l_max is None else self.l_max, k_ch if self.k_max is None else self.k_max)

    @property
    def cp(self) -> int:
        return self.channel_extent()[0] if self.cp_len is None else self.cp_len

    @property
    def sweep(self) -> tuple[float, ...]:
        return tuple(self.sigma_p_list) or (self.sigma_p,)

    def digest(self) -> str:
        """Stable hash of every field except the source path."""
        text = "\n".join(f"{f.name}={getattr(self, f.name)!r}" for f in dataclasses.fields(self)
                         if f.name != "source")
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _int(v: str) -> int:
    return int(v)


def _opt_int(v: str) -> int | None:
    return None if v.lower() == "auto" else int(v)


def _doppler_guard(v: str) -> int | None:
    return None if v.lower() == "full" else int(v)


def _floats(v: str) -> tuple[float, ...]:
    return tuple(float(s) for s in v.split(",") if s.strip())


def _bool(v: str) -> bool:
    low = v.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _taps(v: str) -> tuple:
    """``l:k:re:im`` entries separated by ``;``."""
    out = []
    for item in v.split(";"):
        if not item.strip():
            continue
        l, k, re, im = item.split(":")
        out.append((int(l), int(k), complex(float(re), float(im))))
    return tuple(out)


def _choice(options: tuple[str, ...]) -> Callable[[str], str]:
    def parse(v: str) -> str:
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return v
    return parse


_SCHEMA: dict[str, Callable[[str], object]] = {
    "name": str, "m_d": _int, "n_d": _int, "chirp": _choice(("dfnt", "daft")), "alpha": _opt_int,
    "symbol_duration_us": float, "carrier_hz": float, "channel": _choice(CHANNELS),
    "speed_kmh": float, "taps": _taps, "cp_len": _opt_int, "pilot": _choice(PILOTS),
    "i_rho": _int, "lam": _opt_int, "sigma_p": float, "sigma_p_list": _floats,
    "guard_delay": _opt_int, "guard_doppler": _doppler_guard, "snr_p_db": float,
    "cancel_pilot": _bool, "csi": _choice(("perfect", "estimated")), "estimator": _choice(ESTIMATORS),
    "detector": _choice(DETECTORS), "l_max": _opt_int, "k_max": _opt_int, "ebn0_db": _floats,
    "trials": _int, "max_trials": _int, "target_errors": _int, "seed": _int, "workers": _int,
    "rolloff": float, "span_symbols": _int, "oversample": _int, "nfft": _int,
    "overlap": float, "timing": _bool, "out": str,
}


def parse_config(text: str, source: str = "<string>", **overrides) -> ExperimentConfig:
    """Parse and validate. ``overrides`` replace parsed values (already typed)."""
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _SCHEMA[key](value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    values.update({k: v for k, v in overrides.items() if v is not None})
    cfg = ExperimentConfig(source=source, **values)
    validate(cfg)
    return cfg


def load_config(path: str | Path, **overrides) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, str(path), **overrides)


def validate(cfg: ExperimentConfig) -> None:
    """Check every cross-field constraint; raises :class:`ConfigError`."""
    from ..pilots import EpConfig, SpConfig, guard_mask, pilot_shifts_separable, sp_layout
    from ..chirp_zak import precompute_basis

    def need(cond: bool, msg: str):
        if not cond:
            raise ConfigError(msg)

    need(cfg.trials >= 1, "trials must be >= 1")
    need(cfg.max_trials >= 0 and cfg.target_errors >= 0, "max_trials and target_errors must be >= 0")
    need(cfg.workers >= 1, "workers must be >= 1")
    need(len(cfg.ebn0_db) >= 1, "ebn0_db needs at least one value")
    try:
        dims = cfg.dims
        kind = cfg.kind
        cfg.pulse
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if kind.variant == "daft":
        need(0 <= kind.alpha < cfg.n_d / 2, "alpha must lie in [0, N_D/2)")
    need(cfg.symbol_duration_us > 0 and cfg.carrier_hz > 0 and cfg.speed_kmh >= 0,
         "symbol duration, carrier and speed must be positive")
    if cfg.channel == "fixed":
        need(len(cfg.taps) > 0, "fixed channel needs taps")
        for l, k, _ in cfg.taps:
            need(0 <= l < cfg.m_d and -cfg.n_d // 2 < k <= cfg.n_d // 2, f"tap ({l}, {k}) outside the grid")
    l_max, k_max = cfg.window
    need(0 <= cfg.cp <= dims.n, "cp_len outside [0, N]")
    need(cfg.cp >= cfg.channel_extent()[0], "cp_len shorter than the channel delay spread")
    need(0 <= l_max < cfg.m_d and 0 <= k_max < cfg.n_d // 2, "search window outside the grid")
    need(cfg.nfft >= 8 and 0 <= cfg.overlap < 1, "nfft >= 8 and overlap in [0, 1) required")
    for s in cfg.sweep:
        need(0 < s < 1, "sigma_p values must lie in (0, 1)")
    if cfg.csi == "estimated":
        need(cfg.pilot != "none", "estimated CSI needs a pilot")
    if cfg.channel in ("eva", "uniform"):
        delays = eva_delay_taps(dims, cfg.symbol_duration)
        need(max(delays.count(d) for d in delays) <= 2 * cfg.channel_extent()[1] + 1,
             "paths sharing a delay need distinct Doppler taps; raise speed_kmh or the grid size")
    if cfg.pilot == "sp":
        need(0 <= cfg.i_rho < dims.n, "i_rho out of range")
        need(cfg.lam is None or 1 <= cfg.lam <= cfg.m_d, "lam must lie in [1, M_D]")
        layout = sp_layout(precompute_basis(dims, kind), SpConfig(cfg.i_rho, cfg.lam, cfg.sweep[0]))
        need(pilot_shifts_separable(layout, (l_max, k_max)),
             "pilot replicas collide inside the search window; use DAFT with M_D = N_D, "
             "a larger alpha or a smaller lam")
    if cfg.pilot == "ep":
        try:
            ep = EpConfig(cfg.guard_delay if cfg.guard_delay is not None else l_max,
                          cfg.guard_doppler, cfg.snr_p_db)
            guard_mask(dims, ep)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        need(ep.guard_delay >= l_max, "guard_delay below the maximum delay")
        need(ep.guard_doppler is None or ep.guard_doppler >= k_max, "guard_doppler below the maximum Doppler")
        need(2 * ep.guard_delay + 1 < cfg.m_d, "guard spans the whole delay axis")
    if cfg.detector in ("maxpath", "maxpath_ext"):
        need(cfg.pilot != "ep", "max-path detection is not defined for embedded-pilot frames")
