"""Seeded Monte Carlo runner: BER, NMSE and PSD experiments with CSV output."""

from __future__ import annotations

import csv
import dataclasses
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .. import __version__
from ..channel import (DDChannel, EVA_PDP_DB, add_awgn, apply_dd, build_H, eva_channel,
                       noise_variance)
from ..chirp_zak import czt, precompute_basis
from ..detect import detect_equalized, detect_maxpath, detect_maxpath_extended, qpsk_demap, qpsk_map
from ..modem import add_cp, dd_to_time, pulse_shape, psd, rect_shape, write_psd_csv
from ..pilots import (EpConfig, PathEstimate, SpConfig, detection_threshold, estimate_channel,
                      estimates_to_channel, guard_mask, insert_ep, insert_sp, nmse)
from .config import ExperimentConfig

SCHEMA_VERSION = 1
CSV_HEADER = ("schema_version", "experiment", "ebn0_db", "trials", "ber", "ber_se",
              "nmse", "nmse_se", "fail_rate", "seconds")
CHUNK = 50
BITS_PER_SYMBOL = 2


@dataclass(frozen=True)
class MetricRecord:
    """One CSV row. Metrics that were not computed are NaN and written blank."""

    experiment: str
    ebn0_db: float
    trials: int
    ber: float
    ber_se: float
    nmse: float
    nmse_se: float
    fail_rate: float
    seconds: float | None = None

    def __post_init__(self):
        if not (math.isnan(self.ber) or 0.0 <= self.ber <= 1.0):
            raise ValueError(f"ber={self.ber} outside [0, 1]")
        if not (math.isnan(self.nmse) or self.nmse >= 0.0):
            raise ValueError(f"nmse={self.nmse} negative")
        if self.trials < 1:
            raise ValueError("trials must be positive")

    def row(self) -> list[str]:
        def num(v):
            return "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.9g}"
        return [str(SCHEMA_VERSION), self.experiment, num(self.ebn0_db), str(self.trials),
                num(self.ber), num(self.ber_se), num(self.nmse), num(self.nmse_se),
                num(self.fail_rate), num(self.seconds)]


@dataclass(frozen=True)
class Point:
    ebn0_db: float
    sigma_p: float | None = None


@dataclass(frozen=True)
class TrialOutcome:
    errors: int
    bits: int
    nmse: float  # NaN when no estimate was made or it failed
    failed: bool


class Simulator:
    """Everything a trial needs that does not depend on the trial index."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.dims = cfg.dims
        self.basis = precompute_basis(self.dims, cfg.kind)
        self.window = cfg.window
        self.cp = cfg.cp
        # mean channel power known to the receiver
        self.expected_power = (sum(abs(t[2]) ** 2 for t in cfg.taps) if cfg.channel == "fixed" else 1.0)
        if cfg.pilot == "ep":
            self.ep = EpConfig(cfg.guard_delay if cfg.guard_delay is not None else self.window[0],
                               cfg.guard_doppler, cfg.snr_p_db)
            self.guard = guard_mask(self.dims, self.ep)
            hit = self.guard[np.arange(self.dims.m_d)[None, :], self.basis.cols]
            self.zeroed = np.tile(hit.sum(axis=1), self.dims.m_d)

    def channel(self, rng: np.random.Generator) -> DDChannel:
        cfg = self.cfg
        if cfg.channel == "awgn":
            return DDChannel.identity(self.dims)
        if cfg.channel == "fixed":
            return DDChannel.from_taps(cfg.taps, self.dims)
        pdp = EVA_PDP_DB if cfg.channel == "eva" else (0.0,) * len(EVA_PDP_DB)
        return eva_channel(cfg.speed_kmh, cfg.carrier_hz, self.dims, rng, cfg.symbol_duration, pdp)

    def trial(self, point: Point, trial: int, detect: bool = True) -> TrialOutcome:
        cfg, dims, basis = self.cfg, self.dims, self.basis
        n = dims.n
        rng = np.random.default_rng([cfg.seed, trial])
        bits = rng.integers(0, 2, 2 * n, dtype=np.int8)
        x = qpsk_map(bits)
        ch = self.channel(rng)

        layout, scale, guard, zeroed = None, 1.0, None, None
        info = np.ones(n, dtype=bool)
        if cfg.pilot == "sp":
            spf = insert_sp(x, basis, SpConfig(cfg.i_rho, cfg.lam, point.sigma_p))
            tx, ref, data = spf.frame, spf.frame, spf.data_frame
            layout, scale, info = spf.layout, spf.data_scale, spf.info
        elif cfg.pilot == "ep":
            ref = czt(x, basis)
            ref[self.guard] = 0
            zeroed = self.zeroed
            info = zeroed < dims.m_d
            var = noise_variance(self._es(ref), point.ebn0_db, BITS_PER_SYMBOL, self._rate(info))
            epf = insert_ep(x, basis, self.ep, var)
            tx, data, layout, guard = epf.frame, epf.data_frame, epf.layout, epf.guard
        else:
            tx = ref = data = czt(x, basis)

        y, var = add_awgn(apply_dd(tx, ch), point.ebn0_db, BITS_PER_SYMBOL, self._rate(info), rng,
                          reference=ref)
        es_data = self._es(data)

        err_nmse, failed = math.nan, False
        if cfg.csi == "perfect":
            est_ch = ch
        else:
            interference = es_data * self.expected_power if cfg.pilot == "sp" else 0.0
            eps = detection_threshold(var, interference, floor=1e-9 * np.sqrt(layout.energy))
            est = estimate_channel(y, layout, self.window, eps, basis, cfg.estimator == "extended")
            if est:
                err_nmse = nmse(est, ch)
                est_ch = estimates_to_channel(est, dims)
            else:
                failed = True
        if not detect:
            return TrialOutcome(0, 0, err_nmse, failed)

        mask = np.repeat(info, 2)
        if failed:
            x_hat = np.zeros(n, dtype=complex)
        else:
            if layout is not None and cfg.cancel_pilot:
                y = y - apply_dd(layout.frame(), est_ch)
            try:
                x_hat = self._detect(y, est_ch, var, es_data, guard, zeroed) / scale
            except np.linalg.LinAlgError:
                failed = True
                x_hat = np.zeros(n, dtype=complex)
        errors = int(np.count_nonzero(qpsk_demap(x_hat)[mask] != bits[mask]))
        return TrialOutcome(errors, int(mask.sum()), err_nmse, failed)

    def _detect(self, y, ch: DDChannel, var: float, es: float, guard, zeroed) -> np.ndarray:
        det = self.cfg.detector
        if det in ("mmse", "ls"):
            return detect_equalized(y, build_H(ch), var, self.basis, es=es, guard=guard, zeroed=zeroed,
                                    reg=0.0 if det == "ls" else None)
        paths = [PathEstimate(p.l, p.k, p.h) for p in ch.paths]
        if det == "maxpath":
            return detect_maxpath(y, paths, self.basis)
        return detect_maxpath_extended(y, paths, self.basis)

    def _es(self, frame) -> float:
        """Mean energy per DD cell."""
        return float(np.vdot(frame, frame).real) / self.dims.n

    def _rate(self, info) -> float:
        n = self.dims.n
        return float(np.count_nonzero(info)) / n * n / (n + self.cp)


_WORKER: Simulator | None = None


def _init_worker(cfg: ExperimentConfig) -> None:
    global _WORKER
    _WORKER = Simulator(cfg)


def _run_one(args) -> TrialOutcome:
    point, trial, detect = args
    return _WORKER.trial(point, trial, detect)


def _points(cfg: ExperimentConfig) -> list[Point]:
    if cfg.pilot != "sp":
        return [Point(e) for e in cfg.ebn0_db]
    return [Point(e, s) for e in cfg.ebn0_db for s in cfg.sweep]


def _label(cfg: ExperimentConfig, point: Point) -> str:
    if point.sigma_p is None or not cfg.sigma_p_list:
        return cfg.name
    return f"{cfg.name}/sigma_p={point.sigma_p:g}"


def _mean_se(values: Sequence[float]) -> tuple[float, float]:
    if not values:
        return math.nan, math.nan
    arr = np.asarray(values, dtype=float)
    se = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
    return float(arr.mean()), se


def _summarize(cfg: ExperimentConfig, point: Point, outcomes: list[TrialOutcome], detect: bool,
               seconds: float | None) -> MetricRecord:
    t = len(outcomes)
    if detect:
        bits = sum(o.bits for o in outcomes)
        ber = sum(o.errors for o in outcomes) / bits
        _, ber_se = _mean_se([o.errors / o.bits for o in outcomes])
    else:
        ber = ber_se = math.nan
    nm, nm_se = _mean_se([o.nmse for o in outcomes if not math.isnan(o.nmse)])
    fail = sum(o.failed for o in outcomes) / t
    return MetricRecord(_label(cfg, point), point.ebn0_db, t, ber, ber_se, nm, nm_se, fail, seconds)


def _run(cfg: ExperimentConfig, detect: bool, progress=None) -> list[MetricRecord]:
    pool = ProcessPoolExecutor(cfg.workers, initializer=_init_worker, initargs=(cfg,)) \
        if cfg.workers > 1 else None
    if pool is None:
        _init_worker(cfg)
    limit = max(cfg.max_trials, cfg.trials)
    records = []
    try:
        for point in _points(cfg):
            start = time.perf_counter()
            outcomes: list[TrialOutcome] = []
            while True:
                done = len(outcomes)
                if done >= cfg.trials:
                    errors = sum(o.errors for o in outcomes)
                    if not (detect and cfg.target_errors and errors < cfg.target_errors and done < limit):
                        break
                    stop = min(done + CHUNK, limit)
                else:
                    stop = min(done + CHUNK, cfg.trials)
                jobs = [(point, t, detect) for t in range(done, stop)]
                if pool is None:
                    outcomes.extend(_run_one(j) for j in jobs)
                else:
                    outcomes.extend(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // cfg.workers)))
            seconds = time.perf_counter() - start if cfg.timing else None
            rec = _summarize(cfg, point, outcomes, detect, seconds)
            records.append(rec)
            if progress:
                progress(rec)
    finally:
        if pool is not None:
            pool.shutdown()
    return records


def run_ber(cfg: ExperimentConfig, progress=None) -> list[MetricRecord]:
    """BER per Eb/N0 point (and per sigma_p when sweeping); NMSE too under estimated CSI."""
    return _run(cfg, True, progress)


def run_nmse(cfg: ExperimentConfig, progress=None) -> list[MetricRecord]:
    """Channel-estimation NMSE per point; data detection is skipped."""
    if cfg.pilot == "none":
        raise ValueError("NMSE experiments need a pilot")
    cfg = cfg if cfg.csi == "estimated" else _replace(cfg, csi="estimated")
    return _run(cfg, False, progress)


def _replace(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return dataclasses.replace(cfg, **kw)


@dataclass(frozen=True, eq=False)
class PsdResult:
    freqs: np.ndarray
    shaped_db: np.ndarray
    unshaped_db: np.ndarray
    band_edge_hz: float


def run_psd(cfg: ExperimentConfig) -> PsdResult:
    """PSD of pulse-shaped CDDM against the unshaped (sample-and-hold) chirp signal.

    ``trials`` random frames are concatenated before Welch averaging.
    """
    dims, basis = cfg.dims, precompute_basis(cfg.dims, cfg.kind)
    spec = cfg.pulse
    fs = dims.m_d / cfg.symbol_duration
    frames = []
    for t in range(cfg.trials):
        rng = np.random.default_rng([cfg.seed, t])
        x = qpsk_map(rng.integers(0, 2, 2 * dims.n, dtype=np.int8))
        frames.append(add_cp(dd_to_time(czt(x, basis)), cfg.cp))
    s = np.concatenate(frames)
    shaped = pulse_shape(s, spec, fs, cfg.cp)
    plain = rect_shape(s, spec.oversample, fs, cfg.cp)
    f, p_shaped = psd(shaped, cfg.nfft, cfg.overlap)
    _, p_plain = psd(plain, cfg.nfft, cfg.overlap)
    return PsdResult(f, p_shaped, p_plain, (1 + spec.rolloff) / 2 * fs)


def write_records(path: str | Path, records: Iterable[MetricRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow(r.row())


def read_records(path: str | Path) -> list[MetricRecord]:
    def num(v):
        return math.nan if v == "" else float(v)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [MetricRecord(r["experiment"], float(r["ebn0_db"]), int(r["trials"]), num(r["ber"]),
                         num(r["ber_se"]), num(r["nmse"]), num(r["nmse_se"]), num(r["fail_rate"]),
                         None if r["seconds"] == "" else float(r["seconds"])) for r in rows]


def write_psd(path: str | Path, result: PsdResult) -> tuple[Path, Path]:
    """Shaped curve to ``path``; the unshaped reference next to it as ``<stem>_unshaped.csv``."""
    path = Path(path)
    ref = path.with_name(f"{path.stem}_unshaped{path.suffix or '.csv'}")
    write_psd_csv(path, result.freqs, result.shaped_db)
    write_psd_csv(ref, result.freqs, result.unshaped_db)
    return path, ref


def write_manifest(out: str | Path, cfg: ExperimentConfig, command: str, wall: float) -> Path:
    """``manifest.txt`` beside ``out``: config hash, seed, build identifier, wall time."""
    path = Path(out).with_name("manifest.txt")
    lines = [
        f"command = {command}",
        f"config = {cfg.source}",
        f"config_hash = {cfg.digest()}",
        f"seed = {cfg.seed}",
        f"build = cddm {__version__}; numpy {np.__version__}; python {platform.python_version()}",
        f"output = {Path(out).name}",
        f"wall_seconds = {wall:.3f}",
    ]
    path.write_text("\n".join(lines) + "\n")
    return path
