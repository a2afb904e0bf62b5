"""``cddm`` command line: ber, nmse, psd, validate, dump-basis.

Exit codes: 0 success, 2 configuration or usage error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from importlib import resources
from pathlib import Path

from ..chirp_zak import precompute_basis
from .config import ConfigError, ExperimentConfig, load_config
from .runner import run_ber, run_nmse, run_psd, write_manifest, write_psd, write_records

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def shipped_configs() -> list[str]:
    root = resources.files("cddm") / "configs"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".cfg"))


def resolve_config(name: str) -> Path:
    """A filesystem path, or the name of a shipped config (with or without ``.cfg``)."""
    path = Path(name)
    if path.exists():
        return path
    root = resources.files("cddm") / "configs"
    for candidate in (name, f"{name}.cfg"):
        shipped = root / candidate
        if shipped.is_file():
            return Path(str(shipped))
    raise ConfigError(f"config {name!r} not found (shipped: {', '.join(shipped_configs())})")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cddm", description="Chirp delay-Doppler modulation simulator")
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="config file or shipped config name")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")
    run = argparse.ArgumentParser(add_help=False)
    run.add_argument("--out", help="output CSV path (default: the config's out)")
    run.add_argument("--trials", type=int, help="override trials per point")
    run.add_argument("--workers", type=int, help="worker processes")
    sub.add_parser("ber", parents=[common, run], help="BER versus Eb/N0")
    sub.add_parser("nmse", parents=[common, run], help="channel-estimation NMSE")
    sub.add_parser("psd", parents=[common, run], help="shaped and unshaped PSD curves")
    sub.add_parser("validate", parents=[common], help="check a config without running it")
    dump = sub.add_parser("dump-basis", parents=[common], help="write the chirp position sets")
    dump.add_argument("--out", help="output path (default: stdout)")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    say = (lambda *a: None) if args.quiet else (lambda *a: print(*a, file=sys.stderr))
    try:
        overrides = {"seed": args.seed, "trials": getattr(args, "trials", None),
                     "workers": getattr(args, "workers", None)}
        cfg = load_config(resolve_config(args.config), **overrides)
    except ConfigError as exc:
        print(f"cddm: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "validate":
            say(f"{cfg.source}: ok ({cfg.name}, {cfg.m_d}x{cfg.n_d}, hash {cfg.digest()})")
            return EXIT_OK
        if args.command == "dump-basis":
            return _dump_basis(cfg, args.out)
        out = Path(args.out or cfg.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        start = time.perf_counter()
        if args.command == "psd":
            for path in write_psd(out, run_psd(cfg)):
                say(f"wrote {path}")
        else:
            runner = run_ber if args.command == "ber" else run_nmse
            records = runner(cfg, progress=lambda r: say(
                f"{r.experiment} Eb/N0={r.ebn0_db:g} dB trials={r.trials} ber={r.ber:.3g} nmse={r.nmse:.3g}"))
            write_records(out, records)
            say(f"wrote {out}")
        write_manifest(out, cfg, args.command, time.perf_counter() - start)
    except (ValueError, RuntimeError, OSError, ArithmeticError) as exc:
        print(f"cddm: {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _dump_basis(cfg: ExperimentConfig, out: str | None) -> int:
    basis = precompute_basis(cfg.dims, cfg.kind)
    if out is None:
        basis.dump_positions(sys.stdout)
    else:
        with open(out, "w") as fh:
            basis.dump_positions(fh)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
