"""Command-line interface.

Subcommands: serve (stream training records to disk), rir (write one room
impulse response), den (normalize a clean WAV against an augmented one),
features (extract power-mel features), schedule-trace (dump the
curriculum schedules), verify (check emitted records).

Exit codes: 0 success, 1 verification failure, 2 bad configuration or
arguments, 3 unreadable or invalid input file, 4 output I/O error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .audio import read_wav, write_wav
from .config import ConfigError, load_config, override_seed, parse_manifest
from .den import den_normalize
from .features import FeatureConfig, power_mel, write_features
from .losses import schedule_trace_lines
from .pipeline import run_server, verify_records
from .room import ImagePath, RoomSpec, generate_rir, sabine_reflection_coefficient, \
    save_rir_text

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_IO = 4


class InputDataError(Exception):
    """An input file is missing or malformed (exit code 3)."""


def _load_wav(path):
    try:
        return read_wav(path)
    except (ValueError, OSError) as exc:
        raise InputDataError(str(exc)) from exc


def _load_manifest(path):
    try:
        return parse_manifest(path)
    except (ValueError, OSError) as exc:
        raise InputDataError(str(exc)) from exc


def _parse_vec(text):
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected x,y,z got {text!r}")
    return tuple(parts)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fforge",
        description="Far-field training-data forge: room simulation, "
        "normalization, features, and curriculum schedules.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="write training-example records to disk")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--manifest", required=True, help="[clean]/[noise] WAV manifest")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, required=True, help="number of records")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")

    p = sub.add_parser("rir", help="generate a room impulse response tap list")
    p.add_argument("--room", type=_parse_vec, required=True, help="dimensions x,y,z in m")
    p.add_argument("--source", type=_parse_vec, required=True)
    p.add_argument("--mic", type=_parse_vec, required=True)
    p.add_argument("--order", type=int, default=10, help="max total reflection count")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--reflection", type=float, help="uniform wall coefficient in [0,1)")
    group.add_argument("--t60", type=float, help="reverberation time in s (Sabine)")
    p.add_argument("--fs", type=int, default=16000)
    p.add_argument("--c0", type=float, default=343.0)
    p.add_argument("--out", help="output file (default stdout)")

    p = sub.add_parser("den", help="delay-energy normalize a clean WAV")
    p.add_argument("--clean", required=True, help="clean WAV")
    p.add_argument("--aug", required=True, help="augmented WAV")
    p.add_argument("--distance", type=float, required=True,
                   help="direct-path distance in m")
    p.add_argument("--c0", type=float, default=343.0)
    p.add_argument("--out", required=True, help="normalized WAV")

    p = sub.add_parser("features", help="extract power-mel features from a WAV")
    p.add_argument("--in", dest="wav_in", required=True)
    p.add_argument("--out", required=True, help="NEF1 feature file")
    p.add_argument("--num-mel", type=int, default=40)
    p.add_argument("--fft-size", type=int, default=512)

    p = sub.add_parser("schedule-trace", help="dump 'epoch w lambda lr' lines")
    p.add_argument("--epochs", type=float, default=10.0, help="span in epochs")
    p.add_argument("--step", type=float, default=0.25)
    p.add_argument("--horizon", type=float, default=8.0)
    p.add_argument("--out", help="output file (default stdout)")

    p = sub.add_parser("verify", help="check emitted records")
    p.add_argument("--records", required=True, help="directory of records")
    p.add_argument("--fraction", type=float, default=1.0,
                   help="fraction to regenerate when config+manifest given")
    p.add_argument("--config", help="JSON config file for regeneration")
    p.add_argument("--manifest", help="manifest for regeneration")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    return parser


def _cmd_serve(args) -> int:
    cfg = override_seed(load_config(args.config), args.seed)
    manifest = _load_manifest(args.manifest)
    run_server(cfg, manifest, args.out, args.count, args.workers)
    return EXIT_OK


def _cmd_rir(args) -> int:
    if args.reflection is None and args.t60 is None:
        raise ConfigError("one of --reflection or --t60 is required")
    refl = (
        args.reflection
        if args.reflection is not None
        else sabine_reflection_coefficient(args.t60, args.room)
    )
    room = RoomSpec(args.room, refl, speed_of_sound=args.c0, sample_rate=args.fs)
    rir = generate_rir(room, args.source, args.mic, args.order)
    if args.out:
        save_rir_text(args.out, rir)
    else:
        for delay, amp in rir.taps:
            print(f"{delay} {amp!r}")
    return EXIT_OK


def _cmd_den(args) -> int:
    clean = _load_wav(args.clean)
    augmented = _load_wav(args.aug)
    room = RoomSpec(
        (1.0, 1.0, 1.0), 0.0, speed_of_sound=args.c0, sample_rate=clean.sample_rate
    )
    result = den_normalize(clean, augmented, ImagePath(args.distance, 0), room)
    write_wav(args.out, result.normalized_clean)
    print(f"delay_samples = {result.applied_delay}")
    print(f"gain = {result.applied_gain!r}")
    return EXIT_OK


def _cmd_features(args) -> int:
    signal = _load_wav(args.wav_in)
    cfg = FeatureConfig(num_mel=args.num_mel, fft_size=args.fft_size)
    write_features(args.out, power_mel(signal, cfg))
    return EXIT_OK


def _cmd_schedule_trace(args) -> int:
    grid = np.arange(0.0, args.epochs + 1e-9, args.step)
    lines = schedule_trace_lines(grid, schedule_horizon=args.horizon)
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="ascii") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_verify(args) -> int:
    cfg = None
    manifest = None
    if args.config is not None and args.manifest is not None:
        cfg = override_seed(load_config(args.config), args.seed)
        manifest = _load_manifest(args.manifest)
    report = verify_records(args.records, args.fraction, cfg, manifest)
    for failure in report.failures:
        print(f"FAIL {failure}", file=sys.stderr)
    print(
        f"verified {report.checked} records "
        f"({report.regenerated} regenerated), {len(report.failures)} failures"
    )
    return EXIT_OK if report.ok else EXIT_VERIFY


_COMMANDS = {
    "serve": _cmd_serve,
    "rir": _cmd_rir,
    "den": _cmd_den,
    "features": _cmd_features,
    "schedule-trace": _cmd_schedule_trace,
    "verify": _cmd_verify,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: cannot read input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (EOFError, PermissionError, IsADirectoryError) as exc:
        print(f"error: cannot read input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO


def console_main() -> None:
    raise SystemExit(main())
