"""Command-line entry point: ``simulate`` sweeps and ``analyze`` helpers."""

from __future__ import annotations

import argparse
import logging
import sys

from .capacity import (
    design_lpf,
    equivalent_channel_span,
    min_snr_per_bit,
    shaped_psd,
    snr_variance_report,
)
from .config import SystemConfig, load_config, parse_values
from .harness import RunSpec, sweep

MODE_FLAGS = {"joint": "joint-mimo", "nearcap": "near-capacity"}


def _snr_list(text: str) -> tuple:
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad SNR list {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("SNR list is empty")
    return vals


def _positive_int(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {n}")
    return n


def _seed(text: str) -> int:
    n = int(text, 0)
    if not 0 <= n < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tcofdm", description="Turbo-coded MIMO-OFDM link simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a Monte Carlo BER sweep")
    s.add_argument("--config", help="key=value system configuration file")
    s.add_argument("--mode", choices=sorted(MODE_FLAGS))
    s.add_argument("--receiver", choices=["ideal", "practical"])
    s.add_argument("--snr", type=_snr_list, required=True, help="comma-separated SNR per bit, dB")
    s.add_argument("--frames", type=_positive_int, required=True)
    s.add_argument("--seed", type=_seed, default=0)
    s.add_argument("--workers", type=_positive_int, default=1)
    s.add_argument("--out", help="CSV results file")
    s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one configuration field (repeatable)")
    s.add_argument("--timing", action="store_true",
                   help="write wall-clock seconds to the CSV (breaks byte reproducibility)")

    a = sub.add_parser("analyze", help="closed-form capacity, filter and SNR-variance results")
    g = a.add_mutually_exclusive_group(required=True)
    g.add_argument("--capacity", type=float, metavar="C", help="bits per transmission")
    g.add_argument("--lpf", nargs=2, type=float, metavar=("CUTOFF", "TRANSITION"),
                   help="radians; prints length, DC gain and -40 dB bandwidth")
    g.add_argument("--snr-variance", nargs=3, type=float, metavar=("LH", "LD", "SIGMA_F_SQ"))
    a.add_argument("--psd-out", help="with --lpf, write the PSD curve here")
    a.add_argument("--channel-taps", type=int, default=10, help="with --lpf, physical channel span")
    return p


def _resolve_config(args) -> SystemConfig:
    cfg = load_config(args.config) if args.config else SystemConfig()
    changes = parse_values("\n".join(args.set))
    if args.mode:
        changes["mode"] = MODE_FLAGS[args.mode]
    if args.receiver:
        changes["receiver"] = args.receiver
    return cfg.replace(**changes) if changes else cfg


def _simulate(args) -> int:
    try:
        cfg = _resolve_config(args)
        spec = RunSpec(cfg, args.snr, args.frames, args.seed, args.workers, args.out, args.timing)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    rows = sweep(spec)
    failures = sum(r.failures for r in rows)
    if failures:
        print(f"{failures} frame(s) hit numerical errors and were excluded", file=sys.stderr)
    return 0


def _analyze(args) -> int:
    if args.capacity is not None:
        pt = min_snr_per_bit(args.capacity)
        print(f"C={pt.C:g} bits  snr_b={pt.snr_b:.6e}  ({pt.snr_b_db:.4f} dB)")
    elif args.lpf is not None:
        design = design_lpf(*args.lpf)
        dc = abs(design.response(0.0)[0])
        psd = shaped_psd(design, sigma_s_sq=1.0, Ts=1.0)
        print(f"length={len(design)}  dc_gain={dc:.6f}  bandwidth_40dB={psd.bandwidth:.6f}/Ts  "
              f"equivalent_span={equivalent_channel_span(len(design), args.channel_taps)}")
        if args.psd_out:
            with open(args.psd_out, "w", encoding="utf-8") as fh:
                fh.write(psd.to_text())
    else:
        lh, ld, sf = args.snr_variance
        rep = snr_variance_report(int(lh), int(ld), sf)
        print(f"sigma1_sq={rep.sigma1_sq:.6e}  sigma2_sq={rep.sigma2_sq:.6e}  ratio={rep.ratio:.2f}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "simulate":
            return _simulate(args)
        try:
            return _analyze(args)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
    except Exception as exc:
        logging.getLogger(__name__).debug("run failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
