"""Command line entry point: ``chandiff <subcommand> --config <path> [--seed N] [--out PATH]``.

Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure
(including any trial with a non-finite metric).
"""

import argparse
import csv
import sys
from dataclasses import replace

import numpy as np

from . import harness
from .config import load_config, validate
from .denoiser import train_denoiser
from .errors import ChandiffError, ConfigError
from .estimator import train_estimator
from .schedule import dump
from .serialization import write_model

SUBCOMMANDS = ("train-denoiser", "train-estimator", "eval-slow", "eval-fast", "estimate-csi",
               "sweep", "schedule-dump")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(1)


def build_parser():
    parser = _Parser(prog="chandiff", description="Channel-denoising diffusion experiments.")
    sub = parser.add_subparsers(dest="command", metavar="subcommand", parser_class=_Parser)
    sub.required = True
    helps = {
        "train-denoiser": "train a network denoiser and save it",
        "train-estimator": "train an SNR or phase estimator and save it",
        "eval-slow": "sweep with the slow-fading sampler only",
        "eval-fast": "sweep with the water-filling sampler (fill and nofill)",
        "estimate-csi": "Monte-Carlo pilot-free alpha/phase estimation",
        "sweep": "run the configured sweep",
        "schedule-dump": "write (t, beta) pairs of the noise schedule",
    }
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", required=True, help="YAML config path, or 'default'")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--out", default=None, help="output path")
        if name in ("eval-slow", "eval-fast", "sweep"):
            p.add_argument("--workers", type=int, default=None,
                           help=f"worker processes (env {harness.WORKERS_ENV} wins)")
        if name == "train-estimator":
            p.add_argument("--kind", choices=("snr", "phase"), default="snr")
    return parser


def _write_csv(path, header, rows):
    out = open(path, "w", encoding="utf-8", newline="") if path else sys.stdout
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    finally:
        if path:
            out.close()


def _sweep(cfg, args, schemes=None):
    if schemes is not None:
        cfg.pipeline.schemes = schemes
        validate(cfg)
    out = args.out or cfg.output
    records, failed = harness.run_sweep(cfg, args.workers, out)
    print(f"wrote {len(records)} trials to {out}")
    if failed:
        print(f"{failed} trial(s) failed", file=sys.stderr)
        return 2
    return 0


def _run(args) -> int:
    check_files = args.command not in ("train-denoiser", "train-estimator", "schedule-dump")
    cfg = load_config(args.config, check_files=check_files)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be a 64-bit non-negative integer")
        cfg.seed = args.seed

    if args.command == "schedule-dump":
        t, beta = dump(cfg.schedule.build())
        _write_csv(args.out, ("t", "beta_bar"), zip(t.tolist(), beta.tolist()))
        return 0

    if args.command == "train-denoiser":
        tcfg = cfg.denoiser.training
        if args.seed is not None:
            tcfg = replace(tcfg, seed=args.seed)
        model = train_denoiser(cfg.source.build(), cfg.schedule.build(), tcfg,
                               cfg.source.n_dims, cfg.denoiser.conditioning)
        out = args.out or cfg.resolve(cfg.denoiser.model_path) or "denoiser.model"
        write_model(out, model.mlp, "denoiser", model.conditioning_mode, model.n_labels, model.seed)
        tail = model.loss_curve[-100:]
        print(f"saved denoiser to {out}; final loss {np.mean(tail):.4f}" if len(tail)
              else f"saved denoiser to {out}")
        return 0

    if args.command == "train-estimator":
        tcfg = cfg.estimator.training
        if args.seed is not None:
            tcfg = replace(tcfg, seed=args.seed)
        model = train_estimator(args.kind, cfg.source.build(), tcfg, cfg.source.n_dims,
                                tuple(cfg.estimator.alpha_range))
        default = cfg.estimator.snr_model if args.kind == "snr" else cfg.estimator.phase_model
        out = args.out or cfg.resolve(default) or f"{args.kind}_estimator.model"
        write_model(out, model.mlp, model.role, seed=model.seed)
        print(f"saved {args.kind} estimator to {out}")
        return 0

    if args.command == "estimate-csi":
        cfg.pipeline.pilot_free = True
        models = harness.load_models(cfg)
        rows = harness.run_csi_trials(cfg, models.snr, models.phase)
        _write_csv(args.out, harness.CSI_COLUMNS, rows)
        return 0

    if args.command == "eval-slow":
        return _sweep(cfg, args, ["slow"])
    if args.command == "eval-fast":
        return _sweep(cfg, args, ["fill", "nofill"])
    return _sweep(cfg, args)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"chandiff: config error: {exc}", file=sys.stderr)
        return 1
    except (ChandiffError, OSError, ArithmeticError) as exc:
        print(f"chandiff: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
