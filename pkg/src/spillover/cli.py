"""Command-line entry point: ``spillover <subcommand> --config run.ini``."""
from __future__ import annotations

import argparse
import logging
import sys

from spillover.config import ConfigError, RunConfig, load_config, with_overrides


def _global_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", required=False, help="INI run configuration")
    p.add_argument("--seed", type=int, help="master seed (overrides run.seed)")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--threads", type=int, help="worker threads for posterior draws")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = argparse.ArgumentParser(prog="spillover", description=__doc__, parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("identify", parents=[common], help="decompose surprises into policy and information shocks")
    est = sub.add_parser("estimate", parents=[common], help="run identification and the configured engines")
    est.add_argument("--no-svg", action="store_true", help="skip fan-chart rendering")
    cmp_ = sub.add_parser("compare-variants", parents=[common], help="policy vs information vs raw surprise")
    cmp_.add_argument("--engine", choices=("bvar", "local_projection"))
    cmp_.add_argument("--no-svg", action="store_true")
    rot = sub.add_parser("rotation-bands", parents=[common], help="bands integrating over admissible rotations")
    rot.add_argument("--n-rot", type=int)
    rot.add_argument("--no-svg", action="store_true")
    sub.add_parser("simulate", parents=[common], help="write a synthetic panel and surprises")
    return parser


def _config(args) -> RunConfig:
    if not args.config:
        raise ConfigError("--config is required")
    cfg = load_config(args.config)
    return with_overrides(cfg, seed=args.seed, out_dir=args.out, threads=args.threads)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    # imported late so `--help` stays fast
    from spillover import pipeline

    try:
        cfg = _config(args)
        if args.command == "identify":
            d, _ = pipeline.run_identify(cfg)
            if d is not None:
                print(f"theta_star={d.theta_star:.6f} admissible={d.admissible.size}")
        elif args.command == "estimate":
            res = pipeline.run_pipeline(cfg, svg=not args.no_svg)
            print("\n".join(str(f) for f in res.files))
        elif args.command == "compare-variants":
            pipeline.compare_shock_variants(cfg, args.engine, svg=not args.no_svg)
        elif args.command == "rotation-bands":
            if args.n_rot:
                cfg = with_overrides(cfg, n_rot=args.n_rot)
            pipeline.run_rotation_bands(cfg, svg=not args.no_svg)
        elif args.command == "simulate":
            pipeline.run_simulate(cfg)
    except ConfigError as exc:
        print(f"error: ConfigError: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # surface the named cause, nonzero exit
        if args.verbose:
            raise
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
