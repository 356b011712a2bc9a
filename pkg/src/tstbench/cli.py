"""Command line entry point: ``tstbench null|scan <config>`` and ``tstbench report <dir>``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .config import load_config
from .errors import ConfigError, MissingCache, TstbenchError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PARTIAL = 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tstbench", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", type=Path, help="experiment config (JSON)")
        sp.add_argument("--threads", type=int, default=None, help="worker threads (default: TSTBENCH_THREADS or 1)")
        sp.add_argument("--output", type=Path, default=None, help="results directory (overrides output_dir)")
        sp.add_argument("--seed", type=int, default=None, help="override master_seed")

    common(sub.add_parser("null", help="estimate and cache null distributions"))
    scan = sub.add_parser("scan", help="bisect epsilon bounds for every configured row")
    common(scan)
    scan.add_argument("--resume", action="store_true", help="skip rows already completed in the manifest")
    rep = sub.add_parser("report", help="write histogram and eCDF data for cached nulls")
    rep.add_argument("results", type=Path, help="results directory of a previous run")
    rep.add_argument("--bins", type=int, default=50)
    return p


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("/master_seed: must be non-negative")
        cfg = cfg.with_seed(args.seed)
    if args.threads is not None and args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    from . import pipeline

    try:
        if args.command == "report":
            for path in pipeline.cmd_report(args.results, args.bins):
                print(path)
            return EXIT_OK
        cfg = _load(args)
        if args.command == "null":
            rows = pipeline.cmd_null(cfg, args.output, args.threads)
            print("metric\tn\titerations\tt68\tt95\tt99\tcached")
            for r in rows:
                print(
                    f"{r['metric']}\t{r['n']}\t{r['iterations']}\t"
                    f"{r['t68']:.6g}\t{r['t95']:.6g}\t{r['t99']:.6g}\t{'yes' if r['cache_hit'] else 'no'}"
                )
            return EXIT_OK
        rows, failures = pipeline.cmd_scan(cfg, args.output, args.threads, args.resume)
        print(pipeline.results_csv_text(cfg, rows), end="")
        if failures:
            print(f"{failures} row(s) failed; see manifest.json", file=sys.stderr)
            return EXIT_PARTIAL
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingCache as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TstbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
