"""Command line front end.

::

    spodrom decompose --config run.json
    spodrom project   --config run.json
    spodrom train     --config run.json [--seed S]
    spodrom forecast  --config run.json [--dump-snapshot T]
    spodrom pipeline  --config run.json
    spodrom sweep     --config sweep.json [--jobs N]

Exit codes: 0 success, 2 configuration, 3 data, 4 numerical failure,
5 provenance mismatch.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from typing import List, Optional

from threadpoolctl import threadpool_limits

from . import metrics as met
from . import pipeline as pl
from .config import load_config
from .exceptions import ConfigError, SpodRomError

logger = logging.getLogger("spodrom")

COMMANDS = ("decompose", "project", "train", "forecast", "pipeline", "sweep")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spodrom", description="SPOD/POD latent-space emulation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON pipeline configuration")
        p.add_argument("--jobs", type=int, default=1, help="concurrent workers (default 1)")
        p.add_argument("--seed", type=int, default=None, help="override emulator.seed")
        p.add_argument("--dump-snapshot", type=int, default=None, metavar="T",
                       help="write truth/projection/prediction fields for test snapshot T")
        p.add_argument("--single-thread", action="store_true",
                       help="one BLAS thread and --jobs 1, for bit-reproducible runs")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _single_cell(cfg):
    cells = list(cfg.cells())
    if len(cells) != 1:
        raise ConfigError(f"config expands to {len(cells)} cells; use the 'sweep' command")
    return cells[0]


def _run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_overrides(emulator={"seed": args.seed})
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    jobs = 1 if args.single_thread else args.jobs
    t0 = time.perf_counter()
    if args.command == "sweep":
        rows = pl.run_sweep(cfg, n_jobs=jobs, dump_snapshot=args.dump_snapshot)
        print(f"{len(rows)} cells written to {cfg.output_dir / 'errors.csv'}")
        return 0
    cell = _single_cell(cfg)
    pd = pl.prepare_data(cfg)
    if args.command == "decompose":
        b, _ = pl.run_decompose(cfg, pd, cell.kind, jobs)
        extra = f", {b.n_blocks} blocks x {b.n_freq} frequencies" if cell.kind == "spod" else ""
        print(f"{cell.kind} basis: {b.n_modes} modes{extra}")
    elif args.command == "project":
        b, bh = pl.load_basis_stage(cfg, pd, cell.kind)
        rb, a_tr, a_te, _ = pl.run_project(cfg, pd, b, bh, cell)
        print(f"coefficients: train {a_tr.values.shape}, test {a_te.values.shape}")
    elif args.command == "train":
        b, bh = pl.load_basis_stage(cfg, pd, cell.kind)
        _, a_tr, a_te, ch = pl.load_coeffs_stage(cfg, cell, b, bh)
        ens, _ = pl.run_train(cfg, cell, a_tr, a_te, ch, jobs)
        print(f"trained {ens.n_networks} networks")
    elif args.command == "forecast":
        b, bh = pl.load_basis_stage(cfg, pd, cell.kind)
        rb, _, a_te, ch = pl.load_coeffs_stage(cfg, cell, b, bh)
        ens, mh = pl.load_model_stage(cfg, cell, ch)
        rep = pl.run_forecast(cfg, pd, b, rb, cell, ens, a_te, mh, args.dump_snapshot)
        _print_report(rep)
    else:  # pipeline
        row = pl.run_cell(cfg, pd, cell, jobs, args.dump_snapshot)
        met.write_errors_csv(cfg.output_dir / "errors.csv", [row], append=False)
        _print_report(row["_report"])
    logger.info("%s finished in %.1fs", args.command, time.perf_counter() - t0)
    return 0


def _print_report(rep: met.ErrorReport) -> None:
    for kind in ("projection", "learning", "total"):
        s = getattr(rep, kind)
        print(f"{kind:>10}: L1 {s['L1']:.3e}  L2 {s['L2']:.3e}  Linf {s['Linf']:.3e}")


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.single_thread:
            with threadpool_limits(limits=1):
                return _run(args)
        return _run(args)
    except SpodRomError as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
