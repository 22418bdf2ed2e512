"""Command-line entry point ``pnkit``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import harness
from .errors import ConfigError, PnkitError
from .linalg import write_coo
from .mesh import Scheme
from .moments import flux_set

log = logging.getLogger("pnkit")


def _cmd_run(args) -> int:
    cfg = harness.load_config(args.config)
    spec = harness.resolve_model(cfg)
    out = Path(args.out)
    (out / "fields").mkdir(parents=True, exist_ok=True)
    failures = 0
    rows = []
    for eps in cfg.epsilons:
        for scheme in cfg.schemes:
            for cells in cfg.cells:
                try:
                    state = harness.run_single(cfg, spec, scheme, eps, cells)
                except PnkitError as exc:
                    log.error("%s eps=%g cells=%d failed: %s", scheme.value, eps, cells, exc)
                    failures += 1
                    continue
                name = f"{spec.name}_{Scheme(scheme).value}_eps{eps:g}_{cells}.csv"
                harness.write_field(state, out / "fields" / name)
                rows.append([spec.name, Scheme(scheme).value, repr(eps), cells,
                             repr(1.0 / cells), repr(state.total_mass()), f"fields/{name}"])
    with open(out / "runs.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "scheme", "epsilon", "cells", "h", "mass", "field"])
        w.writerows(rows)
    return 1 if failures else 0


def _cmd_convergence(args) -> int:
    cfg = harness.load_config(args.config)
    report = harness.run_convergence(cfg, desk=args.desk)
    for path in harness.emit(report, args.out, svg=not args.no_svg):
        log.info("wrote %s", path)
    return 0


def _cmd_limit(args) -> int:
    cfg = harness.load_config(args.config)
    report = harness.limit_check(cfg, desk=args.desk)
    log.info("wrote %s", harness.emit_limit(report, args.out))
    return 0


def _cmd_matrices(args) -> int:
    fs = flux_set(args.geometry, args.N)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    names = {"slab": ["B"], "planeparallel": ["B1", "B3"], "full3d": ["A1", "A2", "A3"]}[args.geometry]
    if len(names) == 1:
        write_coo(fs.matrices[0], out, one_based=args.one_based)
        return 0
    for name, M in zip(names, fs.matrices):
        path = out.with_name(f"{out.stem}_{name}{out.suffix or '.csv'}")
        write_coo(M, path, one_based=args.one_based)
        log.info("wrote %s", path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pnkit", description="P_N moment solvers and convergence studies")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run every configured row and dump final densities")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.set_defaults(func=_cmd_run)

    c = sub.add_parser("convergence", help="errors against a fine DG reference")
    c.add_argument("--config", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--desk", action="store_true", help="halve the reference resolution")
    c.add_argument("--no-svg", action="store_true")
    c.set_defaults(func=_cmd_convergence)

    m = sub.add_parser("matrices", help="write flux matrices as row,col,value CSV")
    m.add_argument("--geometry", required=True, choices=["slab", "planeparallel", "full3d"])
    m.add_argument("--N", type=int, required=True)
    m.add_argument("--out", required=True)
    m.add_argument("--one-based", action="store_true")
    m.set_defaults(func=_cmd_matrices)

    lc = sub.add_parser("limit-check", help="compare runs with the diffusion-limit solution")
    lc.add_argument("--config", required=True)
    lc.add_argument("--out", required=True)
    lc.add_argument("--desk", action="store_true")
    lc.set_defaults(func=_cmd_limit)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"pnkit: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except (PnkitError, OSError) as exc:
        print(f"pnkit: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
