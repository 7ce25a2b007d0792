"""Command line entry point: ``consumax <command> --config PATH``.

Exit status is 0 when every check passes, 2 when a check fails and 1 on an
execution error.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import harness
from .errors import ConsumaxError

EXIT_OK, EXIT_ERROR, EXIT_CHECK = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="consumax", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="TOML experiment file")
    common.add_argument("--out", default=None, help="output directory (overrides [output] dir)")
    common.add_argument("--allow-outside-hypotheses", action="store_true",
                        help="run even when analytic hypotheses fail; outputs are marked exploratory")
    common.add_argument("-v", "--verbose", action="store_true")
    sub.add_parser("run", parents=[common], help="single run with diagnostics")
    sw = sub.add_parser("sweep-eps", parents=[common], help="regularization sweep")
    sw.add_argument("--eps", type=float, nargs="+", default=None, help="decreasing eps list")
    sub.add_parser("continuity", parents=[common], help="continuity study at t = 0")
    ve = sub.add_parser("verify", parents=[common], help="closed-form pointwise certification")
    ve.add_argument("--s-points", type=int, default=10_000)
    rf = sub.add_parser("refine", parents=[common], help="grid/time-step refinement study")
    rf.add_argument("--levels", type=int, default=None)
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = harness.load_config(args.config, args.allow_outside_hypotheses)
        if args.command == "run":
            rep, _ = harness.cmd_run(cfg, args.out)
        elif args.command == "sweep-eps":
            rep, _ = harness.cmd_sweep_eps(cfg, args.eps, args.out)
        elif args.command == "continuity":
            rep, _, _ = harness.cmd_continuity(cfg, args.out)
        elif args.command == "verify":
            rep, text = harness.cmd_verify(cfg, args.s_points, args.out)
            print(text)
        else:
            rep, _ = harness.cmd_refine(cfg, args.levels, args.out)
    except (ConsumaxError, OSError) as exc:
        where = f" (t={exc.t:.6g})" if getattr(exc, "t", None) is not None else ""
        print(f"error: {exc}{where}", file=sys.stderr)
        return EXIT_ERROR
    print(rep.as_text())
    return EXIT_OK if rep.passed else EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
