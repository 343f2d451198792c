"""Command-line entry point: ``mbinv {run,validate,oracle} <config>``."""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import harness


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mbinv", description="Minibatch inventory learning experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (("run", "run the experiment and write CSV output"),
                       ("validate", "check the configuration and stepsize admissibility"),
                       ("oracle", "print the optimal level and cost")):
        s = sub.add_parser(name, help=text)
        s.add_argument("config", help="YAML or JSON configuration file")
        s.add_argument("--seed", type=int, default=None, help="override the configured seed")
        if name == "run":
            s.add_argument("--out", default=None, help="CSV path (overrides 'output')")
            s.add_argument("--curves", action="store_true", help="also write per-period regret curves")
            s.add_argument("--jobs", type=int, default=1, help="worker processes")
            s.add_argument("--no-timing", action="store_true",
                           help="write nan for wall-clock time so output is reproducible byte for byte")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = harness.load_config(args.config)
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2 ** 64:
            raise SystemExit("--seed must be an unsigned 64-bit integer")
        cfg.seed = args.seed

    if args.command == "validate":
        msgs = harness.validate(cfg)
        for m in msgs:
            print(f"warning: {m}")
        print("configuration ok" + (f" ({len(msgs)} warning(s))" if msgs else ""))
        return 0

    if args.command == "oracle":
        app = harness.build_app(cfg)
        y, c = harness._oracle_for(cfg, app)
        print("y* = " + " ".join(f"{v:.6g}" for v in np.atleast_1d(y)))
        print(f"C* = {c:.6g}")
        return 0

    out = args.out or cfg.output
    if out is None:
        raise SystemExit("no output path: set 'output' in the config or pass --out")
    if args.no_timing:
        cfg.timing = False
    curves = args.curves or cfg.curves
    for m in harness.validate(cfg):
        logging.getLogger("mbinv").warning(m)
    result = harness.run_experiment(cfg, jobs=max(1, args.jobs), curves=curves)
    paths = harness.emit_csv(result, out, curves=curves)
    for p in paths:
        print(p)
    if result.failures:
        print(f"{len(result.failures)} replication(s) failed; see log", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
