"""Command-line entry point: ``kinfluid simulate | heat-kernel | wasserstein | fit``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import PRESET_NAMES, ConfigError, load_config, preset
from .fitting import fit_decay_rate
from .fluid import BlowUpError
from .heat_kernel import bound_check
from .transport import Atoms, TransportError, wasserstein_exact

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP, EXIT_IO = 0, 2, 3, 4
THREADS_ENV = "KINFLUID_THREADS"

log = logging.getLogger("kinetic_fluid")


def _float_list(text: str) -> list[float]:
    out = []
    for tok in text.replace(",", " ").split():
        out.append(float("inf") if tok.lower() in ("inf", "infinity") else float(tok))
    return out


def _env_threads() -> int | None:
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV}={raw!r} is not an integer") from None


def cmd_simulate(args) -> int:
    from .simulate import run

    if args.config:
        cfg = load_config(args.config, args.preset)
    elif args.preset:
        cfg = preset(args.preset)
    else:
        raise ConfigError("simulate needs --config or --preset")
    if args.seed is not None:
        cfg.seed = args.seed
    threads = args.threads if args.threads is not None else _env_threads()
    if threads is not None:
        if threads < 1:
            raise ConfigError("threads: must be >= 1")
        cfg.threads = threads
    out = args.out or cfg.output.dir or "."
    try:
        result = run(cfg, out, log_every=args.log_every)
    except BlowUpError as exc:
        print(f"blow-up: {exc} (last valid t={exc.t:g}); partial output in {out}", file=sys.stderr)
        return EXIT_BLOWUP
    s = result.summary
    print(f"wrote {result.timeseries_path} and {result.summary_path} ({s['runtime_s']:.1f} s)")
    for name, fit in s["fits"].items():
        if fit:
            print(f"  {name}: rate={fit['rate']:.4g} R2={fit['r_squared']:.4f}")
    return EXIT_OK


def cmd_heat_kernel(args) -> int:
    report = bound_check(args.t_grid, args.p_list, args.d, args.n)
    path = Path(args.out)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "t", "p", "measured", "envelope", "ratio"])
        for r in report.rows:
            writer.writerow([r["kind"], repr(float(r["t"])), r["p"], repr(float(r["measured"])), repr(float(r["envelope"])), repr(float(r["ratio"]))])
    for (kind, p), ok in report.no_growth.items():
        rate, r2 = report.tail_rate[(kind, p)]
        print(f"{kind} p={p:g}: sup ratio={report.sup_ratio[(kind, p)]:.4g} "
              f"{'bounded' if ok else 'GROWING'} tail rate={rate:.4g} (R2={r2:.4f})")
    return EXIT_OK


def cmd_wasserstein(args) -> int:
    a, b = Atoms.load(args.a), Atoms.load(args.b)
    print(repr(wasserstein_exact(a, b, args.p)))
    return EXIT_OK


def cmd_fit(args) -> int:
    with open(args.csv, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or args.column not in rows[0]:
        raise ConfigError(f"column {args.column!r} not found in {args.csv}")
    t = np.array([float(r["t"]) for r in rows])
    y = np.array([float(r[args.column]) for r in rows])
    keep = (t >= args.tmin) & np.isfinite(y)
    if args.tmax is not None:
        keep &= t <= args.tmax
    rate, r2 = fit_decay_rate(t[keep], np.maximum(y[keep], args.floor))
    print(json.dumps({"column": args.column, "rate": rate, "r_squared": r2, "samples": int(keep.sum())}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kinfluid", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="integrate the coupled particle/fluid system")
    sim.add_argument("--config", help="YAML config file")
    sim.add_argument("--preset", help=f"base preset ({', '.join(PRESET_NAMES)})")
    sim.add_argument("--out", help="output directory")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--threads", type=int, help=f"FFT worker threads (default ${THREADS_ENV})")
    sim.add_argument("--log-every", type=int, default=0, help="progress log interval in steps")
    sim.set_defaults(func=cmd_simulate)

    hk = sub.add_parser("heat-kernel", help="measured heat-kernel norms against their envelopes")
    hk.add_argument("--d", type=int, required=True)
    hk.add_argument("--p-list", type=_float_list, required=True, help='e.g. "1,2,4,inf"')
    hk.add_argument("--t-grid", type=_float_list, required=True, help='e.g. "0.25,0.5,1,2,4,8"')
    hk.add_argument("--n", type=int, help="quadrature points per axis")
    hk.add_argument("--out", required=True)
    hk.set_defaults(func=cmd_heat_kernel)

    ws = sub.add_parser("wasserstein", help="exact W_p between two atom files")
    ws.add_argument("--a", required=True)
    ws.add_argument("--b", required=True)
    ws.add_argument("--p", type=lambda s: _float_list(s)[0], required=True)
    ws.set_defaults(func=cmd_wasserstein)

    fit = sub.add_parser("fit", help="exponential decay rate of a CSV column")
    fit.add_argument("--csv", required=True)
    fit.add_argument("--column", required=True)
    fit.add_argument("--tmin", type=float, default=0.0)
    fit.add_argument("--tmax", type=float)
    fit.add_argument("--floor", type=float, default=1e-14)
    fit.set_defaults(func=cmd_fit)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (TransportError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
