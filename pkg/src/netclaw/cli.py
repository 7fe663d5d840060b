"""Command line entry point: ``netclaw run|converge|diamond``."""

from __future__ import annotations

import argparse
import os
import sys

from .errors import ValidationError
from .network import parse_network
from .sim_driver import (
    SimConfig,
    convergence_study,
    diamond_run,
    extract_shocks,
    run_simulation,
    write_snapshots,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_STRICT_TVD = 3


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline=""), True


def _summary(res, label=""):
    steps = res.diagnostics.steps
    print(
        f"{label}steps={res.steps} reconstruction steps 1/2/3 = {steps[1]}/{steps[2]}/{steps[3]} "
        f"clamped={res.diagnostics.clamped} inflow={res.inflow:.12g} outflow={res.outflow:.12g} "
        f"audit={res.audit_error():.3e}",
        file=sys.stderr,
    )


def cmd_run(args) -> int:
    try:
        with open(args.network, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: cannot read network file: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    net = parse_network(text)
    cfg = SimConfig(
        net,
        dt=args.dt,
        t_final=args.tfinal,
        snapshot_every=args.snapshot_every,
        h=args.h,
        d=args.d,
        workers=args.workers,
        strict_tvd=args.strict_tvd,
    )
    res = run_simulation(cfg)
    sink, close = _open_out(args.out)
    try:
        write_snapshots(res.snapshots, sink)
    finally:
        if close:
            sink.close()
    _summary(res)
    if args.strict_tvd and res.diagnostics.failsafe:
        print("error: fail-safe reconstruction was needed (--strict-tvd)", file=sys.stderr)
        return EXIT_STRICT_TVD
    return EXIT_OK


def cmd_converge(args) -> int:
    ks = list(range(args.kmin, args.kmax + 1))
    res = convergence_study(ks, args.kref, args.h, args.d, args.tfinal, workers=args.workers)
    sink, close = _open_out(args.out)
    try:
        sink.write("k,dt,linf,l2\n")
        for r in res.rows:
            sink.write("%d,%.17g,%.17g,%.17g\n" % (r.k, r.dt, r.linf, r.l2))
    finally:
        if close:
            sink.close()
    if res.order_l2 is not None:
        print(f"fitted order: Linf {res.order_linf:.3f}, L2 {res.order_l2:.3f}", file=sys.stderr)
    return EXIT_OK


def cmd_diamond(args) -> int:
    scales = [float(s) for s in args.scales.split(",")]
    if args.out:
        os.makedirs(args.out, exist_ok=True)
    failsafe = 0
    for s in scales:
        res = diamond_run(s, args.tfinal, args.workers, args.snapshot_every)
        failsafe += res.diagnostics.failsafe
        _summary(res, label=f"s={s:g}: ")
        if args.out:
            with open(os.path.join(args.out, f"diamond_s{s:g}.csv"), "w", encoding="utf-8", newline="") as fh:
                write_snapshots(res.snapshots, fh)
        for eid, fld in res.fields.items():
            shocks = extract_shocks(fld.x, fld.u, fld.d)
            desc = ", ".join(f"x={k.position:.4f} (jump {k.strength:.3f})" for k in shocks) or "none"
            print(f"s={s:g} edge {eid}: shocks {desc}")
    if args.strict_tvd and failsafe:
        print("error: fail-safe reconstruction was needed (--strict-tvd)", file=sys.stderr)
        return EXIT_STRICT_TVD
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="netclaw", description="Particle simulation of LWR traffic on road networks.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a network file and write particle snapshots as CSV")
    r.add_argument("--network", required=True, help="network description file")
    r.add_argument("--dt", type=float, default=None, help="synchronization step (default 0.8 of the bound)")
    r.add_argument("--tfinal", type=float, default=1.0)
    r.add_argument("--h", type=float, default=None, help="override particle spacing on every edge")
    r.add_argument("--d", type=float, default=None, help="override shock insertion distance on every edge")
    r.add_argument("--snapshot-every", type=float, default=None)
    r.add_argument("--out", default="-", help="CSV output path ('-' for stdout)")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--strict-tvd", action="store_true", help="exit with status 3 if the fail-safe step ran")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("converge", help="bottleneck convergence study in dt")
    c.add_argument("--kmin", type=int, default=4)
    c.add_argument("--kmax", type=int, default=12)
    c.add_argument("--kref", type=int, default=16)
    c.add_argument("--h", type=float, default=8e-4)
    c.add_argument("--d", type=float, default=2e-4)
    c.add_argument("--tfinal", type=float, default=3.0)
    c.add_argument("--out", default="-")
    c.add_argument("--workers", type=int, default=1)
    c.set_defaults(func=cmd_converge)

    dm = sub.add_parser("diamond", help="diamond network at several resolutions")
    dm.add_argument("--scales", default="1,5,20", help="comma-separated resolution factors s")
    dm.add_argument("--tfinal", type=float, default=2.0)
    dm.add_argument("--snapshot-every", type=float, default=None)
    dm.add_argument("--out", default=None, help="directory for per-scale CSV files")
    dm.add_argument("--workers", type=int, default=1)
    dm.add_argument("--strict-tvd", action="store_true")
    dm.set_defaults(func=cmd_diamond)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
