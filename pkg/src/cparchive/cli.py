"""Command line front end: serve, import, stat, bench-policies, analyze."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Optional, Sequence

from . import analyze, bench
from .errors import CarvPathError
from .journal import read_journal
from .toolkit import DEFAULT_CHUNK, Instance, MountClient, import_raw, load_config, serve


def _instance_api(config):
    """Talk to a mounted instance if one is up, otherwise open the archive directly."""
    mp = config.mount_point
    if mp is not None and os.path.exists(os.path.join(mp, "mattockfs.ctl")):
        return None, MountClient(mp)
    inst = Instance(config)
    return inst, inst.gateway


def cmd_serve(args) -> int:
    serve(load_config(args.config))
    return 0


def cmd_import(args) -> int:
    inst, api = _instance_api(load_config(args.config))
    try:
        token = import_raw(api, args.source, args.actor, args.mime, args.ext, chunk_size=args.chunk_size)
    finally:
        if inst is not None:
            inst.close()
    print(token)
    return 0


def cmd_stat(args) -> int:
    inst, api = _instance_api(load_config(args.config))
    try:
        print(f"full_archive={api.getxattr('/mattockfs.ctl', 'full_archive')}")
        print(f"fadvise_status={api.getxattr('/mattockfs.ctl', 'fadvise_status')}")
    finally:
        if inst is not None:
            inst.close()
    return 0


def cmd_bench(args) -> int:
    policies = args.policy
    sizes = [int(s) for s in args.sizes.split(",")]
    results = bench.bench_policies(policies, sizes, seed=args.seed, verify=not args.no_verify)
    sys.stdout.write(bench.to_csv(results))
    bad = [r for r in results if not r.verified]
    if bad:
        print(f"error: pick order differs from oracle for {len(bad)} run(s)", file=sys.stderr)
        return 1
    return 0


def _events(args):
    if args.journal:
        return analyze.events_from_journal(list(read_journal(args.input)))
    return analyze.load_events(args.input)


def _print_hist(name: str, hist: analyze.Histogram) -> None:
    for lo, hi, density in hist.rows():
        if density:
            print(f"{name},{lo:.2f},{hi:.2f},{density:.6g}")


def cmd_analyze(args) -> int:
    events = _events(args)
    if args.report == "cache":
        trace = analyze.perfect_cache(events)
        print("t,bytes")
        for t, occ in trace.samples:
            print(f"{t:g},{occ}")
        print(f"# peak={trace.peak}")
        print("histogram,log10_lo,log10_hi,density")
        _print_hist("cache", analyze.cache_histogram(trace))
    elif args.report == "timing":
        print("histogram,log10_lo,log10_hi,density")
        for kind, pair in analyze.timing_densities(events).items():
            for weighting in ("by_count", "by_volume"):
                _print_hist(f"{kind}_{weighting}", pair[weighting])
    else:
        print("producer,consumer,count,bytes")
        for (src, dst), (count, volume) in analyze.flow_matrix(events).items():
            print(f"{src},{dst},{count},{volume}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cparchive", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run an instance (mounted if mount_point is configured)")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("import", help="import a raw evidence file")
    p.add_argument("--config", required=True)
    p.add_argument("source")
    p.add_argument("--actor", default="ingest")
    p.add_argument("--mime", default="application/octet-stream")
    p.add_argument("--ext", default="raw")
    p.add_argument("--chunk-size", type=int, default=DEFAULT_CHUNK)
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("stat", help="print archive wide attributes")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_stat)

    p = sub.add_parser("bench-policies", help="time job picking at several set sizes")
    p.add_argument("policy", nargs="+")
    p.add_argument("--sizes", default="10,100,1000")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-verify", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("analyze", help="perfect-cache, timing and flow reports")
    p.add_argument("report", choices=("cache", "timing", "flows"))
    p.add_argument("input", help="timing event log (or provenance journal with --journal)")
    p.add_argument("--journal", action="store_true")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (CarvPathError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
