"""Command line entry point: ``cachepart <subcommand> [options]``."""
from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from typing import Optional, Sequence

from .config import ConfigError, RunConfig
from .geometry import KiB, color_capacity, color_count
from .harness import (max_slowdown_csv, max_slowdown_from_rows, max_slowdown_table,
                      read_sweep_csv, run_probe, run_strided, sweep)
from .partition import PartitionError


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON run config (see `init`)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="worker processes for sweep cells")
    p.add_argument("--platform", help="preset name: zcu102, rk3568, rk3588, orin")
    p.add_argument("--no-write-streaming", action="store_true",
                   help="disable write streaming at every level")
    p.add_argument("--hw-prefetch", action="store_true", help="enable the next-line L3 prefetcher")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cachepart",
                                 description="Shared-cache partitioning simulator experiments")
    sub = ap.add_subparsers(dest="cmd", required=True)
    for name, helptext in (("init", "write a config with every default filled in"),
                           ("colors", "print the page-color math of the LLC"),
                           ("probe", "coloring probe: pass-2 prefetch miss ratio per size"),
                           ("strided", "strided conflict benchmark under None/Set/Way"),
                           ("sweep", "run the interference grid"),
                           ("report", "max-slowdown table from a sweep CSV")):
        sp = sub.add_parser(name, help=helptext)
        _common(sp)
        if name == "probe":
            sp.add_argument("--sizes-kib", type=int, nargs="*",
                            help="probe sizes in KiB (overrides the config)")
        if name == "report":
            sp.add_argument("--input", help="sweep CSV (default: <out>/sweep.csv)")
    return ap


def load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    cfg = cfg.with_overrides(platform=args.platform, out=args.out, seed=args.seed,
                             threads=args.threads)
    if args.no_write_streaming:
        cfg = cfg.with_overrides(write_streaming=(False, False, False))
    if args.hw_prefetch:
        cfg = cfg.with_overrides(hw_prefetch=True)
    return cfg.validate()


def _write(path: str, text: str):
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write(text)


def cmd_init(cfg: RunConfig, args) -> str:
    text = cfg.to_json()
    if args.config:
        if os.path.exists(args.config):
            raise ConfigError(f"{args.config} exists; init does not overwrite")
        _write(args.config, text)
        return f"wrote {args.config}\n"
    return text


def cmd_colors(cfg: RunConfig, args=None) -> str:
    p = cfg.platform_config()
    lines = []
    for _, g in p.levels():
        if g.linear:
            n = color_count(g, p.page_size)
            lines.append(f"{g.name} {g.capacity // KiB} KiB {g.n_ways}-way: "
                         f"{n} colors × {color_capacity(g, p.page_size) // KiB} KiB")
        else:
            lines.append(f"{g.name} {g.capacity // KiB} KiB {g.n_ways}-way: not colorable "
                         f"(hashed index)")
    return f"{p.name}\n" + "\n".join(lines) + "\n"


def cmd_probe(cfg: RunConfig, args) -> str:
    p = cfg.platform_config()
    sizes = args.sizes_kib if getattr(args, "sizes_kib", None) is not None else cfg.probe_sizes_kib
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["size_kib", "misses", "max_misses", "miss_ratio"])
    for pt in run_probe(p, [s * KiB for s in sizes], settings=cfg.settings()):
        w.writerow([pt.size // KiB, pt.misses, pt.max_misses, f"{pt.miss_ratio:.6f}"])
    _write(os.path.join(cfg.out, "probe.csv"), buf.getvalue())
    return buf.getvalue()


def cmd_strided(cfg: RunConfig, args) -> str:
    p = cfg.platform_config()
    pts = run_strided(p, cfg.strided_sets, repetitions=cfg.strided_repetitions,
                      settings=cfg.settings())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sets", "mode", "cycles", "l3_misses"])
    for pt in pts:
        w.writerow([pt.sets, pt.mode, pt.cycles, pt.l3_misses])
    _write(os.path.join(cfg.out, "strided.csv"), buf.getvalue())
    way = {pt.sets: pt.cycles for pt in pts if pt.mode == "Way"}
    note = ""
    if 256 in way and 384 in way:
        rel = "<" if way[384] < way[256] else ">="
        note = f"# way-partitioned cycles: 384 sets {rel} 256 sets ({way[384]} vs {way[256]})\n"
    return buf.getvalue() + note


def cmd_sweep(cfg: RunConfig, args) -> str:
    grid = cfg.sweep_grid()
    for warn in grid.check_span():
        print(f"warning: {warn}", file=sys.stderr)
    report = sweep(grid, cfg.settings(), threads=cfg.threads)
    _write(os.path.join(cfg.out, "sweep.csv"), report.to_csv())
    _write(os.path.join(cfg.out, "series.csv"), report.series_csv())
    _write(os.path.join(cfg.out, "max_slowdown.csv"), max_slowdown_csv(max_slowdown_table(report)))
    return f"{len(report.rows) + 1} rows -> {os.path.join(cfg.out, 'sweep.csv')}\n"


def cmd_report(cfg: RunConfig, args) -> str:
    path = getattr(args, "input", None) or os.path.join(cfg.out, "sweep.csv")
    with open(path) as f:
        rows = read_sweep_csv(f.read())
    text = max_slowdown_csv(max_slowdown_from_rows(rows))
    _write(os.path.join(cfg.out, "max_slowdown.csv"), text)
    return text


COMMANDS = {"init": cmd_init, "colors": cmd_colors, "probe": cmd_probe,
            "strided": cmd_strided, "sweep": cmd_sweep, "report": cmd_report}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.cmd == "init":
            cfg = RunConfig().with_overrides(platform=args.platform, out=args.out, seed=args.seed,
                                             threads=args.threads)
            if args.no_write_streaming:
                cfg = cfg.with_overrides(write_streaming=(False, False, False))
            if args.hw_prefetch:
                cfg = cfg.with_overrides(hw_prefetch=True)
            cfg.validate()
        else:
            cfg = load_config(args)
        sys.stdout.write(COMMANDS[args.cmd](cfg, args))
    except (ConfigError, PartitionError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
