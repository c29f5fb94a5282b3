"""Command-line entry point (``ringdeph``).

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 partial completion.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .campaign import CampaignConfig, ConfigError, run_campaign, scan_population, write_heatmap
from .report import export_scatter
from .sampler import DephasingPool, SamplerConfig, generate_pool
from .sensitivity import UndefinedSensitivity, delta_grid, load_records, save_records
from .stats import OrthogonalTally, run_trend_suite, write_orthogonal_csv, write_tests_csv
from .synthesis import (OBJECTIVES, Budget, ObjectiveSpec, SearchBounds, load_controllers,
                        save_controllers, synthesize, synthesize_top)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_PARTIAL = 0, 2, 3, 4

log = logging.getLogger("ringdeph")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _common(p: argparse.ArgumentParser, out_flag: str = "--out") -> None:
    p.add_argument("--config", type=Path, help="JSON file supplying defaults for these options")
    p.add_argument("--seed", type=int, default=None, help="global seed (unsigned 64-bit)")
    p.add_argument(out_flag, dest="out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ringdeph", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synthesize", help="optimise bias/readout-time controllers")
    _common(p, "--out-dir")
    p.add_argument("--N", type=int, required=False)
    p.add_argument("--in", dest="in_node", type=int, default=1)
    p.add_argument("--out", dest="out_node", type=int, default=2, help="output node")
    p.add_argument("--objective", choices=OBJECTIVES, default="fidelity")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--top", type=int, default=1, help="number of controllers to keep")
    p.add_argument("--restarts", type=int, default=200)
    p.add_argument("--maxiter", type=int, default=500)
    p.add_argument("--quality", type=float, default=0.98)
    p.add_argument("--pool", type=Path, help="operator pool for the dephasing objective")
    p.add_argument("--count", type=int, default=1000, help="operators used by the dephasing objective")

    p = sub.add_parser("sample-dephasing", help="build a pool of admissible dephasing operators")
    _common(p)
    p.add_argument("--N", type=int, required=False)
    p.add_argument("--pool-target", type=int, default=10_000)
    p.add_argument("--batch-size", type=int, default=4096)
    p.add_argument("--offset", type=int, default=0)

    for name in ("scan", "sensitivity"):
        p = sub.add_parser(name, help="error surfaces and log-sensitivities")
        _common(p)
        p.add_argument("--controllers", type=Path)
        p.add_argument("--pool", type=Path)
        p.add_argument("--grid", type=int, default=1001)
        p.add_argument("--draw", type=int, default=None, help="operators drawn from the pool")
        p.add_argument("--heatmaps", type=int, default=0)
        p.add_argument("--orthogonal-tol", type=float, default=0.05)

    p = sub.add_parser("test", help="correlation tests on sensitivity records")
    _common(p)
    p.add_argument("--records", type=Path, nargs="+")
    p.add_argument("--alpha", type=float, default=0.02, help="significance level")

    p = sub.add_parser("report", help="scatter plots and orthogonal-pair tallies")
    _common(p)
    p.add_argument("--records", type=Path, nargs="+")

    p = sub.add_parser("campaign", help="run the whole pipeline from a config file")
    _common(p)
    return parser


def _apply_config(parser: argparse.ArgumentParser, args: argparse.Namespace, argv) -> None:
    """Fill options not given on the command line from ``--config``."""
    if args.command == "campaign" or args.config is None:
        return
    try:
        data = json.loads(args.config.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    given = {a.split("=")[0] for a in argv if a.startswith("--")}
    sub = parser._subparsers._group_actions[0].choices[args.command]
    flags = {}
    for action in sub._actions:
        for opt in action.option_strings:
            if opt.startswith("--"):
                flags[opt[2:].replace("-", "_")] = (action, opt)
    for key, value in data.items():
        if key not in flags or key in ("config",):
            raise ConfigError(f"unknown config key {key!r} for {args.command}")
        action, opt = flags[key]
        if opt in given:
            continue
        if action.type is Path:
            value = [Path(v) for v in value] if isinstance(value, list) else Path(value)
        setattr(args, action.dest, value)


def _need(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise ConfigError(f"missing required option(s): {', '.join('--' + m for m in missing)}")


def cmd_synthesize(args) -> int:
    _need(args, "N")
    seed = 0 if args.seed is None else args.seed
    obj = ObjectiveSpec(args.objective, args.alpha, args.count)
    pool = DephasingPool.load(args.pool) if args.pool else None
    if obj.kind == "dephasing" and pool is None:
        raise ConfigError("--pool is required for the dephasing objective")
    budget = Budget(restarts=args.restarts, maxiter=args.maxiter)
    transfer = (args.N, args.in_node, args.out_node)
    if args.top == 1:
        ctrls = [synthesize(transfer, obj, budget, SearchBounds(), seed, pool, jobs=args.jobs)]
    else:
        ctrls = synthesize_top(transfer, obj, args.top, budget, SearchBounds(), seed, pool,
                               jobs=args.jobs, quality=args.quality)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / f"controllers_{obj.kind}_N{args.N}_{args.in_node}-{args.out_node}.jsonl"
    save_controllers(ctrls, path)
    best = ctrls[0]
    print(f"{len(ctrls)} controller(s) -> {path}")
    print(f"first: e(T)={best.nominal_error:.3e} objective={best.achieved_objective:.6f} "
          f"T={best.spec.T:.4f}")
    return EXIT_OK


def cmd_sample(args) -> int:
    _need(args, "N")
    cfg = SamplerConfig(args.N, args.pool_target, args.batch_size, args.offset)
    pool = generate_pool(cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / f"pool_N{args.N}.jsonl"
    pool.save(path)
    s = pool.stats
    print(f"{s['accepted']} of {s['candidates']} candidates accepted "
          f"({100 * s['acceptance_rate']:.2f}%) -> {path}")
    return EXIT_OK


def cmd_scan(args) -> int:
    _need(args, "controllers", "pool")
    controllers = load_controllers(args.controllers)
    pool = DephasingPool.load(args.pool)
    if args.draw is not None and args.draw < len(pool):
        if args.seed is None:
            raise ConfigError("--seed is required when drawing a subset of the pool")
        pool = pool.draw(args.draw, args.seed)
    deltas = delta_grid(args.grid)
    stem = args.controllers.stem
    ids = [f"{stem}/c{i:03d}" for i in range(len(controllers))]
    records, skipped = scan_population(controllers, pool, deltas, ids, args.orthogonal_tol,
                                       args.jobs)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / f"records_{stem}.jsonl"
    save_records(records, path)
    for i, c in enumerate(controllers[: args.heatmaps]):
        write_heatmap(c, pool, deltas, args.out / f"heatmap_{stem}_c{i:03d}")
    print(f"{len(records)} records -> {path}" + (f" ({skipped} with zero error excluded)" if skipped else ""))
    return EXIT_PARTIAL if skipped and not records else EXIT_OK


def _load_all(paths):
    out = []
    for p in paths:
        out += load_records(p)
    return out


def cmd_test(args) -> int:
    _need(args, "records")
    tests = []
    for p in args.records:
        tests += run_trend_suite(load_records(p), args.alpha, Path(p).stem)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "tests.csv"
    write_tests_csv(tests, path)
    for t in tests:
        print(f"{t.label:30s} {t.pair:16s} n={t.n:4d} tau={t.tau:+.3f} Z={t.z_tau:+8.3f} "
              f"r={t.r:+.4f} t={t.t_r:+8.3f} -> {t.decision}")
    print(f"-> {path}")
    return EXIT_OK


def cmd_report(args) -> int:
    _need(args, "records")
    args.out.mkdir(parents=True, exist_ok=True)
    tallies = []
    for p in args.records:
        recs = load_records(p)
        stem = Path(p).stem
        for ext in ("csv", "svg"):
            export_scatter(recs, args.out / f"scatter_{stem}.{ext}", title=stem)
        flagged = [r for r in recs if r.orthogonal_pair is not None]
        if flagged:
            t = OrthogonalTally(flagged[0].objective, tuple(flagged[0].transfer), len(flagged),
                                sum(bool(r.orthogonal_pair) for r in flagged))
            tallies.append(t)
            print(f"{stem}: {t.percent_orthogonal:.1f}% orthogonal pairs of {t.n}")
    if tallies:
        write_orthogonal_csv(tallies, args.out / "orthogonal.csv")
    print(f"-> {args.out}")
    return EXIT_OK


def cmd_campaign(args) -> int:
    _need(args, "config")
    cfg = CampaignConfig.load(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    manifest = run_campaign(cfg, args.out, args.jobs if args.jobs > 1 else None, progress=print)
    for f in manifest.failures:
        print(f"FAILED {f['stage']}: {f['error']}", file=sys.stderr)
    return EXIT_OK if manifest.complete else EXIT_PARTIAL


COMMANDS = {"synthesize": cmd_synthesize, "sample-dephasing": cmd_sample, "scan": cmd_scan,
            "sensitivity": cmd_scan, "test": cmd_test, "report": cmd_report,
            "campaign": cmd_campaign}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        _apply_config(parser, args, argv)
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        if args.jobs < 1:
            raise ConfigError("--jobs must be positive")
        return COMMANDS[args.command](args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (FloatingPointError, np.linalg.LinAlgError, UndefinedSensitivity, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
