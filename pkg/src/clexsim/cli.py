"""Command line entry point: ``clexsim run | compare | export-graph``.

Exit codes: 0 success, 1 runtime failure, 2 invalid config or arguments,
3 experiment too large for the memory budget.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from clexsim import metrics
from clexsim.all_to_all import clex_all_to_all, torus_all_to_all
from clexsim.config import ConfigError, build_config, load_config, preset_config, scale_preset
from clexsim.sim_engine import LevelMetrics, MemoryBudgetError, TrafficSpec, check_memory, generate_traffic, run_experiment
from clexsim.topology import TopologyError, TorusTopology, build_clex, embed

log = logging.getLogger("clexsim")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_MEMORY = 0, 1, 2, 3


def _load(args):
    overrides = {"seed": args.seed}
    if args.config and args.table:
        raise ConfigError("use either --config or --table, not both")
    if args.table:
        return preset_config(args.table, overrides, scale=args.scale)
    if not args.config:
        raise ConfigError("one of --config or --table is required")
    cfg = load_config(args.config, overrides)
    if args.scale != 1.0:
        cfg = build_config(scale_preset(cfg.to_dict(), args.scale), source=args.config)
    return cfg


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    log.info("wrote %s", path)


def cmd_run(args) -> int:
    cfg = _load(args)
    out = args.out or cfg["output"]["dir"]
    formats = set(cfg["output"]["formats"])
    if args.plot:
        formats.add("svg")
    os.makedirs(out, exist_ok=True)
    t = cfg.topology()
    if cfg.mode == "all_to_all":
        return _run_all_to_all(cfg, t, out, formats)
    traffic_cfg = cfg["traffic"]
    budget = int(args.budget_gb * 2**30) if args.budget_gb else None
    check_memory(t, traffic_cfg["per_node"], budget)
    spec = TrafficSpec(traffic_cfg["per_node"], traffic_cfg["pattern"], traffic_cfg["seed"])
    traffic = generate_traffic(spec, t.n)
    report = run_experiment(
        t,
        traffic,
        cfg.router_config(threads=args.threads),
        valiant_mode=cfg["algorithm"]["valiant_mode"],
        sample_limit=cfg["output"]["sample_limit"],
        config_echo=cfg.to_dict(),
    )
    table = report.to_table()
    print(table)
    if "txt" in formats:
        _write(os.path.join(out, "report.txt"), table + "\n")
    if "csv" in formats:
        _write(os.path.join(out, "report.csv"), report.to_csv())
    if "json" in formats:
        data = report.to_json()
        data["comparison"] = metrics.compare(report.level_metrics, t.n, t.base, cfg["model"]["B"])
        _write(os.path.join(out, "report.json"), json.dumps(data, indent=2, sort_keys=True) + "\n")
    if "svg" in formats:
        from clexsim.plotting import save_phase_curves

        save_phase_curves(report.phase_curves, os.path.join(out, "phases.svg"), seed=cfg.seed)
    failed = [k for k, ok in report.checks.items() if not ok]
    if failed:
        print(f"consistency checks failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def _run_all_to_all(cfg, t, out, formats) -> int:
    stats = torus_all_to_all(t) if isinstance(t, TorusTopology) else clex_all_to_all(t, embed(t))
    rec = stats.to_record()
    lines = [f"{k:>18}: {v}" for k, v in rec.items() if k != "traffic_by_group"]
    text = "\n".join(lines)
    print(text)
    if "txt" in formats:
        _write(os.path.join(out, "all_to_all.txt"), text + "\n")
    if "csv" in formats:
        rows = ["group,traversals,share"]
        for g, v in stats.traffic_by_group.items():
            rows.append(f"{g},{v},{stats.traffic_shares[g]:.6f}")
        _write(os.path.join(out, "all_to_all.csv"), "\n".join(rows) + "\n")
    if "json" in formats:
        rec["config"] = cfg.to_dict()
        _write(os.path.join(out, "all_to_all.json"), json.dumps(rec, indent=2, sort_keys=True) + "\n")
    if stats.complete is False or stats.tree is False:
        print("flood did not reach every node exactly once", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_compare(args) -> int:
    try:
        with open(args.report, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read report {args.report}: {exc}") from None
    rows = data.get("level_metrics") or []
    if not rows:
        raise ConfigError(f"report {args.report} has no level metrics")
    n = data.get("n")
    if args.n is not None and n is not None and args.n != n:
        raise ConfigError(f"--n {args.n} does not match the report's n={n}")
    n = args.n if args.n is not None else n
    if n is None:
        raise ConfigError("report has no node count; pass --n")
    base = data.get("base") or round(n ** (1 / len(rows)))
    levels = [LevelMetrics(**{k: r[k] for k in ("level", "max_rounds", "avg_rounds", "max_avg_load", "avg_hops")}) for r in rows]
    res = metrics.compare(levels, n, base, args.B)
    for key in ("bandwidth_gain", "hop_ratio", "propagation_ratio", "torus_effective_bandwidth"):
        print(f"{key:>26}: {res[key]:.4f}")
    return EXIT_OK


def cmd_export_graph(args) -> int:
    t = build_clex(args.base, args.levels, aggregated=False)
    if args.out and args.out != "-":
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            t.write_edge_list(fh)
    else:
        t.write_edge_list(sys.stdout)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="clexsim", description="CLEX routing and all-to-all simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment from a config or preset")
    r.add_argument("--config", help="YAML config file")
    r.add_argument("--table", type=int, choices=[1, 2, 3, 4], help="reference experiment preset")
    r.add_argument("--seed", type=int, help="override the config seed")
    r.add_argument("--scale", type=float, default=1.0, help="shrink base to base**F for desk runs")
    r.add_argument("--plot", action="store_true", help="also write phases.svg")
    r.add_argument("--out", help="output directory (default: output.dir)")
    r.add_argument("--threads", type=int, help="worker threads (default: CLEXSIM_THREADS or 1)")
    r.add_argument("--budget-gb", type=float, help="memory budget (default: 85%% of available)")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="CLEX-versus-torus ratios of a report")
    c.add_argument("report", help="report.json written by 'run'")
    c.add_argument("--n", type=int, help="node count; must match the report")
    c.add_argument("--B", type=float, default=1.0, help="per-node bandwidth")
    c.set_defaults(func=cmd_compare)

    g = sub.add_parser("export-graph", help="write the CLEX edge list")
    g.add_argument("--base", type=int, required=True)
    g.add_argument("--levels", type=int, required=True)
    g.add_argument("--out", help="output file (default: stdout)")
    g.set_defaults(func=cmd_export_graph)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, TopologyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MemoryBudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MEMORY


if __name__ == "__main__":
    sys.exit(main())
