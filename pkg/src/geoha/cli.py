"""Command-line entry point: ``geoha simulate | learn | report``.

Exit codes: 0 success, 1 usage/config error, 2 runtime error,
3 results outside the reference tolerances (``report --check``).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .exceptions import ConfigError, GeoHAError
from .learner import load_priors
from .quorum import load_registry
from .simulator import (
    Scenario,
    ScenarioRun,
    Simulator,
    Strategy,
    build_persona,
    decisions_jsonl,
    default_config,
    default_registry_path,
    load_scenario,
    metrics_csv,
    posterior_csv,
    save_state,
)

log = logging.getLogger("geoha")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_THRESHOLD = 0, 1, 2, 3
DEFAULT_SEED = 7
DEFAULT_SEQUENCE = ("event1", "event2", "event3")

# reference rows: detection_s, total_s, improvement_pct
REFERENCE = {
    Strategy.REACTIVE_15: (15.0, 45.0, 0.0),
    Strategy.REACTIVE_5: (5.0, 35.0, 22.2),
    Strategy.STATIC_BAYESIAN: (-5.0, 25.0, 44.4),
    Strategy.ADAPTIVE_BAYESIAN: (-20.0, 10.0, 77.8),
}
TIME_TOL = 2.0
PCT_TOL = 3.0


def _configure_logging() -> None:
    level = os.environ.get("GEOHA_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def _persona_config(args):
    if args.registry:
        entries = load_registry(args.registry)
        if args.persona:
            entries = [e for e in entries if e.persona_id == args.persona]
            if not entries:
                raise ConfigError(f"persona {args.persona!r} not in registry")
        return entries[0]
    return default_config()


def _scenarios(args) -> List[Scenario]:
    names = args.scenario if args.scenario is not None else list(DEFAULT_SEQUENCE)
    out = []
    for name in names:
        s = load_scenario(name)
        out.append(dataclasses.replace(s, seed=args.seed))
    return out


def _simulator(args, cfg) -> Simulator:
    kw = {}
    if args.cpt_in:
        if not Path(args.cpt_in).exists():
            raise ConfigError(f"CPT snapshot not found: {args.cpt_in}")
        kw["cpt_in"] = args.cpt_in
    elif cfg.cpt_snapshot and Path(cfg.cpt_snapshot).exists():
        kw["cpt_in"] = cfg.cpt_snapshot
    if args.priors:
        kw["priors"] = load_priors(args.priors)
    if args.baselines:
        kw["baselines"] = args.baselines
    return Simulator(build_persona(cfg, **kw), cfg.services, cfg.noise)


def _effective_config(args, cfg, strategies, scenarios) -> dict:
    return {
        "command": args.command,
        "persona": cfg.persona_id,
        "registry": args.registry or str(default_registry_path()),
        "strategies": [s.value for s in strategies],
        "scenarios": [s.name for s in scenarios],
        "seed": args.seed,
        "cpt_in": args.cpt_in,
        "cpt_out": getattr(args, "cpt_out", None),
        "priors": args.priors or cfg.priors,
        "baselines": args.baselines or cfg.baselines,
        "out_dir": getattr(args, "out_dir", None),
    }


def write_run_artifacts(run: ScenarioRun, out_dir: Path) -> None:
    base = out_dir / run.strategy.value
    base.mkdir(parents=True, exist_ok=True)
    stem = run.scenario.name
    (base / f"{stem}.timeline.jsonl").write_text(run.timeline.to_jsonl())
    (base / f"{stem}.decisions.jsonl").write_text(decisions_jsonl(run.decisions))
    (base / f"{stem}.cascades.jsonl").write_text("".join(o.to_json() + "\n" for o in run.cascades))
    if run.posterior_rows:
        (base / f"{stem}.posterior.csv").write_text(posterior_csv(run.posterior_rows))


def cmd_simulate(args) -> int:
    cfg = _persona_config(args)
    scenarios = _scenarios(args)
    if args.all_strategies:
        strategies = list(Strategy)
    else:
        strategies = [Strategy.parse(args.strategy)]
    print("effective config: " + json.dumps(_effective_config(args, cfg, strategies, scenarios), sort_keys=True), file=sys.stderr)
    out_dir = Path(args.out_dir)
    results: Dict[Strategy, List[ScenarioRun]] = {}
    for strategy in strategies:
        sim = _simulator(args, cfg)
        results[strategy] = sim.run_sequence(scenarios, strategy)
        if strategy is Strategy.ADAPTIVE_BAYESIAN:
            cpt_out = Path(args.cpt_out) if args.cpt_out else out_dir / "cpt_adaptive.json"
            cpt_out.parent.mkdir(parents=True, exist_ok=True)
            save_state(sim.persona, cpt_out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for strategy, runs in results.items():
        for run in runs:
            write_run_artifacts(run, out_dir)
        rows = [(strategy, r.scenario.name, r.metrics) for r in runs]
        (out_dir / f"metrics_{strategy.value}.csv").write_text(metrics_csv(rows))
    rows = [(s, r.scenario.name, r.metrics) for s, runs in results.items() for r in runs]
    sys.stdout.write(metrics_csv(rows))
    return EXIT_OK


def cmd_learn(args) -> int:
    cfg = _persona_config(args)
    scenarios = _scenarios(args) if args.scenario is not None else []
    print("effective config: " + json.dumps(_effective_config(args, cfg, [Strategy.ADAPTIVE_BAYESIAN], scenarios), sort_keys=True), file=sys.stderr)
    sim = _simulator(args, cfg)
    sim.run_sequence(scenarios, Strategy.ADAPTIVE_BAYESIAN)
    out = Path(args.cpt_out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_state(sim.persona, out)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["source", "target", "p", "n_obs"])
    for e in sim.pipeline.cpts:
        w.writerow([e.source, e.target, f"{e.probability:.6f}", e.n_obs])
    return EXIT_OK


def _read_metrics(path: Path) -> List[dict]:
    with path.open() as fh:
        return list(csv.DictReader(fh))


def _num(x: str) -> Optional[float]:
    return float(x) if x not in ("", None) else None


def cmd_report(args) -> int:
    out_dir = Path(args.out_dir)
    effective = {"command": "report", "out_dir": str(out_dir), "event": args.event, "check": args.check, "seed": args.seed}
    print("effective config: " + json.dumps(effective, sort_keys=True), file=sys.stderr)
    out_dir.mkdir(parents=True, exist_ok=True)
    present: Dict[Strategy, dict] = {}
    missing = []
    for strategy in Strategy:
        path = out_dir / f"metrics_{strategy.value}.csv"
        if not path.exists():
            missing.append(strategy.value)
            continue
        rows = [r for r in _read_metrics(path) if r["event"] == args.event]
        if not rows:
            missing.append(f"{strategy.value}:{args.event}")
            continue
        present[strategy] = rows[-1]

    table = [("method", "detection_s", "total_s", "improvement")]
    for strategy, row in present.items():
        imp = row["improvement_pct"]
        label = "Baseline" if strategy is Strategy.REACTIVE_15 else (f"{float(imp):.1f}%" if imp else "")
        table.append((strategy.label, row["detection_s"], row["total_s"], label))
    widths = [max(len(str(r[i])) for r in table) for i in range(4)]
    for r in table:
        print("  ".join(str(c).ljust(w) for c, w in zip(r, widths)))

    with (out_dir / "strategy_comparison.csv").open("w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", "detection_s", "total_s", "improvement_pct"])
        for strategy, row in present.items():
            w.writerow([strategy.value, row["detection_s"], row["total_s"], row["improvement_pct"]])
    with (out_dir / "component_breakdown.csv").open("w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", "detection_s", "execution_s"])
        for strategy, row in present.items():
            w.writerow([strategy.value, row["detection_s"], row["execution_s"]])
    posterior = out_dir / Strategy.ADAPTIVE_BAYESIAN.value / f"{args.event}.posterior.csv"
    if posterior.exists():
        (out_dir / "posterior_evolution.csv").write_text(posterior.read_text())
    with (out_dir / "event_timeline.csv").open("w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", "t", "kind", "detail"])
        for strategy in present:
            tl = out_dir / strategy.value / f"{args.event}.timeline.jsonl"
            if not tl.exists():
                continue
            for line in tl.read_text().splitlines():
                e = json.loads(line)
                if e["kind"] == "inference":
                    continue
                p = e["payload"]
                detail = p.get("kind") or p.get("decision") or p.get("cause") or ""
                if e["kind"] == "injection" and p.get("service"):
                    detail = f"{detail}:{p['service']}"
                w.writerow([strategy.value, e["t"], e["kind"], detail])

    if missing:
        print("missing strategy artifacts: " + ", ".join(missing), file=sys.stderr)
        return EXIT_CONFIG
    if args.check:
        misses = check_reference(present)
        for m in misses:
            print("reference miss: " + m, file=sys.stderr)
        if misses:
            return EXIT_THRESHOLD
    return EXIT_OK


def check_reference(present: Dict[Strategy, dict]) -> List[str]:
    misses = []
    for strategy, (det, total, imp) in REFERENCE.items():
        row = present.get(strategy)
        if row is None:
            misses.append(f"{strategy.value}: no row")
            continue
        d, t, i = _num(row["detection_s"]), _num(row["total_s"]), _num(row["improvement_pct"])
        if d is None or abs(d - det) > TIME_TOL:
            misses.append(f"{strategy.value}: detection {d} vs {det}")
        if t is None or abs(t - total) > TIME_TOL:
            misses.append(f"{strategy.value}: total {t} vs {total}")
        if i is None or abs(i - imp) > PCT_TOL:
            misses.append(f"{strategy.value}: improvement {i} vs {imp}")
    return misses


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geoha", description="Predictive Geo-HA arbitration simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", action="extend", nargs="+", help="scenario JSON path or bundled name")
        p.add_argument("--cpt-in", help="CPT snapshot to start from")
        p.add_argument("--priors", help="expert prior file {target: {source: p}}")
        p.add_argument("--baselines", help="site baseline file")
        p.add_argument("--registry", help="persona registry JSON")
        p.add_argument("--persona", help="persona_id within the registry")
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)
        p.add_argument("--out-dir", default="out")

    p = sub.add_parser("simulate", help="run scenarios under one or all strategies")
    common(p)
    p.add_argument("--strategy", default="adaptive", choices=[s.value for s in Strategy])
    p.add_argument("--all-strategies", action="store_true")
    p.add_argument("--cpt-out", help="where to write the adaptive CPT snapshot")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("learn", help="train CPTs over an ordered scenario list")
    common(p)
    p.add_argument("--cpt-out", required=True)
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("report", help="build the strategy comparison from simulate artifacts")
    p.add_argument("--out-dir", default="out")
    p.add_argument("--event", default="event3")
    p.add_argument("--check", action="store_true", help="exit 3 when results miss the reference rows")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GeoHAError, OSError) as exc:
        log.debug("runtime failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
