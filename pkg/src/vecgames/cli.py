"""Command-line entry points.

``simulate`` runs a configured scenario and writes the report files;
``audit`` recomputes the regret quantities of a saved run history and checks
them against their finite-time bounds; ``nash`` prints the pure equilibria of
the objective- and candidate-scalarized games; ``report`` recomputes the
outcome histogram from a results directory and checks it against the stored
one.

Exit codes: 0 success, 1 validation or input error, 2 bound-audit violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .bilevel import RunHistory
from .config import ConfigError, load_config
from .games import profile_label, pure_nash, scalarized_game
from .harness import (
    OutcomeHistogram,
    emit_report,
    equilibrium_labels,
    reference_history,
    run_scenario,
)
from .regret_audit import audit_run


def _cmd_simulate(args) -> int:
    cfg = load_config(args.config, args.set)
    out_dir = Path(args.out or cfg.out_dir or ".")
    records, histogram = run_scenario(cfg)
    emit_report(records, histogram, cfg, out_dir)
    for label, frac in histogram.fractions.items():
        print(f"{label}: {histogram.counts[label]} runs ({frac:.1%})")
    if args.dump_histories:
        for run_id in range(min(args.dump_histories, cfg.runs)):
            history = reference_history(cfg, run_id)
            path = out_dir / f"history_run{run_id}.json"
            history.save(path)
            print(f"wrote {path}")
    print(f"report written to {out_dir}")
    return 0


def _cmd_audit(args) -> int:
    history = RunHistory.load(args.history)
    report = audit_run(history)
    report.save(args.out)
    print(f"audit written to {args.out}")
    if not report.ok:
        for violation in report.violations:
            print(f"VIOLATION: {violation}", file=sys.stderr)
        return 2
    inner_worst = max(row["value"] for row in report.inner)
    print(
        f"all bounds hold: worst inner {inner_worst:.4f}, "
        f"outer {report.outer['value']:.4f} <= {report.outer['bound']:.4f}, "
        f"bilevel {report.bilevel['value']:.4f} <= {report.bilevel['bound']:.4f}"
    )
    return 0


def _print_nash(game, weights, title) -> None:
    equilibria = sorted(pure_nash(scalarized_game(game, weights)))
    labels = [profile_label(game, prof) for prof in equilibria]
    print(f"{title}: {{{', '.join(labels) if labels else ''}}}")


def _cmd_nash(args) -> int:
    cfg = load_config(args.config, args.set)
    _print_nash(
        cfg.game,
        [cfg.objective, cfg.opponent_weight],
        "objective scalarization",
    )
    for i, cand in enumerate(cfg.candidates, start=1):
        _print_nash(
            cfg.game, [cand, cfg.opponent_weight], f"deployed candidate {i}"
        )
    return 0


def _cmd_report(args) -> int:
    in_dir = Path(args.indir)
    outcomes = in_dir / "outcomes.csv"
    stored_path = in_dir / "histogram.json"
    if not outcomes.exists() or not stored_path.exists():
        print(f"missing outcomes.csv or histogram.json in {in_dir}", file=sys.stderr)
        return 1
    stored = json.loads(stored_path.read_text())
    counts = {label: 0 for label in stored["labels"]}
    with open(outcomes, newline="") as fh:
        for row in csv.DictReader(fh):
            counts[row["outcome"]] = counts.get(row["outcome"], 0) + 1
    recomputed = OutcomeHistogram(counts=counts)
    for label, frac in recomputed.fractions.items():
        print(f"{label}: {recomputed.counts[label]} runs ({frac:.1%})")
    stored_counts = {lab: entry["count"] for lab, entry in stored["labels"].items()}
    if stored_counts != recomputed.counts:
        print("stored histogram disagrees with the records", file=sys.stderr)
        return 1
    print("histogram matches the stored records")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vecgames",
        description="Repeated vector-payoff games with adaptive scalarization.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a configured scenario")
    sim.add_argument("--config", required=True, help="config file path")
    sim.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE",
        help="override a config key (repeatable)",
    )
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument(
        "--dump-histories", type=int, default=0, metavar="N",
        help="also write full run histories for the first N runs",
    )
    sim.set_defaults(func=_cmd_simulate)

    aud = sub.add_parser("audit", help="verify regret bounds on a saved history")
    aud.add_argument("--history", required=True, help="run history JSON file")
    aud.add_argument("--out", required=True, help="where to write the report JSON")
    aud.set_defaults(func=_cmd_audit)

    nash = sub.add_parser("nash", help="print pure equilibria of the scalarized games")
    nash.add_argument("--config", required=True)
    nash.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    nash.set_defaults(func=_cmd_nash)

    rep = sub.add_parser("report", help="recompute aggregates from stored records")
    rep.add_argument("--in", dest="indir", required=True, help="results directory")
    rep.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
