"""Command-line front end.

Subcommands run simulations (`sim-sweep`, `sim-run`), real UDP endpoints
(`source`, `monitor`), and post-processing (`analyze`). Every command reads
one TOML config (all fields defaulted) plus repeatable `--set section.key=
value` overrides, and emits versioned CSV files; nothing is interactive.

Exit codes: 0 success, 2 configuration or schema errors, 3 runtime errors,
4 network errors.
"""

from __future__ import annotations

import argparse
import statistics
import sys
from pathlib import Path

from .config import ExperimentConfig, load_config
from .csvio import column, read_csv, write_csv
from .endpoint import SourceConfig
from .errors import (
    AcpError,
    ConfigError,
    ConnectionFailedError,
    DegenerateIntervalError,
    SchemaError,
)
from .netsim import optimal_backlog_profile, run_acp_in_sim, sweep_argmin
from .runtime import run_monitor, run_source

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_NETWORK = 4

RUNSUM_SCHEMA = "runsum.v1"
RUNSUM_HEADER = [
    "label", "controller", "seed", "duration_s", "updates_sent",
    "updates_delivered", "avg_age_s", "source_avg_age_s",
    "avg_backlog_pkts", "mean_rtt_s", "achieved_rate_per_s",
    "final_rate_per_s", "stalled",
]

DECISIONS_SCHEMA = "decisions.v1"
DECISIONS_HEADER = [
    "label", "seed", "epoch", "t_s", "avg_age_s", "avg_backlog_pkts",
    "b_pkts", "delta_s", "action", "gamma", "target_pkts", "rate_per_s",
    "rtt_ewma_s", "z_ewma_s", "epoch_len_s",
]

MONITOR_SCHEMA = "monitor.v1"
MONITOR_HEADER = [
    "peer", "received", "accepted", "discarded", "acks_sent",
]


def _load(args) -> ExperimentConfig:
    return load_config(args.config, args.set or [])


def _seeds(cfg, args) -> list:
    if args.seeds:
        try:
            return [int(s) for s in args.seeds.split(",") if s.strip()]
        except ValueError:
            raise ConfigError(f"--seeds {args.seeds!r}: expected integers")
    return list(cfg.run.seeds)


def _outdir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- sim-sweep ---------------------------------------------------------------


def cmd_sim_sweep(args) -> int:
    cfg = _load(args)
    topo = cfg.topology.build()
    rates = cfg.sweep.rates()
    seeds = _seeds(cfg, args)
    n_nodes = len(topo.forward)
    header = (
        ["kind", "seed", "workload", "rate_per_s", "age_s", "backlog_total_pkts"]
        + [f"backlog_node{i}_pkts" for i in range(n_nodes)]
        + ["stable"]
    )
    rows = []
    for seed in seeds:
        profile = optimal_backlog_profile(
            topo, rates, cfg.run.duration_s, seed,
            rerun_factor=cfg.sweep.rerun_factor,
            workload=cfg.workload.kind,
            warmup_frac=cfg.run.warmup_frac,
            max_backlog=cfg.run.max_backlog,
            refine=cfg.sweep.refine,
        )
        for p in profile.sweep:
            if p.unstable:
                rows.append(
                    ["point", seed, cfg.workload.kind, p.rate, None,
                     None] + [None] * n_nodes + [False]
                )
            else:
                rows.append(
                    ["point", seed, cfg.workload.kind, p.rate, p.age,
                     p.report.total_avg_backlog]
                    + [n.avg_backlog for n in p.report.forward_nodes]
                    + [True]
                )
        best = sweep_argmin(profile.sweep)
        rows.append(
            ["argmin", seed, cfg.workload.kind, best.rate, best.age,
             best.report.total_avg_backlog]
            + [n.avg_backlog for n in best.report.forward_nodes]
            + [True]
        )
        rep = profile.report
        rows.append(
            ["profile", seed, cfg.workload.kind, profile.optimal_rate,
             rep.time_avg_age, rep.total_avg_backlog]
            + [n.avg_backlog for n in rep.forward_nodes]
            + [True]
        )
        print(
            f"seed {seed}: argmin rate={best.rate} age={best.age:.6f}, "
            f"profiled rate={profile.optimal_rate:.6f} "
            f"age={rep.time_avg_age:.6f} "
            f"total_backlog={rep.total_avg_backlog:.4f}"
        )
    path = _outdir(args) / "sweep.csv"
    write_csv(str(path), "sweep.v1", header, rows)
    print(f"wrote {path}")
    return EXIT_OK


# -- sim-run -----------------------------------------------------------------


def _report_to_summary(label, controller_kind, seed, rep) -> list:
    return [
        label, controller_kind, seed, rep.duration_s,
        rep.updates_generated, rep.updates_delivered, rep.time_avg_age,
        rep.source_est_age, rep.source_avg_backlog, rep.mean_rtt,
        rep.achieved_lambda, rep.final_rate, rep.stalled,
    ]


def _decision_rows(label, seed, rows) -> list:
    out = []
    for r in rows:
        out.append([
            label, seed, r.epoch, r.t_s, r.avg_age_s, r.avg_backlog,
            r.b_pkts, r.delta_s, r.action, r.gamma, r.target_pkts, r.rate,
            r.rtt_ewma_s, r.z_ewma_s, r.epoch_len_s,
        ])
    return out


def cmd_sim_run(args) -> int:
    cfg = _load(args)
    topo = cfg.topology.build()
    controller = cfg.controller.build()
    label = cfg.run.label or cfg.controller.kind
    seeds = _seeds(cfg, args)
    summary_rows = []
    decision_rows = []
    for seed in seeds:
        rep = run_acp_in_sim(
            topo, controller, cfg.run.duration_s, seed,
            warmup_frac=cfg.run.warmup_frac,
            max_backlog=cfg.run.max_backlog,
        )
        summary_rows.append(
            _report_to_summary(label, cfg.controller.kind, seed, rep)
        )
        decision_rows.extend(_decision_rows(label, seed, rep.decisions))
        print(
            f"seed {seed}: age={rep.time_avg_age:.6f} "
            f"rtt={rep.mean_rtt if rep.mean_rtt is None else round(rep.mean_rtt, 6)} "
            f"rate={rep.final_rate:.4f} delivered={rep.updates_delivered} "
            f"stalled={rep.stalled}"
        )
    out = _outdir(args)
    write_csv(str(out / "summary.csv"), RUNSUM_SCHEMA, RUNSUM_HEADER, summary_rows)
    write_csv(
        str(out / "decisions.csv"), DECISIONS_SCHEMA, DECISIONS_HEADER,
        decision_rows,
    )
    print(f"wrote {out / 'summary.csv'} and {out / 'decisions.csv'}")
    return EXIT_OK


# -- real transport ----------------------------------------------------------


def _source_config(cfg: ExperimentConfig) -> SourceConfig:
    control = cfg.controller.control()
    # Real links default to the coarser step unless overridden.
    if cfg.controller.kind == "acp":
        from dataclasses import replace
        control = replace(control, kappa=cfg.net.kappa)
    return SourceConfig(
        control=control,
        controller=cfg.controller.kind,
        fixed_rate=cfg.controller.rate if cfg.controller.kind == "fixed" else None,
        alpha=cfg.controller.alpha,
        init_probes=cfg.net.init_probes,
        probe_timeout_s=cfg.net.probe_timeout_s,
        payload_len=cfg.net.payload_len,
    )


def cmd_source(args) -> int:
    cfg = _load(args)
    label = cfg.run.label or f"{cfg.controller.kind}-udp"
    try:
        result = run_source(
            cfg.net.host, cfg.net.port, _source_config(cfg),
            updates=cfg.net.updates, linger_s=cfg.net.linger_s,
        )
    except ConnectionFailedError:
        raise
    except OSError as exc:
        print(f"network error: {exc}", file=sys.stderr)
        return EXIT_NETWORK
    out = _outdir(args)
    summary = [[
        label, cfg.controller.kind, "", result.duration_s, result.sent,
        result.accepted_acks, result.avg_age_s, result.avg_age_s,
        result.avg_backlog, result.mean_rtt_s, result.achieved_rate,
        result.final_rate, result.stall_events > 0,
    ]]
    write_csv(str(out / "summary.csv"), RUNSUM_SCHEMA, RUNSUM_HEADER, summary)
    write_csv(
        str(out / "decisions.csv"), DECISIONS_SCHEMA, DECISIONS_HEADER,
        _decision_rows(label, "", result.rows),
    )
    print(
        f"sent {result.sent} updates, {result.accepted_acks} ACKed; "
        f"age={result.avg_age_s} rtt={result.mean_rtt_s} "
        f"rate={result.final_rate:.2f}/s stalls={result.stall_events}"
    )
    print(f"wrote {out / 'summary.csv'} and {out / 'decisions.csv'}")
    return EXIT_OK


def cmd_monitor(args) -> int:
    cfg = _load(args)
    try:
        result = run_monitor(
            cfg.net.bind_host, cfg.net.port,
            expected_updates=cfg.net.updates,
            idle_exit_s=cfg.net.idle_exit_s,
        )
    except OSError as exc:
        print(f"bind failed on {cfg.net.bind_host}:{cfg.net.port}: {exc}",
              file=sys.stderr)
        return EXIT_NETWORK
    out = _outdir(args)
    rows = [
        [f"{addr[0]}:{addr[1]}" if isinstance(addr, tuple) else str(addr),
         st.received, st.accepted, st.discarded, st.acks_sent]
        for addr, st in sorted(result.peers.items(), key=lambda kv: str(kv[0]))
    ]
    write_csv(str(out / "monitor.csv"), MONITOR_SCHEMA, MONITOR_HEADER, rows)
    print(
        f"received {result.received} updates ({result.accepted} fresh, "
        f"{result.discarded} discarded, {result.malformed} malformed)"
    )
    print(f"wrote {out / 'monitor.csv'}")
    return EXIT_OK


# -- analyze -----------------------------------------------------------------


def _floats(header, rows, name) -> list:
    out = []
    for cell in column(header, rows, name):
        out.append(float(cell) if cell else None)
    return out


def _summarize(path: str) -> dict:
    header, rows = read_csv(path, RUNSUM_SCHEMA)
    ages = [a for a in _floats(header, rows, "avg_age_s") if a is not None]
    if not ages:
        raise SchemaError(f"{path}: no usable avg_age_s values")
    rtts = [r for r in _floats(header, rows, "mean_rtt_s") if r is not None]
    backlogs = [
        b for b in _floats(header, rows, "avg_backlog_pkts") if b is not None
    ]
    seeds = column(header, rows, "seed")
    labels = column(header, rows, "label")
    return {
        "path": path,
        "label": labels[0] if labels else path,
        "n": len(rows),
        "ages": ages,
        "age_by_seed": dict(zip(seeds, ages)),
        "median_age": statistics.median(ages),
        "mean_age": statistics.fmean(ages),
        "std_age": statistics.stdev(ages) if len(ages) > 1 else 0.0,
        "median_rtt": statistics.median(rtts) if rtts else None,
        "median_backlog": statistics.median(backlogs) if backlogs else None,
    }


def cmd_analyze(args) -> int:
    reports = [_summarize(p) for p in args.csv]
    for rep in reports:
        print(
            f"{rep['label']} ({rep['path']}): n={rep['n']} "
            f"median_age={rep['median_age']:.6f} mean={rep['mean_age']:.6f} "
            f"std={rep['std_age']:.6f} median_rtt={rep['median_rtt']} "
            f"median_backlog={rep['median_backlog']}"
        )
        cdf = sorted(rep["ages"])
        print("  age CDF samples: " + ", ".join(f"{a:.6f}" for a in cdf))
    if len(reports) == 2:
        a, b = reports
        shared = sorted(set(a["age_by_seed"]) & set(b["age_by_seed"]))
        if shared:
            deltas = [
                b["age_by_seed"][s] - a["age_by_seed"][s] for s in shared
            ]
            med_delta = statistics.median(deltas)
            pct = 100.0 * med_delta / b["median_age"] if b["median_age"] else 0.0
            print(
                f"paired over seeds {shared}: median age delta "
                f"({b['label']} - {a['label']}) = {med_delta:.6f} s "
                f"({pct:.1f}% of {b['label']} median)"
            )
            for s, d in zip(shared, deltas):
                print(f"  seed {s}: delta={d:.6f}")
        else:
            med_delta = b["median_age"] - a["median_age"]
            pct = 100.0 * med_delta / b["median_age"] if b["median_age"] else 0.0
            print(
                f"no shared seeds; unpaired median age delta = "
                f"{med_delta:.6f} s ({pct:.1f}%)"
            )
    if args.out:
        header = ["label", "path", "runs", "median_age_s", "mean_age_s",
                  "std_age_s", "median_rtt_s", "median_backlog_pkts"]
        rows = [
            [r["label"], r["path"], r["n"], r["median_age"], r["mean_age"],
             r["std_age"], r["median_rtt"], r["median_backlog"]]
            for r in reports
        ]
        write_csv(args.out, "compare.v1", header, rows)
        print(f"wrote {args.out}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="acp",
        description="Age-minimizing rate control: simulations, sweeps, "
        "and real UDP endpoint runs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML experiment file (defaults apply)")
        p.add_argument(
            "--set", action="append", metavar="SECTION.KEY=VALUE",
            help="override one config value (repeatable)",
        )
        p.add_argument("--out", help="output directory (default: .)")
        p.add_argument("--seeds", help="comma-separated seed list override")

    p = sub.add_parser("sim-sweep", help="age vs rate sweep on a topology")
    common(p)
    p.set_defaults(func=cmd_sim_sweep)

    p = sub.add_parser("sim-run", help="closed-loop controller run, decision trace")
    common(p)
    p.set_defaults(func=cmd_sim_run)

    p = sub.add_parser("source", help="send updates to a monitor over UDP")
    common(p)
    p.set_defaults(func=cmd_source)

    p = sub.add_parser("monitor", help="receive updates and ACK over UDP")
    common(p)
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("analyze", help="aggregate run summary CSVs")
    p.add_argument("csv", nargs="+", help="summary.csv paths (runsum.v1)")
    p.add_argument("--out", help="write a comparison CSV here")
    p.set_defaults(func=cmd_analyze)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SchemaError, DegenerateIntervalError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConnectionFailedError as exc:
        print(f"connection failed: {exc}", file=sys.stderr)
        return EXIT_NETWORK
    except AcpError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
