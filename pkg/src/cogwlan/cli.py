"""Command-line entry point: experiment harnesses, audit replay, the
verification suite and the admin API server.

Reports are written atomically (temp file + rename). Exit codes: 0 success,
1 runtime failure, 2 configuration problem.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

from .config import LoadedConfig, load_config
from .csm import (
    AdminPolicy,
    AdmissionMode,
    SecurityManager,
    read_audit_log,
    replay_records,
    write_audit_header,
)
from .errors import CogwlanError, ConfigError
from .sim import (
    SimConfig,
    drive_trace,
    generate_trace,
    run_detection_experiment,
    sweep_input_neurons,
    sweep_lr_iterations,
    write_trace,
)


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _tsv(rows: list[dict], columns: list[str]) -> str:
    lines = ["\t".join(columns)]
    for row in rows:
        lines.append("\t".join(str(row[c]) for c in columns))
    return "\n".join(lines) + "\n"


def _emit(out_dir: Path, stem: str, rows: list[dict], columns: list[str], fmt: str) -> Path:
    if fmt == "structured":
        path = out_dir / f"{stem}.json"
        _write_atomic(path, json.dumps(rows, indent=2, sort_keys=True) + "\n")
    else:
        path = out_dir / f"{stem}.tsv"
        _write_atomic(path, _tsv(rows, columns))
    return path


def _sim_config(loaded: LoadedConfig, seed_override: int | None) -> SimConfig:
    sim = SimConfig.from_obj(loaded.sim)
    if seed_override is not None:
        sim.seed = seed_override
    return sim


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from exc


def _parse_float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc


def cmd_simulate(args, loaded: LoadedConfig) -> int:
    sim = _sim_config(loaded, args.seed)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    system = loaded.system
    policy = AdminPolicy(mode=AdmissionMode.AUTO_APPROVE)
    events = generate_trace(sim, system)
    if args.export_trace:
        write_trace(out / "trace.jsonl", events)

    audit_path = out / "audit.jsonl"
    with open(audit_path, "w", encoding="utf-8") as sink:
        write_audit_header(sink, system, policy)
        manager = SecurityManager(config=system, admin_policy=policy, audit_sink=sink)
        outcomes = drive_trace(manager, events, sim.node_count, sim.calibration_epochs)

    _write_atomic(out / "snapshot.json", manager.snapshot_bytes().decode())
    counts: dict[str, int] = {}
    for o in outcomes:
        counts[o.path_taken.value] = counts.get(o.path_taken.value, 0) + 1
    rows = [{"path": k, "count": v} for k, v in sorted(counts.items())]
    path = _emit(out, "summary", rows, ["path", "count"], args.format)
    print(f"simulated {len(events)} events over {sim.node_count} nodes")
    print(f"wrote {audit_path}, {out / 'snapshot.json'}, {path}")
    return 0


def cmd_detect(args, loaded: LoadedConfig) -> int:
    sim = _sim_config(loaded, args.seed)
    sizes = _parse_int_list(args.training_set_sizes)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for size in sizes:
        metrics = run_detection_experiment(sim, loaded.system, training_set_size=size)
        obj = metrics.to_obj()
        rows.append(obj)
        curve_rows = [{"epoch": e, "cumulative_detection_rate": r} for e, r in metrics.detection_curve]
        _emit(out, f"detection_curve_ts{size}", curve_rows,
              ["epoch", "cumulative_detection_rate"], args.format)
        print(
            f"training_set_size={size}: detection_rate={metrics.detection_rate:.4f} "
            f"fpr={metrics.false_positive_rate:.4f} "
            f"eval_latency_ms={metrics.mean_eval_latency_ms:.3f}"
        )
    columns = [
        "training_set_size", "detection_rate", "false_positive_rate",
        "mean_eval_latency_ms", "mean_retrain_latency_ms", "injected_malicious",
        "benign_count", "vacuous_detection", "early_revocations", "onset_epoch", "epochs",
    ]
    if args.format == "tabular":
        flat = [{c: r[c] for c in columns} for r in rows]
        path = _emit(out, "metrics", flat, columns, "tabular")
    else:
        path = _emit(out, "metrics", rows, columns, "structured")
    print(f"wrote {path}")
    return 0


def cmd_sweep_neurons(args, loaded: LoadedConfig) -> int:
    out = Path(args.output_dir)
    rows = sweep_input_neurons(
        _parse_int_list(args.d_values),
        seed=args.seed if args.seed is not None else 0,
        iterations=args.iterations,
    )
    path = _emit(out, "neuron_sweep", rows, ["input_neurons", "final_mse"], args.format)
    best = min(rows, key=lambda r: r["final_mse"])
    print(f"lowest final error at {best['input_neurons']} input neurons ({best['final_mse']:.6f})")
    print(f"wrote {path}")
    return 0


def cmd_sweep_train(args, loaded: LoadedConfig) -> int:
    out = Path(args.output_dir)
    rows = sweep_lr_iterations(
        _parse_float_list(args.learning_rates),
        _parse_int_list(args.iteration_counts),
        seed=args.seed if args.seed is not None else 0,
    )
    path = _emit(out, "lr_iterations_grid", rows,
                 ["learning_rate", "iterations", "final_mse"], args.format)
    best = min(rows, key=lambda r: r["final_mse"])
    print(
        f"lowest final error at lr={best['learning_rate']} / "
        f"{best['iterations']} iterations ({best['final_mse']:.6f})"
    )
    print(f"wrote {path}")
    return 0


def cmd_replay(args, loaded: LoadedConfig) -> int:
    config, policy, records = read_audit_log(args.audit)
    manager = replay_records(records, config, policy)
    rebuilt = manager.snapshot_bytes()
    if args.output_dir:
        out = Path(args.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_atomic(out / "replayed_snapshot.json", rebuilt.decode())
    recorded = Path(args.snapshot).read_bytes()
    if rebuilt == recorded:
        print(f"replayed {len(records)} records: snapshot matches byte for byte")
        return 0
    print("replayed snapshot DIFFERS from the recorded one", file=sys.stderr)
    return 1


def build_server_manager(system, state_dir: str | Path | None) -> SecurityManager:
    """Server state: recover by replaying the audit journal if one exists,
    then keep appending to it. Runtime threshold changes therefore persist
    across restarts without touching the config file."""
    policy = AdminPolicy(mode=AdmissionMode.INTERACTIVE)
    if not state_dir:
        return SecurityManager(config=system, admin_policy=policy)
    state = Path(state_dir)
    state.mkdir(parents=True, exist_ok=True)
    audit_path = state / "audit.jsonl"
    if audit_path.exists():
        system, policy, records = read_audit_log(audit_path)
        manager = replay_records(records, system, policy)
        _truncate_torn_tail(audit_path)
        manager._audit_sink = open(audit_path, "a", encoding="utf-8")
        print(f"recovered {len(records)} audit records from {audit_path}")
        return manager
    sink = open(audit_path, "w", encoding="utf-8")
    write_audit_header(sink, system, policy)
    return SecurityManager(config=system, admin_policy=policy, audit_sink=sink)


def resolve_bind(args, loaded: LoadedConfig) -> tuple[str, int]:
    """Bind address precedence: CLI flag, then COGWLAN_HOST/COGWLAN_PORT
    environment variables, then the config file."""
    host = args.host or os.environ.get("COGWLAN_HOST") or loaded.server.host
    if args.port is not None:
        port = args.port
    elif os.environ.get("COGWLAN_PORT"):
        try:
            port = int(os.environ["COGWLAN_PORT"])
        except ValueError as exc:
            raise ConfigError(f"COGWLAN_PORT is not an integer: {exc}") from exc
    else:
        port = loaded.server.port
    return host, port


def cmd_serve(args, loaded: LoadedConfig) -> int:
    import uvicorn

    from .api import create_app

    manager = build_server_manager(loaded.system, args.state_dir)
    console_dir = Path(args.console_dir) if args.console_dir else Path("frontend/dist")
    app = create_app(manager, console_dir=console_dir if console_dir.is_dir() else None)
    host, port = resolve_bind(args, loaded)
    print(f"admin API on http://{host}:{port}/api/v1 (console at /console if built)")
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


def _truncate_torn_tail(path: Path) -> None:
    good = 0
    with open(path, "rb") as fh:
        for raw in fh:
            if not raw.endswith(b"\n"):
                break
            try:
                json.loads(raw)
            except json.JSONDecodeError:
                break
            good += len(raw)
    if path.stat().st_size != good:
        with open(path, "r+b") as fh:
            fh.truncate(good)


def cmd_verify(args, loaded: LoadedConfig) -> int:
    from .acceptance import run_acceptance

    only = set(args.only.split(",")) if args.only else None
    results = run_acceptance(loaded.system, loaded.sim, only=only)
    rows = [r.to_obj() for r in results]
    if args.output_dir:
        out = Path(args.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_atomic(out / "acceptance_report.json", json.dumps(rows, indent=2) + "\n")
    failed = [r for r in results if not r.passed]
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cogwlan",
        description="Cognitive WLAN security manager: simulation, experiments and admin API",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, output=True):
        p.add_argument("--config", default=None, help="JSON config file (defaults built in)")
        p.add_argument("--seed", type=int, default=None, help="override the experiment seed")
        p.add_argument("--format", choices=("tabular", "structured"), default="tabular")
        if output:
            p.add_argument("--output-dir", default="out", help="report directory")

    p = sub.add_parser("simulate", help="run the synthetic WLAN through the security manager")
    common(p)
    p.add_argument("--export-trace", action="store_true", help="also write trace.jsonl")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("detect", help="misbehavior detection experiment")
    common(p)
    p.add_argument("--training-set-sizes", default="50",
                   help="comma-separated pattern-history sizes to evaluate")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("sweep-neurons", help="input-layer width vs training error")
    common(p)
    p.add_argument("--d-values", default="5,10,15,20,25,30")
    p.add_argument("--iterations", type=int, default=2000)
    p.set_defaults(func=cmd_sweep_neurons)

    p = sub.add_parser("sweep-train", help="learning-rate x iterations error grid")
    common(p)
    p.add_argument("--learning-rates", default="0.05,0.2,0.5,0.9")
    p.add_argument("--iteration-counts", default="1000,5000,10000,20000")
    p.set_defaults(func=cmd_sweep_train)

    p = sub.add_parser("replay", help="rebuild state from an audit log and compare snapshots")
    common(p, output=False)
    p.add_argument("--audit", required=True, help="audit.jsonl produced by simulate/serve")
    p.add_argument("--snapshot", required=True, help="recorded snapshot.json to compare against")
    p.add_argument("--output-dir", default=None, help="optionally write the rebuilt snapshot")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("serve", help="run the admin API server")
    common(p, output=False)
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--state-dir", default=None, help="persist/recover audit state here")
    p.add_argument("--console-dir", default=None, help="static admin console build to serve")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("verify", help="run the acceptance criteria and print PASS/FAIL lines")
    common(p, output=False)
    p.add_argument("--output-dir", default=None, help="write acceptance_report.json here")
    p.add_argument("--only", default=None, help="comma-separated criterion ids (e.g. 1,3,9)")
    p.set_defaults(func=cmd_verify)

    return parser


def run_cli(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        loaded = load_config(args.config)
        return args.func(args, loaded)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except CogwlanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
