"""Command-line front end: run scenarios, sweep parameters, export
metrics, or serve the live operator bridge."""

from __future__ import annotations

import argparse
import itertools
import json
import sys
from pathlib import Path

from .engine import Engine, ScenarioError
from .metrics import (
    collect_relay_series,
    report_csv_row,
    write_event_log_jsonl,
    write_metrics_csv,
    write_relay_series_csv,
)
from .scenarios import builtin_scenarios, load_scenario, with_overrides

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3

_SWEEP_KEYS = {
    "rate": ("rate_mbps", float),
    "payload": ("payload_bytes", int),
    "distance": ("distance_m", float),
    "hops": ("hops", int),
    "source_rate": ("source_rate_pps", float),
    "sessions": ("sessions", int),
    "packets": ("packets", int),
    "arq": ("arq", lambda v: v == "on"),
    "seed": ("seed", int),
    "duration": ("duration_s", float),
    "phase": ("phase_s", float),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="xlmesh",
        description="Cross-layer ad hoc mesh simulator",
    )
    p.add_argument("--scenario", required=True,
                   help="built-in scenario name or path to a scenario JSON file")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--rate", type=float, default=None,
                   help="PHY rate in Mbps (1, 2, 5.5, 11)")
    p.add_argument("--arq", choices=["on", "off"], default=None)
    p.add_argument("--payload", type=int, default=None, help="payload bytes")
    p.add_argument("--duration", type=float, default=None, help="seconds")
    p.add_argument("--out", type=Path, default=None,
                   help="output directory for metrics.csv and events.jsonl")
    p.add_argument("--sweep", action="append", default=[],
                   metavar="KEY=V1,V2,...",
                   help="sweep a parameter; repeatable, cartesian product "
                        f"(keys: {', '.join(sorted(_SWEEP_KEYS))})")
    p.add_argument("--serve", action="store_true",
                   help="run live and expose the gateway bridge")
    p.add_argument("--endpoint", default="127.0.0.1:8765",
                   help="bridge websocket endpoint (with --serve)")
    p.add_argument("--pace", type=float, default=1.0,
                   help="simulated seconds per wall second (with --serve)")
    return p


def _parse_sweeps(specs: list[str]) -> list[dict]:
    axes = []
    for spec in specs:
        if "=" not in spec:
            raise ValueError(f"bad sweep spec {spec!r}, expected KEY=V1,V2,...")
        key, _, values = spec.partition("=")
        key = key.strip()
        if key not in _SWEEP_KEYS:
            raise ValueError(
                f"unknown sweep key {key!r}; known: {', '.join(sorted(_SWEEP_KEYS))}"
            )
        param, conv = _SWEEP_KEYS[key]
        axes.append([(param, conv(v.strip())) for v in values.split(",") if v.strip()])
    if not axes:
        return [{}]
    return [dict(combo) for combo in itertools.product(*axes)]


def _build_scenario(name_or_path: str, params: dict, args) -> object:
    families = builtin_scenarios()
    if name_or_path in families:
        build_params = dict(params)
        if args.rate is not None:
            build_params.setdefault("rate_mbps", args.rate)
        if args.arq is not None:
            build_params.setdefault("arq", args.arq == "on")
        if args.payload is not None:
            build_params.setdefault("payload_bytes", args.payload)
        if args.duration is not None:
            build_params.setdefault("duration_s", args.duration)
        build_params.setdefault("seed", args.seed)
        return families[name_or_path].build(**build_params)
    path = Path(name_or_path)
    if not path.exists():
        known = ", ".join(sorted(families))
        raise ScenarioError(
            f"unknown scenario {name_or_path!r}; built-ins: {known}"
        )
    scenario = load_scenario(path)
    overrides = {}
    if args.duration is not None:
        overrides["duration_s"] = args.duration
    overrides["seed"] = params.get("seed", args.seed)
    if args.rate is not None or "rate_mbps" in params:
        from .core import TransmissionStrategy

        overrides["radio"] = TransmissionStrategy(
            params.get("rate_mbps", args.rate), scenario.radio.power_w
        )
    if args.arq is not None or "arq" in params:
        from dataclasses import replace as _replace

        overrides["mac"] = _replace(
            scenario.mac, arq_enabled=params.get("arq", args.arq == "on")
        )
    return with_overrides(scenario, **overrides)


def _run_label(params: dict) -> str:
    if not params:
        return "run"
    return "_".join(f"{k}={v}" for k, v in sorted(params.items()))


def cmd_run(args) -> int:
    try:
        sweeps = _parse_sweeps(args.sweep)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    rows = []
    reports = []
    header = (
        f"{'scenario':<8} {'rate':>5} {'arq':>3} {'payload':>7} {'sent':>8} "
        f"{'received':>8} {'reliability':>11} {'thr_bps':>12} {'norm':>7}"
    )
    header_printed = False
    for params in sweeps:
        seed = params.get("seed", args.seed)
        try:
            scenario = _build_scenario(args.scenario, params, args)
            engine = Engine(scenario, seed=seed)
            report = engine.run()
        except (ScenarioError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        sessions_count = len(scenario.sessions)
        pps = scenario.sessions[0].pps if scenario.sessions else 0.0
        payload = scenario.sessions[0].payload_bytes if scenario.sessions else 0
        rows.append(
            (
                report_csv_row(
                    report,
                    sessions_count,
                    pps if not scenario.sessions[0].saturate else "",
                    payload,
                ),
                params,
                report,
            )
        )
        reports.append((params, report, scenario))
        if not header_printed:
            print(header)
            header_printed = True
        rel = "-" if report.reliability is None else f"{report.reliability:.3f}"
        print(
            f"{report.scenario:<8} {report.rate_mbps:>5} "
            f"{'on' if report.arq else 'off':>3} {payload:>7} {report.sent:>8} "
            f"{report.received:>8} {rel:>11} {report.throughput_bps:>12.0f} "
            f"{report.normalized_throughput:>7.3f}"
        )

    if args.out is not None:
        try:
            args.out.mkdir(parents=True, exist_ok=True)
            write_metrics_csv(args.out / "metrics.csv", [r for r, _p, _rep in rows])
            for params, report, scenario in reports:
                label = _run_label(params)
                write_event_log_jsonl(args.out / f"events_{label}.jsonl", report)
                if scenario.name == "dyn5":
                    from .scenarios import DYN5_IDS

                    relays = [DYN5_IDS["R1"], DYN5_IDS["R2"], DYN5_IDS["R3"]]
                    series = collect_relay_series(
                        report.deliveries, relays, scenario.duration_s
                    )
                    write_relay_series_csv(
                        args.out / f"relay_series_{label}.csv", series, relays
                    )
            summary = {
                "runs": [
                    {"params": {k: v for k, v in params.items()},
                     "event_log_hash": report.event_log_hash,
                     "reliability": report.reliability,
                     "normalized_throughput": report.normalized_throughput}
                    for params, report, _sc in reports
                ]
            }
            (args.out / "summary.json").write_text(json.dumps(summary, indent=2))
        except OSError as exc:
            print(f"I/O error: {exc}", file=sys.stderr)
            return EXIT_IO
    return EXIT_OK


def cmd_serve(args) -> int:
    from .bridge import serve_blocking

    try:
        scenario = _build_scenario(args.scenario, {}, args)
    except (ScenarioError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    host, _, port = args.endpoint.partition(":")
    try:
        serve_blocking(
            scenario, seed=args.seed, host=host or "127.0.0.1",
            ws_port=int(port or 8765), pace_ratio=args.pace,
        )
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.serve:
        return cmd_serve(args)
    return cmd_run(args)


if __name__ == "__main__":
    sys.exit(main())
