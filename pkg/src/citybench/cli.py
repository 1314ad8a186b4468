"""Command-line entry point: generate, serve, bench, score.

Exit codes: 0 success, 1 runtime failure (incomplete episodes, unreachable
endpoints), 2 usage or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import signal
import sys
import threading
from pathlib import Path

from . import episodes as ep
from . import policies as pol
from . import tasks
from .citygen import CityParams, generate_city
from .config import ConfigError, ServiceConfig, load_config
from .geometry import polyline_length
from .metrics import nav_metrics, render_nav_table, render_text_table, score_text
from .metrics.report import save_report
from .scenefile import load_scene, save_scene

log = logging.getLogger("citybench.cli")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="service config JSON file")
    p.add_argument("--seed", type=int, help="scene / run seed")
    p.add_argument("--scene", help="scene file path (skips generation)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="citybench",
                                     description="city simulation benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a city scene file")
    g.add_argument("--seed", type=int, default=7)
    g.add_argument("--out", required=True)
    g.add_argument("--rows", type=int, default=4)
    g.add_argument("--cols", type=int, default=4)
    g.add_argument("--block-size", type=float, default=200.0)
    g.add_argument("--density", type=float, default=0.7)

    s = sub.add_parser("serve", help="run the simulation service")
    _add_common(s)
    s.add_argument("--host")
    s.add_argument("--port", type=int)
    s.add_argument("--clock", choices=["lockstep", "realtime"])
    s.add_argument("--console-dir", help="static console bundle to serve at /console")

    b = sub.add_parser("bench", help="run benchmark tasks against a policy")
    _add_common(b)
    b.add_argument("--policy", default="oracle",
                   help="oracle | random | replay:<logfile> | external:<url>")
    b.add_argument("--out", required=True, help="output directory")
    b.add_argument("--tasks", default="vln,qa",
                   help="comma list from {vln, qa} plus authored families via --cases")
    b.add_argument("--episodes", type=int, default=10, help="VLN episode count")
    b.add_argument("--qa-per-subtype", type=int, default=5)
    b.add_argument("--cases", help="authored case file to include")
    b.add_argument("--remote", help="use a running service instead of in-process")
    b.add_argument("--max-ticks", type=int, default=2400)

    c = sub.add_parser("score", help="recompute metrics from logs alone")
    c.add_argument("--cases", required=True, help="case file the logs ran against")
    c.add_argument("--logs", required=True, help="episode log JSONL")
    c.add_argument("--out", help="write the report JSON here")
    c.add_argument("--policy-name", default="policy")
    return parser


# -- generate ---------------------------------------------------------------------


def cmd_generate(args) -> int:
    try:
        params = CityParams(rows=args.rows, cols=args.cols,
                            block_size=args.block_size,
                            building_density=args.density)
        params.validate()
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    scene = generate_city(args.seed, params)
    save_scene(scene, args.out)
    total_street = sum(polyline_length(s.centerline) for s in scene.streets)
    print(f"scene {scene.id}: {len(scene.buildings)} buildings, "
          f"{len(scene.streets)} streets ({total_street / 1000.0:.2f} km), "
          f"{len(scene.crosswalks)} crosswalks, {len(scene.signals)} signals, "
          f"{len(scene.furniture)} furniture items")
    print(f"wrote {args.out}")
    return EXIT_OK


# -- serve ------------------------------------------------------------------------


def _service_config(args, clock_default=None) -> ServiceConfig:
    overrides = {}
    for key in ("seed", "scene"):
        v = getattr(args, key, None)
        if v is not None:
            overrides["seed" if key == "seed" else "scene_path"] = v
    for key in ("host", "port", "clock"):
        v = getattr(args, key, None)
        if v is not None:
            overrides[key] = v
    v = getattr(args, "console_dir", None)
    if v is not None:
        overrides["console_dir"] = v
    if "clock" not in overrides and clock_default:
        overrides["clock"] = clock_default
    return load_config(args.config, overrides)


def cmd_serve(args) -> int:
    from .service import SimService, make_server, serve_forever

    try:
        cfg = _service_config(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        service = SimService(cfg)
        server = make_server(service)
    except OSError as e:
        print(f"error: cannot bind {cfg.host}:{cfg.port}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    stop = threading.Event()

    def on_signal(signum, frame):
        stop.set()
        threading.Thread(target=server.shutdown, daemon=True).start()

    signal.signal(signal.SIGINT, on_signal)
    signal.signal(signal.SIGTERM, on_signal)
    print(f"serving on http://{cfg.host}:{server.server_address[1]} "
          f"({cfg.clock} clock, {cfg.drones} drones / {cfg.vehicles} vehicles)")
    try:
        server.serve_forever()
    finally:
        service.close()
        server.server_close()
    return EXIT_OK


# -- bench ------------------------------------------------------------------------


def _start_inprocess(cfg) -> tuple:
    from .service import SimService, make_server

    service = SimService(cfg)
    server = make_server(service)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    url = f"http://{cfg.host}:{server.server_address[1]}"
    return service, server, url


def _assemble_report(policy_name, cases, logs, vln_eps, vln_logs) -> dict:
    report = {"policy": policy_name, "counts": {
        "cases": len(cases) + len(vln_eps),
        "completed": sum(1 for l in logs + vln_logs
                         if _log_field(l, "termination") != "incomplete"),
    }}
    truth = {c.case_id: c.ground_truth["text"] for c in cases}
    pairs = []
    for l in logs:
        cid = _log_field(l, "case_id")
        text = _log_field(l, "response_text")
        if cid in truth and text is not None:
            pairs.append((text, [truth[cid]]))
    if pairs:
        report["text"] = score_text(pairs)
    if vln_eps:
        results = ep.episode_results(vln_eps, vln_logs)
        report["nav"] = nav_metrics(results)
        report["nav_episodes"] = [
            {"case_id": r.episode_id, "success": r.success, "spl": r.spl,
             "nav_error": r.nav_error, "length": r.shortest_path_length}
            for r in results
        ]
    return report


def _log_field(l, name):
    return l.get(name) if isinstance(l, dict) else getattr(l, name)


def _print_report(report: dict) -> None:
    if "text" in report:
        print()
        print(render_text_table({report["policy"]: report["text"]}))
    if "nav" in report:
        print()
        print(render_nav_table(report["nav"]))
    print()
    print(f"completed {report['counts']['completed']} of "
          f"{report['counts']['cases']} cases")


def cmd_bench(args) -> int:
    try:
        cfg = _service_config(args, clock_default="lockstep")
        if cfg.clock != "lockstep":
            raise ConfigError("bench needs the lockstep clock")
        policy = pol.make_policy(args.policy, seed=cfg.seed)
        families = [f.strip() for f in args.tasks.split(",") if f.strip()]
        unknown = set(families) - {"vln", "qa"}
        if unknown:
            raise ConfigError(f"unknown task families {sorted(unknown)}; "
                              "authored families come from --cases")
    except (ConfigError, pol.PolicyError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    scene = load_scene(cfg.scene_path) if cfg.scene_path else generate_city(cfg.seed, cfg.city)

    cases: list = []
    vln_eps: list = []
    if "qa" in families:
        cases += tasks.generate_qa_cases(scene, cfg.seed, args.qa_per_subtype)
    if "vln" in families:
        vln_eps += tasks.generate_vln_episodes(scene, cfg.seed, args.episodes)
    if args.cases:
        authored, authored_eps = tasks.load_authored_cases(args.cases)
        cases += authored
        vln_eps += authored_eps
    tasks.save_cases(out_dir / "cases.json", cases, vln_eps)

    service = server = None
    if args.remote:
        base = args.remote
    else:
        service, server, base = _start_inprocess(cfg)
    log_path = out_dir / "episodes.jsonl"
    log_path.write_text("")
    limits = ep.EpisodeLimits(max_ticks=args.max_ticks)
    text_logs, vln_logs = [], []
    failures = 0
    try:
        with ep.HttpSimClient(base) as client:
            client.acquire("drone")
            for episode in vln_eps:
                elog = ep.run_episode(client, episode, policy, cfg.seed, limits)
                ep.append_log(log_path, elog)
                vln_logs.append(elog)
                if elog.termination == "incomplete":
                    failures += 1
                    log.warning("episode %s incomplete: %s", episode.case_id, elog.error)
            for case in cases:
                tlog = ep.run_text_case(client, case, policy, cfg.seed)
                ep.append_log(log_path, tlog)
                text_logs.append(tlog)
                if tlog.termination == "incomplete":
                    failures += 1
                    log.warning("case %s incomplete: %s", case.case_id, tlog.error)
    except ep.TransportError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    finally:
        if server is not None:
            server.shutdown()
            service.close()

    report = _assemble_report(args.policy, cases, text_logs, vln_eps, vln_logs)
    save_report(out_dir / "report.json", report)
    _print_report(report)
    print(f"logs: {log_path}")
    print(f"report: {out_dir / 'report.json'}")
    return EXIT_RUNTIME if failures else EXIT_OK


# -- score ------------------------------------------------------------------------


def cmd_score(args) -> int:
    try:
        cases, vln_eps = tasks.load_authored_cases(args.cases)
        logs = ep.load_logs(args.logs)
    except (tasks.TaskError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    known = {c.case_id for c in cases} | {e.case_id for e in vln_eps}
    for l in logs:
        if l["case_id"] not in known:
            print(f"error: log references unknown case {l['case_id']!r}",
                  file=sys.stderr)
            return EXIT_USAGE
    text_logs = [l for l in logs if l.get("response_text") is not None]
    vln_ids = {e.case_id for e in vln_eps}
    vln_logs = [l for l in logs if l["case_id"] in vln_ids]
    report = _assemble_report(args.policy_name, cases, text_logs, vln_eps, vln_logs)
    if args.out:
        save_report(args.out, report)
    _print_report(report)
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {"generate": cmd_generate, "serve": cmd_serve,
               "bench": cmd_bench, "score": cmd_score}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
