"""Command line entry point: ``waynav worldgen | run | eval | classify | render``.

Exit status: 0 ok, 1 usage or configuration error, 2 runtime error, 3 backend error.
Values in a ``--config`` JSON file override command-line flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections import Counter, defaultdict
from pathlib import Path

from .errors import NavError

log = logging.getLogger("waynav")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_BACKEND = 0, 1, 2, 3
SUITES = ("oracle", "deadend", "ordered", "aerial")
WORLD_SUFFIX = ".world.json"
TRACE_GLOB = "*.trace.jsonl"


class UsageError(Exception):
    pass


# ---- helpers -----------------------------------------------------------------------------------


def _world_files(paths) -> list[Path]:
    out = []
    for p in map(Path, paths):
        if p.is_dir():
            found = sorted(p.glob("*" + WORLD_SUFFIX))
            if not found:
                raise UsageError(f"no *{WORLD_SUFFIX} files in {p}")
            out.extend(found)
        elif p.is_file():
            out.append(p)
        else:
            raise UsageError(f"world file not found: {p}")
    if not out:
        raise UsageError("no worlds given")
    return out


def _trace_files(paths) -> list[Path]:
    out = []
    for p in map(Path, paths):
        if p.is_dir():
            out.extend(sorted(p.glob(TRACE_GLOB)))
        elif p.is_file():
            out.append(p)
        else:
            raise UsageError(f"trace file not found: {p}")
    if not out:
        raise UsageError("no trace files found")
    return out


def _worlds_by_name(paths) -> dict:
    from .world.io import load_world

    worlds = {}
    for f in _world_files(paths):
        w = load_world(f)
        worlds[w.name] = w
    return worlds


def _ablation_label(config: dict) -> str:
    tdm, scb = config.get("tdm", True), config.get("scb", True)
    return {(True, True): "full", (False, True): "w/o TDM", (True, False): "w/o SCB"}.get((tdm, scb), "w/o both")


def _apply_config(args, parser: argparse.ArgumentParser):
    if not getattr(args, "config", None):
        return
    path = Path(args.config)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise UsageError(f"{path}: not valid JSON ({e})") from None
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: expected a JSON object")
    for key, value in doc.items():
        dest = key.replace("-", "_")
        if dest in ("command", "config") or not hasattr(args, dest):
            raise UsageError(f"{path}: unknown option {key!r} for {args.command}")
        setattr(args, dest, value)


def _emit(text: str, out):
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# ---- subcommands -------------------------------------------------------------------------------


def cmd_worldgen(args) -> int:
    from .world import generator as gen
    from .world.io import save_world

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.suite:
        worlds = {"oracle": gen.oracle_suite, "deadend": gen.dead_end_suite,
                  "ordered": gen.ordered_subgoal_suite, "aerial": gen.aerial_suite}[args.suite]()
    else:
        spec = gen.GeneratorSpec(family=args.family, layout=args.layout, floors=args.floors,
                                 goal_floor=args.goal_floor, n_subgoals=args.subgoals,
                                 dead_end_rooms=args.dead_ends)
        try:
            spec.validate()
        except ValueError as e:
            raise UsageError(str(e)) from None
        worlds = [gen.generate_world(args.seed, spec, name=args.name)]
    for w in worlds:
        p = save_world(w, out / f"{w.name}{WORLD_SUFFIX}")
        print(p)
    return EXIT_OK


def cmd_run(args) -> int:
    from .runner import BackendSpec, EpisodeConfig, run_batch

    worlds = _world_files(args.worlds)
    if args.seed is not None:
        seeds = [int(args.seed)]
    else:
        if int(args.seeds) < 1:
            raise UsageError("--seeds must be at least 1")
        seeds = list(range(int(args.seeds)))
    if args.backend == "http" and not args.endpoint:
        raise UsageError("--backend http needs --endpoint")
    if not 0.0 <= float(args.error_rate) <= 1.0:
        raise UsageError("--error-rate must be within [0, 1]")
    try:
        config = EpisodeConfig.ablation(args.ablate, max_steps=int(args.max_steps))
        spec = BackendSpec(kind=args.backend, error_rate=float(args.error_rate), endpoint=args.endpoint,
                           timeout=float(args.timeout), max_retries=int(args.max_retries))
        if args.backend == "http":
            spec.build(0)  # validates the endpoint URL
    except ValueError as e:
        raise UsageError(str(e)) from None
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise UsageError(f"cannot create output directory {out}: {e}") from None
    if not os.access(out, os.W_OK):
        raise UsageError(f"output directory {out} is not writable")
    # world files must parse before any episode starts
    from .world.io import load_world

    for w in worlds:
        try:
            load_world(w)
        except (NavError, ValueError, KeyError, json.JSONDecodeError) as e:
            raise UsageError(f"{w}: unreadable world ({e})") from None

    jobs = int(args.jobs) if args.jobs else None
    results = run_batch(worlds, spec, seeds, config, out, jobs=jobs)
    failed_backend = 0
    for r in results:
        f = r["final"]
        print(f"{r['world']} seed={r['seed']} success={f['success']} termination={f['termination']}")
        if f.get("termination") == "backend_error":
            failed_backend += 1
    manifest = {
        "worlds": [w.name for w in worlds],
        "backend": args.backend,
        "error_rate": float(args.error_rate),
        "seeds": seeds,
        "ablate": args.ablate,
        "traces": sorted(Path(r["trace"]).name for r in results),
    }
    (out / "run.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    if failed_backend:
        log.error("%d episode(s) ended on a backend error", failed_backend)
        return EXIT_BACKEND
    return EXIT_OK


def cmd_eval(args) -> int:
    from .metrics import aggregate, compute_metrics, format_json, format_text
    from .runner import EpisodeTrace

    worlds = _worlds_by_name(args.worlds)
    groups = defaultdict(list)
    rows = []
    for tf in _trace_files(args.traces):
        trace = EpisodeTrace.load(tf)
        head = trace.records[0] if trace.records else {}
        world = worlds.get(trace.world)
        if world is None:
            raise UsageError(f"{tf}: world {trace.world!r} not among the given worlds")
        m = compute_metrics(trace, world)
        label = args.label or _ablation_label(head.get("config", {}))
        groups[label].append(m)
        rows.append(dict(m.__dict__, trace=tf.name, label=label))
    tables = [aggregate(groups[k], k) for k in sorted(groups)]
    _emit(format_json(tables) if args.format == "json" else format_text(tables), args.out)
    if args.per_episode:
        Path(args.per_episode).write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in rows))
    return EXIT_OK


def cmd_classify(args) -> int:
    from .metrics import FAILURE_CATEGORIES, classify_failure
    from .runner import EpisodeTrace

    counts = Counter()
    lines = []
    for tf in _trace_files(args.traces):
        trace = EpisodeTrace.load(tf)
        f = trace.final
        cat = classify_failure(f, f.get("family", ""), f.get("success_radius"))
        counts[cat] += 1
        lines.append(f"{tf.name}\t{cat}")
    lines.append("")
    for cat in FAILURE_CATEGORIES:
        lines.append(f"{cat}\t{counts[cat]}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_render(args) -> int:
    from .render import render_svg
    from .runner import EpisodeTrace
    from .world.io import load_world

    for p in (args.trace, args.world):
        if not Path(p).is_file():
            raise UsageError(f"file not found: {p}")
    svg = render_svg(EpisodeTrace.load(args.trace), load_world(args.world))
    out = args.out or str(Path(args.trace).name).replace(".trace.jsonl", "") + ".svg"
    Path(out).write_text(svg)
    print(out)
    return EXIT_OK


# ---- parser ------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="waynav", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("worldgen", help="generate world files")
    g.add_argument("--suite", choices=SUITES, help="write a whole fixture suite")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--family", default="ObjectNav", choices=("VLN", "ObjectNav", "EQA", "AerialVLN"))
    g.add_argument("--layout", default="rooms", choices=("rooms", "single_room", "junction"))
    g.add_argument("--floors", type=int, default=1)
    g.add_argument("--goal-floor", type=int, default=0)
    g.add_argument("--subgoals", type=int, default=3)
    g.add_argument("--dead-ends", action="store_true")
    g.add_argument("--name")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--config")
    g.set_defaults(func=cmd_worldgen)

    r = sub.add_parser("run", help="run episodes and write traces")
    r.add_argument("--worlds", nargs="+", required=True, help="world files or directories")
    r.add_argument("--backend", default="oracle", choices=("oracle", "forgetful", "http"))
    r.add_argument("--endpoint", help="base URL of the decision server (http backend)")
    r.add_argument("--timeout", type=float, default=180.0)
    r.add_argument("--max-retries", type=int, default=3)
    r.add_argument("--error-rate", type=float, default=0.0, help="fault injection rate for oracle backends")
    seeds = r.add_mutually_exclusive_group()
    seeds.add_argument("--seeds", type=int, default=1, help="run seeds 0..N-1")
    seeds.add_argument("--seed", type=int, help="run a single seed")
    r.add_argument("--ablate", default="none", choices=("none", "tdm", "scb", "both"))
    r.add_argument("--max-steps", type=int, default=500)
    r.add_argument("--jobs", type=int, help="worker processes (default: CPU count)")
    r.add_argument("--out", default="traces")
    r.add_argument("--config")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("eval", help="aggregate metrics over traces")
    e.add_argument("--traces", nargs="+", required=True)
    e.add_argument("--worlds", nargs="+", required=True)
    e.add_argument("--format", default="text", choices=("text", "json"))
    e.add_argument("--label", help="one label for all traces instead of grouping by ablation")
    e.add_argument("--per-episode", help="also write per-episode metrics as JSON lines")
    e.add_argument("--out")
    e.add_argument("--config")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("classify", help="failure category of each trace")
    c.add_argument("--traces", nargs="+", required=True)
    c.add_argument("--out")
    c.add_argument("--config")
    c.set_defaults(func=cmd_classify)

    v = sub.add_parser("render", help="plan-view SVG of one trace")
    v.add_argument("--trace", required=True)
    v.add_argument("--world", required=True)
    v.add_argument("--out")
    v.add_argument("--config")
    v.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        _apply_config(args, parser)
        return args.func(args)
    except UsageError as e:
        print(f"waynav {args.command}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NavError as e:
        print(f"waynav {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_BACKEND if type(e).__name__ == "BackendError" else EXIT_RUNTIME
    except (OSError, ValueError, KeyError) as e:
        print(f"waynav {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
