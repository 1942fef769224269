"""Command-line front end: run subjects, invoke checkers, explore, attack.

Subcommands: run | check | explore | adversary.  Every subcommand accepts
--config FILE (a single JSON object) with individual flags taking precedence;
RMRLAB_SEED in the environment overrides the seed.  Output files are
byte-identical across runs for identical inputs.

Exit codes: 0 success, 2 checker-detectable violation, 64 unknown subject,
65 malformed configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import random
import sys

from . import adversary as adv
from . import explorer as xp
from . import model
from .objects import BOTTOM, ObjRuntime, cas_op
from .subjects import REGISTRY, make_subject

EX_OK = 0
EX_VIOLATION = 2
EX_UNKNOWN_SUBJECT = 64
EX_BAD_CONFIG = 65


class ConfigError(Exception):
    pass


def _load_config(args) -> dict:
    cfg = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
    for key, value in vars(args).items():
        if key in ("config", "func") or value is None:
            continue
        cfg[key.replace("_", "-")] = value
    seed_env = os.environ.get("RMRLAB_SEED")
    if seed_env is not None:
        cfg["seed"] = int(seed_env)
    cfg.setdefault("seed", 0)
    return cfg


def _emit(path, payload):
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _build_schedule(cfg, sim, subject):
    """Inline schedule, or generated round-robin / seeded random; abort
    injections are (process, global step index) pairs applied as the run
    reaches each index."""
    spec = cfg.get("schedule", "round-robin")
    aborts = {(int(p), int(i)) for p, i in cfg.get("abort-injections", [])}
    max_steps = int(cfg.get("steps", 50_000))
    if isinstance(spec, list):
        return model.schedule_from_json(spec)
    rng = random.Random(int(cfg.get("seed", 0)))
    n = subject.n
    items = []
    C = sim.initial()
    k = 0
    rr = 0
    while not C.all_returned() and k < max_steps:
        for p, idx in sorted(aborts):
            if idx == k and not C.aborted[p] and not C.returned(p):
                it = model.abort_item(p)
                C, _ = sim.apply(C, (it,))
                items.append(it)
        live = [p for p in range(n) if not C.returned(p)]
        if not live:
            break
        if spec == "round-robin":
            p = rr % n
            rr += 1
            if C.returned(p):
                continue
        elif spec == "random":
            p = rng.choice(live)
        else:
            raise ConfigError(f"unknown schedule kind {spec!r}")
        it = model.step(p)
        C, _ = sim.apply(C, (it,))
        items.append(it)
        k += 1
    return tuple(items)


def _run_cas_demo(cfg) -> int:
    n = int(cfg.get("n", 2))
    rt = ObjRuntime(n, [[cas_op(cfg.get("initial", "init"), f"v{p}")] for p in range(n)])
    w = rt.initial()
    order = list(range(n)) * 200
    for p in order:
        if w.all_done():
            break
        w = rt.step(w, p)
    ops = w.completed_ops()
    verdict = xp.check_linearizable_cas(ops, cfg.get("initial", "init"))
    _emit(cfg.get("out"), {
        "subject": "cas-demo",
        "operations": [
            {"proc": r.proc, "kind": r.kind, "args": list(r.args), "ret": r.ret,
             "rmrs": r.rmrs, "t_inv": r.t_inv, "t_ret": r.t_ret}
            for r in ops
        ],
        "value": w.abstract_value(),
        "linearizable": verdict.passed,
    })
    return EX_OK if verdict.passed else EX_VIOLATION


def cmd_run(args) -> int:
    cfg = _load_config(args)
    name = cfg.get("subject", "le2")
    if name == "cas-demo":
        return _run_cas_demo(cfg)
    try:
        subject = make_subject(name, int(cfg.get("n", 2)))
    except KeyError as exc:
        print(exc, file=sys.stderr)
        return EX_UNKNOWN_SUBJECT
    sim = model.Simulator(subject)
    schedule = _build_schedule(cfg, sim, subject)
    C, trace = sim.apply(sim.initial(), schedule)
    verdict = xp.check_le_safety(C)
    payload = {
        "subject": name,
        "n": subject.n,
        "schedule": model.schedule_to_json(schedule),
        "trace": model.trace_to_json(trace),
        "final": model.config_snapshot(C),
        "outcomes": {str(p): C.outcome(p) for p in range(subject.n)},
        "safety": verdict.status,
        "safety_detail": verdict.detail,
    }
    _emit(cfg.get("out"), payload)
    return EX_OK if verdict.passed else EX_VIOLATION


def _witness_config(cfg, subject_name, n, schedule) -> dict:
    return {
        "subject": subject_name,
        "n": n,
        "schedule": model.schedule_to_json(schedule),
        "seed": cfg.get("seed", 0),
    }


def cmd_check(args) -> int:
    cfg = _load_config(args)
    checker = cfg.get("checker", "safety")
    name = cfg.get("subject", "le2")
    n = int(cfg.get("n", 2))
    budget = xp.ExplorationBudget(
        max_depth=int(cfg.get("depth", 120)),
        max_nodes=int(cfg.get("max-nodes", 60_000)),
    )
    if checker == "linearizable":
        rt = ObjRuntime(n, [[cas_op("init", f"v{p}")] for p in range(n)])
        ex = xp.explore_objects(rt, budget)
        bad = None
        for h in ex.histories:
            v = xp.check_linearizable_cas(h, "init")
            if v.failed:
                bad = h
                break
        payload = {
            "checker": checker, "histories": len(ex.histories),
            "complete": ex.complete, "nodes": ex.nodes,
            "max_op_rmrs": ex.max_op_rmrs,
            "status": "fail" if bad else "pass",
        }
        _emit(cfg.get("out"), payload)
        return EX_VIOLATION if bad else EX_OK
    try:
        subject = make_subject(name, n)
    except KeyError as exc:
        print(exc, file=sys.stderr)
        return EX_UNKNOWN_SUBJECT
    sim = model.Simulator(subject)
    if checker == "safety":
        verdict = xp.scan_le_safety(sim, budget)
        if not verdict.failed:
            runs = xp.check_le_safety_runs(sim, runs=int(cfg.get("runs", 300)),
                                           seed=int(cfg.get("seed", 0)))
            if runs.failed:
                verdict = runs
    elif checker == "abort":
        verdict = xp.check_bounded_abort(sim, int(cfg.get("bound", 50)), budget)
    elif checker == "deadlock":
        verdict = xp.check_deadlock_freedom(
            sim, samples=int(cfg.get("samples", 20)), seed=int(cfg.get("seed", 0)),
            budget=xp.ExplorationBudget(max_depth=int(cfg.get("depth", 2000))),
            with_aborts=bool(cfg.get("with-aborts", False)),
        )
    else:
        raise ConfigError(f"unknown checker {checker!r}")
    payload = {"checker": checker, "subject": name, "n": n,
               "status": verdict.status, "detail": verdict.detail}
    if verdict.failed and verdict.witness is not None:
        wpath = cfg.get("witness-out", "witness.json")
        _emit(wpath, _witness_config(cfg, name, n, verdict.witness))
        payload["witness_file"] = wpath
    _emit(cfg.get("out"), payload)
    return EX_VIOLATION if verdict.failed else EX_OK


def cmd_explore(args) -> int:
    cfg = _load_config(args)
    name = cfg.get("subject", "le2")
    try:
        subject = make_subject(name, int(cfg.get("n", 2)))
    except KeyError as exc:
        print(exc, file=sys.stderr)
        return EX_UNKNOWN_SUBJECT
    a, b = (int(x) for x in str(cfg.get("procs", "0,1")).split(","))
    sim = model.Simulator(subject)
    budget = xp.ExplorationBudget(
        max_depth=int(cfg.get("depth", 120)),
        max_nodes=int(cfg.get("max-nodes", 60_000)),
    )
    rep = xp.classify_bivalence(sim, sim.initial(), a, b, budget)
    witnesses = []
    lost = model.lost_set(sim.initial())
    if a not in lost and b not in lost and rep.solo_outcomes.get(a) == model.WIN \
            and rep.solo_outcomes.get(b) == model.WIN:
        sched = xp.find_both_lose_schedule(sim, sim.initial(), a, b,
                                           xp.ExplorationBudget(max_depth=int(cfg.get("depth", 60))))
        if sched:
            witnesses.append(model.schedule_to_json(sched))
    payload = {
        "classification": rep.classification,
        "vectors": sorted(map(list, rep.vectors)),
        "witnesses": witnesses,
        "nodes_visited": rep.nodes,
        "complete": rep.complete,
        "solo": {str(k): v for k, v in rep.solo_outcomes.items()},
    }
    _emit(cfg.get("out"), payload)
    return EX_OK


def cmd_adversary(args) -> int:
    cfg = _load_config(args)
    name = cfg.get("subject", "tournament")
    try:
        subject = make_subject(name, int(cfg.get("n", 8)))
    except KeyError as exc:
        print(exc, file=sys.stderr)
        return EX_UNKNOWN_SUBJECT
    params = adv.AdversaryParams(
        c=int(cfg.get("c", 10)),
        ell_override=(int(cfg["ell"]) if cfg.get("ell") is not None else None),
        rounds=(int(cfg["rounds"]) if cfg.get("rounds") is not None else None),
        turan_mode=cfg.get("turan-mode", "greedy"),
    )
    report = adv.run(subject, subject.n, params)
    _emit(cfg.get("out"), report.to_json())
    if cfg.get("csv"):
        with open(cfg["csv"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["round", "rmrs", "processes"])
            for i, hist in enumerate(report.survivor_rmrs):
                buckets: dict = {}
                for _, c in hist.items():
                    buckets[c] = buckets.get(c, 0) + 1
                for rmrs in sorted(buckets):
                    w.writerow([i, rmrs, buckets[rmrs]])
    return EX_OK if report.all_invariants_hold() else EX_VIOLATION


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rmrlab",
                                 description="simulate, verify and attack abortable leader election")
    sub = ap.add_subparsers(required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override")
        p.add_argument("--subject",
                       help="one of %s or cas-demo" % ", ".join(sorted(REGISTRY)))
        p.add_argument("--n", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output JSON path (default stdout)")

    p = sub.add_parser("run", help="run a subject under a schedule, emit the trace")
    common(p)
    p.add_argument("--schedule", help="round-robin | random")
    p.add_argument("--steps", type=int)
    p.add_argument("--abort", dest="abort_injections", action="append", nargs=2,
                   type=int, metavar=("PROC", "STEP"), help="abort PROC before global step STEP")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check", help="safety / abort / deadlock / linearizable checkers")
    common(p)
    p.add_argument("--checker", choices=["safety", "abort", "deadlock", "linearizable"])
    p.add_argument("--depth", type=int)
    p.add_argument("--max-nodes", type=int)
    p.add_argument("--bound", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--witness-out")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("explore", help="bivalency classification and both-lose search")
    common(p)
    p.add_argument("--procs", help="two process ids, e.g. 0,1")
    p.add_argument("--depth", type=int)
    p.add_argument("--max-nodes", type=int)
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("adversary", help="run the round construction, emit the report")
    common(p)
    p.add_argument("--rounds", type=int)
    p.add_argument("--ell", type=int)
    p.add_argument("--c", type=int)
    p.add_argument("--csv", help="per-round RMR histogram CSV path")
    p.add_argument("--turan-mode", choices=["greedy", "exact"])
    p.set_defaults(func=cmd_adversary)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EX_BAD_CONFIG
    except (adv.ModelViolation, adv.InternalInvariantBroken, adv.BothLoseNotFound) as exc:
        print(f"adversary error: {exc}", file=sys.stderr)
        return EX_VIOLATION


if __name__ == "__main__":
    sys.exit(main())
