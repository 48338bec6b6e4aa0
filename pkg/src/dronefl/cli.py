"""Command line entry point: ``dronefl <command> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .conic import build, emit
from .harness import ExperimentPlan, directional_checks, run
from .instance import PRESETS, InstanceError, dumps_instance, generate_instance, read_instance, write_instance
from .queueing import Assignment
from .simulator import SimConfig, simulate, write_event_log
from .solver import InfeasibleInstance, budget, min_fleet, solve


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _seeds(text: str) -> tuple[int, ...]:
    """'N' means seeds 0..N-1; 'a-b' an inclusive range; otherwise a comma list."""
    if text.isdigit():
        return tuple(range(int(text)))
    if "-" in text and "," not in text:
        a, b = text.split("-")
        return tuple(range(int(a), int(b) + 1))
    return tuple(int(v) for v in text.split(","))


def _write_json(doc, path: str | None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _fleet_budget(inst, args) -> tuple[int, int | None]:
    if args.K is not None:
        return args.K, None
    ks = min_fleet(inst, seed=args.seed).K_star
    alpha = inst.fleet.alpha if args.alpha is None else args.alpha
    return budget(ks, alpha, inst.fleet.k_hard_cap), ks


def _sim_config(args, **extra) -> SimConfig:
    return SimConfig(horizon=args.horizon, warmup=args.warmup, replications=args.reps, seed=args.sim_seed,
                     paired_streams=not args.unpaired, **extra)


def cmd_generate(args) -> int:
    inst = generate_instance(args.seed, n_nodes=args.nodes, n_facilities=args.facilities, mode=args.mode,
                             config=args.preset)
    if args.out:
        write_instance(inst, args.out)
    else:
        sys.stdout.write(dumps_instance(inst) + "\n")
    return 0


def cmd_solve(args) -> int:
    inst = read_instance(args.instance)
    if args.model:
        inst = inst.with_mode(args.model)
    K, ks = _fleet_budget(inst, args)
    method = "brute_force" if args.oracle else args.method
    res = solve(inst, K, method=method, seed=args.seed, restarts=args.restarts)
    doc = res.to_dict(inst)
    doc["x"] = [int(j in res.best.open_set) for j in range(inst.n_facilities)]
    doc["K_star"] = ks
    doc["model"] = inst.mode
    _write_json(doc, args.out)
    return 0


def cmd_emit(args) -> int:
    inst = read_instance(args.instance)
    if args.model:
        inst = inst.with_mode(args.model)
    K, _ = _fleet_budget(inst, args)
    emit(build(inst, K), args.out, format=args.format)
    return 0


def cmd_simulate(args) -> int:
    inst = read_instance(args.instance)
    sol = json.loads(Path(args.solution).read_text())
    asg = Assignment.from_dict(sol)
    cfg = _sim_config(args, discipline=args.discipline, event_log=bool(args.event_log))
    rep = simulate(inst, asg, cfg)
    if args.event_log:
        write_event_log(rep, args.event_log)
    text = rep.to_json()
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        sys.stdout.write(text + "\n")
    return 0


def cmd_experiment(args) -> int:
    cfg = _sim_config(args)
    if args.kind == "directions":
        out = directional_checks(seeds=_seeds(args.seeds), sim=cfg, restarts=args.restarts, kicks=args.kicks,
                                 out_dir=args.out)
        _write_json(out, str(Path(args.out) / "directions.json") if args.out else None)
        if args.out:
            print("PASS" if out["pass"] else "FAIL")
        return 0 if out["pass"] else 1
    kw = {}
    if args.grid:
        kw["grid"] = _floats(args.grid)
    for name in ("alphas", "w1s", "deltas"):
        if getattr(args, name):
            kw[name] = _floats(getattr(args, name))
    plan = ExperimentPlan(kind=args.kind, preset=args.preset, seeds=_seeds(args.seeds), sim=cfg,
                          simulate=not args.no_sim, restarts=args.restarts, kicks=args.kicks,
                          workers=args.workers, out_dir=args.out, **kw)
    res = run(plan)
    print(f"{len(res['rows'])} rows, {res['failures']} failed, {res['seconds']:.1f} s")
    return 0 if res["failures"] == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dronefl", description="Drone fleet location under priority queueing.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="draw a random instance")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--preset", choices=sorted(PRESETS), default=None)
    g.add_argument("--mode", choices=("np", "sp", "dp"), default="sp")
    g.add_argument("--nodes", type=int)
    g.add_argument("--facilities", type=int)
    g.add_argument("--out", "-o", help="instance JSON path (default: stdout)")
    g.set_defaults(func=cmd_generate)

    def budget_args(q):
        q.add_argument("--instance", required=True)
        q.add_argument("--model", choices=("np", "sp", "dp"), help="override the instance discipline")
        q.add_argument("--K", type=int, help="fleet cap (default: budget from the minimum fleet and alpha)")
        q.add_argument("--alpha", type=float, help="budget slack (default: the instance's)")
        q.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("solve", help="optimize locations, routing and drone counts")
    budget_args(s)
    s.add_argument("--method", choices=("auto", "brute_force", "local_search"), default="auto")
    s.add_argument("--oracle", action="store_true", help="same as --method brute_force")
    s.add_argument("--restarts", type=int, default=16)
    s.add_argument("--out", "-o", help="solution JSON path (default: stdout)")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("emit-conic", help="write the conic program (CBF-style or LP-style text)")
    budget_args(e)
    e.add_argument("--format", choices=("cbf", "lp"), default="cbf")
    e.add_argument("--out", "-o", required=True)
    e.set_defaults(func=cmd_emit)

    def sim_args(q, seed_flag):
        q.add_argument("--horizon", type=float, default=30000.0)
        q.add_argument("--warmup", type=float, default=0.1)
        q.add_argument("--reps", type=int, default=10)
        q.add_argument(seed_flag, dest="sim_seed", type=int, default=0, help="simulation seed")
        q.add_argument("--unpaired", action="store_true", help="independent streams per discipline")

    m = sub.add_parser("simulate", help="simulate a solution")
    m.add_argument("--instance", required=True)
    m.add_argument("--solution", required=True, help="JSON with y, k and optionally open (solve output works)")
    m.add_argument("--discipline", choices=("fcfs", "static", "dynamic"))
    m.add_argument("--event-log", help="CSV path for the first replication's events")
    m.add_argument("--out", "-o", help="report JSON path (default: stdout)")
    sim_args(m, "--seed")
    m.set_defaults(func=cmd_simulate)

    x = sub.add_parser("experiment", help="run a sweep and write CSV outputs")
    x.add_argument("kind", choices=("alpha", "weights", "delta", "compare", "directions"))
    x.add_argument("--preset", choices=("sp-paper", "dp-paper"), default="sp-paper")
    x.add_argument("--seeds", default="20", help="count N (seeds 0..N-1), range 'a-b' or comma list")
    x.add_argument("--grid", help="comma list for the swept axis")
    x.add_argument("--alphas", help="fixed-axis alpha values")
    x.add_argument("--w1s", help="fixed-axis class-1 weights")
    x.add_argument("--deltas", help="fixed-axis initial priority gaps")
    x.add_argument("--restarts", type=int, default=4)
    x.add_argument("--kicks", type=int, default=2)
    x.add_argument("--workers", type=int, default=1)
    x.add_argument("--no-sim", action="store_true")
    x.add_argument("--out")
    sim_args(x, "--sim-seed")
    x.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InstanceError, InfeasibleInstance, ValueError, OSError) as exc:
        print(f"dronefl: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
