"""Experiment sweeps: fleet budget, class weights, priority gap, discipline gaps.

Every row is produced by: generate the preset instance for a seed, size the
fleet with :func:`~dronefl.solver.min_fleet` and :func:`~dronefl.solver.budget`,
solve, evaluate the analytics, simulate the solution.  Output files in the
plan's directory:

* ``rows.csv``      one row per (seed, sweep point, model); column schema in ROW_FIELDS
* ``summary.csv``   across-seed aggregates (quartiles use linear interpolation)
* ``tails.csv``     simulated P(wait > t) per row and class
* ``gaps.csv``      discipline comparison only: per-seed relative gaps
* ``manifest.json`` plan, seeds, package and library versions
"""

from __future__ import annotations

import csv
import json
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .instance import Instance, generate_instance
from .queueing import DEFAULT_DISCIPLINE, Assignment, objective, report_metrics
from .simulator import SimConfig, SimReport, simulate
from .solver import budget, local_search, min_fleet

ALPHA_GRID = (0.0, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0)
W1_GRID = (1.0, 0.99, 0.7, 0.5, 0.3, 0.1, 0.0)
DELTA_GRID = (3.0, 10.0, 20.0)
METRICS = ("Z", "sumZ", "W", "sumW")
N_CLASSES = 2

ROW_FIELDS = (["experiment", "preset", "seed", "model", "discipline", "alpha", "w1", "delta_a", "K_star", "K",
               "n_open", "solve_evals", "solve_seconds", "sim_seconds", "ana_Z", "sim_Z", "sim_Z_ci"]
              + [f"{src}_{m}_{r}" for src in ("ana", "sim") for m in METRICS for r in range(1, N_CLASSES + 1)]
              + ["error"])


@dataclass(frozen=True)
class ExperimentPlan:
    """What to run.

    ``grid`` holds the swept values (alpha, w1 or delta_a by ``kind``); the
    remaining axes come from ``alphas``, ``w1s`` and ``deltas``.  ``models``
    defaults by preset: sp-paper runs (SP, NP), dp-paper (DP, SP, NP) in
    comparisons and the preset's own model elsewhere.
    """

    kind: str  # alpha | weights | delta | compare
    preset: str = "sp-paper"
    seeds: tuple[int, ...] = tuple(range(20))
    grid: tuple[float, ...] = ()
    alphas: tuple[float, ...] = (0.1,)
    w1s: tuple[float, ...] = (0.7,)
    deltas: tuple[float, ...] = (3.0,)
    models: tuple[str, ...] = ()
    sim: SimConfig = field(default_factory=SimConfig)
    simulate: bool = True
    restarts: int = 4
    kicks: int = 2
    eval_budget: int = 200_000
    workers: int = 1
    out_dir: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("alpha", "weights", "delta", "compare"):
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.preset not in ("sp-paper", "dp-paper"):
            raise ValueError(f"unknown preset {self.preset!r}")
        if not self.seeds:
            raise ValueError("no seeds")
        if not self.grid and self.kind != "compare":
            object.__setattr__(self, "grid", {"alpha": ALPHA_GRID, "weights": W1_GRID, "delta": DELTA_GRID}[self.kind])
        if self.kind == "alpha" and any(a < 0 for a in self.grid):
            raise ValueError("alpha values must be nonnegative")
        if self.kind == "weights" and any(not 0 <= w <= 1 for w in self.grid):
            raise ValueError("w1 values must lie in [0, 1]")
        if self.kind == "delta" and any(d < 0 for d in self.grid):
            raise ValueError("delta_a values must be nonnegative")
        if any(a < 0 for a in self.alphas) or any(not 0 <= w <= 1 for w in self.w1s) or any(d < 0 for d in self.deltas):
            raise ValueError("inadmissible value on a fixed axis")
        if not self.models:
            own = "sp" if self.preset == "sp-paper" else "dp"
            models = (("sp", "np") if own == "sp" else ("dp", "sp", "np")) if self.kind == "compare" else (own,)
            object.__setattr__(self, "models", models)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sim"]["tail_grid"] = list(self.sim.tail_grid)
        return d


def _instance(preset: str, seed: int, model: str, w1: float, delta: float) -> Instance:
    base = generate_instance(seed, mode="dp" if preset == "dp-paper" else "sp", config=preset)
    init = (float(delta), 0.0) if preset == "dp-paper" else None
    base = base.with_priority(weights=(w1, 1.0 - w1), initial_values=init)
    return base if model == base.mode else base.with_mode(model)


def _blank_row(**kw) -> dict:
    row = {f: math.nan for f in ROW_FIELDS}
    row.update(kw)
    row["error"] = "ok"
    return row


def _measure(inst: Instance, asg: Assignment, row: dict, sim_inst: Instance, cfg: SimConfig | None,
             disc: str) -> SimReport | None:
    obj = objective(inst, asg)
    row["ana_Z"] = obj.Z
    for r, c in enumerate(report_metrics(inst, asg), start=1):
        for m in METRICS:
            row[f"ana_{m}_{r}"] = getattr(c, m)
    if cfg is None:
        return None
    t0 = time.perf_counter()
    rep = simulate(sim_inst, asg, replace(cfg, discipline=disc))
    row["sim_seconds"] = time.perf_counter() - t0
    wz = rep.weighted_Z()
    row["sim_Z"] = float(wz.mean())
    row["sim_Z_ci"] = float(1.959963984540054 * wz.std(ddof=1) / math.sqrt(len(wz))) if len(wz) > 1 else 0.0
    for m in METRICS:
        for r, v in enumerate(rep.mean(m), start=1):
            row[f"sim_{m}_{r}"] = float(v)
    return rep


def _solve(inst: Instance, K: int, seed: int, plan: ExperimentPlan, initial=None):
    return local_search(inst, K, seed=seed, budget=plan.eval_budget, restarts=plan.restarts, kicks=plan.kicks,
                        initial=initial)


def _tails(rep: SimReport | None, key: dict) -> list[dict]:
    if rep is None:
        return []
    out = []
    P = rep.tails()
    for r in range(P.shape[0]):
        for t, p in zip(rep.config.tail_grid, P[r]):
            out.append({**key, "class": r + 1, "t": t, "P": float(p)})
    return out


def _seed_job(plan: ExperimentPlan, seed: int) -> tuple[list[dict], list[dict], list[dict]]:
    """All rows of one seed (sequential: budgets warm-start from smaller ones)."""
    rows, tails, gaps = [], [], []
    cfg = plan.sim if plan.simulate else None
    if plan.kind == "compare":
        points = [(plan.alphas[0], plan.w1s[0], plan.deltas[0])]
    elif plan.kind == "alpha":
        points = [(a, plan.w1s[0], d) for d in plan.deltas for a in sorted(plan.grid)]
    else:
        w1s = plan.grid if plan.kind == "weights" else plan.w1s
        deltas = plan.grid if plan.kind == "delta" else plan.deltas
        points = [(a, w, d) for d in deltas for w in w1s for a in sorted(plan.alphas)]
    warm: dict = {}
    fleet: dict = {}
    for alpha, w1, delta in points:
        sim_base = _instance(plan.preset, seed, plan.models[0], w1, delta)
        insts = {m: _instance(plan.preset, seed, m, w1, delta) for m in plan.models}
        # comparisons give every model the budget of node-level routing
        for m in plan.models:
            if (m, w1, delta) not in fleet:
                fi = insts[m].with_mode("np") if plan.kind == "compare" else insts[m]
                fleet[(m, w1, delta)] = min_fleet(fi, seed=seed).K_star
        k_star = {m: fleet[(m, w1, delta)] for m in plan.models}
        reports = {}
        for model in plan.models:
            inst = insts[model]
            disc = DEFAULT_DISCIPLINE[model]
            ks = max(k_star.values()) if plan.kind == "compare" else k_star[model]
            row = _blank_row(experiment=plan.kind, preset=plan.preset, seed=seed, model=model, discipline=disc,
                             alpha=alpha, w1=w1, delta_a=delta if inst.mode == "dp" or plan.preset == "dp-paper"
                             else math.nan, K_star=ks)
            try:
                K = budget(ks, alpha, inst.fleet.k_hard_cap)
                row["K"] = K
                t0 = time.perf_counter()
                res = _solve(inst, K, seed, plan, warm.get((model, w1, delta)))
                row["solve_seconds"] = time.perf_counter() - t0
                row["solve_evals"] = res.iterations
                row["n_open"] = len(res.best.open_set)
                warm[(model, w1, delta)] = res.best
                rep = _measure(inst, res.best, row, sim_base, cfg, disc)
                reports[model] = rep
                tails += _tails(rep, {"experiment": plan.kind, "seed": seed, "model": model, "alpha": alpha,
                                      "w1": w1, "delta_a": row["delta_a"]})
            except Exception as exc:  # a failed row is reported, the sweep goes on
                row["error"] = f"{type(exc).__name__}: {exc}".replace("\n", " ")
            rows.append(row)
        if plan.kind == "compare":
            gaps += _gap_rows(seed, rows[-len(plan.models):], plan.models)
    return rows, tails, gaps


def _gap_rows(seed: int, rows: list[dict], models: tuple[str, ...]) -> list[dict]:
    by = {r["model"]: r for r in rows}
    out = []
    pairs = [("sp", "np")] if "dp" not in models else [("dp", "sp"), ("dp", "np"), ("sp", "np")]
    for x, y in pairs:
        g = {"seed": seed, "X": x, "Y": y}
        for src in ("ana", "sim"):
            for m in METRICS:
                for r in range(1, N_CLASSES + 1):
                    a, b = by[x][f"{src}_{m}_{r}"], by[y][f"{src}_{m}_{r}"]
                    g[f"{src}_gap_{m}_{r}"] = (a - b) / b if b else math.nan
        out.append(g)
    return out


def _quart(values) -> dict:
    v = np.asarray([x for x in values if not math.isnan(x)], dtype=float)
    if not len(v):
        return {"n": 0, "mean": math.nan, "q1": math.nan, "median": math.nan, "q3": math.nan}
    q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75], method="linear")
    return {"n": len(v), "mean": float(v.mean()), "q1": float(q1), "median": float(med), "q3": float(q3)}


def summarize(plan: ExperimentPlan, rows: list[dict], gaps: list[dict]) -> list[dict]:
    """Across-seed aggregates for each (model, alpha, w1, delta_a) point, or mean gaps."""
    if plan.kind == "compare":
        out = []
        keys = [k for k in gaps[0] if k.endswith(tuple(f"_{r}" for r in range(1, N_CLASSES + 1)))] if gaps else []
        for pair in dict.fromkeys((g["X"], g["Y"]) for g in gaps):
            sel = [g for g in gaps if (g["X"], g["Y"]) == pair]
            for k in keys:
                out.append({"X": pair[0], "Y": pair[1], "quantity": k, **_quart([g[k] for g in sel])})
        return out
    out = []
    points = dict.fromkeys((r["model"], r["alpha"], r["w1"], r["delta_a"]) for r in rows)
    cols = ["ana_Z", "sim_Z"] + [f"{s}_{m}_{r}" for s in ("ana", "sim") for m in METRICS
                                 for r in range(1, N_CLASSES + 1)]
    for model, alpha, w1, delta in points:
        sel = [r for r in rows if (r["model"], r["alpha"], r["w1"]) == (model, alpha, w1)
               and (r["delta_a"] == delta or (math.isnan(r["delta_a"]) and math.isnan(delta)))]
        for c in cols + ["ratio_sim_Z_2_1", "ratio_sim_sumZ_1_2", "ratio_sim_sumW_1_2"]:
            if c == "ratio_sim_Z_2_1":
                vals = [r["sim_Z_2"] / r["sim_Z_1"] for r in sel]
            elif c == "ratio_sim_sumZ_1_2":
                vals = [r["sim_sumZ_1"] / r["sim_sumZ_2"] for r in sel]
            elif c == "ratio_sim_sumW_1_2":
                vals = [r["sim_sumW_1"] / r["sim_sumW_2"] if r["sim_sumW_2"] else math.nan for r in sel]
            else:
                vals = [r[c] for r in sel]
            out.append({"model": model, "alpha": alpha, "w1": w1, "delta_a": delta, "quantity": c, **_quart(vals)})
    return out


def run(plan: ExperimentPlan) -> dict:
    """Run a plan; write files when ``out_dir`` is set.  Returns rows, tails,
    gaps, summary and the count of failed rows."""
    t0 = time.perf_counter()
    if plan.workers > 1:
        with ProcessPoolExecutor(plan.workers) as pool:
            parts = list(pool.map(_seed_job, [plan] * len(plan.seeds), plan.seeds))
    else:
        parts = [_seed_job(plan, s) for s in plan.seeds]
    rows = [r for p in parts for r in p[0]]
    tails = [t for p in parts for t in p[1]]
    gaps = [g for p in parts for g in p[2]]
    summary = summarize(plan, rows, gaps)
    failures = sum(r["error"] != "ok" for r in rows)
    result = {"rows": rows, "tails": tails, "gaps": gaps, "summary": summary, "failures": failures,
              "seconds": time.perf_counter() - t0}
    if plan.out_dir:
        write_outputs(plan, result)
    return result


def _write_csv(path: Path, rows: list[dict], fields=None) -> None:
    fields = list(fields or (rows[0].keys() if rows else []))
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    tmp.replace(path)


def write_outputs(plan: ExperimentPlan, result: dict) -> None:
    out = Path(plan.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "rows.csv", result["rows"], ROW_FIELDS)
    _write_csv(out / "summary.csv", result["summary"])
    _write_csv(out / "tails.csv", result["tails"])
    if plan.kind == "compare":
        _write_csv(out / "gaps.csv", result["gaps"])
    manifest = {
        "plan": plan.to_dict(),
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "rows": len(result["rows"]),
        "failures": result["failures"],
        "columns": ROW_FIELDS,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def run_alpha_sweep(plan: ExperimentPlan) -> dict:
    return run(replace(plan, kind="alpha"))


def run_weight_sweep(plan: ExperimentPlan) -> dict:
    return run(replace(plan, kind="weights"))


def run_delta_sweep(plan: ExperimentPlan) -> dict:
    return run(replace(plan, kind="delta"))


def run_discipline_compare(plan: ExperimentPlan) -> dict:
    return run(replace(plan, kind="compare"))


def _mean(rows: list[dict], key: str, **match) -> float:
    vals = [r[key] for r in rows if all(r[k] == v for k, v in match.items()) and r["error"] == "ok"]
    return float(np.mean(vals)) if vals else math.nan


def directional_checks(seeds=tuple(range(20)), sim: SimConfig | None = None, restarts: int = 4,
                       kicks: int = 2, out_dir: str | None = None) -> dict:
    """Run the four sweeps behind the qualitative claims and test their direction.

    Checks use across-seed means of simulated metrics:

    * ``alpha``:   weighted Z nonincreasing in alpha, and Z(0.5) - Z(1) <= 5% of Z(0.2) - Z(1)
    * ``sp_vs_np``: total response gap of SP against NP negative for class 1, positive for class 2
    * ``dp_vs_sp``: max response gap of DP against SP positive for class 1, negative for class 2
    * ``delta``:   mean Z_2/Z_1 nondecreasing in delta_a at alpha = 0.1
    """
    sim = sim or SimConfig(horizon=10_000.0, replications=5)
    seeds = tuple(seeds)
    common = dict(seeds=seeds, sim=sim, restarts=restarts, kicks=kicks)
    sub = (lambda name: str(Path(out_dir) / name)) if out_dir else (lambda name: None)
    out: dict = {}

    res = run(ExperimentPlan(kind="alpha", preset="sp-paper", out_dir=sub("alpha"), **common))
    z = {a: _mean(res["rows"], "sim_Z", alpha=a) for a in ALPHA_GRID}
    za = {a: _mean(res["rows"], "ana_Z", alpha=a) for a in ALPHA_GRID}
    zs = [z[a] for a in ALPHA_GRID]
    mono = all(b <= a for a, b in zip(zs, zs[1:]))
    stab = z[0.5] - z[1.0] <= 0.05 * (z[0.2] - z[1.0])
    out["alpha"] = {"pass": mono and stab, "nonincreasing": mono, "stabilized": stab, "sim_Z": z, "ana_Z": za,
                    "failures": res["failures"]}

    res = run(ExperimentPlan(kind="compare", preset="sp-paper", out_dir=sub("sp_vs_np"), **common))
    g = [x for x in res["gaps"] if (x["X"], x["Y"]) == ("sp", "np")]
    g1 = float(np.mean([x["sim_gap_sumZ_1"] for x in g]))
    g2 = float(np.mean([x["sim_gap_sumZ_2"] for x in g]))
    w1 = float(np.mean([x["sim_gap_sumW_1"] for x in g]))
    w2 = float(np.mean([x["sim_gap_sumW_2"] for x in g]))
    out["sp_vs_np"] = {"pass": g1 < 0 < g2, "gap_sumZ": (g1, g2), "gap_sumW": (w1, w2),
                       "failures": res["failures"]}

    res = run(ExperimentPlan(kind="compare", preset="dp-paper", out_dir=sub("dp_vs_sp"), **common))
    g = [x for x in res["gaps"] if (x["X"], x["Y"]) == ("dp", "sp")]
    g1 = float(np.mean([x["sim_gap_Z_1"] for x in g]))
    g2 = float(np.mean([x["sim_gap_Z_2"] for x in g]))
    w1 = float(np.mean([x["sim_gap_W_1"] for x in g]))
    w2 = float(np.mean([x["sim_gap_W_2"] for x in g]))
    out["dp_vs_sp"] = {"pass": g2 < 0 < g1, "gap_Z": (g1, g2), "gap_W": (w1, w2), "failures": res["failures"]}

    res = run(ExperimentPlan(kind="delta", preset="dp-paper", out_dir=sub("delta"), **common))
    ratio = {}
    for d in DELTA_GRID:
        sel = [r for r in res["rows"] if r["delta_a"] == d and r["error"] == "ok"]
        ratio[d] = float(np.mean([r["sim_Z_2"] / r["sim_Z_1"] for r in sel]))
    rs = [ratio[d] for d in DELTA_GRID]
    out["delta"] = {"pass": all(b >= a for a, b in zip(rs, rs[1:])), "ratio_Z2_Z1": ratio,
                    "failures": res["failures"]}
    out["pass"] = all(out[k]["pass"] for k in ("alpha", "sp_vs_np", "dp_vs_sp", "delta"))
    return out
