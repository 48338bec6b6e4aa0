"""Acceptance criteria 1-11.

Each test prints one line ``criterion N: PASS|FAIL (...)``; the lines are
also gathered into the pytest terminal summary.  A criterion's test fails
exactly when its line says FAIL.
"""

import math
import random
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from dronefl.conic import build, check_point, minimal_W_via_cones, witness_point
from dronefl.harness import directional_checks
from dronefl.instance import DemandNode, Facility, Instance, PriorityParams
from dronefl.queueing import (Assignment, analyze, facility_loads, objective, waiting_dp, waiting_np, waiting_sp)
from dronefl.simulator import SimConfig, paired_compare, simulate
from dronefl.solver import brute_force, budget, local_search, min_fleet
from helpers import UNIT_FLEET, line_instance, random_assignment, random_instance, tiny_instance

CONE_FAMILIES = {"0wo", "0a", "0ak", "sp1", "sp2", "sp3", "dp1", "dp2", "dp3"}


def verdict(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def close(a, b, rel=1e-9):
    return abs(a - b) <= rel * abs(b)


def test_criterion_01_formula_values():
    t0 = time.perf_counter()
    checks = []
    np1 = line_instance([0.4], [1.0])
    checks.append(close(waiting_np(np1, Assignment((0,), (1,)), 0), 0.333333333333333333))
    np2 = line_instance([0.3, 0.2], [2.0, 1.0])
    checks.append(close(waiting_np(np2, Assignment((0, 0), (2,)), 0), 1.4 / 4.8))
    sp = line_instance([1.0], [1.0], mode="sp", probs=[(0.5, 0.5)])
    a = Assignment(((0, 0),), (2,))
    checks.append(close(waiting_sp(sp, a, 0, 1), 1 / 6))
    checks.append(close(waiting_sp(sp, a, 0, 2), 1 / 3))
    dp = line_instance([0.4, 0.4], [1.0, 1.0], mode="dp", classes=[1, 2], initial=(3.0, 0.0))
    checks.append(close(waiting_dp(dp, Assignment((0, 0), (1,)), 0, 2), 2.96))
    dt = time.perf_counter() - t0
    verdict(1, all(checks) and dt < 1, f"{sum(checks)}/5 values within 1e-9, {dt:.3f} s")


def test_criterion_02_reductions():
    t0 = time.perf_counter()
    rng = random.Random(2024)
    bad = 0
    for _ in range(100):
        sp1 = random_instance(rng, "sp", R=1)
        asg = random_assignment(rng, sp1)
        npi = sp1.with_mode("np")
        npa = Assignment(tuple(e[0] for e in asg.y), asg.k)
        if not (np.array_equal(analyze(sp1, asg).W, analyze(npi, npa).W)
                and objective(sp1, asg) == objective(npi, npa)):
            bad += 1
        dp = random_instance(rng, "dp")
        dp0 = dp.with_priority(initial_values=(0.0,) * dp.R)
        asg = random_assignment(rng, dp0)
        W = analyze(dp0, asg).W
        if not (np.all(W == analyze(dp0, asg, "fcfs").W)
                and all(W[j, r] == waiting_np(dp0, asg, j) for j in asg.open_set for r in range(dp.R))):
            bad += 1
    dt = time.perf_counter() - t0
    verdict(2, bad == 0 and dt < 1, f"{200 - bad}/200 exact identities, {dt:.3f} s")


def _perturb_detected(program, point, asg, model):
    """Lower each facility's wait by 1e-3 (dependent waits moved with it); count undetected cases."""
    misses = tried = 0
    names = program.variable_names()
    for j in sorted(asg.open_set):
        group = [n for n in names if n.startswith(f"W[{j}]") or n.startswith(f"W[{j},")]
        targets = [[n] for n in group] if model == "sp" else [group]
        for tg in targets:
            if any(point[n] <= 0 for n in tg):
                continue
            q = dict(point)
            for n in tg:
                q[n] -= 1e-3
            tried += 1
            if not (check_point(program, q).families() & CONE_FAMILIES):
                misses += 1
    return tried, misses


def test_criterion_03_cone_equivalence():
    t0 = time.perf_counter()
    rng = random.Random(3)
    worst = 0.0
    stats = {}
    for model in ("np", "sp", "dp"):
        tried = misses = 0
        for _ in range(1000):
            inst = random_instance(rng, model)
            asg = random_assignment(rng, inst)
            prog = build(inst, sum(asg.k) + 1)
            qa = analyze(inst, asg)
            for (j, r), w in minimal_W_via_cones(prog, asg).items():
                ref = qa.W[j, r - 1]
                if ref or w:
                    worst = max(worst, abs(w - ref) / abs(ref))
            pt = witness_point(prog, asg)
            a, b = _perturb_detected(prog, pt, asg, model)
            tried += a
            misses += b
        stats[model] = (tried, misses)
    dt = time.perf_counter() - t0
    undetected = sum(m for _, m in stats.values())
    ok = worst <= 1e-7 and undetected == 0 and dt < 30
    detail = (f"worst relative W error {worst:.1e}; undetected 1e-3 perturbations "
              + ", ".join(f"{m} {b}/{a}" for m, (a, b) in stats.items()) + f"; {dt:.1f} s")
    verdict(3, ok, detail)


def test_criterion_04_oracle_agreement():
    t0 = time.perf_counter()
    alphas = (0.0, 0.2, 1.0)
    mism = []
    done = {}
    for model in ("np", "sp", "dp"):
        n = 0
        seed = 0
        while n < 20:
            inst = tiny_instance(seed, model)
            ks = min_fleet(inst).K_star
            if ks <= 12:
                K = min(12, budget(ks, alphas[n % 3]))
                zb = brute_force(inst, K).objective.Z
                zl = local_search(inst, K, seed=seed).objective.Z
                if not abs(zb - zl) <= 1e-9 * max(1.0, abs(zb)):
                    mism.append((model, seed, zb, zl))
                n += 1
            seed += 1
        done[model] = n
    dt = time.perf_counter() - t0
    verdict(4, not mism and dt < 120, f"{60 - len(mism)}/60 optima matched {mism[:3]}; {dt:.1f} s")


def test_criterion_05_md1():
    t0 = time.perf_counter()
    inst = line_instance([0.4], [1.0])
    rep = simulate(inst, Assignment((0,), (1,)), SimConfig(horizon=30000.0, replications=10, discipline="fcfs"))
    m, h = rep.mean("mean_wait")[0], rep.half_width("mean_wait")[0]
    dt = time.perf_counter() - t0
    ok = abs(m - 1 / 3) <= h and abs(m - 1 / 3) <= 0.05 / 3 and dt < 60
    verdict(5, ok, f"mean wait {m:.5f} +/- {h:.5f} vs 0.333333; {dt:.1f} s")


def test_criterion_06_static_priority():
    t0 = time.perf_counter()
    inst = line_instance([0.25, 0.25], [1.0, 1.0], mode="sp", probs=[(1.0, 0.0), (0.0, 1.0)], weights=(0.5, 0.5))
    rep = simulate(inst, Assignment(((0, 0), (0, 0)), (1,)), SimConfig(horizon=30000.0, replications=10))
    m, h = rep.mean("mean_wait"), rep.half_width("mean_wait")
    exact = (1 / 3, 2 / 3)
    ok = all(abs(m[r] - exact[r]) <= h[r] and abs(m[r] - exact[r]) <= 0.05 * exact[r] for r in range(2))
    dt = time.perf_counter() - t0
    verdict(6, ok and dt < 60, f"W1 {m[0]:.4f}+/-{h[0]:.4f}, W2 {m[1]:.4f}+/-{h[1]:.4f}; {dt:.1f} s")


def _single_server(rng, delta):
    n = rng.randint(2, 4)
    classes = [1, 2] + [rng.randint(1, 2) for _ in range(n - 2)]
    t = [rng.uniform(0.5, 2.0) for _ in range(n)]
    target = rng.uniform(0.4, 0.85)
    w = [rng.random() + 0.2 for _ in range(n)]
    lam = [target * wi / sum(w) / ti for wi, ti in zip(w, t)]
    inst = line_instance(lam, t, mode="dp", classes=classes, initial=(delta, 0.0))
    return inst, Assignment((0,) * n, (1,))


def test_criterion_07_dynamic_bound():
    t0 = time.perf_counter()
    rng = random.Random(7)
    rows = []
    for m in range(10):
        delta = (3.0, 10.0, 20.0)[m % 3]
        inst, asg = _single_server(rng, delta)
        rep = simulate(inst, asg, SimConfig(horizon=30000.0, replications=10, seed=m))
        sim, hw = rep.mean("mean_wait")[1], rep.half_width("mean_wait")[1]
        bound = waiting_dp(inst, asg, 0, 2)
        rows.append((sim, hw, bound))
    dt = time.perf_counter() - t0
    bad = [r for r in rows if not r[0] <= r[2] + r[1]]
    slack = min(r[2] + r[1] - r[0] for r in rows)
    verdict(7, not bad and dt < 180, f"{10 - len(bad)}/10 within bound, least slack {slack:.3f}; {dt:.1f} s")


def test_criterion_08_conservation():
    t0 = time.perf_counter()
    rng = random.Random(8)
    spreads = []
    for m in range(10):
        inst, asg = _single_server(rng, (3.0, 10.0, 20.0)[m % 3])
        reps = paired_compare(inst, {d: asg for d in ("fcfs", "static", "dynamic")},
                              SimConfig(horizon=30000.0, replications=10, seed=m))
        rho = np.array(facility_loads(inst, asg)[0].class_L) / asg.k[0]
        vals = [float(rho @ r.mean("mean_wait")) for r in reps.values()]
        spreads.append(max(vals) / min(vals) - 1)
    dt = time.perf_counter() - t0
    verdict(8, max(spreads) <= 0.02 and dt < 180, f"largest relative spread {max(spreads):.4f}; {dt:.1f} s")


def test_criterion_09_limit_identities():
    t0 = time.perf_counter()
    H = 5000.0
    ok = 0
    for seed in range(5):
        rng = random.Random(900 + seed)
        inst = random_instance(rng, "dp", max_nodes=4, max_facilities=2, lam_range=(0.05, 0.4))
        asg = random_assignment(rng, inst, extra=1)
        cfg = dict(horizon=H, replications=1, seed=seed, event_log=True)

        def log(i, disc):
            return simulate(i, asg, SimConfig(discipline=disc, **cfg)).reps[0].events

        zero = inst.with_priority(initial_values=(0.0, 0.0))
        huge = inst.with_priority(initial_values=(H, 0.0))
        ok += log(zero, "dynamic") == log(zero, "fcfs")
        ok += log(huge, "dynamic") == log(huge, "static")
    dt = time.perf_counter() - t0
    verdict(9, ok == 10 and dt < 120, f"{ok}/10 event logs identical; {dt:.1f} s")


def test_criterion_10_directional():
    t0 = time.perf_counter()
    out = directional_checks(seeds=range(20))
    dt = time.perf_counter() - t0
    a = out["alpha"]["sim_Z"]
    parts = [
        f"(a) {'ok' if out['alpha']['pass'] else 'no'}: Z(0)={a[0.0]:.2f} Z(.2)={a[0.2]:.2f} Z(.5)={a[0.5]:.3f} "
        f"Z(1)={a[1.0]:.3f}",
        "(b) {}: gaps {:+.3f}/{:+.3f}".format('ok' if out['sp_vs_np']['pass'] else 'no', *out['sp_vs_np']['gap_sumZ']),
        "(c) {}: gaps {:+.3f}/{:+.3f}".format('ok' if out['dp_vs_sp']['pass'] else 'no', *out['dp_vs_sp']['gap_Z']),
        "(d) {}: Z2/Z1 {}".format('ok' if out['delta']['pass'] else 'no',
                                  "/".join(f"{v:.3f}" for v in out['delta']['ratio_Z2_Z1'].values())),
    ]
    verdict(10, out["pass"] and dt < 1800, "; ".join(parts) + f"; {dt:.0f} s")


def test_criterion_11_budget():
    t0 = time.perf_counter()
    grid = (0, 0.02, 0.05, 0.1, 0.2, 0.5, 1)
    hand = {10: (10, 10, 10, 11, 12, 15, 20), 50: (50, 51, 52, 55, 60, 75, 100),
            137: (137, 139, 143, 150, 164, 205, 274)}
    got = {k: tuple(budget(k, a) for a in grid) for k in hand}
    dt = time.perf_counter() - t0
    verdict(11, got == hand and dt < 1, f"{sum(got[k] == hand[k] for k in hand)}/3 rows match; {dt:.4f} s")
