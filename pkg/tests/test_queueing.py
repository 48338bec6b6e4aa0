import math
import random

import pytest
from hypothesis import assume, given, settings, strategies as st

from dronefl.queueing import (EPS_STAB, Assignment, StabilityError, analyze, facility_loads, min_drones, objective,
                              report_metrics, waiting_dp, waiting_np, waiting_sp)
from helpers import line_instance, random_assignment, random_instance

REL = 1e-9


def test_np_single_node():
    inst = line_instance([0.4], [1.0])
    asg = Assignment((0,), (1,))
    assert waiting_np(inst, asg, 0) == pytest.approx(1 / 3, rel=REL)
    assert objective(inst, asg).Z == pytest.approx(4 / 3, rel=REL)


def test_np_two_nodes():
    inst = line_instance([0.3, 0.2], [2.0, 1.0])
    assert waiting_np(inst, Assignment((0, 0), (2,)), 0) == pytest.approx(0.2916666666666667, rel=REL)


def test_np_empty_facility():
    inst = line_instance([0.3], [1.0], n_facilities=2)
    assert waiting_np(inst, Assignment((0,), (1, 0)), 1) == 0.0


def test_sp_one_node_two_classes():
    inst = line_instance([1.0], [1.0], mode="sp", probs=[(0.5, 0.5)])
    asg = Assignment(((0, 0),), (2,))
    assert waiting_sp(inst, asg, 0, 1) == pytest.approx(1 / 6, rel=REL)
    assert waiting_sp(inst, asg, 0, 2) == pytest.approx(1 / 3, rel=REL)
    assert objective(inst, asg).Z == pytest.approx(1.2166666666666666, rel=REL)
    m = report_metrics(inst, asg)
    assert m[0].sumW == pytest.approx(1 / 12, rel=REL)
    assert m[1].sumZ == pytest.approx(0.5 * (1 + 1 / 3), rel=REL)


def test_sp_empty_lower_class():
    inst = line_instance([1.0], [1.0], mode="sp", probs=[(1.0, 0.0)])
    asg = Assignment(((0, 0),), (2,))
    w1, w2 = waiting_sp(inst, asg, 0, 1), waiting_sp(inst, asg, 0, 2)
    assert w1 == pytest.approx(1 / (2 * 2 * 1), rel=REL)
    assert w2 == pytest.approx(1 / (2 * 1 * 1), rel=REL) and w2 >= w1


def test_dp_two_nodes():
    inst = line_instance([0.4, 0.4], [1.0, 1.0], mode="dp", classes=[1, 2], initial=(3.0, 0.0))
    asg = Assignment((0, 0), (1,))
    assert waiting_dp(inst, asg, 0, 1) == pytest.approx(2.0, rel=REL)
    assert waiting_dp(inst, asg, 0, 2) == pytest.approx(2.96, rel=REL)


def test_dp_no_class_one_demand():
    inst = line_instance([0.4, 0.4], [1.0, 1.0], mode="dp", classes=[2, 2], initial=(3.0, 0.0))
    asg = Assignment((0, 0), (1,))
    assert waiting_dp(inst, asg, 0, 2) == waiting_dp(inst, asg, 0, 1) == waiting_np(inst, asg, 0)


def test_stability_error_carries_facility():
    inst = line_instance([1.0], [1.0])
    with pytest.raises(StabilityError) as e:
        waiting_np(inst, Assignment((0,), (1,)), 0)
    assert e.value.facility == 0 and e.value.load == pytest.approx(1.0)


def test_min_drones_margin():
    assert min_drones(0.0) == 0
    assert min_drones(0.5) == 1 and min_drones(1.2) == 2
    assert min_drones(2.0) == 3
    assert min_drones(3.0 - EPS_STAB / 2) == 4


def test_huge_fleet_leaves_travel_only():
    inst = line_instance([0.5, 0.7], [2.0, 5.0], mode="sp", probs=[(0.3, 0.7), (0.6, 0.4)])
    obj = objective(inst, Assignment(((0, 0), (0, 0)), (10**7,)))
    assert obj.Z_r == pytest.approx((5.0, 5.0), rel=1e-5)


def test_np_labels_report_per_class():
    inst = line_instance([0.4, 0.4], [1.0, 2.0], mode="dp", classes=[1, 2], initial=(3.0, 0.0)).with_mode("np")
    asg = Assignment((0, 0), (2,))
    m = report_metrics(inst, asg)
    w = waiting_np(inst, asg, 0)
    assert [c.W for c in m] == [w, w]
    assert m[1].Z == pytest.approx(2 + w)


def test_analyze_aggregates():
    inst = line_instance([0.5, 0.5], [1.0, 2.0], mode="sp", probs=[(0.2, 0.8), (0.6, 0.4)])
    qa = analyze(inst, Assignment(((0, 0), (0, 0)), (3,)))
    assert qa.gamma_total[0] == pytest.approx(1.0)
    assert qa.load[0].sum() == pytest.approx(0.5 + 1.0)
    assert qa.rho[0].sum() == pytest.approx(1.5 / 3)


def _ref_waits(inst, asg):
    """Direct transcription of the three waiting-time formulas, one facility at a time."""
    t, lam = inst.service, inst.lam
    out = {}
    for j in range(inst.n_facilities):
        k = asg.k[j]
        L = [0.0] * inst.R
        N = 0.0
        for i in range(inst.n_nodes):
            for r in range(1, inst.R + 1):
                if asg.facility(i, r) != j:
                    continue
                v = inst.class_probs[i, r - 1]
                L[r - 1] += lam[i] * v * t[i, j]
                N += lam[i] * v * t[i, j] ** 2
        tot = sum(L)
        if N == 0:
            out[j] = [0.0] * inst.R
            continue
        w0 = N / (2 * k * (k - tot))
        if inst.mode == "np":
            out[j] = [w0] * inst.R
        elif inst.mode == "sp":
            ws = []
            for r in range(1, inst.R + 1):
                c, p = sum(L[:r]), sum(L[:r - 1])
                ws.append(N / (2 * k * (k - c)) if r == 1 else N / (2 * (k - c) * (k - p)))
            out[j] = ws
        else:
            out[j] = [w0 + sum(inst.priority.delta(l, r) * tot * L[l - 1] / k**2 for l in range(1, r))
                      for r in range(1, inst.R + 1)]
    return out


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 10**9), st.sampled_from(["np", "sp", "dp"]))
def test_waits_match_direct_formulas(seed, mode):
    rng = random.Random(seed)
    inst = random_instance(rng, mode, R=rng.choice([1, 2, 3]) if mode != "np" else 1)
    asg = random_assignment(rng, inst)
    ref = _ref_waits(inst, asg)
    qa = analyze(inst, asg)
    for j, ws in ref.items():
        for r, w in enumerate(ws):
            assert qa.W[j, r] == pytest.approx(w, rel=1e-12, abs=1e-300)
            assert math.isfinite(qa.W[j, r]) and qa.W[j, r] >= 0


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 10**9))
def test_np_wait_strictly_decreasing_in_fleet(seed):
    rng = random.Random(seed)
    inst = random_instance(rng, "np")
    asg = random_assignment(rng, inst, extra=0)
    for j in asg.open_set:
        k = list(asg.k)
        prev = waiting_np(inst, asg, j)
        for _ in range(4):
            k[j] += 1
            cur = waiting_np(inst, Assignment(asg.y, tuple(k)), j)
            assert cur < prev
            prev = cur


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 10**9), st.integers(2, 4))
def test_static_priority_ordering(seed, R):
    rng = random.Random(seed)
    inst = random_instance(rng, "sp", R=R)
    qa = analyze(inst, random_assignment(rng, inst))
    for row in qa.W:
        assert all(a <= b for a, b in zip(row, row[1:]))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**9))
def test_reductions_to_fcfs(seed):
    rng = random.Random(seed)
    sp1 = random_instance(rng, "sp", R=1)
    asg = random_assignment(rng, sp1)
    np_ = sp1.with_mode("np")
    np_asg = Assignment(tuple(e[0] for e in asg.y), asg.k)
    for j in asg.open_set:
        assert waiting_sp(sp1, asg, j, 1) == waiting_np(np_, np_asg, j)
    dp = random_instance(rng, "dp")
    dp0 = dp.with_priority(initial_values=(0.0,) * dp.R)
    asg = random_assignment(rng, dp0)
    for j in asg.open_set:
        for r in range(1, dp.R + 1):
            assert waiting_dp(dp0, asg, j, r) == waiting_np(dp0, asg, j)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**9), st.floats(0, 50), st.floats(0, 50))
def test_dynamic_extra_term_monotone_in_gap(seed, d1, d2):
    rng = random.Random(seed)
    inst = random_instance(rng, "dp")
    asg = random_assignment(rng, inst)
    lo, hi = sorted((d1, d2))
    a = analyze(inst.with_priority(initial_values=(lo, 0.0)), asg)
    b = analyze(inst.with_priority(initial_values=(hi, 0.0)), asg)
    assert (a.W[:, 1] >= a.W0 - 1e-15).all()
    assert (b.W[:, 1] >= a.W[:, 1]).all()


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-9, 1e-3), st.floats(0.1, 5.0))
def test_wait_diverges_at_capacity(margin, t):
    # load = k - margin on one node; wait grows like 1/margin
    k = 2
    lam = (k - margin) / t
    inst = line_instance([lam], [t])
    assume(k - lam * t >= EPS_STAB)
    w = waiting_np(inst, Assignment((0,), (k,)), 0)
    assert w >= lam * t * t / (2 * k * margin) * (1 - 1e-6)
