"""Feasibility, fleet sizing and the two solvers (exhaustive oracle, local search).

Both solvers route *units*: a unit is one (node, class) stream in static
priority mode and one node otherwise.  For a fixed routing the drone
allocation is optimized separately: every used facility needs at least
``min_drones(load)`` drones and waiting times fall strictly with every extra
drone, so optimal allocations spend the whole budget K.
"""

from __future__ import annotations

import itertools
import math
import random
import time
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .instance import Instance
from .queueing import (DEFAULT_DISCIPLINE, EPS_STAB, Assignment, FacilityLoad, Objective, class_waits,
                       facility_loads, min_drones, objective, report_metrics, streams)

REL_TOL = 1e-9
BRUTE_MAX_FACILITIES = 4
BRUTE_MAX_UNITS = 8
BRUTE_MAX_K = 12


class InfeasibleInstance(ValueError):
    pass


class SizeExceeded(ValueError):
    pass


@dataclass(frozen=True)
class Verdict:
    ok: bool
    constraint: str | None = None
    detail: str = ""

    def __bool__(self) -> bool:
        return self.ok


def feasible(inst: Instance, asg: Assignment, K: int | None = None) -> Verdict:
    """Check assignment completeness (2b), openness (2c), range (2d),
    strict stability (2e), the fleet cap (2f) and drone counts (2g)."""
    J = inst.n_facilities
    per_class = inst.mode == "sp"
    if len(asg.y) != inst.n_nodes or len(asg.k) != J:
        return Verdict(False, "2b", "assignment shape does not match the instance")
    for i, e in enumerate(asg.y):
        if per_class != isinstance(e, tuple) or (per_class and len(e) != inst.R):
            return Verdict(False, "2b", f"node {i} needs {'one facility per class' if per_class else 'one facility'}")
        for j in (e if per_class else (e,)):
            if not 0 <= j < J:
                return Verdict(False, "2b", f"node {i} assigned to unknown facility {j}")
            if j not in asg.open_set:
                return Verdict(False, "2c", f"node {i} assigned to closed facility {j}")
            if inst.travel[i, j] > inst.fleet.endurance:
                return Verdict(False, "2d", f"node {i} out of range of facility {j}")
    for j, kj in enumerate(asg.k):
        if kj < 0 or (kj > 0 and j not in asg.open_set) or (j in asg.open_set and kj < 1):
            return Verdict(False, "2g", f"facility {j} has {kj} drones")
    for j, a in enumerate(facility_loads(inst, asg)):
        if a.L > 0 and not asg.k[j] - a.L >= EPS_STAB:
            return Verdict(False, "2e", f"facility {j} load {a.L:.6g} with {asg.k[j]} drones")
    if K is not None and sum(asg.k) > K:
        return Verdict(False, "2f", f"{sum(asg.k)} drones exceed budget {K}")
    return Verdict(True)


def budget(K_star: int, alpha: float, k_hard_cap: int | None = None) -> int:
    """K = min(cap, floor((1 + alpha) K*)), computed in exact decimal arithmetic."""
    if K_star < 1:
        raise ValueError("K_star must be at least 1")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    K = math.floor((1 + Fraction(repr(float(alpha)))) * K_star)
    if k_hard_cap is not None:
        if k_hard_cap < K_star:
            raise ValueError(f"hard cap {k_hard_cap} is below the minimum fleet {K_star}")
        K = min(K, k_hard_cap)
    return K


# --------------------------------------------------------------------------
# Routing units and evaluation


class _Model:
    """Precomputed unit data for one instance and discipline."""

    def __init__(self, inst: Instance, discipline: str | None = None):
        if inst.unreachable_nodes():
            raise InfeasibleInstance(f"nodes {inst.unreachable_nodes()} reach no facility within endurance")
        self.inst = inst
        self.disc = discipline or DEFAULT_DISCIPLINE[inst.mode]
        self.J = inst.n_facilities
        self.R = inst.R
        self.weights = inst.priority.weights
        self.per_class = inst.mode == "sp"
        st = streams(inst)
        if self.per_class:
            self.units = [[s] for s in st]
        else:
            by_node: dict[int, list] = {}
            for s in st:
                by_node.setdefault(s[0], []).append(s)
            self.units = [by_node[i] for i in sorted(by_node)]
        reach = inst.reachable()
        t = inst.travel
        self.allowed = [tuple(int(j) for j in np.argsort(t[u[0][0]], kind="stable") if reach[u[0][0], j])
                        for u in self.units]
        self.allowed_sorted = [tuple(sorted(a)) for a in self.allowed]
        self.t = [[float(x) for x in row] for row in t]
        self.s = [[float(x) for x in row] for row in inst.service]

    def loads(self, y: tuple) -> tuple[list[FacilityLoad | None], list[list[float]]]:
        J, R = self.J, self.R
        ld: list[FacilityLoad | None] = [None] * J
        T = [[-math.inf] * R for _ in range(J)]
        for u, j in zip(self.units, y):
            a = ld[j]
            if a is None:
                a = ld[j] = FacilityLoad(class_L=[0.0] * R, class_N=[0.0] * R, class_gamma=[0.0] * R)
            for i, r, rate in u:
                sij = self.s[i][j]
                a.N += rate * sij * sij
                a.L += rate * sij
                a.gamma += rate
                a.class_L[r - 1] += rate * sij
                a.class_N[r - 1] += rate * sij * sij
                a.class_gamma[r - 1] += rate
                if self.t[i][j] > T[j][r - 1]:
                    T[j][r - 1] = self.t[i][j]
        return ld, T

    def to_assignment(self, y: tuple, k: dict[int, int]) -> Assignment:
        inst = self.inst
        used = sorted(set(y))
        kk = tuple(k.get(j, 0) for j in range(self.J))
        if not self.per_class:
            fac = {u[0][0]: j for u, j in zip(self.units, y)}
            return Assignment(tuple(fac[i] for i in range(inst.n_nodes)), kk, frozenset(used))
        fac = {(u[0][0], u[0][1]): j for u, j in zip(self.units, y)}
        rows = []
        for i in range(inst.n_nodes):
            first = next(fac[i, r] for r in range(1, self.R + 1) if (i, r) in fac)
            rows.append(tuple(fac.get((i, r), first) for r in range(1, self.R + 1)))
        return Assignment(tuple(rows), kk, frozenset(used))


@dataclass
class _Eval:
    excess: int
    Z: float
    sumW: float
    n_open: int
    y: tuple
    k: dict

    def key(self):
        return (self.excess, self.Z, self.sumW, self.n_open)


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= REL_TOL * max(1.0, abs(a), abs(b))


def _better(a: _Eval, b: _Eval | None) -> bool:
    """Tie-break order: drone excess, Z (relative 1e-9), total wait, open count."""
    if b is None:
        return True
    if a.excess != b.excess:
        return a.excess < b.excess
    if not _close(a.Z, b.Z):
        return a.Z < b.Z
    if not _close(a.sumW, b.sumW):
        return a.sumW < b.sumW
    return a.n_open < b.n_open


class _Alloc:
    """Drone allocation for one routing; ``waits(j, k)`` memoized per facility."""

    def __init__(self, m: _Model, y: tuple):
        self.m = m
        self.y = y
        self.loads, self.T = m.loads(y)
        self.used = sorted(set(y))
        self.need = {j: min_drones(self.loads[j].L) for j in self.used}
        self._cache: dict[tuple[int, int], list[float]] = {}

    def waits(self, j: int, k: int) -> list[float]:
        key = (j, k)
        w = self._cache.get(key)
        if w is None:
            w = class_waits(self.loads[j], k, self.m.disc, self.m.inst.priority)
            self._cache[key] = w
        return w

    def value(self, k: dict) -> tuple[float, float]:
        R = self.m.R
        Zr = [0.0] * R
        sumW = 0.0
        for j in self.used:
            w = self.waits(j, k[j])
            a = self.loads[j]
            for r in range(R):
                if a.class_gamma[r] > 0:
                    v = self.T[j][r] + w[r]
                    if v > Zr[r]:
                        Zr[r] = v
                    sumW += a.class_gamma[r] * w[r]
        return sum(wr * z for wr, z in zip(self.m.weights, Zr)), sumW

    def greedy(self, k: dict, extra: int, classes=None) -> dict:
        """Hand out ``extra`` drones one at a time to the facility that most
        lowers (Z, total wait); ``classes`` restricts Z to those classes."""
        k = dict(k)
        R = self.m.R
        cls = range(R) if classes is None else classes
        wts = self.m.weights
        for _ in range(extra):
            cur = {j: self.waits(j, k[j]) for j in self.used}
            terms = {}
            for r in cls:
                vals = sorted(((self.T[j][r] + cur[j][r], j) for j in self.used
                               if self.loads[j].class_gamma[r] > 0), reverse=True)
                terms[r] = vals
            best = None
            for j in self.used:
                w_new = self.waits(j, k[j] + 1)
                z = 0.0
                for r in cls:
                    vals = terms[r]
                    if not vals:
                        continue
                    top = vals[0][0] if vals[0][1] != j else (vals[1][0] if len(vals) > 1 else -math.inf)
                    own = self.T[j][r] + w_new[r] if self.loads[j].class_gamma[r] > 0 else -math.inf
                    z += wts[r] * max(top, own, 0.0)
                dw = sum(self.loads[j].class_gamma[r] * (w_new[r] - cur[j][r]) for r in range(R))
                cand = (z, dw, j)
                if best is None or (cand[0] < best[0] - REL_TOL * max(1.0, abs(best[0]))) or (
                        _close(cand[0], best[0]) and cand[1:] < best[1:]):
                    best = cand
            k[best[2]] += 1
        return k

    def drone_moves(self, k: dict) -> dict:
        """Move single drones between facilities while that improves (Z, total wait)."""
        cur = self.value(k)
        improved = True
        while improved:
            improved = False
            for a in self.used:
                if k[a] <= self.need[a]:
                    continue
                for b in self.used:
                    if a == b:
                        continue
                    k[a] -= 1
                    k[b] += 1
                    v = self.value(k)
                    if v[0] < cur[0] - REL_TOL * max(1.0, cur[0]) or (_close(v[0], cur[0]) and v[1] < cur[1]):
                        cur = v
                        improved = True
                        break
                    k[a] += 1
                    k[b] -= 1
                if improved:
                    break
        return k

    def exact(self, extra: int) -> dict:
        """Z-optimal allocation for one or two classes.

        Every attainable response value of a class is a level.  For a pair
        of levels (z1, z2) each facility needs the fewest drones bringing
        both classes under their level; the optimum is the cheapest feasible
        pair, found by a two-pointer sweep (lowering z1 only raises the least
        feasible z2).  Drones left over go where they cut total waiting most.
        More than two classes fall back to the greedy with drone moves.
        """
        R = self.m.R
        if R > 2:
            return self.drone_moves(self.greedy(dict(self.need), extra))
        used = self.used
        base = np.array([self.need[j] for j in used])
        width = extra + 1
        curves = []  # per facility: list over classes of wait arrays for k = need .. need + extra
        for j in used:
            ks = np.arange(self.need[j], self.need[j] + width, dtype=float)
            curves.append([np.broadcast_to(np.asarray(w, dtype=float), (width,))
                           for w in class_waits(self.loads[j], ks, self.m.disc, self.m.inst.priority)])

        def needs(c: int, descending: bool):
            rows = []
            for n, j in enumerate(used):
                if self.loads[j].class_gamma[c] > 0:
                    rows.append(self.T[j][c] + curves[n][c])
                else:
                    rows.append(None)
            levels = np.unique(np.concatenate([v for v in rows if v is not None] or [np.zeros(1)]))
            if descending:
                levels = levels[::-1]
            mat = np.tile(base, (len(levels), 1))
            for n, v in enumerate(rows):
                if v is not None:
                    mat[:, n] += width - np.searchsorted(v[::-1], levels, side="right")
            return levels.tolist(), mat.tolist()

        z1, n1 = needs(0, True)
        if R == 2:
            z2, n2 = needs(1, False)
        else:
            z2, n2 = [0.0], [base.tolist()]
        w1 = self.m.weights[0]
        w2 = self.m.weights[1] if R == 2 else 0.0
        K = int(base.sum()) + extra
        best = None
        b = 0
        for a in range(len(z1)):
            while b < len(z2) and sum(max(p, q) for p, q in zip(n1[a], n2[b])) > K:
                b += 1
            if b == len(z2):
                break
            v = w1 * z1[a] + w2 * z2[b]
            if best is None or v < best[0] - REL_TOL * max(1.0, abs(best[0])):
                best = (v, a, b)
        _, a, b = best
        k = [max(p, q) for p, q in zip(n1[a], n2[b])]
        left = K - sum(k)
        gamma = [self.loads[j].class_gamma for j in used]

        def gain(n: int) -> float:
            pos = k[n] - self.need[used[n]]
            if pos + 1 >= width:
                return -math.inf
            return sum(gamma[n][c] * (curves[n][c][pos] - curves[n][c][pos + 1]) for c in range(R))

        for _ in range(left):
            n = max(range(len(used)), key=lambda q: (gain(q), -q))
            k[n] += 1
        return {j: int(k[n]) for n, j in enumerate(used)}


def _evaluate(m: _Model, y: tuple, K: int) -> _Eval:
    al = _Alloc(m, y)
    total = sum(al.need.values())
    n_open = len(al.used)
    if total > K:
        return _Eval(total - K, math.inf, math.inf, n_open, y, dict(al.need))
    extra = K - total
    k = al.exact(extra)
    Z, sw = al.value(k)
    return _Eval(0, Z, sw, n_open, y, k)


# --------------------------------------------------------------------------
# Results


@dataclass
class SolveResult:
    best: Assignment
    objective: Objective
    method: str
    iterations: int
    wall_time: float
    K: int
    trace: list = field(default_factory=list)

    def to_dict(self, inst: Instance) -> dict:
        mets = report_metrics(inst, self.best)
        return {
            "method": self.method,
            "K": self.K,
            "open": sorted(self.best.open_set),
            "y": [list(e) if isinstance(e, tuple) else e for e in self.best.y],
            "k": list(self.best.k),
            "objective": {"Z": self.objective.Z, "Z_r": list(self.objective.Z_r)},
            "metrics": [{"class": r + 1, "Z": c.Z, "sumZ": c.sumZ, "W": c.W, "sumW": c.sumW}
                        for r, c in enumerate(mets)],
            "iterations": self.iterations,
            "wall_time": self.wall_time,
        }


def _finish(m: _Model, ev: _Eval, method: str, iters: int, t0: float, K: int, trace=None) -> SolveResult:
    asg = m.to_assignment(ev.y, ev.k)
    return SolveResult(asg, objective(m.inst, asg, m.disc), method, iters, time.perf_counter() - t0, K,
                       trace or [])


# --------------------------------------------------------------------------
# Minimum fleet


@dataclass(frozen=True)
class FleetResult:
    K_star: int
    assignment: Assignment
    lower_bound: int
    exact: bool


def fleet_lower_bound(inst: Instance) -> int:
    """floor(sum over streams of the smallest reachable load) + 1."""
    reach = inst.reachable()
    s = inst.service
    total = 0.0
    for i, r, rate in streams(inst):
        total += rate * min(float(s[i, j]) for j in range(inst.n_facilities) if reach[i, j])
    return math.floor(total) + 1 if total > 0 else 0


def _fleet_key(m: _Model, y: tuple) -> tuple[int, float]:
    ld, _ = m.loads(y)
    need = 0
    overflow = math.inf
    for a in ld:
        if a is not None:
            kk = min_drones(a.L)
            need += kk
            overflow = min(overflow, a.L - (kk - 1))
    return need, overflow


def min_fleet(inst: Instance, seed: int = 0, restarts: int = 8, max_enum: int = 200_000) -> FleetResult:
    """Smallest total drone count admitting a stable routing (no budget cap).

    Exhaustive when the routing space has at most ``max_enum`` points;
    otherwise a seeded descent on (drones, smallest overflow above the
    previous integer) gives an upper bound, flagged exact only when it meets
    :func:`fleet_lower_bound`.
    """
    m = _Model(inst, "fcfs")
    lb = fleet_lower_bound(inst)

    def result(y, exact):
        ld, _ = m.loads(y)
        k = {j: min_drones(ld[j].L) for j in set(y)}
        return FleetResult(sum(k.values()), m.to_assignment(y, k), lb, exact or sum(k.values()) == lb)

    space = math.prod(len(a) for a in m.allowed)
    if space <= max_enum:
        best = None
        for y in itertools.product(*m.allowed_sorted):
            key = (_fleet_key(m, y)[0], len(set(y)))
            if best is None or key < best[0]:
                best = (key, y)
        return result(best[1], True)

    rng = random.Random(seed)
    best = None
    for rs in range(restarts):
        y = [a[0] if rs == 0 else rng.choice(a) for a in m.allowed]
        cur = _fleet_key(m, tuple(y))
        improved = True
        while improved:
            improved = False
            order = list(range(len(y)))
            rng.shuffle(order)
            for u in order:
                for j in m.allowed[u]:
                    if j == y[u]:
                        continue
                    old = y[u]
                    y[u] = j
                    cand = _fleet_key(m, tuple(y))
                    if cand < cur:
                        cur = cand
                        improved = True
                        break
                    y[u] = old
                if improved:
                    break
            if not improved:
                # pairwise swaps between facilities
                for u, v in itertools.combinations(range(len(y)), 2):
                    if y[u] == y[v] or y[v] not in m.allowed[u] or y[u] not in m.allowed[v]:
                        continue
                    y[u], y[v] = y[v], y[u]
                    cand = _fleet_key(m, tuple(y))
                    if cand < cur:
                        cur = cand
                        improved = True
                        break
                    y[u], y[v] = y[v], y[u]
        key = (cur[0], len(set(y)))
        if best is None or key < best[0]:
            best = (key, tuple(y))
        if best[0][0] == lb:
            break
    return result(best[1], False)


# --------------------------------------------------------------------------
# Exhaustive oracle


@lru_cache(maxsize=None)
def _compositions(n_parts: int, total: int) -> np.ndarray:
    """All ways to split ``total`` into ``n_parts`` nonnegative integers (lexicographic)."""
    rows = []
    for bars in itertools.combinations(range(total + n_parts - 1), n_parts - 1):
        prev = -1
        row = []
        for b in bars:
            row.append(b - prev - 1)
            prev = b
        row.append(total + n_parts - 2 - prev)
        rows.append(row)
    out = np.array(rows, dtype=np.int64).reshape(-1, n_parts)
    out.setflags(write=False)
    return out


def brute_force(inst: Instance, K: int, discipline: str | None = None) -> SolveResult:
    """Exact optimum by enumerating every routing and every full-budget allocation.

    Ties are broken by total waiting, then open facilities, then the first
    routing in lexicographic order.
    """
    t0 = time.perf_counter()
    if inst.n_facilities > BRUTE_MAX_FACILITIES or inst.n_nodes * inst.R > BRUTE_MAX_UNITS or K > BRUTE_MAX_K:
        raise SizeExceeded(f"brute force limited to |J|<={BRUTE_MAX_FACILITIES}, |I|*R<={BRUTE_MAX_UNITS}, "
                           f"K<={BRUTE_MAX_K}")
    m = _Model(inst, discipline)
    R = m.R
    best: _Eval | None = None
    count = 0
    for y in itertools.product(*m.allowed_sorted):
        al = _Alloc(m, y)
        total = sum(al.need.values())
        if total > K:
            continue
        comps = _compositions(len(al.used), K - total)
        count += len(comps)
        Z = np.zeros(len(comps))
        sumW = np.zeros(len(comps))
        per_class_max = [np.zeros(len(comps)) for _ in range(R)]
        for col, j in enumerate(al.used):
            kj = comps[:, col] + al.need[j]
            w = class_waits(al.loads[j], kj.astype(float), m.disc, inst.priority)
            a = al.loads[j]
            for r in range(R):
                if a.class_gamma[r] > 0:
                    per_class_max[r] = np.maximum(per_class_max[r], al.T[j][r] + w[r])
                    sumW = sumW + a.class_gamma[r] * w[r]
        for r in range(R):
            Z = Z + m.weights[r] * per_class_max[r]
        zmin = Z.min()
        tie = np.flatnonzero(Z <= zmin + REL_TOL * max(1.0, abs(zmin)))
        pick = tie[np.argmin(sumW[tie])]
        k = {j: int(comps[pick, c] + al.need[j]) for c, j in enumerate(al.used)}
        ev = _Eval(0, float(Z[pick]), float(sumW[pick]), len(al.used), y, k)
        if _better(ev, best):
            best = ev
    if best is None:
        raise InfeasibleInstance(f"no routing is stable within {K} drones")
    return _finish(m, best, "brute_force", count, t0, K)


# --------------------------------------------------------------------------
# Local search


def _construct(m: _Model, rng: random.Random, restart: int) -> tuple:
    """Greedy k-median opening of p facilities, then nearest-open routing."""
    J = m.J
    weight = [sum(rate for _, _, rate in u) for u in m.units]
    p = 1 + (restart % J)
    opened: list[int] = []
    cost = [math.inf] * len(m.units)
    while len(opened) < p:
        gains = []
        for j in range(J):
            if j in opened:
                continue
            g = 0.0
            for n, u in enumerate(m.units):
                if j in m.allowed[n]:
                    c = weight[n] * m.t[u[0][0]][j]
                    g += max((cost[n] if math.isfinite(cost[n]) else 1e9) - c, 0.0)
            gains.append((g, j))
        gains.sort(reverse=True)
        pick = gains[0][1] if restart == 0 else rng.choice(gains[: min(3, len(gains))])[1]
        opened.append(pick)
        for n, u in enumerate(m.units):
            if pick in m.allowed[n]:
                cost[n] = min(cost[n], weight[n] * m.t[u[0][0]][pick])
    y = []
    for n in range(len(m.units)):
        near = [j for j in m.allowed[n] if j in opened]
        y.append(near[0] if near else m.allowed[n][0])
    return tuple(y)


def _neighbors(m: _Model, y: tuple, rng: random.Random):
    """Reassign one unit; swap two units' facilities; open a facility and
    pull nearer units; close one and push its units."""
    moves = []
    used = set(y)
    for n in range(len(y)):
        for j in m.allowed[n]:
            if j != y[n]:
                moves.append(("reassign", n, j))
    for a, b in itertools.combinations(range(len(y)), 2):
        if y[a] != y[b] and y[b] in m.allowed[a] and y[a] in m.allowed[b]:
            moves.append(("swap", a, b))
    for j in range(m.J):
        if j not in used:
            moves.append(("open", j))
        elif len(used) > 1:
            moves.append(("close", j))
    rng.shuffle(moves)
    for mv in moves:
        z = list(y)
        if mv[0] == "reassign":
            z[mv[1]] = mv[2]
        elif mv[0] == "swap":
            z[mv[1]], z[mv[2]] = z[mv[2]], z[mv[1]]
        elif mv[0] == "open":
            j = mv[1]
            for n, u in enumerate(m.units):
                i = u[0][0]
                if j in m.allowed[n] and m.t[i][j] < m.t[i][z[n]]:
                    z[n] = j
            if j not in z:
                continue
        else:
            j = mv[1]
            rest = used - {j}
            for n in range(len(z)):
                if z[n] == j:
                    near = [f for f in m.allowed[n] if f in rest]
                    if not near:
                        break
                    z[n] = near[0]
            else:
                yield tuple(z)
            continue
        yield tuple(z)


def local_search(inst: Instance, K: int, seed: int = 0, budget: int = 200_000, restarts: int = 16,
                 discipline: str | None = None, initial: Assignment | None = None,
                 kicks: int = 8) -> SolveResult:
    """Multi-start first-improvement search over routings.

    Each routing is scored with its Z-optimal drone allocation, which makes
    single drone moves between facilities redundant.  Each restart then
    applies ``kicks`` random three-unit perturbations, keeping a re-descended
    routing only when it improves.  Starts: ``initial`` (a warm start, if
    given), the routing found by :func:`min_fleet`, then ``restarts``
    k-median constructions.
    """
    t0 = time.perf_counter()
    m = _Model(inst, discipline)
    rng = random.Random(seed)
    evals = 0
    trace: list[tuple[int, float]] = []
    best: _Eval | None = None

    def descend(y: tuple) -> _Eval:
        nonlocal evals
        cur = _evaluate(m, y, K)
        evals += 1
        moved = True
        while moved and evals < budget:
            moved = False
            for z in _neighbors(m, cur.y, rng):
                cand = _evaluate(m, z, K)
                evals += 1
                if _better(cand, cur):
                    cur = cand
                    moved = True
                    break
                if evals >= budget:
                    break
        return cur

    starts: list[tuple | None] = []
    if initial is not None:
        starts.append(_units_from(m, initial))
    # the fleet-minimal routing is stable whenever any routing is
    starts.append(_units_from(m, min_fleet(inst, seed=seed).assignment))
    n_fixed = len(starts)
    starts += [None] * restarts
    for rs, start in enumerate(starts):
        if evals >= budget:
            break
        cur = descend(start if start is not None else _construct(m, rng, rs - n_fixed))
        for _ in range(kicks):
            if evals >= budget:
                break
            z = list(cur.y)
            for n in rng.sample(range(len(z)), min(3, len(z))):
                z[n] = rng.choice(m.allowed[n])
            cand = descend(tuple(z))
            if _better(cand, cur):
                cur = cand
        if _better(cur, best):
            best = cur
            trace.append((evals, best.Z))
    if best is None or best.excess > 0:
        raise InfeasibleInstance(f"no stable routing found within {K} drones")
    return _finish(m, best, "local_search", evals, t0, K, trace)


def _units_from(m: _Model, asg: Assignment) -> tuple:
    return tuple(asg.facility(u[0][0], u[0][1]) for u in m.units)


def solve(inst: Instance, K: int, method: str = "auto", seed: int = 0, **kw) -> SolveResult:
    if method == "brute_force" or (method == "auto" and inst.n_facilities <= BRUTE_MAX_FACILITIES
                                   and inst.n_nodes * inst.R <= BRUTE_MAX_UNITS and K <= BRUTE_MAX_K):
        return brute_force(inst, K, kw.get("discipline"))
    return local_search(inst, K, seed=seed, **kw)
