"""Discrete-event simulation of the k-drone queue at every open facility.

Requests from node i arrive as a Poisson(lambda_i) stream; the class of each
request is fixed (np/dp instances) or drawn with probabilities v_ir (sp).
Service is deterministic: the busy time s_ij at the assigned facility.  A
facility is k identical servers sharing one queue, and a free server always
takes the best waiting request (non-preemptive):

* ``fcfs``     earliest arrival,
* ``static``   lowest class index, then earliest arrival,
* ``dynamic``  highest a_r + (now - T_r), then earliest arrival.

Ties left after these keys go to the lower node id, then the node's earlier
request.  Facilities never interact, so each one runs its own event loop;
events are ordered by (time, sequence number) and an arrival at the instant
a server frees is already eligible for it.

Arrival streams come from per-(replication, node) substreams of a PCG64
generator, so changing the discipline or the routing never perturbs them.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .instance import Instance
from .queueing import DEFAULT_DISCIPLINE, DISCIPLINES, EPS_STAB, Assignment, StabilityError, facility_loads

Z95 = 1.959963984540054


@dataclass(frozen=True)
class SimConfig:
    horizon: float = 30000.0
    warmup: float = 0.1
    replications: int = 10
    seed: int = 0
    discipline: str | None = None
    paired_streams: bool = True
    tail_grid: tuple[float, ...] = tuple(float(t) for t in range(21))
    allow_unstable: bool = False
    event_log: bool = False

    def __post_init__(self) -> None:
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if not 0 <= self.warmup < 1:
            raise ValueError("warmup must lie in [0, 1)")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if self.discipline is not None and self.discipline not in DISCIPLINES:
            raise ValueError(f"unknown discipline {self.discipline!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned value")


@dataclass(frozen=True)
class Event:
    """One served request: the rows of the optional event log."""

    arrival: float
    start: float
    departure: float
    node: int
    cls: int
    facility: int


@dataclass
class Replication:
    """Statistics of one replication, post-warmup arrivals only.

    ``node_stats[(i, r)] = (count, mean wait, mean response)``; the per-class
    lists are indexed by class - 1.
    """

    node_stats: dict
    W: list  # max over nodes of mean wait
    sumW: list  # sum over nodes of rate * mean wait
    Z: list  # max over nodes of mean response
    sumZ: list  # sum over nodes of rate * mean response
    mean_wait: list  # pooled mean wait of the class
    count: list
    tails: list  # per class: P(wait > t) on the tail grid
    events: list | None = None


@dataclass
class SimReport:
    discipline: str
    config: SimConfig
    weights: tuple
    reps: list = field(default_factory=list)

    def _series(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.reps], dtype=float)

    def mean(self, name: str) -> np.ndarray:
        """Across-replication mean of a per-class metric."""
        return self._series(name).mean(axis=0)

    def half_width(self, name: str) -> np.ndarray:
        """95% normal-approximation half-width (nan with one replication)."""
        x = self._series(name)
        if len(x) < 2:
            return np.full(x.shape[1:], np.nan)
        return Z95 * x.std(axis=0, ddof=1) / math.sqrt(len(x))

    def weighted_Z(self) -> np.ndarray:
        """Per replication sum_r w_r Z_r."""
        return self._series("Z") @ np.asarray(self.weights, dtype=float)

    def node_mean(self, i: int, r: int) -> tuple[float, float]:
        """Mean wait of stream (i, r) and its half-width across replications."""
        x = np.array([rep.node_stats.get((i, r), (0, 0.0, 0.0))[1] for rep in self.reps])
        hw = Z95 * x.std(ddof=1) / math.sqrt(len(x)) if len(x) > 1 else math.nan
        return float(x.mean()), float(hw)

    def tails(self) -> np.ndarray:
        return self.mean("tails")

    def to_dict(self) -> dict:
        def clean(a):
            return [None if isinstance(v, float) and math.isnan(v) else v for v in np.asarray(a, float).tolist()]

        metrics = {name: {"mean": clean(self.mean(name)), "ci95": clean(self.half_width(name))}
                   for name in ("W", "sumW", "Z", "sumZ", "mean_wait", "count")}
        wz = self.weighted_Z()
        return {
            "discipline": self.discipline,
            "config": {**asdict(self.config), "tail_grid": list(self.config.tail_grid)},
            "weighted_Z": {"mean": float(wz.mean()),
                           "ci95": (float(Z95 * wz.std(ddof=1) / math.sqrt(len(wz))) if len(wz) > 1 else None)},
            "classes": metrics,
            "tails": {"grid": list(self.config.tail_grid), "P": self.tails().tolist()},
            "replications": [
                {"nodes": [{"node": i, "class": r, "count": c, "mean_wait": w, "mean_response": z}
                           for (i, r), (c, w, z) in sorted(rep.node_stats.items())],
                 "W": rep.W, "sumW": rep.sumW, "Z": rep.Z, "sumZ": rep.sumZ,
                 "mean_wait": rep.mean_wait, "count": rep.count}
                for rep in self.reps
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def _arrivals(inst: Instance, i: int, rep: int, cfg: SimConfig, salt: int) -> tuple[np.ndarray, np.ndarray]:
    """Arrival times in [0, horizon) and classes for node i in one replication."""
    key = (rep, i) if cfg.paired_streams else (rep, i, salt)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed, spawn_key=key)))
    lam = inst.nodes[i].lam
    H = cfg.horizon
    mean_n = lam * H
    chunks = []
    last = 0.0
    while last < H:
        size = int(mean_n + 6 * math.sqrt(mean_n) + 16)
        gaps = rng.exponential(1.0 / lam, size)
        c = last + np.cumsum(gaps)
        chunks.append(c)
        last = float(c[-1])
    times = np.concatenate(chunks)
    times = times[times < H]
    node = inst.nodes[i]
    if node.class_probs is not None and len(node.class_probs) > 1:
        cum = np.cumsum(node.class_probs)
        cls = 1 + np.searchsorted(cum, rng.random(len(times)), side="right")
        cls = np.minimum(cls, len(node.class_probs))
    else:
        cls = np.full(len(times), node.fixed_class or 1)
    return times, cls.astype(np.int64)


def _serve(T: list, s: list, keys: list, k: int) -> list:
    """Start times for requests sorted by (arrival, node, seq) at a k-server station.

    ``keys[m]`` ranks waiting requests (smaller first); it must end with m
    so that leftover ties resolve in arrival order.
    """
    n = len(T)
    start = [0.0] * n
    free = [0.0] * k
    queue: list = []
    push, pop, replace = heapq.heappush, heapq.heappop, heapq.heapreplace
    i = 0
    while i < n or queue:
        f = free[0]
        if not queue:
            if f <= T[i]:
                start[i] = T[i]
                replace(free, T[i] + s[i])
            else:
                push(queue, keys[i])
            i += 1
            continue
        while i < n and T[i] <= f:
            push(queue, keys[i])
            i += 1
        m = pop(queue)[-1]
        start[m] = f
        replace(free, f + s[m])
    return start


def _check_stable(inst: Instance, asg: Assignment) -> None:
    for j, a in enumerate(facility_loads(inst, asg)):
        if a.L > 0 and not asg.k[j] - a.L >= EPS_STAB:
            raise StabilityError(j, a.L, asg.k[j])


def _replicate(inst: Instance, asg: Assignment, cfg: SimConfig, disc: str, rep: int) -> Replication:
    R = inst.R
    J = inst.n_facilities
    tt = inst.travel
    ss = inst.service
    per_fac: list[list] = [[] for _ in range(J)]
    salt = DISCIPLINES.index(disc)
    for i in range(inst.n_nodes):
        times, cls = _arrivals(inst, i, rep, cfg, salt)
        for r in range(1, R + 1):
            mask = cls == r
            if mask.any():
                per_fac[asg.facility(i, r)].append((times[mask], np.full(mask.sum(), i), cls[mask],
                                                    np.flatnonzero(mask)))
    a_vals = inst.priority.initial_values or (0.0,) * R
    cut = cfg.warmup * cfg.horizon
    wait_parts, node_parts, cls_parts, resp_parts = [], [], [], []
    events = [] if cfg.event_log else None
    for j, parts in enumerate(per_fac):
        if not parts:
            continue
        T = np.concatenate([p[0] for p in parts])
        nd = np.concatenate([p[1] for p in parts])
        cl = np.concatenate([p[2] for p in parts])
        sq = np.concatenate([p[3] for p in parts])
        order = np.lexsort((sq, nd, T))
        T, nd, cl = T[order], nd[order], cl[order]
        svc = ss[nd, j]
        Tl = T.tolist()
        if disc == "fcfs":
            keys = [(m,) for m in range(len(Tl))]
        elif disc == "static":
            keys = [(c, m) for m, c in enumerate(cl.tolist())]
        else:
            keys = [(t - a_vals[c - 1], m) for m, (t, c) in enumerate(zip(Tl, cl.tolist()))]
        start = np.array(_serve(Tl, svc.tolist(), keys, asg.k[j]))
        wait = start - T
        if events is not None:
            dep = start + svc
            events.extend(Event(a, b, c, int(d), int(e), j)
                          for a, b, c, d, e in zip(Tl, start.tolist(), dep.tolist(), nd.tolist(), cl.tolist()))
        keep = T >= cut
        wait_parts.append(wait[keep])
        node_parts.append(nd[keep])
        cls_parts.append(cl[keep])
        resp_parts.append(wait[keep] + tt[nd[keep], j])
    if wait_parts:
        wait = np.concatenate(wait_parts)
        nd = np.concatenate(node_parts)
        cl = np.concatenate(cls_parts)
        resp = np.concatenate(resp_parts)
    else:
        wait = resp = np.zeros(0)
        nd = cl = np.zeros(0, dtype=np.int64)
    grid = np.asarray(cfg.tail_grid, dtype=float)
    v = inst.class_probs
    node_stats = {}
    W, sumW, Z, sumZ, mw, cnt, tails = ([0.0] * R for _ in range(7))
    for r in range(1, R + 1):
        in_r = cl == r
        wr = wait[in_r]
        cnt[r - 1] = int(in_r.sum())
        mw[r - 1] = float(wr.mean()) if len(wr) else 0.0
        tails[r - 1] = ((wr[:, None] > grid[None, :]).mean(axis=0) if len(wr) else np.zeros(len(grid))).tolist()
        nodes_r = nd[in_r]
        if not len(nodes_r):
            continue
        counts = np.bincount(nodes_r, minlength=inst.n_nodes)
        wsum = np.bincount(nodes_r, weights=wr, minlength=inst.n_nodes)
        zsum = np.bincount(nodes_r, weights=resp[in_r], minlength=inst.n_nodes)
        for i in np.flatnonzero(counts):
            c = int(counts[i])
            mwait, mresp = float(wsum[i] / c), float(zsum[i] / c)
            node_stats[(int(i), r)] = (c, mwait, mresp)
            rate = float(inst.nodes[i].lam * v[i, r - 1])
            W[r - 1] = max(W[r - 1], mwait)
            Z[r - 1] = max(Z[r - 1], mresp)
            sumW[r - 1] += rate * mwait
            sumZ[r - 1] += rate * mresp
    return Replication(node_stats, W, sumW, Z, sumZ, mw, cnt, tails, events)


def simulate(inst: Instance, asg: Assignment, config: SimConfig | None = None) -> SimReport:
    cfg = config or SimConfig()
    disc = cfg.discipline or DEFAULT_DISCIPLINE[inst.mode]
    if len(asg.y) != inst.n_nodes or len(asg.k) != inst.n_facilities:
        raise ValueError("assignment does not match the instance")
    if not cfg.allow_unstable:
        _check_stable(inst, asg)
    rep = SimReport(disc, cfg, tuple(inst.priority.weights))
    rep.reps = [_replicate(inst, asg, cfg, disc, n) for n in range(cfg.replications)]
    return rep


def gap(x: float, y: float) -> float:
    """Relative gap (x - y) / y; nan when y is zero."""
    return (x - y) / y if y else math.nan


def paired_compare(inst: Instance, assignments: dict[str, Assignment],
                   config: SimConfig | None = None) -> dict[str, SimReport]:
    """Simulate each (discipline -> assignment) pair on common arrival streams."""
    cfg = config or SimConfig()
    for disc, asg in assignments.items():
        if disc not in DISCIPLINES:
            raise ValueError(f"unknown discipline {disc!r}")
        if len(asg.y) != inst.n_nodes or len(asg.k) != inst.n_facilities:
            raise ValueError(f"assignment for {disc} does not match the instance")
    return {disc: simulate(inst, asg, SimConfig(**{**asdict(cfg), "discipline": disc}))
            for disc, asg in assignments.items()}


def paired_gaps(reports: dict[str, SimReport], x: str, y: str, metric: str = "sumZ") -> np.ndarray:
    """Per-class mean over replications of Gap_{x/y} for a per-class metric."""
    a = reports[x]._series(metric)
    b = reports[y]._series(metric)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(b != 0, (a - b) / b, np.nan)
    return g.mean(axis=0)


def write_event_log(report: SimReport, path, replication: int = 0) -> None:
    """CSV of arrival, start, departure, node, class, facility."""
    events = report.reps[replication].events
    if events is None:
        raise ValueError("simulation ran without event_log=True")
    with open(path, "w", newline="\n") as fh:
        fh.write("arrival,start,departure,node,class,facility\n")
        for e in events:
            fh.write(f"{e.arrival!r},{e.start!r},{e.departure!r},{e.node},{e.cls},{e.facility}\n")
