"""Closed-form congestion analytics for a fixed location/allocation/fleet decision.

Each open facility with k drones is approximated by an M/G/1 queue whose
service time is the delivery time divided by k.  Waiting times follow from
the Pollaczek-Khinchine formula (first-come-first-served), the classical
non-preemptive static priority formulas, and an upper bound for the
delay-dependent priority rule q_r(t) = a_r + (t - T_r).

A *stream* is a (node, class) pair with positive rate lambda_i * v_ir; in
static mode every stream is routed independently, otherwise all streams of a
node share the node's facility.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .instance import Instance, PriorityParams

EPS_STAB = 1e-6
DISCIPLINES = ("fcfs", "static", "dynamic")
DEFAULT_DISCIPLINE = {"np": "fcfs", "sp": "static", "dp": "dynamic"}


class StabilityError(ArithmeticError):
    """A facility's drone count does not exceed its load by the stability margin."""

    def __init__(self, facility: int, load: float, k: float):
        super().__init__(f"facility {facility} unstable: load {load:.6g} vs k={k}")
        self.facility = facility
        self.load = load
        self.k = k


@dataclass(frozen=True)
class Assignment:
    """Decision (x, y, k).

    ``y[i]`` is a facility index for np/dp, or a tuple with one facility per
    class for sp.  ``k[j]`` is the number of drones at facility j (0 when
    closed).  ``open_set`` defaults to the facilities receiving demand.
    """

    y: tuple
    k: tuple[int, ...]
    open_set: frozenset[int] | None = None

    def __post_init__(self) -> None:
        y = tuple(tuple(int(v) for v in e) if isinstance(e, (tuple, list)) else int(e) for e in self.y)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "k", tuple(int(v) for v in self.k))
        if self.open_set is None:
            used = set()
            for e in y:
                used.update(e if isinstance(e, tuple) else (e,))
            object.__setattr__(self, "open_set", frozenset(used))
        else:
            object.__setattr__(self, "open_set", frozenset(int(j) for j in self.open_set))

    @property
    def per_class(self) -> bool:
        return bool(self.y) and isinstance(self.y[0], tuple)

    def facility(self, i: int, r: int) -> int:
        """Facility serving class r (1-based) of node i."""
        e = self.y[i]
        return e[r - 1] if isinstance(e, tuple) else e

    def to_dict(self) -> dict:
        return {"y": [list(e) if isinstance(e, tuple) else e for e in self.y],
                "k": list(self.k), "open": sorted(self.open_set)}

    @classmethod
    def from_dict(cls, d: dict) -> Assignment:
        return cls(tuple(d["y"]), tuple(d["k"]), frozenset(d["open"]) if "open" in d else None)


def streams(inst: Instance) -> list[tuple[int, int, float]]:
    """(node, class, rate) for every pair with positive demand, node-major order."""
    v = inst.class_probs
    out = []
    for i, node in enumerate(inst.nodes):
        for r in range(1, inst.R + 1):
            rate = float(node.lam * v[i, r - 1])
            if rate > 0:
                out.append((i, r, rate))
    return out


@dataclass
class FacilityLoad:
    """Aggregates of the demand routed to one facility."""

    N: float = 0.0  # sum rate * s^2
    L: float = 0.0  # total load, sum rate * s
    gamma: float = 0.0  # total arrival rate
    class_L: list | None = None
    class_N: list | None = None
    class_gamma: list | None = None


def facility_loads(inst: Instance, asg: Assignment) -> list[FacilityLoad]:
    s = inst.service
    out = [FacilityLoad(class_L=[0.0] * inst.R, class_N=[0.0] * inst.R, class_gamma=[0.0] * inst.R)
           for _ in range(inst.n_facilities)]
    for i, r, rate in streams(inst):
        j = asg.facility(i, r)
        sij = float(s[i, j])
        rate = float(rate)
        a = out[j]
        a.N += rate * sij * sij
        a.L += rate * sij
        a.gamma += rate
        a.class_L[r - 1] += rate * sij
        a.class_N[r - 1] += rate * sij * sij
        a.class_gamma[r - 1] += rate
    return out


def min_drones(load: float) -> int:
    """Least integer k with k - load >= EPS_STAB (0 for an unloaded facility)."""
    if load <= 0:
        return 0
    k = math.floor(load) + 1
    if k - load < EPS_STAB:
        k += 1
    return k


def _check(j: int, load: float, k: float) -> None:
    if load > 0 and not k - load >= EPS_STAB:
        raise StabilityError(j, load, k)


def pk_wait(N: float, L: float, k: float, j: int = -1) -> float:
    """FCFS wait N / (2 k (k - L)); zero when nothing is routed to the facility."""
    _check(j, L, k)
    if N == 0.0:
        return 0.0
    return N / (2.0 * k * (k - L))


def static_wait(N: float, cum_r: float, cum_prev: float, k: float, r: int, j: int = -1) -> float:
    """Non-preemptive static priority wait of class r.

    ``cum_r`` / ``cum_prev`` are the loads of classes 1..r and 1..r-1.
    """
    _check(j, cum_r, k)
    if N == 0.0:
        return 0.0
    if r == 1:
        return N / (2.0 * k * (k - cum_r))
    return N / (2.0 * (k - cum_r) * (k - cum_prev))


def dynamic_wait(w_fcfs: float, L: float, class_L: list, k: float, r: int,
                 priority: PriorityParams) -> float:
    """Upper bound W_j + sum_{l<r} da_lr * L * L_l / k^2 (slope-1 rule)."""
    w = w_fcfs
    if r == 1:
        return w
    extra = 0.0
    for l in range(1, r):
        if class_L[l - 1] > 0:
            extra += priority.delta(l, r) * (L * class_L[l - 1]) / (k * k)
    return w + extra


def class_waits(a: FacilityLoad, k, discipline: str, priority: PriorityParams) -> list:
    """Waits of every class at one facility for drone count ``k``.

    ``k`` may be a scalar or a numpy array (no stability check is made for
    arrays; callers pass stable counts).  Same arithmetic as the scalar
    helpers above, so scalar results agree bit for bit.
    """
    R = len(a.class_L)
    if a.gamma == 0 or a.N == 0.0:
        return [0.0] * R
    if np.isscalar(k):
        _check(-1, a.L, k)
    N = a.N
    if discipline == "fcfs":
        w0 = N / (2.0 * k * (k - a.L))
        return [w0] * R
    if discipline == "static":
        out = []
        cum = 0.0
        for r in range(1, R + 1):
            prev = cum
            cum += a.class_L[r - 1]
            out.append(N / (2.0 * k * (k - cum)) if r == 1 else N / (2.0 * (k - cum) * (k - prev)))
        return out
    w0 = N / (2.0 * k * (k - a.L))
    return [dynamic_wait(w0, a.L, a.class_L, k, r, priority) for r in range(1, R + 1)]


def waiting_np(inst: Instance, asg: Assignment, j: int) -> float:
    a = facility_loads(inst, asg)[j]
    return float(pk_wait(a.N, a.L, asg.k[j], j))


def waiting_sp(inst: Instance, asg: Assignment, j: int, r: int) -> float:
    a = facility_loads(inst, asg)[j]
    cum_prev = sum(a.class_L[: r - 1])
    cum_r = cum_prev + a.class_L[r - 1]
    _check(j, a.L, asg.k[j])
    return float(static_wait(a.N, cum_r, cum_prev, asg.k[j], r, j))


def waiting_dp(inst: Instance, asg: Assignment, j: int, r: int,
               priority: PriorityParams | None = None) -> float:
    a = facility_loads(inst, asg)[j]
    w0 = pk_wait(a.N, a.L, asg.k[j], j)
    return float(dynamic_wait(w0, a.L, a.class_L, asg.k[j], r, priority or inst.priority))


@dataclass(frozen=True)
class QueueAnalytics:
    """Per facility (rows) and class (columns) congestion figures.

    ``moment1``/``moment2`` are E[tau] and E[tau^2] of the scaled service
    time (nan where a class has no traffic); ``W0`` is the FCFS wait and
    ``W`` the wait under the chosen discipline.
    """

    discipline: str
    gamma: np.ndarray
    load: np.ndarray
    moment1: np.ndarray
    moment2: np.ndarray
    rho: np.ndarray
    W0: np.ndarray
    W: np.ndarray

    @property
    def gamma_total(self) -> np.ndarray:
        return self.gamma.sum(axis=1)


def analyze(inst: Instance, asg: Assignment, discipline: str | None = None) -> QueueAnalytics:
    disc = discipline or DEFAULT_DISCIPLINE[inst.mode]
    if disc not in DISCIPLINES:
        raise ValueError(f"unknown discipline {disc!r}")
    J, R = inst.n_facilities, inst.R
    gamma = np.zeros((J, R))
    load = np.zeros((J, R))
    m1 = np.full((J, R), np.nan)
    m2 = np.full((J, R), np.nan)
    rho = np.zeros((J, R))
    W0 = np.zeros(J)
    W = np.zeros((J, R))
    for j, a in enumerate(facility_loads(inst, asg)):
        k = asg.k[j]
        gamma[j] = a.class_gamma
        load[j] = a.class_L
        for r in range(R):
            if a.class_gamma[r] > 0:
                m1[j, r] = a.class_L[r] / (k * a.class_gamma[r]) if k > 0 else math.inf
                m2[j, r] = a.class_N[r] / (k * k * a.class_gamma[r]) if k > 0 else math.inf
                rho[j, r] = a.class_L[r] / k if k > 0 else math.inf
        if a.gamma == 0:
            continue
        W0[j] = pk_wait(a.N, a.L, k, j)
        cum = 0.0
        for r in range(1, R + 1):
            if disc == "fcfs":
                W[j, r - 1] = W0[j]
            elif disc == "static":
                prev = cum
                cum += a.class_L[r - 1]
                W[j, r - 1] = static_wait(a.N, cum, prev, k, r, j)
            else:
                W[j, r - 1] = dynamic_wait(W0[j], a.L, a.class_L, k, r, inst.priority)
    return QueueAnalytics(disc, gamma, load, m1, m2, rho, W0, W)


@dataclass(frozen=True)
class Objective:
    Z: float
    Z_r: tuple[float, ...]


@dataclass(frozen=True)
class ClassMetrics:
    Z: float  # max response time t + W over the class's streams
    sumZ: float  # rate-weighted total response time
    W: float  # max waiting time
    sumW: float  # rate-weighted total waiting time


def _stream_terms(inst: Instance, asg: Assignment, qa: QueueAnalytics) -> Iterable[tuple[int, float, float, float]]:
    t = inst.travel
    for i, r, rate in streams(inst):
        j = asg.facility(i, r)
        yield r, rate, float(t[i, j]), float(qa.W[j, r - 1])


def objective(inst: Instance, asg: Assignment, discipline: str | None = None) -> Objective:
    """Weighted min-max response time sum_r w_r max (t_ij + W_jr) over assigned streams."""
    qa = analyze(inst, asg, discipline)
    Zr = [0.0] * inst.R
    for r, _, tij, w in _stream_terms(inst, asg, qa):
        Zr[r - 1] = max(Zr[r - 1], tij + w)
    Z = sum(wr * z for wr, z in zip(inst.priority.weights, Zr))
    return Objective(Z, tuple(Zr))


def report_metrics(inst: Instance, asg: Assignment, discipline: str | None = None) -> list[ClassMetrics]:
    qa = analyze(inst, asg, discipline)
    R = inst.R
    Z = [0.0] * R
    sumZ = [0.0] * R
    W = [0.0] * R
    sumW = [0.0] * R
    for r, rate, tij, w in _stream_terms(inst, asg, qa):
        Z[r - 1] = max(Z[r - 1], tij + w)
        sumZ[r - 1] += rate * (tij + w)
        W[r - 1] = max(W[r - 1], w)
        sumW[r - 1] += rate * w
    return [ClassMetrics(Z[r], sumZ[r], W[r], sumW[r]) for r in range(R)]
