"""Shared builders for small hand-checkable and random instances."""

from __future__ import annotations

import math
import random

from dronefl.instance import DemandNode, Facility, FleetParams, Instance, PriorityParams
from dronefl.queueing import Assignment, facility_loads

# speed 60 km/h makes travel time in minutes equal to distance in km
UNIT_FLEET = FleetParams(speed=60.0)


def line_instance(rates, dists, mode="np", probs=None, classes=None, weights=None, initial=None,
                  n_facilities=1, fleet=UNIT_FLEET) -> Instance:
    """Nodes on the x axis at the given distances from facility 0 at the origin."""
    nodes = []
    for i, (lam, d) in enumerate(zip(rates, dists)):
        nodes.append(DemandNode(i, (float(d), 0.0), float(lam),
                                class_probs=None if probs is None else tuple(probs[i]),
                                fixed_class=None if classes is None else classes[i]))
    facs = [Facility(j, (0.0, 10.0 * j)) for j in range(n_facilities)]
    if weights is None:
        weights = (1.0,) if mode == "np" and probs is None and classes is None else (0.7, 0.3)
    return Instance(tuple(nodes), tuple(facs), fleet=fleet, priority=PriorityParams(tuple(weights), initial),
                    mode=mode)


def random_instance(rng: random.Random, mode: str, max_nodes=4, max_facilities=3, R=2, deltas=(3.0, 10.0, 20.0),
                    lam_range=(0.05, 1.0)) -> Instance:
    nI, nJ = rng.randint(1, max_nodes), rng.randint(1, max_facilities)
    nodes = []
    for i in range(nI):
        xy = (rng.uniform(0, 30), rng.uniform(0, 30))
        lam = rng.uniform(*lam_range)
        if mode == "sp":
            v = [rng.random() + 1e-3 for _ in range(R)]
            s = sum(v)
            v = [x / s for x in v]
            v[-1] = 1.0 - sum(v[:-1])
            nodes.append(DemandNode(i, xy, lam, class_probs=tuple(v)))
        elif mode == "dp":
            nodes.append(DemandNode(i, xy, lam, fixed_class=rng.randint(1, R)))
        else:
            nodes.append(DemandNode(i, xy, lam))
    facs = [Facility(j, (rng.uniform(0, 30), rng.uniform(0, 30))) for j in range(nJ)]
    if mode == "np":
        pr = PriorityParams()
    else:
        w = [rng.random() + 0.1 for _ in range(R)]
        w = tuple(x / sum(w) for x in w)
        init = None
        if mode == "dp":
            d = rng.choice(deltas)
            init = tuple(d * (R - 1 - r) for r in range(R))
        pr = PriorityParams(w, init)
    return Instance(tuple(nodes), tuple(facs), priority=pr, mode=mode)


def random_assignment(rng: random.Random, inst: Instance, extra=2) -> Assignment:
    """Random routing with each used facility given min stable drones plus U{0..extra}."""
    nJ = inst.n_facilities
    if inst.mode == "sp":
        y = tuple(tuple(rng.randrange(nJ) for _ in range(inst.R)) for _ in range(inst.n_nodes))
    else:
        y = tuple(rng.randrange(nJ) for _ in range(inst.n_nodes))
    probe = Assignment(y, (0,) * nJ)
    loads = [a.L for a in facility_loads(inst, probe)]
    k = tuple(math.floor(L + 1e-6) + 1 + rng.randint(0, extra) if j in probe.open_set else 0
              for j, L in enumerate(loads))
    return Assignment(y, k)


def tiny_instance(seed: int, mode: str) -> Instance:
    """Instances inside the enumeration bounds of the brute-force oracle."""
    rng = random.Random(seed)
    nI = rng.randint(3, 6) if mode == "np" else 4
    nodes = []
    for i in range(nI):
        xy = (rng.uniform(0, 30), rng.uniform(0, 30))
        lam = rng.uniform(0.05, 0.3)
        if mode == "sp":
            v = rng.random()
            nodes.append(DemandNode(i, xy, lam, class_probs=(v, 1 - v)))
        elif mode == "dp":
            nodes.append(DemandNode(i, xy, lam, fixed_class=1 if i % 2 == 0 else 2))
        else:
            nodes.append(DemandNode(i, xy, lam))
    facs = [Facility(j, (rng.uniform(0, 30), rng.uniform(0, 30))) for j in range(3)]
    pr = PriorityParams() if mode == "np" else PriorityParams((0.7, 0.3), (3.0, 0.0) if mode == "dp" else None)
    return Instance(tuple(nodes), tuple(facs), priority=pr, mode=mode)
