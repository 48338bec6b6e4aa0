"""Problem data: demand nodes, candidate facilities, fleet and priority settings.

Times are minutes throughout, coordinates are planar kilometres and drone
speed is given in km/h (converted once, in :func:`compute_travel_matrix`).
Instances are immutable and validated on construction.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

SCHEMA_VERSION = 1
MODES = ("np", "sp", "dp")
PROB_TOL = 1e-12


class InstanceError(ValueError):
    """Base class for problems with instance data."""


class ParseError(InstanceError):
    """Instance file is malformed (bad JSON, missing or mistyped field)."""


class ValidationError(InstanceError):
    """Instance data violates a type invariant."""


@dataclass(frozen=True)
class DemandNode:
    id: int
    coords: tuple[float, float]
    lam: float
    class_probs: tuple[float, ...] | None = None
    fixed_class: int | None = None  # 1-based


@dataclass(frozen=True)
class Facility:
    id: int
    coords: tuple[float, float]


@dataclass(frozen=True)
class FleetParams:
    speed: float = 80.0  # km/h
    endurance: float = 40.0  # minutes
    alpha: float = 0.2
    k_hard_cap: int | None = 200
    round_trip: bool = False  # service time 2*t_ij instead of t_ij


@dataclass(frozen=True)
class PriorityParams:
    """Class weights and (dynamic discipline) initial priority values.

    Classes are numbered 1..R, class 1 being the most urgent.  The slope of
    the delay-dependent priority function is fixed at 1.
    """

    weights: tuple[float, ...] = (1.0,)
    initial_values: tuple[float, ...] | None = None

    slope = 1.0

    @property
    def R(self) -> int:
        return len(self.weights)

    def delta(self, i: int, r: int) -> float:
        """Initial priority gap a_i - a_r between classes i and r (1-based)."""
        if self.initial_values is None:
            return 0.0
        return self.initial_values[i - 1] - self.initial_values[r - 1]


@dataclass(frozen=True)
class Instance:
    nodes: tuple[DemandNode, ...]
    facilities: tuple[Facility, ...]
    fleet: FleetParams = field(default_factory=FleetParams)
    priority: PriorityParams = field(default_factory=PriorityParams)
    mode: str = "np"

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "facilities", tuple(self.facilities))
        validate(self)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_facilities(self) -> int:
        return len(self.facilities)

    @property
    def R(self) -> int:
        return self.priority.R

    @cached_property
    def travel(self) -> np.ndarray:
        """One-way travel times t_ij in minutes, shape (nodes, facilities)."""
        t = compute_travel_matrix(self.nodes, self.facilities, self.fleet.speed)
        t.setflags(write=False)
        return t

    @cached_property
    def service(self) -> np.ndarray:
        """Drone busy time per request (t_ij, or 2*t_ij with round trips)."""
        s = self.travel * 2.0 if self.fleet.round_trip else self.travel.copy()
        s.setflags(write=False)
        return s

    @cached_property
    def lam(self) -> np.ndarray:
        a = np.array([n.lam for n in self.nodes], dtype=float)
        a.setflags(write=False)
        return a

    @cached_property
    def class_probs(self) -> np.ndarray:
        """Matrix v_ir of class probabilities, shape (nodes, R).

        Fixed classes become one-hot rows; unlabelled single-class nodes are 1.
        """
        v = np.zeros((self.n_nodes, self.R))
        for i, node in enumerate(self.nodes):
            if node.class_probs is not None:
                v[i] = node.class_probs
            elif node.fixed_class is not None:
                v[i, node.fixed_class - 1] = 1.0
            else:
                v[i, 0] = 1.0
        v.setflags(write=False)
        return v

    def reachable(self) -> np.ndarray:
        """Boolean mask of pairs with t_ij <= endurance."""
        return self.travel <= self.fleet.endurance

    def unreachable_nodes(self) -> list[int]:
        return [i for i in range(self.n_nodes) if not self.reachable()[i].any()]

    def with_mode(self, mode: str) -> Instance:
        """Same data under another discipline.

        dp -> sp turns fixed classes into one-hot probabilities; sp -> dp
        requires one-hot probabilities.  np keeps class labels for reporting.
        """
        mode = mode.lower()
        nodes = self.nodes
        if mode == "sp":
            nodes = tuple(
                dataclasses.replace(n, class_probs=tuple(self.class_probs[i]), fixed_class=None)
                for i, n in enumerate(self.nodes)
            )
        elif mode == "dp":
            fixed = []
            for i, n in enumerate(self.nodes):
                row = self.class_probs[i]
                hot = np.flatnonzero(row == 1.0)
                if len(hot) != 1:
                    raise ValidationError(f"node {i}: class_probs not one-hot, cannot use dynamic mode")
                fixed.append(dataclasses.replace(n, class_probs=None, fixed_class=int(hot[0]) + 1))
            nodes = tuple(fixed)
        priority = self.priority
        if mode == "dp" and priority.initial_values is None:
            priority = dataclasses.replace(priority, initial_values=tuple(float(self.R - r) for r in range(self.R)))
        return dataclasses.replace(self, nodes=nodes, mode=mode, priority=priority)

    def with_priority(self, weights: Sequence[float] | None = None,
                      initial_values: Sequence[float] | None = None) -> Instance:
        p = self.priority
        if weights is not None:
            p = dataclasses.replace(p, weights=tuple(float(w) for w in weights))
        if initial_values is not None:
            p = dataclasses.replace(p, initial_values=tuple(float(a) for a in initial_values))
        return dataclasses.replace(self, priority=p)

    def with_fleet(self, **changes) -> Instance:
        return dataclasses.replace(self, fleet=dataclasses.replace(self.fleet, **changes))

    def digest(self) -> str:
        """Stable content hash (sha256 of the canonical JSON form)."""
        return hashlib.sha256(dumps_instance(self).encode()).hexdigest()


def compute_travel_matrix(nodes: Sequence[DemandNode], facilities: Sequence[Facility],
                          speed: float) -> np.ndarray:
    """t_ij = 60 * ||coords_i - coords_j||_2 / speed, in minutes."""
    if not speed > 0:
        raise ValueError("speed must be positive")
    t = np.empty((len(nodes), len(facilities)))
    for i, n in enumerate(nodes):
        for j, f in enumerate(facilities):
            d = math.hypot(n.coords[0] - f.coords[0], n.coords[1] - f.coords[1])
            t[i, j] = 60.0 * d / speed
    return t


def validate(inst: Instance) -> None:
    if inst.mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}, got {inst.mode!r}")
    fl = inst.fleet
    if not (fl.speed > 0 and math.isfinite(fl.speed)):
        raise ValidationError("speed must be positive")
    if not fl.endurance > 0:
        raise ValidationError("endurance must be positive")
    if not fl.alpha >= 0:
        raise ValidationError("alpha must be nonnegative")
    if fl.k_hard_cap is not None and fl.k_hard_cap < 1:
        raise ValidationError("k_hard_cap must be a positive integer")

    pr = inst.priority
    R = pr.R
    if R < 1:
        raise ValidationError("at least one priority class is required")
    if any(w < 0 for w in pr.weights) or abs(sum(pr.weights) - 1.0) > PROB_TOL:
        raise ValidationError("weights must be nonnegative and sum to 1")
    if pr.initial_values is not None:
        if len(pr.initial_values) != R:
            raise ValidationError("initial_values must have one entry per class")
        if any(a < b for a, b in zip(pr.initial_values, pr.initial_values[1:])):
            raise ValidationError("initial_values must be nonincreasing (a_1 >= a_2 >= ... >= a_R)")
    if inst.mode == "dp" and pr.initial_values is None and R > 1:
        raise ValidationError("dynamic mode requires initial_values")

    if not inst.nodes:
        raise ValidationError("at least one demand node is required")
    if not inst.facilities:
        raise ValidationError("at least one facility is required")
    if [n.id for n in inst.nodes] != list(range(len(inst.nodes))):
        raise ValidationError("node ids must be unique and contiguous from 0")
    if [f.id for f in inst.facilities] != list(range(len(inst.facilities))):
        raise ValidationError("facility ids must be unique and contiguous from 0")

    for n in inst.nodes:
        if not (n.lam > 0 and math.isfinite(n.lam)):
            raise ValidationError(f"node {n.id}: lambda must be positive")
        if n.class_probs is not None and n.fixed_class is not None:
            raise ValidationError(f"node {n.id}: only one of class_probs / fixed_class may be set")
        if n.class_probs is not None:
            if len(n.class_probs) != R:
                raise ValidationError(f"node {n.id}: class_probs must have {R} entries")
            if any(p < 0 for p in n.class_probs) or abs(sum(n.class_probs) - 1.0) > PROB_TOL:
                raise ValidationError(f"node {n.id}: class_probs must sum to 1")
        if n.fixed_class is not None and not 1 <= n.fixed_class <= R:
            raise ValidationError(f"node {n.id}: fixed_class must be in 1..{R}")
        if inst.mode == "sp" and n.class_probs is None:
            raise ValidationError(f"node {n.id}: static mode requires class_probs")
        if inst.mode == "dp" and n.fixed_class is None:
            raise ValidationError(f"node {n.id}: dynamic mode requires fixed_class")
        if n.class_probs is None and n.fixed_class is None and R != 1:
            raise ValidationError(f"node {n.id}: needs class_probs or fixed_class when R > 1")


# --------------------------------------------------------------------------
# Random generation

@dataclass(frozen=True)
class GeneratorConfig:
    n_nodes: int
    n_facilities: int
    box: float = 30.0
    lam_range: tuple[float, float] = (0.6, 1.0)
    classes: str = "probs"  # "probs": v_i1 ~ U(0,1); "fixed": class1_count nodes in class 1; "none"
    class1_count: int = 0
    weights: tuple[float, ...] = (0.7, 0.3)
    delta_a: float = 3.0
    fleet: FleetParams = field(default_factory=FleetParams)


PRESETS = {
    "sp-paper": GeneratorConfig(n_nodes=10, n_facilities=6, lam_range=(0.6, 1.0), classes="probs",
                                fleet=FleetParams(alpha=0.1)),
    "dp-paper": GeneratorConfig(n_nodes=11, n_facilities=6, lam_range=(0.1, 0.5), classes="fixed",
                                class1_count=6, fleet=FleetParams(alpha=0.1)),
}


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator seeded with an unsigned 64-bit value."""
    if not 0 <= int(seed) < 2**64:
        raise ValueError("seed must fit in an unsigned 64-bit integer")
    return np.random.Generator(np.random.PCG64(int(seed)))


def generate_instance(seed: int, n_nodes: int | None = None, n_facilities: int | None = None,
                      mode: str = "sp", config: GeneratorConfig | str | None = None) -> Instance:
    """Draw a random instance.

    Draw order is fixed (facility coordinates, node coordinates, rates, class
    data) so that a seed and config reproduce the same instance on any
    platform.  ``config`` is a :class:`GeneratorConfig` or a preset name; by
    default the dp-paper preset is used for ``mode="dp"`` and sp-paper
    otherwise.
    """
    if config is None:
        config = "dp-paper" if mode == "dp" else "sp-paper"
    if isinstance(config, str):
        config = PRESETS[config]
    n = config.n_nodes if n_nodes is None else n_nodes
    m = config.n_facilities if n_facilities is None else n_facilities
    if n <= 0 or m <= 0:
        raise ValueError("n_nodes and n_facilities must be positive")

    rng = make_rng(seed)
    fac_xy = rng.uniform(0.0, config.box, size=(m, 2))
    node_xy = rng.uniform(0.0, config.box, size=(n, 2))
    lam = rng.uniform(*config.lam_range, size=n)

    probs: list[tuple[float, ...] | None] = [None] * n
    fixed: list[int | None] = [None] * n
    weights = config.weights
    initial = None
    if config.classes == "probs":
        v1 = rng.uniform(0.0, 1.0, size=n)
        probs = [(float(p), float(1.0 - p)) for p in v1]
    elif config.classes == "fixed":
        if not 0 <= config.class1_count <= n:
            raise ValueError("class1_count out of range")
        chosen = set(rng.choice(n, size=config.class1_count, replace=False).tolist())
        fixed = [1 if i in chosen else 2 for i in range(n)]
        initial = (float(config.delta_a), 0.0)
    else:
        weights = (1.0,)

    nodes = tuple(
        DemandNode(id=i, coords=(float(node_xy[i, 0]), float(node_xy[i, 1])), lam=float(lam[i]),
                   class_probs=probs[i], fixed_class=fixed[i])
        for i in range(n)
    )
    facilities = tuple(Facility(id=j, coords=(float(fac_xy[j, 0]), float(fac_xy[j, 1]))) for j in range(m))
    native = {"probs": "sp", "fixed": "dp", "none": "np"}[config.classes]
    inst = Instance(nodes, facilities, config.fleet, PriorityParams(tuple(weights), initial), native)
    return inst if mode == native else inst.with_mode(mode)


# --------------------------------------------------------------------------
# JSON I/O

def instance_to_dict(inst: Instance) -> dict:
    nodes = []
    for n in inst.nodes:
        d = {"id": n.id, "x": n.coords[0], "y": n.coords[1], "lambda": n.lam}
        if n.class_probs is not None:
            d["class_probs"] = list(n.class_probs)
        if n.fixed_class is not None:
            d["fixed_class"] = n.fixed_class
        nodes.append(d)
    return {
        "schema_version": SCHEMA_VERSION,
        "mode": inst.mode,
        "fleet": {
            "speed": inst.fleet.speed,
            "endurance": inst.fleet.endurance,
            "alpha": inst.fleet.alpha,
            "k_hard_cap": inst.fleet.k_hard_cap,
            "round_trip": inst.fleet.round_trip,
        },
        "priority": {
            "weights": list(inst.priority.weights),
            "initial_values": None if inst.priority.initial_values is None else list(inst.priority.initial_values),
        },
        "nodes": nodes,
        "facilities": [{"id": f.id, "x": f.coords[0], "y": f.coords[1]} for f in inst.facilities],
    }


def dumps_instance(inst: Instance) -> str:
    return json.dumps(instance_to_dict(inst), indent=2) + "\n"


def _get(d: dict, key: str, where: str, kind=float, optional: bool = False, default=None):
    if not isinstance(d, dict):
        raise ParseError(f"{where}: expected an object")
    if key not in d:
        if optional:
            return default
        raise ParseError(f"missing field '{key}' in {where}")
    val = d[key]
    if val is None and optional:
        return default
    try:
        if kind is float:
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise TypeError
            return float(val)
        if kind is int:
            if isinstance(val, bool) or not isinstance(val, int):
                raise TypeError
            return val
        if kind is bool:
            if not isinstance(val, bool):
                raise TypeError
            return val
        if kind is list:
            if not isinstance(val, list):
                raise TypeError
            return val
        if kind is str:
            if not isinstance(val, str):
                raise TypeError
            return val
        if kind is dict:
            if not isinstance(val, dict):
                raise TypeError
            return val
    except TypeError:
        raise ParseError(f"field '{key}' in {where} has the wrong type ({type(val).__name__})") from None
    return val


def _float_list(vals: list, key: str, where: str) -> tuple[float, ...]:
    out = []
    for v in vals:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ParseError(f"field '{key}' in {where} must contain numbers")
        out.append(float(v))
    return tuple(out)


def instance_from_dict(doc: dict) -> Instance:
    if not isinstance(doc, dict):
        raise ParseError("top level must be a JSON object")
    version = _get(doc, "schema_version", "document", int)
    if version != SCHEMA_VERSION:
        raise ParseError(f"unsupported schema_version {version}")
    mode = _get(doc, "mode", "document", str)
    fl = _get(doc, "fleet", "document", dict)
    fleet = FleetParams(
        speed=_get(fl, "speed", "fleet"),
        endurance=_get(fl, "endurance", "fleet"),
        alpha=_get(fl, "alpha", "fleet", optional=True, default=0.0),
        k_hard_cap=_get(fl, "k_hard_cap", "fleet", int, optional=True),
        round_trip=_get(fl, "round_trip", "fleet", bool, optional=True, default=False),
    )
    pr = _get(doc, "priority", "document", dict)
    weights = _float_list(_get(pr, "weights", "priority", list), "weights", "priority")
    iv = _get(pr, "initial_values", "priority", list, optional=True)
    initial = None if iv is None else _float_list(iv, "initial_values", "priority")

    nodes = []
    for k, nd in enumerate(_get(doc, "nodes", "document", list)):
        where = f"nodes[{k}]"
        cp = _get(nd, "class_probs", where, list, optional=True)
        nodes.append(DemandNode(
            id=_get(nd, "id", where, int),
            coords=(_get(nd, "x", where), _get(nd, "y", where)),
            lam=_get(nd, "lambda", where),
            class_probs=None if cp is None else _float_list(cp, "class_probs", where),
            fixed_class=_get(nd, "fixed_class", where, int, optional=True),
        ))
    facilities = []
    for k, fd in enumerate(_get(doc, "facilities", "document", list)):
        where = f"facilities[{k}]"
        facilities.append(Facility(id=_get(fd, "id", where, int), coords=(_get(fd, "x", where), _get(fd, "y", where))))
    return Instance(tuple(nodes), tuple(facilities), fleet, PriorityParams(weights, initial), mode)


def loads_instance(text: str) -> Instance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return instance_from_dict(doc)


def read_instance(path: str | Path) -> Instance:
    return loads_instance(Path(path).read_text())


def write_instance(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(dumps_instance(inst))
