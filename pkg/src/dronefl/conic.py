"""Mixed-integer second-order cone reformulations of the three location models.

A :class:`ConicProgram` is plain data: named variables, a linear objective,
linear rows and second-order cones ``||vector||_2 <= scalar`` whose entries
are affine expressions.  The builders mirror the epigraph reformulation of
each waiting-time formula; :func:`minimal_W_via_cones` back-solves the tight
cones for fixed integers so the reformulation can be checked against
:mod:`dronefl.queueing` without a conic solver.  :func:`emit` writes the
program for external MISOCP solvers.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .instance import Instance
from .queueing import Assignment, StabilityError

LINEAR_TOL = 1e-7
SOC_TOL = 1e-7
INT_TOL = 1e-7


@dataclass(frozen=True)
class Affine:
    """sum(coef * var) + const, terms kept in first-seen order."""

    terms: tuple[tuple[str, float], ...] = ()
    const: float = 0.0

    def value(self, point: Mapping[str, float], default: float | None = None) -> float:
        total = self.const
        for name, coef in self.terms:
            if default is None:
                total += coef * point[name]
            else:
                total += coef * point.get(name, default)
        return total

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.terms)

    def coef(self, name: str) -> float:
        for n, c in self.terms:
            if n == name:
                return c
        return 0.0


def affine(pairs: Iterable[tuple[str, float]] = (), const: float = 0.0) -> Affine:
    acc: dict[str, float] = {}
    for name, coef in pairs:
        acc[name] = acc.get(name, 0.0) + float(coef)
    return Affine(tuple((n, c) for n, c in acc.items() if c != 0.0), float(const))


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str = "C"  # C continuous, B binary, I integer
    lb: float = 0.0
    ub: float = math.inf


@dataclass(frozen=True)
class LinearConstraint:
    name: str
    family: str
    expr: Affine
    sense: str  # "<=", "==", ">="
    rhs: float


@dataclass(frozen=True)
class SOCConstraint:
    """||vector||_2 <= scalar."""

    name: str
    family: str
    vector: tuple[Affine, ...]
    scalar: Affine


@dataclass(frozen=True)
class ConicProgram:
    model: str
    instance_hash: str
    variables: tuple[Variable, ...]
    objective: Affine
    linear: tuple[LinearConstraint, ...]
    soc: tuple[SOCConstraint, ...]

    def variable_names(self) -> list[str]:
        return [v.name for v in self.variables]

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for v in self.variables:
            base = v.name.split("[", 1)[0]
            out[base] = out.get(base, 0) + 1
        return out


class _Builder:
    def __init__(self, model: str, inst: Instance):
        self.model = model
        self.inst = inst
        self.vars: dict[str, Variable] = {}
        self.lin: list[LinearConstraint] = []
        self.soc: list[SOCConstraint] = []

    def var(self, name: str, kind: str = "C", lb: float = 0.0, ub: float = math.inf) -> str:
        if kind == "B":
            lb, ub = 0.0, 1.0
        self.vars[name] = Variable(name, kind, float(lb), float(ub))
        return name

    def add_lin(self, name, family, pairs, sense, rhs, const=0.0):
        self.lin.append(LinearConstraint(name, family, affine(pairs, const), sense, float(rhs)))

    def add_soc(self, name, family, vector, scalar):
        self.soc.append(SOCConstraint(name, family, tuple(vector), scalar))

    def done(self, objective: Affine) -> ConicProgram:
        for c in self.lin:
            self._declared(c.expr)
        for c in self.soc:
            for a in (*c.vector, c.scalar):
                self._declared(a)
        self._declared(objective)
        return ConicProgram(self.model, self.inst.digest(), tuple(self.vars.values()), objective,
                            tuple(self.lin), tuple(self.soc))

    def _declared(self, a: Affine) -> None:
        for n in a.variables:
            if n not in self.vars:
                raise ValueError(f"undeclared variable {n}")


def _common_rows(b: _Builder, K: int, ynames: dict, classes: list[int]) -> None:
    """Assignment, openness, range, stability and fleet rows.

    ``ynames[(i, j, r)]`` names the assignment variable of class r of node i;
    ``classes`` lists the classes routed separately (just [1] unless static).
    """
    inst = b.inst
    t, s, lam, v = inst.travel, inst.service, inst.lam, inst.class_probs
    I, J = range(inst.n_nodes), range(inst.n_facilities)
    per_class = len(classes) > 1 or inst.mode == "sp"
    for i in I:
        for r in classes:
            tag = f"{i},{r}" if per_class else f"{i}"
            b.add_lin(f"assign[{tag}]", "2b", [(ynames[i, j, r], 1.0) for j in J], "==", 1.0)
    for i in I:
        for j in J:
            for r in classes:
                tag = f"{i},{j},{r}" if per_class else f"{i},{j}"
                b.add_lin(f"open[{tag}]", "2c", [(ynames[i, j, r], 1.0), (f"x[{j}]", -1.0)], "<=", 0.0)
    for i in I:
        for r in classes:
            tag = f"{i},{r}" if per_class else f"{i}"
            b.add_lin(f"range[{tag}]", "2d", [(ynames[i, j, r], float(t[i, j])) for j in J], "<=",
                      inst.fleet.endurance)
    for j in J:
        pairs = []
        for r in classes:
            for i in I:
                rate = lam[i] * (v[i, r - 1] if per_class else 1.0)
                pairs.append((ynames[i, j, r], float(rate * s[i, j])))
        pairs.append((f"k[{j}]", -1.0))
        b.add_lin(f"stable[{j}]", "2e", pairs, "<=", 0.0)
    b.add_lin("fleet", "2f", [(f"k[{j}]", 1.0) for j in J], "<=", float(K))


def _hyperbolic(b: _Builder, fam_a: str, fam_b: str, tag: str, y: str, theta: str, beta: str,
                denom: Affine) -> None:
    """theta^2 >= y / denom via y^2 <= theta*beta and beta^2 <= denom (y binary)."""
    b.add_soc(f"{fam_a}[{tag}]", fam_a, [affine([(y, 2.0)]), affine([(theta, 1.0), (beta, -1.0)])],
              affine([(theta, 1.0), (beta, 1.0)]))
    one_minus = Affine(tuple((n, -c) for n, c in denom.terms), 1.0 - denom.const)
    one_plus = Affine(denom.terms, 1.0 + denom.const)
    b.add_soc(f"{fam_b}[{tag}]", fam_b, [affine([(beta, 2.0)]), one_minus], one_plus)


def _np_wait_block(b: _Builder, K: int) -> None:
    """Variables and cones representing W_j >= N_j / (2 k_j (k_j - L_j))."""
    inst = b.inst
    s, lam = inst.service, inst.lam
    I, J = range(inst.n_nodes), range(inst.n_facilities)
    for j in J:
        b.var(f"W[{j}]")
    for i in I:
        for j in J:
            b.var(f"theta[{i},{j}]")
    for i in I:
        for j in J:
            b.var(f"beta[{i},{j}]")
    for j in J:
        slack = [(f"k[{j}]", 1.0)] + [(f"y[{i},{j}]", -float(lam[i] * s[i, j])) for i in I]
        vec = [affine([(f"theta[{i},{j}]", math.sqrt(2.0 * lam[i]) * float(s[i, j]))]) for i in I]
        vec.append(affine(slack + [(f"W[{j}]", -1.0)]))
        b.add_soc(f"0wo[{j}]", "0wo", vec, affine(slack + [(f"W[{j}]", 1.0)]))
    for i in I:
        for j in J:
            _hyperbolic(b, "0a", "0ak", f"{i},{j}", f"y[{i},{j}]", f"theta[{i},{j}]", f"beta[{i},{j}]",
                        affine([(f"k[{j}]", 1.0)]))


def build_np(inst: Instance, K: int) -> ConicProgram:
    if K < 1:
        raise ValueError("K must be at least 1")
    b = _Builder("NP", inst)
    I, J = range(inst.n_nodes), range(inst.n_facilities)
    t = inst.travel
    for j in J:
        b.var(f"x[{j}]", "B")
    for i in I:
        for j in J:
            b.var(f"y[{i},{j}]", "B")
    for j in J:
        b.var(f"k[{j}]", "I", 0, K)
    b.var("Z")
    ynames = {(i, j, 1): f"y[{i},{j}]" for i in I for j in J}
    _np_wait_block(b, K)
    _common_rows(b, K, ynames, [1])
    for i in I:
        for j in J:
            b.add_lin(f"epi[{i},{j}]", "epi", [("Z", 1.0), (f"y[{i},{j}]", -float(t[i, j])), (f"W[{j}]", -1.0)],
                      ">=", 0.0)
    return b.done(affine([("Z", 1.0)]))


def build_sp(inst: Instance, K: int) -> ConicProgram:
    """Static priority program.

    Auxiliaries theta/beta carry both the class l of the assignment variable
    and the class r of the waiting time they serve, because the shifted
    denominator k_j - sum_{l<r} L_jl depends on r.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    b = _Builder("SP", inst)
    I, J = range(inst.n_nodes), range(inst.n_facilities)
    R = range(1, inst.R + 1)
    t, s, lam, v = inst.travel, inst.service, inst.lam, inst.class_probs
    for j in J:
        b.var(f"x[{j}]", "B")
    for i in I:
        for j in J:
            for r in R:
                b.var(f"y[{i},{j},{r}]", "B")
    for j in J:
        b.var(f"k[{j}]", "I", 0, K)
    for r in R:
        b.var(f"Z[{r}]")
    for j in J:
        for r in R:
            b.var(f"W[{j},{r}]")
    for i in I:
        for j in J:
            for l in R:
                for r in R:
                    b.var(f"theta[{i},{j},{l},{r}]")
    for i in I:
        for j in J:
            for l in R:
                for r in R:
                    b.var(f"beta[{i},{j},{l},{r}]")

    def class_load(j, upto):
        return [(f"y[{i},{j},{l}]", -float(lam[i] * v[i, l - 1] * s[i, j])) for l in range(1, upto + 1) for i in I]

    for j in J:
        for r in R:
            slack = [(f"k[{j}]", 1.0)] + class_load(j, r)
            vec = [affine([(f"theta[{i},{j},{l},{r}]", math.sqrt(2.0 * lam[i] * v[i, l - 1]) * float(s[i, j]))])
                   for l in R for i in I]
            vec.append(affine(slack + [(f"W[{j},{r}]", -1.0)]))
            b.add_soc(f"sp1[{j},{r}]", "sp1", vec, affine(slack + [(f"W[{j},{r}]", 1.0)]))
    for i in I:
        for j in J:
            for l in R:
                for r in R:
                    denom = affine([(f"k[{j}]", 1.0)] + class_load(j, r - 1))
                    _hyperbolic(b, "sp2", "sp3", f"{i},{j},{l},{r}", f"y[{i},{j},{l}]",
                                f"theta[{i},{j},{l},{r}]", f"beta[{i},{j},{l},{r}]", denom)
    ynames = {(i, j, r): f"y[{i},{j},{r}]" for i in I for j in J for r in R}
    _common_rows(b, K, ynames, list(R))
    for i in I:
        for j in J:
            for r in R:
                b.add_lin(f"epi[{i},{j},{r}]", "epi",
                          [(f"Z[{r}]", 1.0), (f"y[{i},{j},{r}]", -float(t[i, j])), (f"W[{j},{r}]", -1.0)], ">=", 0.0)
    return b.done(affine([(f"Z[{r}]", inst.priority.weights[r - 1]) for r in R]))


def build_dp(inst: Instance, K: int) -> ConicProgram:
    """Dynamic priority program.

    W[j] is the FCFS wait (class 1); W[j,r] for r >= 2 adds
    sum_{l<r} da_lr Q[j,l] with Q[j,l] >= L_j L_jl / k_j^2 represented by the
    pi/p cones.  Pairs with h = lambda_i lambda_l s_ij s_lj = 0 contribute
    nothing to Q and get no auxiliaries.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    b = _Builder("DP", inst)
    I, J = range(inst.n_nodes), range(inst.n_facilities)
    R = range(1, inst.R + 1)
    t, s, lam = inst.travel, inst.service, inst.lam
    cls = [n.fixed_class if n.fixed_class is not None else 1 for n in inst.nodes]
    for j in J:
        b.var(f"x[{j}]", "B")
    for i in I:
        for j in J:
            b.var(f"y[{i},{j}]", "B")
    for j in J:
        b.var(f"k[{j}]", "I", 0, K)
    for r in R:
        b.var(f"Z[{r}]")
    _np_wait_block(b, K)
    for j in J:
        for r in R:
            if r >= 2:
                b.var(f"W[{j},{r}]")
    for j in J:
        for r in R:
            b.var(f"Q[{j},{r}]")
    triples = [(i, l, j) for j in J for l in I for i in I if lam[i] * lam[l] * s[i, j] * s[l, j] > 0]
    for i, l, j in triples:
        b.var(f"pi[{i},{l},{j},{cls[l]}]")
    for i, l, j in triples:
        b.var(f"p[{i},{l},{j},{cls[l]}]")

    def wname(j, r):
        return f"W[{j}]" if r == 1 else f"W[{j},{r}]"

    for j in J:
        for r in R:
            if r >= 2:
                pairs = [(wname(j, r), 1.0), (f"W[{j}]", -1.0)]
                pairs += [(f"Q[{j},{l}]", -inst.priority.delta(l, r)) for l in range(1, r)]
                b.add_lin(f"link[{j},{r}]", "dp0", pairs, "==", 0.0)
    for j in J:
        for r in R:
            vec = [affine([(f"pi[{i},{l},{jj},{r}]", 2.0)]) for i, l, jj in triples if jj == j and cls[l] == r]
            vec.append(affine([(f"Q[{j},{r}]", 1.0), (f"k[{j}]", -1.0)]))
            b.add_soc(f"dp1[{j},{r}]", "dp1", vec, affine([(f"Q[{j},{r}]", 1.0), (f"k[{j}]", 1.0)]))
    for i, l, j in triples:
        r = cls[l]
        h = float(lam[i] * lam[l] * s[i, j] * s[l, j])
        tag = f"{i},{l},{j},{r}"
        pi, p = f"pi[{tag}]", f"p[{tag}]"
        b.add_soc(f"dp2[{tag}]", "dp2", [affine([(f"y[{i},{j}]", 2.0)]), affine([(p, 1.0), (pi, -1.0)])],
                  affine([(p, 1.0), (pi, 1.0), (f"y[{l},{j}]", -2.0)], 2.0))
        b.add_soc(f"dp3[{tag}]", "dp3", [affine([(p, 2.0)]), affine([(f"k[{j}]", 1.0), (f"y[{l},{j}]", -1.0 / h)])],
                  affine([(f"k[{j}]", 1.0), (f"y[{l},{j}]", 1.0 / h)]))
    ynames = {(i, j, 1): f"y[{i},{j}]" for i in I for j in J}
    _common_rows(b, K, ynames, [1])
    for i in I:
        for j in J:
            r = cls[i]
            b.add_lin(f"epi[{i},{j}]", "epi", [(f"Z[{r}]", 1.0), (f"y[{i},{j}]", -float(t[i, j])), (wname(j, r), -1.0)],
                      ">=", 0.0)
    return b.done(affine([(f"Z[{r}]", inst.priority.weights[r - 1]) for r in R]))


def build(inst: Instance, K: int, model: str | None = None) -> ConicProgram:
    model = (model or inst.mode).lower()
    return {"np": build_np, "sp": build_sp, "dp": build_dp}[model](inst, K)


# --------------------------------------------------------------------------
# Point checking

@dataclass(frozen=True)
class Violation:
    name: str
    family: str
    amount: float


@dataclass
class FeasibilityReport:
    violations: list[Violation] = field(default_factory=list)
    max_violation: float = 0.0

    @property
    def feasible(self) -> bool:
        return not self.violations

    def families(self) -> set[str]:
        return {v.family for v in self.violations}


def check_point(program: ConicProgram, point: Mapping[str, float]) -> FeasibilityReport:
    """Evaluate every bound, integrality mark, linear row and cone at ``point``.

    The report lists each violated constraint with its violation magnitude;
    ``max_violation`` covers all constraints, satisfied ones included as 0.
    """
    names = set(program.variable_names())
    unknown = sorted(set(point) - names)
    if unknown:
        raise KeyError(f"unknown variable(s): {', '.join(unknown[:5])}")
    missing = [n for n in program.variable_names() if n not in point]
    if missing:
        raise KeyError(f"point has no value for: {', '.join(missing[:5])}")
    rep = FeasibilityReport()

    def note(name, family, amount, tol):
        rep.max_violation = max(rep.max_violation, amount)
        if amount > tol:
            rep.violations.append(Violation(name, family, amount))

    for var in program.variables:
        val = point[var.name]
        note(var.name, "bound", max(var.lb - val, val - var.ub, 0.0), LINEAR_TOL)
        if var.kind in "BI":
            note(var.name, "integrality", abs(val - round(val)), INT_TOL)
    for c in program.linear:
        lhs = c.expr.value(point)
        if c.sense == "<=":
            amt = lhs - c.rhs
        elif c.sense == ">=":
            amt = c.rhs - lhs
        else:
            amt = abs(lhs - c.rhs)
        note(c.name, c.family, max(amt, 0.0), LINEAR_TOL)
    for c in program.soc:
        norm = math.sqrt(sum(a.value(point) ** 2 for a in c.vector))
        note(c.name, c.family, max(norm - c.scalar.value(point), 0.0), SOC_TOL)
    return rep


# --------------------------------------------------------------------------
# Tight-cone back-solve

def _fixed_point(program: ConicProgram, asg: Assignment) -> dict[str, float]:
    """x, y, k values of an assignment in the program's variable names."""
    pt: dict[str, float] = {}
    names = set(program.variable_names())
    for name in names:
        m = re.fullmatch(r"(x|y|k)\[([\d,]+)\]", name)
        if not m:
            continue
        idx = tuple(int(v) for v in m.group(2).split(","))
        if m.group(1) == "x":
            pt[name] = 1.0 if idx[0] in asg.open_set else 0.0
        elif m.group(1) == "k":
            pt[name] = float(asg.k[idx[0]])
        elif len(idx) == 3:
            pt[name] = 1.0 if asg.facility(idx[0], idx[2]) == idx[1] else 0.0
        else:
            pt[name] = 1.0 if asg.facility(idx[0], 1) == idx[1] else 0.0
    return pt


def _min_hyperbolic(a: float, p: float, g: float) -> float:
    """Least pi >= 0 with ||(2a, p - pi)|| <= p + pi + g, given p >= 0, g >= 0."""
    need = 4.0 * a * a - g * g - 2.0 * p * g
    if need <= 0:
        return 0.0
    denom = 4.0 * p + 2.0 * g
    if denom <= 0:
        return math.inf
    return need / denom


def _solve_tight(program: ConicProgram, fixed: Mapping[str, float]) -> dict[str, float]:
    """Least auxiliaries and waits for fixed integers, following the cone chain."""
    vals = dict(fixed)
    by_fam: dict[str, list[SOCConstraint]] = {}
    for c in program.soc:
        by_fam.setdefault(c.family, []).append(c)

    # beta^2 <= D  and  p^2 <= k y_l / h : upper limits of the second factor
    for fam in ("0ak", "sp3", "dp3"):
        for c in by_fam.get(fam, []):
            var = c.vector[0].terms[0][0]
            A = c.scalar.value(vals, 0.0)
            B = c.vector[1].value(vals, 0.0)
            prod = (A - B) * (A + B)
            vals[var] = 0.5 * math.sqrt(prod) if prod > 0 else 0.0
    # y^2 <= theta * beta (+ guard): least first factor
    for fam in ("0a", "sp2", "dp2"):
        for c in by_fam.get(fam, []):
            low, other = c.scalar.terms[0][0], c.scalar.terms[1][0]
            if fam == "dp2":
                low, other = other, low  # scalar is p + pi + guard; pi is the free factor
            a = c.vector[0].value(vals, 0.0) / 2.0
            g = Affine(tuple((n, cf) for n, cf in c.scalar.terms if n not in (low, other)), c.scalar.const).value(vals, 0.0)
            val = _min_hyperbolic(a, vals[other], g)
            if math.isinf(val):
                raise StabilityError(-1, math.nan, math.nan)
            vals[low] = val
    # Q k >= sum pi^2
    for c in by_fam.get("dp1", []):
        qvar = c.scalar.terms[0][0]
        k = 0.5 * (c.scalar.value(vals, 0.0) - c.vector[-1].value(vals, 0.0))
        ss = sum(a.value(vals) ** 2 for a in c.vector[:-1])
        if ss == 0:
            vals[qvar] = 0.0
        elif k <= 0:
            raise StabilityError(-1, math.nan, k)
        else:
            vals[qvar] = ss / (4.0 * k)
    # W >= sum (c theta)^2 / (4 S)
    for fam in ("0wo", "sp1"):
        for c in by_fam.get(fam, []):
            wvar = next(n for n, cf in c.scalar.terms if n.startswith("W["))
            S = 0.5 * (c.scalar.value(vals, 0.0) + c.vector[-1].value(vals, 0.0))
            ss = sum(a.value(vals) ** 2 for a in c.vector[:-1])
            if ss == 0:
                vals[wvar] = 0.0
            elif S <= 0:
                j = int(re.search(r"\[(\d+)", c.name).group(1))
                k = vals.get(f"k[{j}]", math.nan)
                raise StabilityError(j, k - S, k)
            else:
                vals[wvar] = ss / (4.0 * S)
    # W[j,r] = W[j] + sum da Q
    for c in program.linear:
        if c.family == "dp0":
            target = c.expr.terms[0][0]
            rest = Affine(c.expr.terms[1:], c.expr.const).value(vals)
            vals[target] = (c.rhs - rest) / c.expr.terms[0][1]
    return vals


def _wait_key(name: str) -> tuple[int, int]:
    idx = [int(v) for v in name[name.index("[") + 1:-1].split(",")]
    return (idx[0], idx[1] if len(idx) > 1 else 1)


def minimal_W_via_cones(program: ConicProgram, asg: Assignment | Mapping[str, float]) -> dict[tuple[int, int], float]:
    """Least waiting times compatible with the cones at fixed (x, y, k).

    Returns ``{(facility, class): W}``; the np model reports class 1 only.
    Raises :class:`StabilityError` when no finite wait exists.
    """
    fixed = _fixed_point(program, asg) if isinstance(asg, Assignment) else dict(asg)
    vals = _solve_tight(program, fixed)
    out = {}
    for name in program.variable_names():
        if name.startswith("W["):
            out[_wait_key(name)] = vals[name]
    return out


def witness_point(program: ConicProgram, asg: Assignment) -> dict[str, float]:
    """Complete feasible point: tight auxiliaries, least waits, epigraph Z."""
    vals = _solve_tight(program, _fixed_point(program, asg))
    for c in program.linear:
        if c.family == "epi":
            zvar = c.expr.terms[0][0]
            need = -Affine(c.expr.terms[1:], c.expr.const).value(vals)
            vals[zvar] = max(vals.get(zvar, 0.0), need)
    for name in program.variable_names():
        vals.setdefault(name, 0.0)
    return {n: vals[n] for n in program.variable_names()}


# --------------------------------------------------------------------------
# File output

_SENSE_CODE = {"<=": "L", "==": "E", ">=": "G"}
_CODE_SENSE = {v: k for k, v in _SENSE_CODE.items()}


def _num(x: float) -> str:
    return repr(float(x))


def _aff_lines(a: Affine) -> list[str]:
    return [f"{len(a.terms)} {_num(a.const)}"] + [f"{n} {_num(c)}" for n, c in a.terms]


def dumps_cbf(program: ConicProgram) -> str:
    """Text form with VAR / INT / OBJ / CON / SOC sections.

    Grammar (one item per line, ASCII, LF)::

        CONICPROG 1
        MODEL <np|sp|dp>
        HASH <hex>
        VAR <n>            then n lines:  <name> <C|B|I> <lb> <ub>
        INT <m>            then m lines:  <name>        (binary and integer)
        OBJ MIN            then an affine block
        CON <m>            then per row:  <name> <family> <L|E|G> <rhs>, affine block
        SOC <m>            then per cone: <name> <family> <dim>, scalar block, dim vector blocks
        END

    An affine block is ``<nterms> <const>`` followed by ``<name> <coef>`` lines.
    Numbers use the shortest round-trip decimal form; infinities are ``inf``.
    """
    out = ["CONICPROG 1", f"MODEL {program.model.lower()}", f"HASH {program.instance_hash}",
           f"VAR {len(program.variables)}"]
    out += [f"{v.name} {v.kind} {_num(v.lb)} {_num(v.ub)}" for v in program.variables]
    ints = [v.name for v in program.variables if v.kind in "BI"]
    out.append(f"INT {len(ints)}")
    out += ints
    out.append("OBJ MIN")
    out += _aff_lines(program.objective)
    out.append(f"CON {len(program.linear)}")
    for c in program.linear:
        out.append(f"{c.name} {c.family} {_SENSE_CODE[c.sense]} {_num(c.rhs)}")
        out += _aff_lines(c.expr)
    out.append(f"SOC {len(program.soc)}")
    for c in program.soc:
        out.append(f"{c.name} {c.family} {len(c.vector)}")
        out += _aff_lines(c.scalar)
        for a in c.vector:
            out += _aff_lines(a)
    out.append("END")
    return "\n".join(out) + "\n"


class CBFParseError(ValueError):
    pass


def loads_cbf(text: str) -> ConicProgram:
    lines = text.split("\n")
    pos = 0

    def nxt() -> list[str]:
        nonlocal pos
        while pos < len(lines) and not lines[pos].strip():
            pos += 1
        if pos >= len(lines):
            raise CBFParseError("unexpected end of file")
        pos += 1
        return lines[pos - 1].split()

    def expect(key: str) -> list[str]:
        tok = nxt()
        if not tok or tok[0] != key:
            raise CBFParseError(f"line {pos}: expected {key}")
        return tok

    def read_aff() -> Affine:
        head = nxt()
        n, const = int(head[0]), float(head[1])
        terms = []
        for _ in range(n):
            name, coef = nxt()
            terms.append((name, float(coef)))
        return Affine(tuple(terms), const)

    try:
        if expect("CONICPROG")[1] != "1":
            raise CBFParseError("unsupported version")
        model = expect("MODEL")[1].upper()
        digest = expect("HASH")[1]
        variables = []
        for _ in range(int(expect("VAR")[1])):
            name, kind, lb, ub = nxt()
            variables.append(Variable(name, kind, float(lb), float(ub)))
        ints = {nxt()[0] for _ in range(int(expect("INT")[1]))}
        if ints != {v.name for v in variables if v.kind in "BI"}:
            raise CBFParseError("INT section disagrees with variable kinds")
        expect("OBJ")
        objective = read_aff()
        linear = []
        for _ in range(int(expect("CON")[1])):
            name, fam, sense, rhs = nxt()
            linear.append(LinearConstraint(name, fam, read_aff(), _CODE_SENSE[sense], float(rhs)))
        soc = []
        for _ in range(int(expect("SOC")[1])):
            name, fam, dim = nxt()
            scalar = read_aff()
            soc.append(SOCConstraint(name, fam, tuple(read_aff() for _ in range(int(dim))), scalar))
        expect("END")
    except (ValueError, IndexError, KeyError) as exc:
        if isinstance(exc, CBFParseError):
            raise
        raise CBFParseError(f"line {pos}: {exc}") from None
    return ConicProgram(model, digest, tuple(variables), objective, tuple(linear), tuple(soc))


def _lp_name(name: str) -> str:
    return re.sub(r"[\[\],]", "_", name).rstrip("_")


def _lp_expr(a: Affine) -> str:
    parts = []
    for n, c in a.terms:
        sign = "-" if c < 0 else "+"
        parts.append(f"{sign} {_num(abs(c))} {_lp_name(n)}")
    s = " ".join(parts) if parts else "0 " + "zero"
    return s[2:] if s.startswith("+ ") else s


def dumps_lp(program: ConicProgram) -> str:
    """LP text; each cone becomes defining rows for fresh free variables and a
    quadratic row ``[ u1 ^2 + ... - t ^2 ] <= 0`` with ``t >= 0``."""
    out = [f"\\ model {program.model.lower()} instance {program.instance_hash}", "Minimize",
           f" obj: {_lp_expr(program.objective)}", "Subject To"]
    for c in program.linear:
        op = {"<=": "<=", ">=": ">=", "==": "="}[c.sense]
        out.append(f" {_lp_name(c.name)}: {_lp_expr(c.expr)} {op} {_num(c.rhs - c.expr.const)}")
    extra_free, extra_pos = [], []
    for n_soc, c in enumerate(program.soc):
        base = f"soc{n_soc}"
        rows = [(f"{base}_t", c.scalar)] + [(f"{base}_u{m}", a) for m, a in enumerate(c.vector)]
        for aux, a in rows:
            expr = f"{aux}" + "".join(
                f" {'+' if -cf >= 0 else '-'} {_num(abs(cf))} {_lp_name(n)}" for n, cf in a.terms)
            out.append(f" {base}_def_{aux.rsplit('_', 1)[1]}: {expr} = {_num(a.const)}")
        extra_pos.append(f"{base}_t")
        extra_free += [aux for aux, _ in rows[1:]]
        sq = " + ".join(f"{aux} ^2" for aux, _ in rows[1:])
        out.append(f" {_lp_name(c.name)}: [ {sq} - {base}_t ^2 ] <= 0")
    out.append("Bounds")
    for v in program.variables:
        if v.kind == "B":
            continue
        lb = "-inf" if math.isinf(v.lb) else _num(v.lb)
        ub = "+inf" if math.isinf(v.ub) else _num(v.ub)
        out.append(f" {lb} <= {_lp_name(v.name)} <= {ub}")
    out += [f" {n} free" for n in extra_free]
    out += [f" {n} >= 0" for n in extra_pos]
    gens = [_lp_name(v.name) for v in program.variables if v.kind == "I"]
    bins = [_lp_name(v.name) for v in program.variables if v.kind == "B"]
    if gens:
        out += ["Generals"] + [f" {n}" for n in gens]
    if bins:
        out += ["Binaries"] + [f" {n}" for n in bins]
    out.append("End")
    return "\n".join(out) + "\n"


def emit(program: ConicProgram, path: str | Path, format: str = "cbf") -> None:
    text = dumps_cbf(program) if format == "cbf" else dumps_lp(program) if format == "lp" else None
    if text is None:
        raise ValueError(f"unknown format {format!r}")
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
