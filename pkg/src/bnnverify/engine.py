"""Top-level search: alternate linear feasibility with piecewise-linear
correction, split with backtracking when corrections stop converging,
and interleave bound deduction (phase fixing, interval propagation,
symbolic tightening) with the search.
"""

import copy
import time
from dataclasses import dataclass, field

import numpy as np

from . import constraints as plc
from . import nlr
from .linear import LinearCore
from .network import evaluate_layers, layer_intervals

EXACT_TOL = 1e-6


@dataclass
class EngineConfig:
    epsilon: float = 1e-6
    correction_threshold: int = 20
    timeout: float | None = None  # seconds
    merge_ws: bool = True
    lp_relax: bool = True
    sbt: bool = True
    polarity_snc: bool = True

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.correction_threshold < 1:
            raise ValueError("correction_threshold must be >= 1")


@dataclass
class Verdict:
    kind: str  # 'sat' | 'unsat' | 'timeout'
    assignment: np.ndarray | None = None
    stats: dict = field(default_factory=dict)

    @property
    def is_sat(self):
        return self.kind == "sat"


@dataclass
class QueryState:
    linear: LinearCore
    constraints: list
    config: EngineConfig = field(default_factory=EngineConfig)
    net: object = None  # compiled Network, when built from one
    neuron_vars: list | None = None  # per-layer variable ids
    input_vars: list | None = None
    output_vars: list | None = None

    def clone(self):
        q = QueryState(
            linear=LinearCore(),
            constraints=[copy.copy(c) for c in self.constraints],
            config=self.config,
            net=self.net,
            neuron_vars=self.neuron_vars,
            input_vars=self.input_vars,
            output_vars=self.output_vars,
        )
        q.linear.lowers = list(self.linear.lowers)
        q.linear.uppers = list(self.linear.uppers)
        q.linear.assignment = list(self.linear.assignment)
        q.linear.equations = list(self.linear.equations)
        return q

    def unfixed_signs(self):
        return [
            c
            for c in self.constraints
            if isinstance(c, plc.SignConstraint) and c.phase == plc.UNFIXED
        ]


@dataclass
class _Frame:
    mark: tuple
    phases: list
    constraint: object
    alternatives: list  # (phase_label, Branch) pending disjuncts


def _constraint_phase(c):
    return c.phase


def _set_phase(c, phase):
    c.phase = phase


def _apply_branch(q, c, phase, branch):
    """Install a branch's facts; False iff bounds became inconsistent."""
    if c is not None:
        _set_phase(c, phase)
    ok = True
    for var, lo, hi in branch.bounds:
        if not q.linear.tighten_bounds(var, lo, hi):
            ok = False
    for eq in branch.equations:
        q.linear.assert_equation(eq)
    for coeffs, rhs in branch.leqs:
        if not q.linear.assert_leq(coeffs, rhs):
            ok = False
    return ok


def _tighten_intervals(q):
    """One forward interval pass over the network, intersecting with the
    current bounds. Returns (consistent, changed)."""
    L = q.linear
    lo = np.array([L.lowers[v] for v in q.neuron_vars[0]])
    hi = np.array([L.uppers[v] for v in q.neuron_vars[0]])
    changed = False
    for idx, layer in enumerate(q.net.layers[1:], start=1):
        lo, hi = layer_intervals(layer, lo, hi)
        layer_vars = q.neuron_vars[idx]
        for j, var in enumerate(layer_vars):
            old = (L.lowers[var], L.uppers[var])
            if not L.tighten_bounds(var, lo[j], hi[j]):
                return False, changed
            if (L.lowers[var], L.uppers[var]) != old:
                changed = True
            lo[j] = L.lowers[var]
            hi[j] = L.uppers[var]
    return True, changed


def apply_phase_fixing(q, stats=None):
    """Fix every bounds-decidable constraint phase, to fixpoint.

    Interleaves interval propagation over the network (when topology is
    known) so that fixing one phase can cascade into later layers.
    Returns the number of constraints fixed, or -1 on inconsistency.
    """
    L = q.linear
    fixed = 0
    changed = True
    while changed:
        changed = False
        for c in q.constraints:
            if isinstance(c, plc.SignConstraint) and c.phase == plc.UNFIXED:
                phase = plc.phase_from_bounds(c, L.lowers, L.uppers)
            elif isinstance(c, plc.ReluConstraint) and c.phase == plc.UNFIXED:
                phase = plc.relu_phase_from_bounds(c, L.lowers, L.uppers)
            elif isinstance(c, plc.MaxConstraint) and c.phase is None:
                phase = plc.max_phase_from_bounds(c, L.lowers, L.uppers)
                if phase is None:
                    continue
            else:
                continue
            if phase in (plc.UNFIXED, None):
                continue
            # deduced phases use eps = 0: the bounds already decided the
            # phase, and pushing b below -eps here could cut real inputs
            # whose pre-activation lies in (-eps, 0). Splits still use eps;
            # the exact-replay gate covers the b = 0 boundary.
            ok = _apply_branch(q, c, phase, plc.phase_facts(c, phase, 0.0))
            fixed += 1
            changed = True
            if stats is not None:
                stats["phases_fixed"] = stats.get("phases_fixed", 0) + 1
            if not ok:
                return -1
        if q.net is not None and q.neuron_vars is not None:
            ok, prop_changed = _tighten_intervals(q)
            if not ok:
                return -1
            changed = changed or prop_changed
    return fixed


def _run_sbt(q):
    """Symbolic tightening against the current per-neuron bounds."""
    L = q.linear
    in_lo = [L.lowers[v] for v in q.neuron_vars[0]]
    in_hi = [L.uppers[v] for v in q.neuron_vars[0]]
    if not all(np.isfinite(in_lo)) or not all(np.isfinite(in_hi)):
        return True
    prior = (
        [np.array([L.lowers[v] for v in lv]) for lv in q.neuron_vars],
        [np.array([L.uppers[v] for v in lv]) for lv in q.neuron_vars],
    )
    sb = nlr.symbolic_tighten(q.net, in_lo, in_hi, prior=prior)
    for idx, layer_vars in enumerate(q.neuron_vars):
        for j, var in enumerate(layer_vars):
            if not L.tighten_bounds(var, sb.lowers[idx][j], sb.uppers[idx][j]):
                return False
    return True


def _deduce(q, stats):
    """Phase fixing (+ intervals) and, when enabled, symbolic tightening."""
    if apply_phase_fixing(q, stats) < 0:
        return False
    if q.config.sbt and q.net is not None and q.neuron_vars is not None:
        if not _run_sbt(q):
            return False
        if apply_phase_fixing(q, stats) < 0:
            return False
    return True


def _backtrack(q, trail, stats, counters, hints):
    while trail:
        fr = trail[-1]
        q.linear.pop(fr.mark)
        for c, phase in zip(q.constraints, fr.phases):
            c.phase = phase
        if fr.alternatives:
            phase, branch = fr.alternatives.pop()
            counters.clear()
            hints.clear()
            if _apply_branch(q, fr.constraint, phase, branch) and _deduce(
                q, stats
            ):
                return True
            # alternative already inconsistent; loop pops its facts next
        else:
            trail.pop()
    return False


def _branch_order(c, recipes, assignment):
    """Explore the phase suggested by the current assignment first."""
    items = list(recipes.items())
    if isinstance(c, plc.SignConstraint):
        first = plc.NEGATIVE if assignment[c.b] < 0.0 else plc.POSITIVE
    elif isinstance(c, plc.ReluConstraint):
        first = plc.ACTIVE if assignment[c.b] >= 0.0 else plc.INACTIVE
    elif isinstance(c, plc.MaxConstraint):
        first = max(range(len(c.sources)), key=lambda i: assignment[c.sources[i]])
    else:
        first = items[0][0]
    items.sort(key=lambda kv: kv[0] != first)
    return items


def _exact_check(q, assignment):
    """Re-derive the witness from its inputs under exact network semantics
    and test every bound (including property slacks) against it.

    A feasible LP assignment can sit exactly on a sign discontinuity:
    the simplex says b = 0 while exact forward evaluation of the same
    inputs yields b = -1e-17, flipping f and everything downstream.
    Returns (ok, flip) where flip is the earliest sign constraint whose
    exact pre-activation disagrees with the assignment's branch, if any.
    """
    x = [assignment[v] for v in q.input_vars]
    per_layer = evaluate_layers(q.net, x)
    vals = list(assignment)
    for layer_vals, layer_vars in zip(per_layer, q.neuron_vars):
        for j, var in enumerate(layer_vars):
            vals[var] = float(layer_vals[j])
    neuron_set = {v for lv in q.neuron_vars for v in lv}
    for eq in q.linear.equations:
        others = [v for v in eq.coeffs if v not in neuron_set]
        if len(others) == 1:  # slack variable: recompute from its row
            s = others[0]
            rest = sum(c * vals[v] for v, c in eq.coeffs.items() if v != s)
            vals[s] = (eq.constant - rest) / eq.coeffs[s]
    ok = all(
        q.linear.lowers[v] - EXACT_TOL <= vals[v] <= q.linear.uppers[v] + EXACT_TOL
        for v in range(q.linear.n_vars)
    )
    if ok:
        return True, None
    for c in q.constraints:
        if isinstance(c, plc.SignConstraint):
            exact_f = 1.0 if vals[c.b] >= 0.0 else -1.0
            want_f = 1.0 if assignment[c.f] >= 0.0 else -1.0
            if exact_f != want_f:
                return False, c
    return False, None


def _boundary_recipes(c, want_positive, eps):
    """Branches pushing a sign's pre-activation off the discontinuity:
    b >= eps on the positive side, b <= -eps on the negative side. The
    side matching the current assignment is explored first."""
    pos = plc.Branch("sign+", bounds=[(c.b, eps, None), (c.f, 1.0, 1.0)])
    neg = plc.Branch("sign-", bounds=[(c.b, None, -eps), (c.f, -1.0, -1.0)])
    ordered = [(plc.POSITIVE, pos), (plc.NEGATIVE, neg)]
    if not want_positive:
        ordered.reverse()
    return ordered


def _is_fixed(c):
    if isinstance(c, plc.MaxConstraint):
        return c.phase is not None
    return c.phase != plc.UNFIXED


def solve(q, deadline=None, cancel=None):
    """Run the search to a Sat / Unsat / Timeout verdict.

    deadline: absolute time.monotonic() value; cancel: object with
    is_set() polled once per main-loop iteration.
    """
    cfg = q.config
    stats = {"splits": 0, "phases_fixed": 0, "corrections": 0}
    start = time.monotonic()
    if cfg.timeout is not None:
        own = start + cfg.timeout
        deadline = own if deadline is None else min(deadline, own)

    def done(kind, assignment=None):
        stats["wall_time"] = time.monotonic() - start
        stats["simplex_iterations"] = q.linear.iterations
        return Verdict(kind, assignment, stats)

    if deadline is not None and time.monotonic() >= deadline:
        return done("timeout")

    if not _deduce(q, stats):
        return done("unsat")
    if (
        cfg.lp_relax
        and q.net is not None
        and q.neuron_vars is not None
        and not nlr.lp_relax_tighten(q.net, q)
    ):
        return done("unsat")
    if not _deduce(q, stats):
        return done("unsat")

    trail = []
    counters = {}
    hints = {}
    while True:
        if cancel is not None and cancel.is_set():
            return done("timeout")
        if deadline is not None and time.monotonic() >= deadline:
            return done("timeout")

        assignment = q.linear.find_feasible(hints or None)
        if assignment is None:
            if not _backtrack(q, trail, stats, counters, hints):
                return done("unsat")
            continue

        violated = [
            c for c in q.constraints if not plc.is_satisfied(c, assignment)
        ]
        if not violated:
            if q.net is None or q.neuron_vars is None:
                return done("sat", assignment)
            ok_exact, flip = _exact_check(q, assignment)
            if ok_exact or flip is None:
                return done("sat", assignment)
            # witness sits on a sign discontinuity: force the
            # pre-activation away from zero and keep searching
            ordered = _boundary_recipes(
                flip, assignment[flip.f] >= 0.0, cfg.epsilon
            )
            first_phase, first_branch = ordered[0]
            frame = _Frame(
                mark=q.linear.push(),
                phases=[cc.phase for cc in q.constraints],
                constraint=flip,
                alternatives=ordered[1:][::-1],
            )
            trail.append(frame)
            stats["boundary_splits"] = stats.get("boundary_splits", 0) + 1
            counters.clear()
            hints.clear()
            ok = _apply_branch(
                q, flip, first_phase, first_branch
            ) and _deduce(q, stats)
            if not ok and not _backtrack(q, trail, stats, counters, hints):
                return done("unsat")
            continue

        c = violated[0]  # earliest in topological (compile) order
        if (
            isinstance(c, plc.SignConstraint)
            and c.phase == plc.NEGATIVE
            and assignment[c.b] >= 0.0
        ):
            # deduced-negative phase asserts only b <= 0, so the LP can
            # park exactly on b = 0 where sign(0) = +1 contradicts the
            # fixed f = -1; corrections cannot escape this, so push the
            # pre-activation off the boundary instead (the same epsilon
            # exclusion the negative split branch uses)
            ok = q.linear.tighten_bounds(
                c.b, None, -cfg.epsilon
            ) and _deduce(q, stats)
            counters.clear()
            hints.clear()
            if not ok and not _backtrack(q, trail, stats, counters, hints):
                return done("unsat")
            continue
        var, val = plc.corrections(c, assignment)[0]
        q.linear.assignment[var] = val
        hints[var] = val
        stats["corrections"] += 1
        key = id(c)
        counters[key] = counters.get(key, 0) + 1

        if counters[key] >= cfg.correction_threshold and not _is_fixed(c):
            recipes = plc.split_recipes(c, cfg.epsilon)
            ordered = _branch_order(c, recipes, assignment)
            first_phase, first_branch = ordered[0]
            frame = _Frame(
                mark=q.linear.push(),
                phases=[cc.phase for cc in q.constraints],
                constraint=c,
                alternatives=ordered[1:][::-1],
            )
            trail.append(frame)
            stats["splits"] += 1
            counters.clear()
            hints.clear()
            ok = _apply_branch(q, c, first_phase, first_branch) and _deduce(
                q, stats
            )
            if not ok and not _backtrack(q, trail, stats, counters, hints):
                return done("unsat")
