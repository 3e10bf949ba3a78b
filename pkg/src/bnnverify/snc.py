"""Split-and-conquer orchestration: polarity-guided partitioning into
equi-satisfiable subqueries, worker pool with escalating timeouts, and
verdict aggregation.

Workers are independent engine instances over cloned query states; they
communicate only through the work queue, a cancellation event, and the
shared result slot.
"""

import itertools
import queue
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from . import constraints as plc
from .engine import Verdict, apply_phase_fixing, solve


class AtomicQueryError(Exception):
    """Nothing left to split on (no unfixed signs, no input box)."""


@dataclass
class SncConfig:
    workers: int = 1
    initial_timeout: float | None = None  # default: total budget / 16
    timeout_factor: float = 1.5
    k: int = 5  # polarity candidate window
    online_split_count: int = 2
    total_timeout: float | None = None  # global wall-clock budget, seconds

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.timeout_factor <= 1.0:
            raise ValueError("timeout_factor must be > 1")
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass
class SubQuery:
    delta: list  # ('bound', var, lo, hi) | ('phase', constraint_idx, phase)
    timeout: float | None
    depth: int = 0
    sid: int = 0

    def apply(self, base):
        """Clone the base query and install this subquery's facts."""
        q = base.clone()
        ok = True
        for fact in self.delta:
            if fact[0] == "bound":
                _, var, lo, hi = fact
                if not q.linear.tighten_bounds(var, lo, hi):
                    ok = False
            elif fact[0] == "phase":
                _, idx, phase = fact
                c = q.constraints[idx]
                branch = plc.phase_facts(c, phase, q.config.epsilon)
                # phase bounds ride along in the delta; install equations too
                c.phase = phase
                for eq in branch.equations:
                    q.linear.assert_equation(eq)
                for coeffs, rhs in branch.leqs:
                    if not q.linear.assert_leq(coeffs, rhs):
                        ok = False
        return q, ok


def polarity(c, lowers, uppers):
    """Balance metric (u + l) / (u - l) for an undecided sign constraint."""
    l, u = lowers[c.b], uppers[c.b]
    if not (l < 0.0 < u):
        raise ValueError("polarity needs l < 0 < u (phase would be decidable)")
    return (u + l) / (u - l)


def pick_split(q, cfg):
    """The split object for this query.

    Returns ('sign', constraint_index) for the |polarity|-minimizing sign
    in the first-k topological window, or ('input', var, midpoint) for the
    widest input interval when no sign is splittable.
    """
    L = q.linear
    candidates = []
    for idx, c in enumerate(q.constraints):
        if isinstance(c, plc.SignConstraint) and c.phase == plc.UNFIXED:
            if L.lowers[c.b] < 0.0 < L.uppers[c.b]:
                candidates.append((idx, c))
                if len(candidates) >= cfg.k:
                    break
    if candidates and q.config.polarity_snc:
        best_idx, _ = min(
            candidates, key=lambda ic: (abs(polarity(ic[1], L.lowers, L.uppers)),)
        )
        return ("sign", best_idx)
    if candidates:
        # polarity disabled: fall through to input splitting
        pass
    if q.input_vars:
        widths = [
            (L.uppers[v] - L.lowers[v], v)
            for v in q.input_vars
            if np.isfinite(L.lowers[v]) and np.isfinite(L.uppers[v])
        ]
        widths = [(w, v) for w, v in widths if w > 0]
        if widths:
            w, v = max(widths, key=lambda t: t[0])
            return ("input", v, L.lowers[v] + w / 2.0)
    if candidates:
        return ("sign", candidates[0][0])
    raise AtomicQueryError("query has no splittable sign constraint or input")


def _split_deltas(q, cfg):
    """Branch deltas for this query's chosen split."""
    choice = pick_split(q, cfg)
    if choice[0] == "sign":
        idx = choice[1]
        c = q.constraints[idx]
        eps = q.config.epsilon
        neg = [
            ("bound", c.b, None, -eps),
            ("bound", c.f, -1.0, -1.0),
            ("phase", idx, plc.NEGATIVE),
        ]
        pos = [
            ("bound", c.b, 0.0, None),
            ("bound", c.f, 1.0, 1.0),
            ("phase", idx, plc.POSITIVE),
        ]
        return [neg, pos]
    _, var, mid = choice
    return [[("bound", var, None, mid)], [("bound", var, mid, None)]]


def _expand(base, sub, state, cfg, ids):
    """Split one leaf into its branch children, dropping any child whose
    facts are already inconsistent (a valid Unsat deduction). Returns a
    list of (SubQuery, state) pairs, or None if the leaf is atomic."""
    try:
        deltas = _split_deltas(state, cfg)
    except AtomicQueryError:
        return None
    children = []
    for extra in deltas:
        child = SubQuery(
            delta=sub.delta + extra,
            timeout=sub.timeout,
            depth=sub.depth + 1,
            sid=next(ids),
        )
        child_state, ok = child.apply(base)
        if ok and apply_phase_fixing(child_state) < 0:
            ok = False
        if ok:
            children.append((child, child_state))
    return children


def partition(q, n, cfg):
    """Split q into up to n equi-satisfiable subqueries (n a power of 2).

    Leaves run apply_phase_fixing; leaves proven inconsistent are dropped.
    An empty result means the whole query is Unsat by deduction.
    """
    if n < 1 or (n & (n - 1)) != 0:
        raise ValueError("target count must be a power of 2")
    ids = itertools.count()
    root = SubQuery(delta=[], timeout=None, depth=0, sid=next(ids))
    base = q.clone()
    if apply_phase_fixing(base) < 0:
        return []
    leaves = [(root, base, False)]  # (sub, state, known-atomic)
    while len(leaves) < n:
        pick = None
        for i, (sub, _state, atomic) in enumerate(leaves):
            if not atomic and (
                pick is None or sub.depth < leaves[pick][0].depth
            ):
                pick = i
        if pick is None:
            break  # all leaves atomic
        sub, state, _ = leaves.pop(pick)
        children = _expand(q, sub, state, cfg, ids)
        if children is None:
            leaves.append((sub, state, True))
            continue
        leaves.extend((c, s, False) for c, s in children)
        if not leaves:
            return []
    return [sub for sub, _state, _atomic in leaves]


def _resplit(base, sub, state, cfg, ids):
    """Children of a timed-out subquery, with escalated timeouts."""
    new_timeout = (sub.timeout if sub.timeout is not None else 1.0) * (
        cfg.timeout_factor
    )
    leaves = [(sub, state)]
    target = max(2, cfg.online_split_count)
    while leaves and len(leaves) < target:
        cur_sub, cur_state = leaves.pop(0)
        children = _expand(base, cur_sub, cur_state, cfg, ids)
        if children is None:
            leaves.append((cur_sub, cur_state))
            break
        leaves.extend(children)
    out = []
    for leaf_sub, _leaf_state in leaves:
        if leaf_sub is sub:  # atomic: retry whole subquery with more time
            out.append(
                SubQuery(sub.delta, new_timeout, sub.depth, next(ids))
            )
        else:
            leaf_sub.timeout = new_timeout
            out.append(leaf_sub)
    return out


def orchestrate(q, cfg):
    """Solve q by split-and-conquer; verdict plus a structured run log
    in verdict.stats['snc_log'] (one entry per subquery event)."""
    start = time.monotonic()
    global_deadline = (
        start + cfg.total_timeout if cfg.total_timeout is not None else None
    )
    budget = cfg.total_timeout if cfg.total_timeout is not None else None
    initial_timeout = cfg.initial_timeout
    if initial_timeout is None and budget is not None:
        initial_timeout = budget / 16.0

    initial_n = 1
    while initial_n < 4 * cfg.workers:
        initial_n *= 2
    subqueries = partition(q, initial_n, cfg)
    ids = itertools.count(start=max((s.sid for s in subqueries), default=0) + 1)

    log = []
    log_lock = threading.Lock()
    work = queue.Queue()
    state_lock = threading.Lock()
    outstanding = [len(subqueries)]
    result = {}
    cancel = threading.Event()
    crashes = {}

    if not subqueries:
        return Verdict("unsat", stats={"snc_log": [], "subqueries": 0})

    for sub in subqueries:
        sub.timeout = initial_timeout
        work.put(sub)

    def finish(kind, assignment=None):
        with state_lock:
            if "verdict" not in result:
                result["verdict"] = Verdict(kind, assignment)
        cancel.set()

    def worker():
        while not cancel.is_set():
            try:
                sub = work.get(timeout=0.05)
            except queue.Empty:
                with state_lock:
                    if outstanding[0] == 0:
                        return
                if (
                    global_deadline is not None
                    and time.monotonic() >= global_deadline
                ):
                    finish("timeout")
                    return
                continue
            t0 = time.monotonic()
            try:
                state, ok = sub.apply(q)
                if ok and apply_phase_fixing(state) < 0:
                    ok = False
                if not ok:
                    verdict = Verdict("unsat")
                else:
                    deadline = None
                    if sub.timeout is not None:
                        deadline = t0 + sub.timeout
                    if global_deadline is not None:
                        deadline = (
                            global_deadline
                            if deadline is None
                            else min(deadline, global_deadline)
                        )
                    verdict = solve(state, deadline=deadline, cancel=cancel)
            except Exception as exc:  # crash containment: requeue once
                with state_lock:
                    n = crashes.get(sub.sid, 0)
                    crashes[sub.sid] = n + 1
                if crashes[sub.sid] <= 1:
                    work.put(sub)
                    continue
                result.setdefault("error", exc)
                finish("timeout")
                return
            wall = time.monotonic() - t0
            with log_lock:
                log.append(
                    {
                        "id": sub.sid,
                        "depth": sub.depth,
                        "timeout": sub.timeout,
                        "verdict": verdict.kind,
                        "wall_time": round(wall, 6),
                    }
                )
            if verdict.kind == "sat":
                finish("sat", verdict.assignment)
                return
            if verdict.kind == "unsat":
                with state_lock:
                    outstanding[0] -= 1
                    drained = outstanding[0] == 0
                if drained:  # finish() takes state_lock; call it outside
                    finish("unsat")
                    return
                continue
            # timeout: re-split with escalated budgets, unless the global
            # deadline is the binding constraint
            if global_deadline is not None and time.monotonic() >= global_deadline:
                finish("timeout")
                return
            children = _resplit(q, sub, state, cfg, ids)
            with state_lock:
                outstanding[0] += len(children) - 1
                drained = outstanding[0] == 0
            if drained:
                finish("unsat")
                return
            for child in children:
                work.put(child)

    threads = [
        threading.Thread(target=worker, daemon=True) for _ in range(cfg.workers)
    ]
    for t in threads:
        t.start()
    for t in threads:
        while t.is_alive():
            t.join(timeout=0.1)
            if (
                global_deadline is not None
                and time.monotonic() >= global_deadline
                and "verdict" not in result
            ):
                finish("timeout")

    if "error" in result:
        raise RuntimeError("subquery crashed twice") from result["error"]
    verdict = result.get("verdict", Verdict("unsat"))
    verdict.stats.update(
        {
            "snc_log": log,
            "subqueries": len(log),
            "wall_time": time.monotonic() - start,
        }
    )
    return verdict
