"""Piecewise-linear constraints: relu, sign and max records, violation
checks, assignment corrections, bound-based phase detection, and case
split recipes.

Sign semantics: f = sign(b) with sign(0) = 1. Sign splits exclude the
gap b in (-epsilon, 0); epsilon defaults to 1e-6.
"""

from dataclasses import dataclass, field

from .linear import LinearEquation

SAT_TOL = 1e-6
STRICT_TOL = 1e-9
DEFAULT_EPSILON = 1e-6

UNFIXED = "unfixed"
ACTIVE = "active"  # relu identity phase
INACTIVE = "inactive"  # relu zero phase
POSITIVE = "positive"  # sign +1 phase
NEGATIVE = "negative"  # sign -1 phase


@dataclass
class SignConstraint:
    b: int
    f: int
    phase: str = UNFIXED


@dataclass
class ReluConstraint:
    b: int
    f: int
    phase: str = UNFIXED


@dataclass
class MaxConstraint:
    f: int
    sources: list
    phase: int | None = None  # index into sources once fixed

    def __post_init__(self):
        if not self.sources:
            raise ValueError("max constraint needs at least one source")


@dataclass
class Branch:
    """One disjunct of a case split: bound tightenings plus (in)equations."""

    label: str
    bounds: list = field(default_factory=list)  # (var, lo_or_None, hi_or_None)
    equations: list = field(default_factory=list)
    leqs: list = field(default_factory=list)  # (coeffs, rhs) meaning sum <= rhs


def is_satisfied(c, assignment, tol=SAT_TOL):
    if isinstance(c, SignConstraint):
        target = -1.0 if assignment[c.b] < 0.0 else 1.0
        return abs(assignment[c.f] - target) <= tol
    if isinstance(c, ReluConstraint):
        target = max(0.0, assignment[c.b])
        return abs(assignment[c.f] - target) <= tol
    if isinstance(c, MaxConstraint):
        target = max(assignment[s] for s in c.sources)
        return abs(assignment[c.f] - target) <= tol
    raise TypeError(f"unknown constraint {c!r}")


def corrections(c, assignment):
    """Single-variable updates each of which satisfies the constraint."""
    if isinstance(c, SignConstraint):
        # sign corrections only ever touch f
        return [(c.f, -1.0 if assignment[c.b] < 0.0 else 1.0)]
    if isinstance(c, ReluConstraint):
        out = [(c.f, max(0.0, assignment[c.b]))]
        if assignment[c.f] >= 0.0:
            out.append((c.b, assignment[c.f]))
        return out
    if isinstance(c, MaxConstraint):
        return [(c.f, max(assignment[s] for s in c.sources))]
    raise TypeError(f"unknown constraint {c!r}")


def phase_from_bounds(c, lowers, uppers):
    """Phase implied by current bounds for a sign constraint."""
    if lowers[c.b] >= 0.0 or lowers[c.f] > -1.0 + STRICT_TOL:
        return POSITIVE
    if uppers[c.b] < 0.0 or uppers[c.f] < 1.0 - STRICT_TOL:
        return NEGATIVE
    return UNFIXED


def relu_phase_from_bounds(c, lowers, uppers):
    if lowers[c.b] >= 0.0 or lowers[c.f] > STRICT_TOL:
        return ACTIVE
    if uppers[c.b] <= 0.0:
        return INACTIVE
    return UNFIXED


def max_phase_from_bounds(c, lowers, uppers):
    """Index of a source that provably dominates all others, else None."""
    for i, s in enumerate(c.sources):
        if all(lowers[s] >= uppers[t] for t in c.sources if t != s):
            return i
    return None


def phase_facts(c, phase, epsilon=DEFAULT_EPSILON):
    """Linear facts (a Branch) enforcing a decided phase."""
    if isinstance(c, SignConstraint):
        if phase == POSITIVE:
            return Branch("sign+", bounds=[(c.b, 0.0, None), (c.f, 1.0, 1.0)])
        if phase == NEGATIVE:
            return Branch("sign-", bounds=[(c.b, None, -epsilon), (c.f, -1.0, -1.0)])
    if isinstance(c, ReluConstraint):
        if phase == ACTIVE:
            return Branch(
                "relu+",
                bounds=[(c.b, 0.0, None)],
                equations=[LinearEquation({c.f: 1.0, c.b: -1.0}, 0.0)],
            )
        if phase == INACTIVE:
            return Branch("relu0", bounds=[(c.b, None, 0.0), (c.f, 0.0, 0.0)])
    if isinstance(c, MaxConstraint):
        winner = c.sources[phase]
        eq = LinearEquation({c.f: 1.0, winner: -1.0}, 0.0)
        leqs = [
            ({s: 1.0, winner: -1.0}, 0.0) for s in c.sources if s != winner
        ]
        return Branch(f"max{phase}", equations=[eq], leqs=leqs)
    raise ValueError(f"no facts for phase {phase!r} of {c!r}")


def split_recipes(c, epsilon=DEFAULT_EPSILON):
    """Branch descriptions whose disjunction is equi-satisfiable with c.

    Two branches for sign/relu, one per source for max. Each branch is
    tagged with the phase it forces.
    """
    if isinstance(c, SignConstraint):
        return {
            NEGATIVE: phase_facts(c, NEGATIVE, epsilon),
            POSITIVE: phase_facts(c, POSITIVE, epsilon),
        }
    if isinstance(c, ReluConstraint):
        return {
            INACTIVE: phase_facts(c, INACTIVE),
            ACTIVE: phase_facts(c, ACTIVE),
        }
    if isinstance(c, MaxConstraint):
        return {i: phase_facts(c, i) for i in range(len(c.sources))}
    raise TypeError(f"unknown constraint {c!r}")
