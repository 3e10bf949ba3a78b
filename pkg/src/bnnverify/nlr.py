"""Network-level deduction: interval propagation, symbolic bound
tightening through weighted-sum / relu / sign / max layers, and one-shot
LP-relaxation preprocessing with trapezoid sign over-approximations.
"""

from dataclasses import dataclass, field

import numpy as np

from . import constraints as plc
from .linear import LinearCore, LinearEquation
from .network import MAX, RELU, SIGN, WEIGHTED_SUM, layer_intervals


@dataclass
class LinExpr:
    """Linear expression over input-layer variables: coeffs . x + const."""

    coeffs: np.ndarray  # (n_layer, n_inputs)
    const: np.ndarray  # (n_layer,)

    def concretize_lower(self, in_lo, in_hi):
        wp = np.maximum(self.coeffs, 0.0)
        wn = np.minimum(self.coeffs, 0.0)
        return wp @ in_lo + wn @ in_hi + self.const

    def concretize_upper(self, in_lo, in_hi):
        wp = np.maximum(self.coeffs, 0.0)
        wn = np.minimum(self.coeffs, 0.0)
        return wp @ in_hi + wn @ in_lo + self.const


@dataclass
class SymbolicBounds:
    """Per-layer symbolic lower/upper expressions plus concrete bounds."""

    lower_exprs: list = field(default_factory=list)  # LinExpr per layer
    upper_exprs: list = field(default_factory=list)
    lowers: list = field(default_factory=list)  # np array per layer
    uppers: list = field(default_factory=list)


@dataclass
class TrapezoidRelaxation:
    """Convex hull of the sign graph over b in [l, u] with l < 0 < u.

    Half-planes: f <= 1, f >= -1, f <= (2/-l) b + 1, f >= (2/u) b - 1.
    """

    lower: float
    upper: float

    def __post_init__(self):
        if not (self.lower < 0.0 < self.upper):
            raise ValueError("trapezoid requires l < 0 < u")
        self.upper_slope = 2.0 / (-self.lower)  # f <= upper_slope * b + 1
        self.lower_slope = 2.0 / self.upper  # f >= lower_slope * b - 1

    def contains(self, b, f, tol=1e-9):
        return (
            -1.0 - tol <= f <= 1.0 + tol
            and f <= self.upper_slope * b + 1.0 + tol
            and f >= self.lower_slope * b - 1.0 - tol
        )


def interval_propagate(net, input_lo, input_hi):
    """Per-layer concrete interval bounds, computed layer by layer."""
    lowers = [np.asarray(input_lo, dtype=float)]
    uppers = [np.asarray(input_hi, dtype=float)]
    for layer in net.layers[1:]:
        lo, hi = layer_intervals(layer, lowers[-1], uppers[-1])
        lowers.append(lo)
        uppers.append(hi)
    return lowers, uppers


def symbolic_tighten(net, input_lo, input_hi, prior=None):
    """Symbolic bounds over the input box, concretized per layer.

    prior: optional (lowers, uppers) lists of per-layer concrete bounds;
    propagated bounds are intersected with them (monotone tightening),
    and sign/relu phases are judged against the intersected bounds.
    """
    in_lo = np.asarray(input_lo, dtype=float)
    in_hi = np.asarray(input_hi, dtype=float)
    n_in = len(in_lo)
    sb = SymbolicBounds()

    def clip(idx, lo, hi):
        if prior is not None:
            lo = np.maximum(lo, prior[0][idx])
            hi = np.minimum(hi, prior[1][idx])
        return lo, hi

    ident = LinExpr(np.eye(n_in), np.zeros(n_in))
    lo0, hi0 = clip(0, in_lo.copy(), in_hi.copy())
    sb.lower_exprs.append(ident)
    sb.upper_exprs.append(LinExpr(np.eye(n_in), np.zeros(n_in)))
    sb.lowers.append(lo0)
    sb.uppers.append(hi0)

    for idx, layer in enumerate(net.layers[1:], start=1):
        sl_prev, su_prev = sb.lower_exprs[-1], sb.upper_exprs[-1]
        lo_prev, hi_prev = sb.lowers[-1], sb.uppers[-1]
        if layer.kind == WEIGHTED_SUM:
            wp = np.maximum(layer.weights, 0.0)
            wn = np.minimum(layer.weights, 0.0)
            sl = LinExpr(
                wp @ sl_prev.coeffs + wn @ su_prev.coeffs,
                wp @ sl_prev.const + wn @ su_prev.const + layer.biases,
            )
            su = LinExpr(
                wp @ su_prev.coeffs + wn @ sl_prev.coeffs,
                wp @ su_prev.const + wn @ sl_prev.const + layer.biases,
            )
            lo = sl.concretize_lower(lo0, hi0)
            hi = su.concretize_upper(lo0, hi0)
        elif layer.kind == SIGN:
            n = layer.size
            sl = LinExpr(np.zeros((n, n_in)), np.zeros(n))
            su = LinExpr(np.zeros((n, n_in)), np.zeros(n))
            for j in range(n):
                l, u = lo_prev[j], hi_prev[j]
                if l >= 0.0:
                    sl.const[j] = 1.0
                    su.const[j] = 1.0
                elif u < 0.0:
                    sl.const[j] = -1.0
                    su.const[j] = -1.0
                else:
                    if u > 0.0:
                        sl.coeffs[j] = (2.0 / u) * sl_prev.coeffs[j]
                        sl.const[j] = (2.0 / u) * sl_prev.const[j] - 1.0
                    else:  # u == 0, f may still be +1 at b == 0
                        sl.const[j] = -1.0
                    su.coeffs[j] = (-2.0 / l) * su_prev.coeffs[j]
                    su.const[j] = (-2.0 / l) * su_prev.const[j] + 1.0
            lo = np.maximum(sl.concretize_lower(lo0, hi0), -1.0)
            hi = np.minimum(su.concretize_upper(lo0, hi0), 1.0)
        elif layer.kind == RELU:
            n = layer.size
            sl = LinExpr(np.zeros((n, n_in)), np.zeros(n))
            su = LinExpr(np.zeros((n, n_in)), np.zeros(n))
            for j in range(n):
                l, u = lo_prev[j], hi_prev[j]
                if l >= 0.0:
                    sl.coeffs[j] = sl_prev.coeffs[j]
                    sl.const[j] = sl_prev.const[j]
                    su.coeffs[j] = su_prev.coeffs[j]
                    su.const[j] = su_prev.const[j]
                elif u <= 0.0:
                    pass  # both bounds identically zero
                else:
                    k = u / (u - l)
                    sl.coeffs[j] = k * sl_prev.coeffs[j]
                    sl.const[j] = k * sl_prev.const[j]
                    su.coeffs[j] = k * su_prev.coeffs[j]
                    su.const[j] = k * (su_prev.const[j] - l)
            lo = np.maximum(sl.concretize_lower(lo0, hi0), 0.0)
            hi = np.maximum(su.concretize_upper(lo0, hi0), 0.0)
        elif layer.kind == MAX:
            n = layer.size
            lo = np.array(
                [max(lo_prev[s - 1] for s in src) for src in layer.sources]
            )
            hi = np.array(
                [max(hi_prev[s - 1] for s in src) for src in layer.sources]
            )
            sl = LinExpr(np.zeros((n, n_in)), lo.copy())
            su = LinExpr(np.zeros((n, n_in)), hi.copy())
        else:
            raise ValueError(f"cannot propagate through kind {layer.kind!r}")
        lo, hi = clip(idx, lo, hi)
        sb.lower_exprs.append(sl)
        sb.upper_exprs.append(su)
        sb.lowers.append(lo)
        sb.uppers.append(hi)
    return sb


def concretize_expr_bounds(sl, su, in_lo, in_hi):
    """Scalar bounds implied by one (sl, su) pair over the input box."""
    return sl.concretize_lower(in_lo, in_hi), su.concretize_upper(in_lo, in_hi)


def lp_relax_tighten(net, state):
    """One-shot LP preprocessing: optimize every neuron variable over the
    relaxed polytope (trapezoid signs, triangle relus) and tighten bounds.

    Mutates state.linear bounds monotonically. Returns False iff the LP is
    infeasible, which proves the whole query unsatisfiable.
    """
    q = state
    lp = LinearCore()
    src = q.linear
    for _ in range(src.n_vars):
        lp.declare_variable()
    lp.lowers = list(src.lowers)
    lp.uppers = list(src.uppers)
    lp.equations = list(src.equations)

    for c in q.constraints:
        if isinstance(c, plc.SignConstraint) and c.phase == plc.UNFIXED:
            l, u = src.lowers[c.b], src.uppers[c.b]
            lp.tighten_bounds(c.f, -1.0, 1.0)
            if np.isfinite(l) and l < 0.0:
                # f <= (2/-l) b + 1
                lp.assert_leq({c.f: 1.0, c.b: -2.0 / (-l)}, 1.0)
            if np.isfinite(u) and u > 0.0:
                # f >= (2/u) b - 1
                lp.assert_leq({c.f: -1.0, c.b: 2.0 / u}, 1.0)
        elif isinstance(c, plc.ReluConstraint) and c.phase == plc.UNFIXED:
            l, u = src.lowers[c.b], src.uppers[c.b]
            lp.tighten_bounds(c.f, lower=0.0)
            lp.assert_leq({c.b: 1.0, c.f: -1.0}, 0.0)  # f >= b
            if np.isfinite(l) and np.isfinite(u) and l < 0.0 < u:
                k = u / (u - l)
                lp.assert_leq({c.f: 1.0, c.b: -k}, -k * l)  # f <= k (b - l)
        elif isinstance(c, plc.MaxConstraint) and c.phase is None:
            for s in c.sources:
                lp.assert_leq({s: 1.0, c.f: -1.0}, 0.0)  # f >= each source

    order = []
    if q.neuron_vars is not None:
        for layer_vars in q.neuron_vars:
            order.extend(layer_vars)
    else:
        order = list(range(src.n_vars))

    margin = 1e-7  # guard against cutting feasible points by LP round-off
    for var in order:
        status, value, _ = lp.optimize({var: 1.0}, "min")
        if status == "infeasible":
            return False
        if status == "optimal":
            lp.tighten_bounds(var, lower=value - margin)
            if not src.tighten_bounds(var, lower=value - margin):
                return False
        status, value, _ = lp.optimize({var: 1.0}, "max")
        if status == "infeasible":
            return False
        if status == "optimal":
            lp.tighten_bounds(var, upper=value + margin)
            if not src.tighten_bounds(var, upper=value + margin):
                return False
    return True
