"""Verification properties: precondition P over inputs, postcondition Q
over outputs, compilation of network + property into a query state,
adversarial-robustness query families, and counterexample replay.

Property JSON uses 1-based variable names: "x1".."xk" for inputs,
"y1".."ym" for outputs.
"""

import json
import re
from dataclasses import dataclass, field

import numpy as np

from . import constraints as plc
from .engine import EngineConfig, QueryState
from .linear import LinearCore, LinearEquation
from .network import (
    MAX,
    RELU,
    SIGN,
    WEIGHTED_SUM,
    NetworkError,
    check_valid,
    evaluate,
    merge_weighted_sums,
)

REPLAY_TOL = 1e-6


class PropertyError(Exception):
    """Malformed property / robustness spec or dimension mismatch."""


@dataclass
class LinearIneq:
    """sum(coeffs[i] * var_i) rel rhs, with rel in {<=, >=}."""

    coeffs: dict  # 0-based input or output index -> coefficient
    rel: str
    rhs: float

    def __post_init__(self):
        if self.rel not in ("<=", ">="):
            raise PropertyError(f"relation must be <= or >=, got {self.rel!r}")
        if not self.coeffs:
            raise PropertyError("inequality needs at least one coefficient")

    def as_leq(self):
        """Normalize to (coeffs, rhs) meaning sum <= rhs."""
        if self.rel == "<=":
            return dict(self.coeffs), self.rhs
        return {i: -c for i, c in self.coeffs.items()}, -self.rhs

    def holds(self, values, tol=REPLAY_TOL):
        total = sum(c * values[i] for i, c in self.coeffs.items())
        if self.rel == "<=":
            return total <= self.rhs + tol
        return total >= self.rhs - tol


@dataclass
class Property:
    input_box: list  # (lo, hi) per input, may be +-inf
    input_linear: list = field(default_factory=list)
    output_linear: list = field(default_factory=list)


@dataclass
class RobustnessSpec:
    sample: np.ndarray
    delta: float
    true_label: int  # 1-based output index
    domain_clip: tuple | None = (0.0, 1.0)

    def __post_init__(self):
        self.sample = np.asarray(self.sample, dtype=float)
        if self.delta < 0:
            raise PropertyError("delta must be >= 0")


def compile(net, prop, cfg=None):
    """Build a QueryState encoding network semantics plus P and Q."""
    cfg = cfg or EngineConfig()
    if len(prop.input_box) != net.input_size:
        raise PropertyError(
            f"input box has {len(prop.input_box)} entries, network expects "
            f"{net.input_size}"
        )
    check_valid(net)
    if cfg.merge_ws:
        net = merge_weighted_sums(net)

    linear = LinearCore()
    neuron_vars = []
    for layer in net.layers:
        neuron_vars.append([linear.declare_variable() for _ in range(layer.size)])

    box_finite = True
    for j, (lo, hi) in enumerate(prop.input_box):
        lo = -np.inf if lo is None else float(lo)
        hi = np.inf if hi is None else float(hi)
        if not (np.isfinite(lo) and np.isfinite(hi)):
            box_finite = False
        if not linear.tighten_bounds(neuron_vars[0][j], lo, hi):
            raise PropertyError(f"empty input box for x{j + 1}")
    if not box_finite and (cfg.lp_relax or cfg.sbt):
        raise PropertyError(
            "lp_relax / sbt require a finite input box; disable them or "
            "bound every input"
        )

    constraints = []
    for idx, layer in enumerate(net.layers[1:], start=1):
        prev_vars = neuron_vars[idx - 1]
        cur_vars = neuron_vars[idx]
        if layer.kind == WEIGHTED_SUM:
            for j, var in enumerate(cur_vars):
                coeffs = {var: 1.0}
                for k, pv in enumerate(prev_vars):
                    w = layer.weights[j, k]
                    if w != 0.0:
                        coeffs[pv] = coeffs.get(pv, 0.0) - w
                linear.assert_equation(LinearEquation(coeffs, layer.biases[j]))
        elif layer.kind == RELU:
            for j, var in enumerate(cur_vars):
                linear.tighten_bounds(var, lower=0.0)
                constraints.append(plc.ReluConstraint(b=prev_vars[j], f=var))
        elif layer.kind == SIGN:
            for j, var in enumerate(cur_vars):
                linear.tighten_bounds(var, -1.0, 1.0)
                constraints.append(plc.SignConstraint(b=prev_vars[j], f=var))
        elif layer.kind == MAX:
            for j, var in enumerate(cur_vars):
                srcs = [prev_vars[s - 1] for s in layer.sources[j]]
                constraints.append(plc.MaxConstraint(f=var, sources=srcs))

    def add_ineqs(ineqs, vars_, what):
        for ineq in ineqs:
            coeffs = {}
            for i, c in ineq.coeffs.items():
                if not 0 <= i < len(vars_):
                    raise PropertyError(f"{what} index {i + 1} out of range")
                coeffs[vars_[i]] = coeffs.get(vars_[i], 0.0) + c
            leq, rhs = LinearIneq(coeffs, ineq.rel, ineq.rhs).as_leq()
            if not linear.assert_leq(leq, rhs):
                pass  # empty region; solver will report unsat

    add_ineqs(prop.input_linear, neuron_vars[0], "input")
    add_ineqs(prop.output_linear, neuron_vars[-1], "output")

    return QueryState(
        linear=linear,
        constraints=constraints,
        config=cfg,
        net=net,
        neuron_vars=neuron_vars,
        input_vars=neuron_vars[0],
        output_vars=neuron_vars[-1],
    )


def argmax_label(outputs, prefer=None):
    """1-based argmax; ties broken toward `prefer` when given."""
    outputs = np.asarray(outputs, dtype=float)
    best = float(np.max(outputs))
    winners = [j + 1 for j in range(len(outputs)) if outputs[j] >= best - 1e-12]
    if prefer is not None and prefer in winners:
        return prefer
    return winners[0]


def robustness_queries(net, spec, margin=0.0):
    """One (adversarial_label, Property) per competing label.

    The spec is robustness-violated iff any member query is Sat. A tie
    (margin 0) counts as misclassification.
    """
    out = evaluate(net, spec.sample)
    if int(np.argmax(out)) + 1 != spec.true_label:
        raise PropertyError(
            f"sample is classified as {int(np.argmax(out)) + 1}, not the "
            f"stated label {spec.true_label}"
        )
    box = []
    for j in range(net.input_size):
        lo = spec.sample[j] - spec.delta
        hi = spec.sample[j] + spec.delta
        if spec.domain_clip is not None:
            lo = max(lo, spec.domain_clip[0])
            hi = min(hi, spec.domain_clip[1])
        box.append((lo, hi))
    queries = []
    t = spec.true_label - 1
    for j in range(net.output_size):
        if j == t:
            continue
        q = Property(
            input_box=box,
            output_linear=[
                LinearIneq({j: 1.0, t: -1.0}, ">=", margin)
            ],
        )
        queries.append((j + 1, q))
    return queries


def replay(net, prop, witness_inputs):
    """Re-evaluate a witness input against exact network semantics.

    Returns (True, None) on acceptance, else (False, reason).
    """
    x = np.asarray(witness_inputs, dtype=float)
    for j, (lo, hi) in enumerate(prop.input_box):
        lo = -np.inf if lo is None else lo
        hi = np.inf if hi is None else hi
        if not (lo - REPLAY_TOL <= x[j] <= hi + REPLAY_TOL):
            return False, f"input x{j + 1}={x[j]} outside [{lo}, {hi}]"
    for ineq in prop.input_linear:
        if not ineq.holds(x):
            return False, f"input inequality violated: {ineq}"
    y = evaluate(net, x)
    for ineq in prop.output_linear:
        if not ineq.holds(y):
            return False, f"output inequality violated: {ineq}"
    return True, None


# -- file formats ----------------------------------------------------------

_VAR_RE = re.compile(r"^([xy])(\d+)$")


def _parse_coeffs(doc, expect_kind, where):
    coeffs = {}
    for name, c in doc.items():
        m = _VAR_RE.match(name)
        if not m or m.group(1) != expect_kind:
            raise PropertyError(f"{where}: bad variable name {name!r}")
        idx = int(m.group(2))
        if idx < 1:
            raise PropertyError(f"{where}: variable index must be >= 1")
        coeffs[idx - 1] = float(c)
    return coeffs


def _parse_ineqs(docs, kind, where):
    out = []
    for i, doc in enumerate(docs):
        out.append(
            LinearIneq(
                _parse_coeffs(doc["coeffs"], kind, f"{where}[{i}]"),
                doc["rel"],
                float(doc["rhs"]),
            )
        )
    return out


def property_from_dict(doc):
    if "input_box" not in doc:
        raise PropertyError('property JSON needs an "input_box" field')
    box = [
        (None if lo is None else float(lo), None if hi is None else float(hi))
        for lo, hi in doc["input_box"]
    ]
    return Property(
        input_box=box,
        input_linear=_parse_ineqs(doc.get("input_linear", []), "x", "input_linear"),
        output_linear=_parse_ineqs(
            doc.get("output_linear", []), "y", "output_linear"
        ),
    )


def property_to_dict(prop):
    def dump(ineqs, kind):
        return [
            {
                "coeffs": {f"{kind}{i + 1}": c for i, c in q.coeffs.items()},
                "rel": q.rel,
                "rhs": q.rhs,
            }
            for q in ineqs
        ]

    return {
        "input_box": [[lo, hi] for lo, hi in prop.input_box],
        "input_linear": dump(prop.input_linear, "x"),
        "output_linear": dump(prop.output_linear, "y"),
    }


def load_property(path):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise PropertyError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return property_from_dict(doc)


def load_robustness_spec(path):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise PropertyError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    clip = doc.get("domain_clip", [0.0, 1.0])
    return RobustnessSpec(
        sample=np.asarray(doc["sample"], dtype=float),
        delta=float(doc["delta"]),
        true_label=int(doc["true_label"]),
        domain_clip=None if clip is None else (float(clip[0]), float(clip[1])),
    )
