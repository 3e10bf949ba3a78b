"""Command-line front end.

    bnnverify --net net.json --prop prop.json [flags]
    bnnverify --net net.json --robustness spec.json [flags]
    bnnverify gen-bnn --seed 1 --inputs 16 --widths 12,12 --outputs 4
    bnnverify eval --net net.json --input inputs.json

Exit codes: 10 Sat, 20 Unsat, 30 Timeout, 1 error. The JSON report goes
to stdout, a human-readable summary to stderr.
"""

import argparse
import json
import sys
import time

import numpy as np

from . import network as netmod
from . import properties as propmod
from .engine import EngineConfig, Verdict
from .network import Layer, Network
from .properties import PropertyError
from .snc import SncConfig, orchestrate

EXIT_SAT = 10
EXIT_UNSAT = 20
EXIT_TIMEOUT = 30
EXIT_ERROR = 1


def gen_random_bnn(seed, widths, inputs, outputs, first_block_sign=False):
    """Deterministic random BNN: per block a +-1 weighted sum, a diagonal
    batch-norm-style weighted sum, and (optionally for the first block) a
    sign layer; then a real-valued output layer."""
    rng = np.random.RandomState(seed)
    layers = [Layer(netmod.INPUT, inputs)]
    prev = inputs
    for bi, width in enumerate(widths):
        w = rng.choice([-1.0, 1.0], size=(width, prev))
        b = np.round(rng.uniform(-1.0, 1.0, size=width), 3)
        layers.append(Layer(netmod.WEIGHTED_SUM, width, w, b))
        scale = np.round(rng.uniform(0.2, 1.5, size=width), 3)
        shift = np.round(rng.uniform(-0.5, 0.5, size=width), 3)
        layers.append(Layer(netmod.WEIGHTED_SUM, width, np.diag(scale), shift))
        if bi > 0 or first_block_sign:
            layers.append(Layer(netmod.SIGN, width))
        prev = width
    w = np.round(rng.uniform(-1.0, 1.0, size=(outputs, prev)), 3)
    b = np.round(rng.uniform(-0.5, 0.5, size=outputs), 3)
    layers.append(Layer(netmod.WEIGHTED_SUM, outputs, w, b))
    return Network(
        layers,
        metadata=f"gen_random_bnn seed={seed} widths={list(widths)}",
    )


def _build_solver_parser():
    p = argparse.ArgumentParser(prog="bnnverify", description=__doc__)
    p.add_argument("--net", required=True, help="network JSON file")
    p.add_argument("--prop", help="property JSON file")
    p.add_argument("--robustness", help="robustness spec JSON file")
    p.add_argument("--timeout", type=float, default=600.0, help="seconds")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-merge-ws", action="store_true")
    p.add_argument("--no-lp", action="store_true")
    p.add_argument("--no-sbt", action="store_true")
    p.add_argument(
        "--no-polarity",
        action="store_true",
        help="split on input intervals instead of sign polarity",
    )
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)
    return p


def _engine_config(args):
    return EngineConfig(
        epsilon=args.epsilon,
        merge_ws=not args.no_merge_ws,
        lp_relax=not args.no_lp,
        sbt=not args.no_sbt,
        polarity_snc=not args.no_polarity,
    )


def _witness_dict(q, assignment):
    return {
        "inputs": [float(assignment[v]) for v in q.input_vars],
        "assignment": [float(v) for v in assignment],
    }


def _solve_property(net, prop, cfg, snc_cfg):
    q = propmod.compile(net, prop, cfg)
    return q, orchestrate(q, snc_cfg)


def run(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    if argv and argv[0] == "gen-bnn":
        return _run_gen(argv[1:])
    if argv and argv[0] == "eval":
        return _run_eval(argv[1:])
    args = _build_solver_parser().parse_args(argv)
    if bool(args.prop) == bool(args.robustness):
        print("error: exactly one of --prop / --robustness required", file=sys.stderr)
        return EXIT_ERROR

    t0 = time.monotonic()
    try:
        net = netmod.load_json(args.net)
        cfg = _engine_config(args)
        snc_cfg = SncConfig(workers=args.workers, total_timeout=args.timeout)

        if args.prop:
            prop = propmod.load_property(args.prop)
            q, verdict = _solve_property(net, prop, cfg, snc_cfg)
            checked = [(None, prop, q, verdict)]
        else:
            spec = propmod.load_robustness_spec(args.robustness)
            checked = []
            verdict = Verdict("unsat")
            q = None
            for label, prop in propmod.robustness_queries(net, spec):
                lq, lv = _solve_property(net, prop, cfg, snc_cfg)
                checked.append((label, prop, lq, lv))
                if lv.kind == "sat":
                    verdict, q = lv, lq
                    break
                if lv.kind == "timeout":
                    verdict = Verdict("timeout")
            else:
                if verdict.kind != "timeout":
                    verdict = Verdict("unsat")
    except (netmod.NetworkError, PropertyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR

    report = {
        "schema": 1,
        "verdict": verdict.kind,
        "witness": None,
        "wall_time": round(time.monotonic() - t0, 6),
        "stats": {
            k: v
            for k, v in verdict.stats.items()
            if k in ("splits", "phases_fixed", "subqueries", "simplex_iterations")
        },
        "config": {
            "merge_ws": cfg.merge_ws,
            "lp_relax": cfg.lp_relax,
            "sbt": cfg.sbt,
            "polarity_snc": cfg.polarity_snc,
            "epsilon": cfg.epsilon,
            "workers": args.workers,
            "timeout": args.timeout,
        },
    }

    if verdict.kind == "sat":
        sat_entry = next(e for e in checked if e[3].kind == "sat")
        label, prop, q, _ = sat_entry
        witness = _witness_dict(q, verdict.assignment)
        ok, reason = propmod.replay(net, prop, witness["inputs"])
        if not ok:
            print(f"error: witness failed replay: {reason}", file=sys.stderr)
            return EXIT_ERROR
        if label is not None:
            witness["adversarial_label"] = label
        report["witness"] = witness

    print(json.dumps(report))
    summary = f"verdict: {verdict.kind.upper()} in {report['wall_time']:.3f}s"
    if report["witness"] is not None:
        summary += f" (witness inputs: {report['witness']['inputs']})"
    print(summary, file=sys.stderr)
    return {"sat": EXIT_SAT, "unsat": EXIT_UNSAT, "timeout": EXIT_TIMEOUT}[
        verdict.kind
    ]


def _run_gen(argv):
    p = argparse.ArgumentParser(prog="bnnverify gen-bnn")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--inputs", type=int, required=True)
    p.add_argument("--outputs", type=int, required=True)
    p.add_argument("--widths", required=True, help="comma-separated block widths")
    p.add_argument(
        "--first-block-sign",
        action="store_true",
        help="keep the sign layer in the first block",
    )
    args = p.parse_args(argv)
    widths = [int(w) for w in args.widths.split(",") if w]
    if args.inputs < 1 or args.outputs < 1 or any(w < 1 for w in widths):
        print("error: widths must be positive", file=sys.stderr)
        return EXIT_ERROR
    net = gen_random_bnn(
        args.seed, widths, args.inputs, args.outputs, args.first_block_sign
    )
    print(json.dumps(netmod.to_dict(net)))
    return 0


def _run_eval(argv):
    p = argparse.ArgumentParser(prog="bnnverify eval")
    p.add_argument("--net", required=True)
    p.add_argument(
        "--input",
        required=True,
        help="JSON file: one input vector or an array of input vectors",
    )
    args = p.parse_args(argv)
    try:
        net = netmod.load_json(args.net)
        with open(args.input) as fh:
            data = json.load(fh)
        arr = np.asarray(data, dtype=float)
        if arr.ndim == 1:
            out = netmod.evaluate(net, arr).tolist()
        else:
            out = [netmod.evaluate(net, row).tolist() for row in arr]
    except (netmod.NetworkError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(json.dumps(out))
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
