import json

import numpy as np
import pytest

from bnnverify import cli
from bnnverify import network as nm
from bnnverify import properties as pm


@pytest.fixture
def sign_net_file(tmp_path, toy_sign_net):
    p = tmp_path / "net.json"
    nm.save_json(toy_sign_net, p)
    return str(p)


def _write_prop(tmp_path, doc, name="prop.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def test_solve_sat_exit_code_and_report(tmp_path, sign_net_file, capsys):
    prop = _write_prop(
        tmp_path,
        {
            "input_box": [[1, 2], [-1, 1]],
            "output_linear": [{"coeffs": {"y1": 1.0}, "rel": "<=", "rhs": 5.0}],
        },
    )
    code = cli.run(["--net", sign_net_file, "--prop", prop])
    out = capsys.readouterr()
    assert code == cli.EXIT_SAT
    report = json.loads(out.out)
    assert report["schema"] == 1
    assert report["verdict"] == "sat"
    assert report["witness"] is not None
    assert len(report["witness"]["inputs"]) == 2
    assert "verdict: SAT" in out.err


def test_solve_unsat_exit_code(tmp_path, sign_net_file, capsys):
    prop = _write_prop(
        tmp_path,
        {
            "input_box": [[1, 2], [-1, 1]],
            "output_linear": [{"coeffs": {"y1": 1.0}, "rel": ">=", "rhs": 3.0}],
        },
    )
    code = cli.run(["--net", sign_net_file, "--prop", prop])
    out = capsys.readouterr()
    assert code == cli.EXIT_UNSAT
    assert json.loads(out.out)["verdict"] == "unsat"
    assert json.loads(out.out)["witness"] is None


def test_solve_timeout_exit_code(tmp_path, capsys):
    net = cli.gen_random_bnn(5, [10, 10], 12, 3)
    netf = tmp_path / "net.json"
    nm.save_json(net, netf)
    prop = _write_prop(
        tmp_path,
        {
            "input_box": [[0, 1]] * 12,
            "output_linear": [{"coeffs": {"y1": 1.0, "y2": -1.0},
                               "rel": ">=", "rhs": 0.0}],
        },
    )
    code = cli.run(["--net", str(netf), "--prop", prop, "--timeout", "0.0"])
    out = capsys.readouterr()
    assert code == cli.EXIT_TIMEOUT
    assert json.loads(out.out)["verdict"] == "timeout"


def test_robustness_flow(tmp_path, capsys):
    net = cli.gen_random_bnn(3, [8], 10, 3)
    netf = tmp_path / "net.json"
    nm.save_json(net, netf)
    rng = np.random.default_rng(0)
    x = np.round(rng.uniform(0, 1, 10), 3)
    label = int(np.argmax(nm.evaluate(net, x))) + 1
    spec = _write_prop(
        tmp_path,
        {"sample": x.tolist(), "delta": 0.5, "true_label": label},
        "rob.json",
    )
    code = cli.run(["--net", str(netf), "--robustness", spec, "--timeout", "60"])
    out = capsys.readouterr()
    report = json.loads(out.out)
    assert code in (cli.EXIT_SAT, cli.EXIT_UNSAT)
    if code == cli.EXIT_SAT:
        w = report["witness"]
        assert "adversarial_label" in w
        adv = nm.evaluate(net, w["inputs"])
        assert int(np.argmax(adv)) + 1 != label or adv[label - 1] <= max(adv)


def test_requires_exactly_one_mode(tmp_path, sign_net_file, capsys):
    assert cli.run(["--net", sign_net_file]) == cli.EXIT_ERROR
    prop = _write_prop(tmp_path, {"input_box": [[0, 1], [0, 1]]})
    assert (
        cli.run(["--net", sign_net_file, "--prop", prop, "--robustness", prop])
        == cli.EXIT_ERROR
    )
    capsys.readouterr()


def test_missing_file_is_error(tmp_path, capsys):
    prop = _write_prop(tmp_path, {"input_box": [[0, 1], [0, 1]]})
    assert cli.run(["--net", "/nonexistent.json", "--prop", prop]) == cli.EXIT_ERROR
    out = capsys.readouterr()
    assert "error" in out.err


def test_gen_bnn_deterministic_and_parsable(capsys):
    assert cli.run(["gen-bnn", "--seed", "9", "--inputs", "6",
                    "--widths", "4,4", "--outputs", "2"]) == 0
    first = capsys.readouterr().out
    assert cli.run(["gen-bnn", "--seed", "9", "--inputs", "6",
                    "--widths", "4,4", "--outputs", "2"]) == 0
    second = capsys.readouterr().out
    assert first == second
    net = nm.from_dict(json.loads(first))
    assert net.input_size == 6 and net.output_size == 2


def test_eval_subcommand(tmp_path, sign_net_file, capsys):
    inp = tmp_path / "x.json"
    inp.write_text(json.dumps([[-1.0, 3.0], [1.0, 0.0]]))
    assert cli.run(["eval", "--net", sign_net_file, "--input", str(inp)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out == [[-2.0], [2.0]]


def test_solver_flags_reach_config(tmp_path, sign_net_file, capsys):
    prop = _write_prop(
        tmp_path,
        {
            "input_box": [[1, 2], [-1, 1]],
            "output_linear": [{"coeffs": {"y1": 1.0}, "rel": "<=", "rhs": 5.0}],
        },
    )
    code = cli.run(
        ["--net", sign_net_file, "--prop", prop, "--no-merge-ws", "--no-lp",
         "--no-sbt", "--no-polarity", "--epsilon", "1e-5", "--workers", "2"]
    )
    report = json.loads(capsys.readouterr().out)
    assert code == cli.EXIT_SAT
    cfgd = report["config"]
    assert not cfgd["merge_ws"] and not cfgd["lp_relax"] and not cfgd["sbt"]
    assert not cfgd["polarity_snc"]
    assert cfgd["epsilon"] == 1e-5
    assert cfgd["workers"] == 2
