import numpy as np
import pytest

import acceptance_report
from bnnverify import network as nm
from bnnverify.network import Layer, Network


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not acceptance_report.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in acceptance_report.RESULTS:
        status = "PASS" if ok else "FAIL"
        line = f"[{status}] {name}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)


@pytest.fixture
def toy_relu_net():
    """2-in / relu hidden pair / 1-out network with a known forward trace."""
    return Network(
        [
            Layer(nm.INPUT, 2),
            Layer(
                nm.WEIGHTED_SUM,
                2,
                np.array([[1.0, 2.0], [-5.0, 1.0]]),
                np.array([1.0, 2.0]),
            ),
            Layer(nm.RELU, 2),
            Layer(nm.WEIGHTED_SUM, 1, np.array([[1.0, -2.0]]), np.array([0.0])),
        ]
    )


@pytest.fixture
def toy_sign_net():
    """2-in single-binary-block network: WS, scaling WS, sign, output WS."""
    return Network(
        [
            Layer(nm.INPUT, 2),
            Layer(nm.WEIGHTED_SUM, 1, np.array([[1.0, -1.0]]), np.array([1.0])),
            Layer(nm.WEIGHTED_SUM, 1, np.array([[0.5]]), np.array([0.0])),
            Layer(nm.SIGN, 1),
            Layer(nm.WEIGHTED_SUM, 1, np.array([[2.0]]), np.array([0.0])),
        ]
    )


@pytest.fixture
def affine_chain_net():
    """1-in network of two consecutive weighted sums (zero biases)."""
    return Network(
        [
            Layer(nm.INPUT, 1),
            Layer(nm.WEIGHTED_SUM, 2, np.array([[1.0], [-2.0]]), np.zeros(2)),
            Layer(
                nm.WEIGHTED_SUM,
                2,
                np.array([[-1.0, 2.0], [3.0, 1.0]]),
                np.zeros(2),
            ),
        ]
    )


@pytest.fixture
def two_sign_net():
    """1-in network: b1 = 3x+1, b2 = -4x+2, y = sign(b1) + sign(b2)."""
    return Network(
        [
            Layer(nm.INPUT, 1),
            Layer(
                nm.WEIGHTED_SUM, 2, np.array([[3.0], [-4.0]]), np.array([1.0, 2.0])
            ),
            Layer(nm.SIGN, 2),
            Layer(nm.WEIGHTED_SUM, 1, np.array([[1.0, 1.0]]), np.array([0.0])),
        ]
    )
