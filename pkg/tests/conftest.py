import numpy as np
import pytest

from cants.data import SplitSpec, make_dataset, normalize, synth_series
from cants.genome import NodeType, RnnEdge, RnnGenome, RnnNode
from cants.space import Position


def node(nid, role, level=0, y=0.5, ntype=None, bias=0.0, index=-1, x=0.5):
    return RnnNode(nid, role, Position(x, y, level, 0.0), ntype, bias, index)


def three_node(ntype, levels=3):
    """input -> one hidden cell -> output, plus a delay-2 recurrent hop."""
    nodes = [
        node(0, "input", y=0.0, index=0),
        node(1, "hidden", ntype=ntype, bias=0.1),
        node(2, "output", y=1.0, index=0, bias=0.05),
    ]
    edges = [RnnEdge(0, 1, 0.7, 0), RnnEdge(1, 2, 0.9, 0), RnnEdge(1, 2, -0.4, 2)]
    return RnnGenome(levels, nodes, edges)


def linear_chain(weight=0.6, bias=0.1, levels=3):
    nodes = [node(0, "input", y=0.0, index=0), node(1, "output", y=1.0, index=0, bias=bias)]
    return RnnGenome(levels, nodes, [RnnEdge(0, 1, weight, 0)])


@pytest.fixture
def small_dataset():
    series, _ = normalize(synth_series(length=80))
    return make_dataset(series, SplitSpec(40, 20), 3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ALL_TYPES = list(NodeType)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        title, ok, detail = RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
