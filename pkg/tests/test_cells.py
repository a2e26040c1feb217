import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles as O
from cants.cells import LAYOUT, block_size, cell_step, init_block, sigmoid
from cants.genome import NodeType

REFS = {
    NodeType.SIMPLE: O.ref_simple,
    NodeType.DELTA: O.ref_delta,
    NodeType.GRU: O.ref_gru,
    NodeType.LSTM: O.ref_lstm,
    NodeType.MGU: O.ref_mgu,
    NodeType.UGRNN: O.ref_ugrnn,
}

# hand-evaluated with the reference equations at x=0.7, h=0.3, c=-0.2 and
# parameters 0.1*(-1)^i*(i%5+1) in LAYOUT order (bias first)
FROZEN = {
    NodeType.SIMPLE: (0.6640367702678489, None),
    NodeType.DELTA: (0.13797762746754744, None),
    NodeType.GRU: (0.09560176942960673, None),
    NodeType.LSTM: (-0.029452073236041758, -0.0827717833725975),
    NodeType.MGU: (0.34370584056261877, None),
    NodeType.UGRNN: (0.16066484088494215, None),
}


def fixture_params(t):
    return [0.1 * ((-1) ** i) * (i % 5 + 1) for i in range(block_size(t))]


@pytest.mark.parametrize("t", list(NodeType))
def test_frozen_single_step(t):
    h, (h2, c) = cell_step(t, 0.7, (0.3, -0.2), fixture_params(t))
    want_h, want_c = FROZEN[t]
    assert h == h2
    assert h == pytest.approx(want_h, abs=1e-12)
    if want_c is not None:
        assert c == pytest.approx(want_c, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    st.sampled_from(list(NodeType)),
    st.floats(-2, 2), st.floats(-1, 1), st.floats(-1, 1),
    st.lists(st.floats(-1.5, 1.5), min_size=12, max_size=12),
)
def test_matches_reference(t, x, h, c, raw):
    vals = raw[: block_size(t)]
    p = dict(zip(("b",) + LAYOUT[t], vals))
    want_h, want_c = REFS[t](p, x, h, c)
    got_h, (_, got_c) = cell_step(t, x, (h, c), vals)
    assert got_h == pytest.approx(float(want_h), abs=1e-12)
    if t == NodeType.LSTM:
        assert got_c == pytest.approx(float(want_c), abs=1e-12)


def test_simple_zero():
    assert cell_step(NodeType.SIMPLE, 0.0, (0.0, 0.0), [0.0]) == (0.0, (0.0, 0.0))


def test_lstm_gate_limits():
    names = ("b",) + LAYOUT[NodeType.LSTM]
    p = dict.fromkeys(names, 0.0)
    p["bf"], p["bi"] = 60.0, -60.0  # forget gate ~1, input gate ~0
    _, (_, c) = cell_step(NodeType.LSTM, 0.9, (0.4, 0.37), [p[n] for n in names])
    assert c == pytest.approx(0.37, abs=1e-12)


@pytest.mark.parametrize("t", list(NodeType))
def test_outputs_bounded(t):
    rng = np.random.default_rng(int(t))
    for _ in range(200):
        vals = list(rng.normal(0, 3, size=block_size(t)))
        h, _ = cell_step(t, float(rng.normal(0, 5)), (float(rng.uniform(-1, 1)), float(rng.normal())), vals)
        assert -1.0 <= h <= 1.0


def test_init_block_layout(rng):
    for t in NodeType:
        block = init_block(t, 0.25, rng)
        assert len(block) == block_size(t) == 1 + len(LAYOUT[t])
        assert block[0] == 0.25
        named = dict(zip(LAYOUT[t], block[1:]))
        for k, v in named.items():
            if k == "bf" and t == NodeType.LSTM:
                assert v == 1.0
            elif k in {"bz", "br", "bi", "bo", "bg"}:
                assert v == 0.0
            else:
                assert -0.5 <= v <= 0.5 or v == 1.0


def test_sigmoid_stable():
    assert sigmoid(-1000.0) == 0.0
    assert sigmoid(1000.0) == 1.0
    assert sigmoid(0.0) == 0.5
    assert sigmoid(2.0) == pytest.approx(1 / (1 + math.exp(-2.0)))
