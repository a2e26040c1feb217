"""Scalar recurrent cells with hand-written backward passes.

Every hidden node owns a contiguous parameter block. Slot 0 is the node bias
(the candidate/affine bias); the remaining slots are listed in ``LAYOUT``.
``x`` is the node's aggregated, edge-weighted input and ``hp``/``cp`` are the
node's own hidden/cell state from the previous time step.
"""
from __future__ import annotations

import math

from .genome import NodeType

LAYOUT = {
    NodeType.SIMPLE: (),
    NodeType.DELTA: ("alpha", "beta1", "beta2", "v", "br"),
    NodeType.GRU: ("wz", "uz", "bz", "wr", "ur", "br", "wh", "uh"),
    NodeType.LSTM: ("wi", "ui", "bi", "wf", "uf", "bf", "wo", "uo", "bo", "wg", "ug"),
    NodeType.MGU: ("wf", "uf", "bf", "wh", "uh"),
    NodeType.UGRNN: ("wc", "uc", "wg", "ug", "bg"),
}

# candidate-input weights start at 1 so the incoming edge weights set the scale
_UNIT = {
    NodeType.DELTA: {"beta2"},
    NodeType.GRU: {"wh"},
    NodeType.LSTM: {"wg", "bf"},
    NodeType.MGU: {"wh"},
    NodeType.UGRNN: {"wc"},
}
_GATE_BIASES = {"bz", "br", "bi", "bf", "bo", "bg"}


def block_size(ntype) -> int:
    return 1 + len(LAYOUT[NodeType(ntype)])


def init_block(ntype, bias: float, rng) -> list[float]:
    """Fresh parameters: gate biases 0 (LSTM forget bias 1), weights U(-0.5, 0.5)."""
    ntype = NodeType(ntype)
    out = [bias]
    for name in LAYOUT[ntype]:
        if name in _UNIT.get(ntype, ()):
            out.append(1.0)
        elif name in _GATE_BIASES:
            out.append(0.0)
        else:
            out.append(float(rng.uniform(-0.5, 0.5)))
    return out


def sigmoid(a: float) -> float:
    if a >= 0:
        return 1.0 / (1.0 + math.exp(-a))
    e = math.exp(a)
    return e / (1.0 + e)


tanh = math.tanh


def _simple_fwd(p, o, x, hp, cp):
    h = tanh(x + p[o])
    return h, 0.0, h


def _simple_bwd(p, o, g, h, dh, dc):
    da = dh * (1.0 - h * h)
    g[o] += da
    return da, 0.0, 0.0


def _delta_fwd(p, o, x, hp, cp):
    bz, alpha, beta1, beta2, v, br = p[o:o + 6]
    vh = v * hp
    z = tanh(alpha * vh * x + beta1 * vh + beta2 * x + bz)
    r = sigmoid(x + br)
    h = tanh((1.0 - r) * z + r * hp)
    return h, 0.0, (x, hp, z, r, h)


def _delta_bwd(p, o, g, cache, dh, dc):
    x, hp, z, r, h = cache
    bz, alpha, beta1, beta2, v, br = p[o:o + 6]
    ds = dh * (1.0 - h * h)
    dz = ds * (1.0 - r)
    dr = ds * (hp - z)
    dhp = ds * r
    dza = dz * (1.0 - z * z)
    vh = v * hp
    g[o] += dza
    g[o + 1] += dza * vh * x
    g[o + 2] += dza * vh
    g[o + 3] += dza * x
    g[o + 4] += dza * (alpha * hp * x + beta1 * hp)
    dx = dza * (alpha * vh + beta2)
    dhp += dza * (alpha * v * x + beta1 * v)
    dra = dr * r * (1.0 - r)
    g[o + 5] += dra
    dx += dra
    return dx, dhp, 0.0


def _gru_fwd(p, o, x, hp, cp):
    bh, wz, uz, bz, wr, ur, br, wh, uh = p[o:o + 9]
    z = sigmoid(wz * x + uz * hp + bz)
    r = sigmoid(wr * x + ur * hp + br)
    n = tanh(wh * x + uh * r * hp + bh)
    h = z * hp + (1.0 - z) * n
    return h, 0.0, (x, hp, z, r, n)


def _gru_bwd(p, o, g, cache, dh, dc):
    x, hp, z, r, n = cache
    bh, wz, uz, bz, wr, ur, br, wh, uh = p[o:o + 9]
    dz = dh * (hp - n)
    dn = dh * (1.0 - z)
    dhp = dh * z
    dan = dn * (1.0 - n * n)
    g[o] += dan
    g[o + 7] += dan * x
    g[o + 8] += dan * r * hp
    dx = dan * wh
    drh = dan * uh
    dhp += drh * r
    dar = drh * hp * r * (1.0 - r)
    daz = dz * z * (1.0 - z)
    g[o + 1] += daz * x
    g[o + 2] += daz * hp
    g[o + 3] += daz
    g[o + 4] += dar * x
    g[o + 5] += dar * hp
    g[o + 6] += dar
    dx += daz * wz + dar * wr
    dhp += daz * uz + dar * ur
    return dx, dhp, 0.0


def _lstm_fwd(p, o, x, hp, cp):
    bg, wi, ui, bi, wf, uf, bf, wo, uo, bo, wg, ug = p[o:o + 12]
    i = sigmoid(wi * x + ui * hp + bi)
    f = sigmoid(wf * x + uf * hp + bf)
    og = sigmoid(wo * x + uo * hp + bo)
    gg = tanh(wg * x + ug * hp + bg)
    c = f * cp + i * gg
    tc = tanh(c)
    h = og * tc
    return h, c, (x, hp, cp, i, f, og, gg, tc)


def _lstm_bwd(p, o, g, cache, dh, dc):
    x, hp, cp, i, f, og, gg, tc = cache
    bg, wi, ui, bi, wf, uf, bf, wo, uo, bo, wg, ug = p[o:o + 12]
    do = dh * tc
    dc = dc + dh * og * (1.0 - tc * tc)
    dcp = dc * f
    dai = dc * gg * i * (1.0 - i)
    daf = dc * cp * f * (1.0 - f)
    dao = do * og * (1.0 - og)
    dag = dc * i * (1.0 - gg * gg)
    g[o] += dag
    g[o + 1] += dai * x
    g[o + 2] += dai * hp
    g[o + 3] += dai
    g[o + 4] += daf * x
    g[o + 5] += daf * hp
    g[o + 6] += daf
    g[o + 7] += dao * x
    g[o + 8] += dao * hp
    g[o + 9] += dao
    g[o + 10] += dag * x
    g[o + 11] += dag * hp
    dx = dai * wi + daf * wf + dao * wo + dag * wg
    dhp = dai * ui + daf * uf + dao * uo + dag * ug
    return dx, dhp, dcp


def _mgu_fwd(p, o, x, hp, cp):
    bh, wf, uf, bf, wh, uh = p[o:o + 6]
    f = sigmoid(wf * x + uf * hp + bf)
    n = tanh(wh * x + uh * f * hp + bh)
    h = (1.0 - f) * hp + f * n
    return h, 0.0, (x, hp, f, n)


def _mgu_bwd(p, o, g, cache, dh, dc):
    x, hp, f, n = cache
    bh, wf, uf, bf, wh, uh = p[o:o + 6]
    df = dh * (n - hp)
    dn = dh * f
    dhp = dh * (1.0 - f)
    dan = dn * (1.0 - n * n)
    g[o] += dan
    g[o + 4] += dan * x
    g[o + 5] += dan * f * hp
    dx = dan * wh
    dfh = dan * uh
    df += dfh * hp
    dhp += dfh * f
    daf = df * f * (1.0 - f)
    g[o + 1] += daf * x
    g[o + 2] += daf * hp
    g[o + 3] += daf
    dx += daf * wf
    dhp += daf * uf
    return dx, dhp, 0.0


def _ugrnn_fwd(p, o, x, hp, cp):
    bc, wc, uc, wg, ug, bg = p[o:o + 6]
    c = tanh(wc * x + uc * hp + bc)
    gt = sigmoid(wg * x + ug * hp + bg)
    h = gt * hp + (1.0 - gt) * c
    return h, 0.0, (x, hp, c, gt)


def _ugrnn_bwd(p, o, g, cache, dh, dc):
    x, hp, c, gt = cache
    bc, wc, uc, wg, ug, bg = p[o:o + 6]
    dgt = dh * (hp - c)
    dcn = dh * (1.0 - gt)
    dhp = dh * gt
    dac = dcn * (1.0 - c * c)
    dag = dgt * gt * (1.0 - gt)
    g[o] += dac
    g[o + 1] += dac * x
    g[o + 2] += dac * hp
    g[o + 3] += dag * x
    g[o + 4] += dag * hp
    g[o + 5] += dag
    dx = dac * wc + dag * wg
    dhp += dac * uc + dag * ug
    return dx, dhp, 0.0


FORWARD = {
    NodeType.SIMPLE: _simple_fwd,
    NodeType.DELTA: _delta_fwd,
    NodeType.GRU: _gru_fwd,
    NodeType.LSTM: _lstm_fwd,
    NodeType.MGU: _mgu_fwd,
    NodeType.UGRNN: _ugrnn_fwd,
}

BACKWARD = {
    NodeType.SIMPLE: _simple_bwd,
    NodeType.DELTA: _delta_bwd,
    NodeType.GRU: _gru_bwd,
    NodeType.LSTM: _lstm_bwd,
    NodeType.MGU: _mgu_bwd,
    NodeType.UGRNN: _ugrnn_bwd,
}


def cell_step(ntype, x: float, state: tuple[float, float], params) -> tuple[float, tuple[float, float]]:
    """One step of a single cell: ``params`` is its block (bias first)."""
    h, c, _ = FORWARD[NodeType(ntype)](list(params), 0, x, state[0], state[1])
    return h, (h, c)
