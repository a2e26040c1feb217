"""Executable recurrent networks built from genomes.

Nodes are scalar units. At each time step, input anchors read their column
``level`` steps back, every other node sums its edge-weighted inputs (reading
delayed sources from the output history) and applies its cell. Output nodes
are linear. Training is plain full-sequence BPTT with gradient-norm clipping.
"""
from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass
from heapq import heappop, heappush

import numpy as np

from . import cells
from .data import Dataset
from .errors import EmptyDatasetError, StructuralError
from .genome import NodeType, RnnGenome

WORST_FITNESS = 1e6


@dataclass
class FitnessReport:
    mse: float
    eval_wall_time: float = 0.0
    train_wall_time: float = 0.0
    epochs_used: int = 0
    status: str = "ok"

    @property
    def failed(self) -> bool:
        return self.status not in ("ok", "diverged")


class NumericalFailure(ArithmeticError):
    pass


@dataclass
class _Unit:
    slot: int
    is_output: bool
    fwd: object
    bwd: object
    offset: int
    incoming: list[tuple[int, int, int]]  # (src slot, weight index, delay)


@dataclass
class Trace:
    rows: list[list[float]]
    caches: list[list[object]]
    preds: list[tuple[float, ...]]


def evaluation_order(genome: RnnGenome) -> list[int]:
    """Topological order over zero-delay edges; ties broken by node id."""
    ids = [n.id for n in genome.nodes]
    indeg = {i: 0 for i in ids}
    succ: dict[int, list[int]] = {i: [] for i in ids}
    for e in genome.edges:
        if e.delay == 0:
            if e.src == e.dst:
                raise StructuralError(f"zero-delay self loop on node {e.src}")
            indeg[e.dst] += 1
            succ[e.src].append(e.dst)
    heap = [i for i in ids if indeg[i] == 0]
    heap.sort()
    order = []
    while heap:
        i = heappop(heap)
        order.append(i)
        for j in succ[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                heappush(heap, j)
    if len(order) != len(ids):
        raise StructuralError("genome has a zero-delay cycle")
    return order


class RnnInstance:
    def __init__(self, genome: RnnGenome):
        self.genome = genome
        self.order = evaluation_order(genome)
        slot = {nid: i for i, nid in enumerate(self.order)}
        self.n_slots = len(self.order)
        nodes = {n.id: n for n in genome.nodes}
        max_delay = max((e.delay for e in genome.edges), default=0)
        max_lag = max((n.pos.level for n in genome.inputs), default=0)
        self.depth = max(genome.levels, max_delay, max_lag, 1)

        params: list[float] = [e.weight for e in genome.edges]
        incoming: dict[int, list[tuple[int, int, int]]] = {nid: [] for nid in nodes}
        for wi, e in enumerate(genome.edges):
            incoming[e.dst].append((slot[e.src], wi, e.delay))

        rng = np.random.default_rng(int(genome.hash[:16], 16))
        self.offsets: dict[int, int] = {}
        for n in sorted(genome.nodes, key=lambda n: n.id):
            if n.role == "input":
                continue
            self.offsets[n.id] = len(params)
            if n.role == "output":
                params.append(n.bias)
                continue
            block = cells.init_block(n.node_type, n.bias, rng)
            stored = genome.cell_params.get(n.id)
            if stored is not None and len(stored) == len(block) - 1:
                block[1:] = stored
            params.extend(block)
        self.params = np.array(params, dtype=float)

        self.inputs = [
            (slot[n.id], n.index, n.pos.level) for n in sorted(genome.inputs, key=lambda n: slot[n.id])
        ]
        self.units: list[_Unit] = []
        for nid in self.order:
            n = nodes[nid]
            if n.role == "input":
                continue
            is_out = n.role == "output"
            t = None if is_out else NodeType(n.node_type)
            self.units.append(
                _Unit(
                    slot[nid],
                    is_out,
                    None if is_out else cells.FORWARD[t],
                    None if is_out else cells.BACKWARD[t],
                    self.offsets[nid],
                    incoming[nid],
                )
            )
        self.output_slots = [slot[n.id] for n in sorted(genome.outputs, key=lambda n: n.index)]
        self.loss_history: list[float] = []

    @property
    def n_params(self) -> int:
        return len(self.params)

    def forward(self, xs, keep_trace: bool = False):
        """Run over the input rows from a zeroed state.

        Returns the per-step predictions, or a ``Trace`` when ``keep_trace``.
        """
        p = self.params.tolist()
        n = self.n_slots
        rows = [] if keep_trace else deque(maxlen=self.depth)
        caches = []
        preds = []
        prev = [0.0] * n
        cstate = [0.0] * n
        for t, xt in enumerate(xs):
            out = [0.0] * n
            for s, col, lag in self.inputs:
                if lag == 0:
                    out[s] = xt[col]
                elif t >= lag:
                    out[s] = xs[t - lag][col]
            step_cache = [None] * n if keep_trace else None
            for u in self.units:
                a = 0.0
                for src, wi, d in u.incoming:
                    if d == 0:
                        a += p[wi] * out[src]
                    elif t >= d:
                        a += p[wi] * rows[-d][src]
                if u.is_output:
                    out[u.slot] = a + p[u.offset]
                    continue
                h, c, cache = u.fwd(p, u.offset, a, prev[u.slot], cstate[u.slot])
                out[u.slot] = h
                cstate[u.slot] = c
                if keep_trace:
                    step_cache[u.slot] = cache
            rows.append(out)
            if keep_trace:
                caches.append(step_cache)
            preds.append(tuple(out[s] for s in self.output_slots))
            prev = out
        if keep_trace:
            return Trace(rows, caches, preds)
        return preds

    def predict(self, xs) -> list[tuple[float, ...]]:
        return self.forward(xs)

    def loss(self, xs, ys, warmup: int) -> float:
        return _mse(self.forward(xs), ys, warmup)

    def loss_and_grad(self, xs, ys, warmup: int) -> tuple[float, np.ndarray]:
        """Scored MSE over ``ys[warmup:]`` and its gradient w.r.t. ``params``."""
        T = len(xs)
        n_scored = T - warmup
        if n_scored <= 0:
            raise EmptyDatasetError("no scored steps in this segment")
        tr = self.forward(xs, keep_trace=True)
        p = self.params.tolist()
        n_out = max(len(self.output_slots), 1)
        scale = 2.0 / (n_scored * n_out)
        loss = _mse(tr.preds, ys, warmup)

        gp = [0.0] * len(p)
        gout = [[0.0] * self.n_slots for _ in range(T)]
        gc = [0.0] * self.n_slots
        rows = tr.rows
        for t in range(T - 1, -1, -1):
            grow = gout[t]
            row = rows[t]
            if t >= warmup:
                for k, s in enumerate(self.output_slots):
                    grow[s] += scale * (tr.preds[t][k] - ys[t][k])
            cache_t = tr.caches[t]
            for u in reversed(self.units):
                g = grow[u.slot]
                if u.is_output:
                    da = g
                    gp[u.offset] += da
                else:
                    dc = gc[u.slot]
                    if g == 0.0 and dc == 0.0:
                        gc[u.slot] = 0.0
                        continue
                    da, dhp, dcp = u.bwd(p, u.offset, gp, cache_t[u.slot], g, dc)
                    gc[u.slot] = dcp
                    if t > 0:
                        gout[t - 1][u.slot] += dhp
                if da == 0.0:
                    continue
                for src, wi, d in u.incoming:
                    if d == 0:
                        gp[wi] += da * row[src]
                        grow[src] += da * p[wi]
                    elif t >= d:
                        gp[wi] += da * rows[t - d][src]
                        gout[t - d][src] += da * p[wi]
        return loss, np.array(gp)

    def to_genome(self) -> RnnGenome:
        """Genome carrying this instance's current parameters."""
        g = self.genome
        p = self.params.tolist()
        edges = [type(e)(e.src, e.dst, p[i], e.delay) for i, e in enumerate(g.edges)]
        nodes = []
        cell_params = {}
        for n in g.nodes:
            if n.role == "input":
                nodes.append(n)
                continue
            off = self.offsets[n.id]
            nodes.append(type(n)(n.id, n.role, n.pos, n.node_type, p[off], n.index))
            if n.role == "hidden":
                size = cells.block_size(n.node_type)
                if size > 1:
                    cell_params[n.id] = p[off + 1:off + size]
        return RnnGenome(g.levels, nodes, edges, cell_params, dict(g.provenance))


def _mse(preds, ys, warmup: int) -> float:
    total = 0.0
    count = 0
    for pr, y in zip(preds[warmup:], ys[warmup:]):
        for a, b in zip(pr, y):
            total += (a - b) * (a - b)
            count += 1
    if count == 0:
        raise EmptyDatasetError("no scored steps in this segment")
    return total / count


def instantiate(genome: RnnGenome) -> RnnInstance:
    return RnnInstance(genome)


def forward(instance: RnnInstance, xs) -> list[tuple[float, ...]]:
    preds = instance.forward(xs)
    for pr in preds:
        for v in pr:
            if not math.isfinite(v):
                raise NumericalFailure("non-finite prediction")
    return preds


def evaluate_mse(instance: RnnInstance, dataset: Dataset) -> FitnessReport:
    """Validation MSE; numerical failures map to ``WORST_FITNESS``."""
    t0 = time.perf_counter()
    try:
        preds = forward(instance, dataset.valid_x)
        mse = _mse(preds, dataset.valid_y, dataset.warmup)
        status = "ok" if math.isfinite(mse) else "numerical_failure"
    except (NumericalFailure, OverflowError):
        mse, status = WORST_FITNESS, "numerical_failure"
    if status != "ok":
        mse = WORST_FITNESS
    return FitnessReport(min(mse, WORST_FITNESS), time.perf_counter() - t0, 0.0, 0, status)


def bptt_train(
    instance: RnnInstance,
    dataset: Dataset,
    epochs: int = 30,
    lr: float = 0.001,
    clip: float = 1.0,
) -> FitnessReport:
    """Full-sequence gradient descent on the training segment, then validate.

    One clipped step per epoch. If the loss or gradient stops being finite the
    parameters revert to their pre-training values and the report is marked
    ``diverged``.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    t0 = time.perf_counter()
    start = instance.params.copy()
    status = "ok"
    used = 0
    instance.loss_history = []
    for _ in range(epochs):
        try:
            loss, grad = instance.loss_and_grad(dataset.train_x, dataset.train_y, dataset.warmup)
        except OverflowError:
            loss, grad = math.nan, None
        if not math.isfinite(loss) or grad is None or not np.all(np.isfinite(grad)):
            instance.params = start
            status = "diverged"
            break
        instance.loss_history.append(loss)
        norm = float(np.sqrt(np.dot(grad, grad)))
        step = grad * (clip / norm) if norm > clip else grad
        instance.params = instance.params - lr * step
        used += 1
    train_time = time.perf_counter() - t0
    report = evaluate_mse(instance, dataset)
    report.train_wall_time = train_time
    report.epochs_used = used
    if status != "ok" and not report.failed:
        report.status = status
    return report


def gradient_check(instance: RnnInstance, dataset: Dataset, h: float = 1e-5, max_params: int = 200) -> float:
    """Largest relative error between BPTT and central-difference gradients."""
    xs, ys, warm = dataset.train_x, dataset.train_y, dataset.warmup
    if len(xs) - warm <= 0:
        raise EmptyDatasetError("gradient check needs at least one scored step")
    if instance.n_params > max_params:
        raise ValueError(f"instance has {instance.n_params} parameters, limit is {max_params}")
    _, analytic = instance.loss_and_grad(xs, ys, warm)
    base = instance.params.copy()
    worst = 0.0
    try:
        for i in range(len(base)):
            instance.params = base.copy()
            instance.params[i] += h
            up = instance.loss(xs, ys, warm)
            instance.params[i] -= 2 * h
            down = instance.loss(xs, ys, warm)
            numeric = (up - down) / (2 * h)
            denom = max(abs(numeric), abs(analytic[i]), 1e-8)
            worst = max(worst, abs(numeric - analytic[i]) / denom)
    finally:
        instance.params = base
    return worst

