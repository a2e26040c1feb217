"""Headless invariant checks behind ``cants selftest``.

These are reduced-size versions of the test-suite properties that need only
numpy, so an installed package can vouch for itself without pytest.
"""
from __future__ import annotations

import math
import traceback

import numpy as np

from .agents import (
    crossover, evolve, mutate, perceived_sense_range, spawn_cant, take_path,
)
from .clustering import ClusterConfig, condense_paths, dbscan_labels
from .colony import Colony, Population, RunConfig
from .data import SplitSpec, make_dataset, normalize, synth_series
from .distributed import (
    Evaluator, InProcessTransport, Manager, Shutdown, WorkAssignment, WorkRequest, Worker, decode, encode,
)
from .genome import NodeType, RnnEdge, RnnGenome, RnnNode, build_genome, deserialize, serialize
from .rnn import evaluation_order, gradient_check, instantiate
from .space import Position, SearchSpace, SpaceConfig


def _brute_components(xy, eps):
    # with min_pts=2 DBSCAN clusters are the connected components of the eps-graph
    n = len(xy)
    label = [-1] * n
    nxt = 0
    for i in range(n):
        if label[i] != -1:
            continue
        label[i] = nxt
        stack = [i]
        while stack:
            a = stack.pop()
            for b in range(n):
                if label[b] == -1 and math.dist(xy[a], xy[b]) <= eps:
                    label[b] = nxt
                    stack.append(b)
        nxt += 1
    return label


def _same_partition(a, b) -> bool:
    fwd, back = {}, {}
    for x, y in zip(a, b):
        if fwd.setdefault(x, y) != y or back.setdefault(y, x) != x:
            return False
    return True


def check_dbscan():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n = int(rng.integers(1, 120))
        xy = [tuple(p) for p in rng.random((n, 2)) * rng.uniform(0.2, 1.0)]
        labels = dbscan_labels(xy, 0.05, 2)
        singles = iter(range(10**6, 10**7))
        labels = [lab if lab >= 0 else next(singles) for lab in labels]
        assert _same_partition(labels, _brute_components(xy, 0.05)), "dbscan partition mismatch"


def check_pheromones():
    rng = np.random.default_rng(2)
    cfg = SpaceConfig(levels=3, input_count=2)
    space = SearchSpace(cfg)
    for _ in range(2000):
        op = rng.integers(3)
        if op == 0:
            space.deposit(Position(rng.random(), rng.random(), int(rng.integers(3)), rng.uniform(-1, 1)),
                          float(rng.uniform(0.2, 20)))
        elif op == 1 and space.points:
            before = space.total_pheromone()
            space.decay_all()
            assert space.total_pheromone() < before, "decay did not lower total pheromone"
        else:
            ids = list(space.points)[:5]
            g = RnnGenome(3, [RnnNode(0, "hidden", Position(0.5, 0.5, 0), NodeType.GRU)], [],
                          provenance={0: [(i, 0.01) for i in ids]})
            space.reward_genome(g, 0.05)
        for p in space.points.values():
            assert cfg.tau_min < p.pheromone <= cfg.tau_max, "pheromone out of range"


def check_roulette():
    space = SearchSpace(SpaceConfig(levels=5))
    rng = np.random.default_rng(3)
    counts = np.bincount([space.select_start_level(rng) for _ in range(30000)], minlength=5)
    expected = np.array([2, 4, 6, 8, 10]) / 30 * 30000
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    assert chi2 < 13.28, f"level roulette chi2 {chi2:.2f}"  # 0.01 critical value, 4 dof


def check_behaviors():
    rng = np.random.default_rng(4)
    cant = spawn_cant(rng)
    for _ in range(5000):
        op = rng.integers(3)
        if op == 0:
            cant.behavior = mutate(cant.behavior, rng)
        elif op == 1:
            a, b = spawn_cant(rng).behavior, spawn_cant(rng).behavior
            c = crossover(a, b, rng)
            for x, y, z in zip(a.as_tuple(), b.as_tuple(), c.as_tuple()):
                assert min(x, y) - 1e-12 <= z <= max(x, y) + 1e-12, "crossover left the hull"
        else:
            evolve(cant, float(rng.random()), 0.2, rng)
        assert cant.behavior.in_bounds(), "behavior out of bounds"
        assert perceived_sense_range(cant.behavior, float(rng.random())) >= 0.1


def check_paths():
    rng = np.random.default_rng(5)
    space = SearchSpace(SpaceConfig(levels=5, input_count=3))
    for i in range(500):
        path = take_path(spawn_cant(np.random.default_rng(i)), space, rng)
        per_level = [0] * 5
        prev = path.points[0].pos
        for pt in path.interior:
            assert pt.pos.level >= prev.level, "path descended"
            if pt.pos.level == prev.level:
                assert pt.pos.y >= prev.y, "path moved backwards"
            per_level[pt.pos.level] += 1
            prev = pt.pos
        assert max(per_level) <= 10, "too many points on one level"
        if i % 50 == 49:
            space.decay_all()


def check_genome_and_gradients():
    rng = np.random.default_rng(6)
    space = SearchSpace(SpaceConfig(levels=3, input_count=2))
    paths = [take_path(spawn_cant(np.random.default_rng(i)), space, rng) for i in range(6)]
    clusters, mapping = condense_paths(paths, ClusterConfig())
    g = build_genome(paths, clusters, mapping, space, rng)
    evaluation_order(g)
    assert deserialize(serialize(g)).to_dict() == g.to_dict(), "genome round trip"

    series, _ = normalize(synth_series(length=60))
    ds = make_dataset(series, SplitSpec(40, 20), 2)
    for t in NodeType:
        nodes = [RnnNode(0, "input", Position(0.5, 0, 0), None, 0.0, 0),
                 RnnNode(1, "hidden", Position(0.5, 0.5, 0), t, 0.1),
                 RnnNode(2, "output", Position(0.5, 1, 0), None, 0.0, 0)]
        edges = [RnnEdge(0, 1, 0.8, 0), RnnEdge(1, 2, 0.6, 0), RnnEdge(1, 2, 0.3, 1)]
        err = gradient_check(instantiate(RnnGenome(2, nodes, edges)), ds)
        assert err < 1e-4, f"{t.name} gradient error {err:.2e}"


def check_population_and_wire():
    rng = np.random.default_rng(7)
    pop = Population(10)
    seen = []
    for _ in range(200):
        f = float(rng.random())
        seen.append(f)
        pop.insert(None, f)
    assert pop.fitnesses == sorted(seen)[:10], "population is not the k best"
    msgs = [Shutdown(), WorkRequest(3), WorkAssignment(1, "{}", "bp", 30, 0.001, 9)]
    for m in msgs:
        assert decode(encode(m)) == m, "wire round trip"


def check_liveness():
    cfg = RunConfig(iterations=4, agents=2, levels=2)
    series, _ = normalize(synth_series(length=60))
    ds = make_dataset(series, SplitSpec(40, 20), 2)
    colony = Colony(cfg, 3)
    transport = InProcessTransport()
    mgr = Manager(colony, cfg, timeout=1e9)
    workers = [Worker(i, transport.endpoint(i), Evaluator(ds)) for i in range(3)]
    rng = np.random.default_rng(8)
    for _ in range(1000):
        moves = [w for w in workers if not w.stopped and (not w.awaiting or w.endpoint.ready())]
        if transport.pending():
            moves.append(None)
        if not moves:
            break
        pick = moves[int(rng.integers(len(moves)))]
        if pick is None:
            mgr.step(transport)
        else:
            pick.step()
    assert mgr.finished and all(w.stopped for w in workers), "run did not terminate"
    assert len(colony.records) == 4


CHECKS = [
    check_dbscan, check_pheromones, check_roulette, check_behaviors, check_paths,
    check_genome_and_gradients, check_population_and_wire, check_liveness,
]


def run_all(verbose: bool = True) -> bool:
    ok = True
    for check in CHECKS:
        name = check.__name__.removeprefix("check_")
        try:
            check()
        except Exception:
            ok = False
            if verbose:
                print(f"FAIL {name}")
                traceback.print_exc()
            continue
        if verbose:
            print(f"ok   {name}")
    return ok
