import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cants.agents import Path, PathPoint, PointKind, spawn_cant, take_path
from cants.clustering import ClusterConfig, condense_paths
from cants.errors import GenomeFormatError, InternalError, UnsupportedVersionError
from cants.genome import (
    NodeType, RnnEdge, RnnGenome, RnnNode, build_genome, deserialize, from_dict, prune, serialize, to_dot,
)
from cants.rnn import evaluation_order
from cants.space import Position, SearchSpace, SpaceConfig


def interior(space, coords, level=0, deposit=True):
    out = []
    for x, y, w in coords:
        pos = Position(x, y, level, w)
        pid = space.deposit(pos) if deposit else None
        out.append(PathPoint(pos, PointKind.EXPLORE, pid))
    return out


def make_path(space, level, inp, pts):
    start = PathPoint(space.input_position(level, inp), PointKind.INPUT)
    end = PathPoint(space.output_position(0), PointKind.OUTPUT)
    return Path(level, inp, 0, [start, *pts, end])


def build(space, paths, rng):
    clusters, mapping = condense_paths(paths, ClusterConfig())
    return build_genome(paths, clusters, mapping, space, rng)


def random_genome(rng, n_paths=6, levels=3, inputs=2):
    space = SearchSpace(SpaceConfig(levels=levels, input_count=inputs))
    paths = [take_path(spawn_cant(rng, i), space, rng) for i in range(n_paths)]
    return build(space, paths, rng), space


class TestBuild:
    def test_single_chain(self, rng):
        space = SearchSpace(SpaceConfig(levels=1))
        path = make_path(space, 0, 0, interior(space, [(0.5, 0.2, 0.1), (0.5, 0.5, 0.3), (0.5, 0.8, 0.5)]))
        g = build(space, [path], rng)
        assert [n.role for n in g.nodes] == ["input", "hidden", "hidden", "hidden", "output"]
        assert [(e.src, e.dst, e.delay) for e in g.edges] == [(0, 1, 0), (1, 2, 0), (2, 3, 0), (3, 4, 0)]
        # weights: anchors contribute nothing, interior pairs are averaged
        assert [e.weight for e in g.edges] == pytest.approx([0.1, 0.2, 0.4, 0.5])
        assert [n.bias for n in g.hidden] == pytest.approx([0.1, 0.3, 0.5])
        assert evaluation_order(g) == [0, 1, 2, 3, 4]

    def test_direct_input_to_output_weight(self, rng):
        space = SearchSpace(SpaceConfig(levels=1))
        g = build(space, [make_path(space, 0, 0, [])], rng)
        assert [(e.src, e.dst, e.weight) for e in g.edges] == [(0, 1, 1.0)]

    def test_shared_cluster_degree(self, rng):
        space = SearchSpace(SpaceConfig(levels=1, input_count=2))
        shared = [(0.5, 0.5, 0.0)]
        p1 = make_path(space, 0, 0, interior(space, [(0.1, 0.2, 0.2), *shared, (0.1, 0.8, 0.2)]))
        p2 = make_path(space, 0, 1, interior(space, [(0.9, 0.2, 0.4), (0.51, 0.5, 0.0), (0.9, 0.8, 0.4)]))
        g = build(space, [p1, p2], rng)
        (mid,) = [n for n in g.hidden if abs(n.pos.y - 0.5) < 1e-9]
        assert sum(e.dst == mid.id for e in g.edges) >= 2
        assert sum(e.src == mid.id for e in g.edges) >= 2

    def test_duplicate_edges_merge_to_mean(self, rng):
        space = SearchSpace(SpaceConfig(levels=1))
        a = interior(space, [(0.5, 0.3, 0.2), (0.5, 0.7, 0.4)])
        b = interior(space, [(0.51, 0.3, 0.6), (0.51, 0.7, 1.0)])
        g = build(space, [make_path(space, 0, 0, a), make_path(space, 0, 0, b)], rng)
        (e,) = [e for e in g.edges if g.node(e.src).role == "hidden" and g.node(e.dst).role == "hidden"]
        assert e.weight == pytest.approx(((0.2 + 0.4) / 2 + (0.6 + 1.0) / 2) / 2)

    def test_delays_from_levels(self, rng):
        space = SearchSpace(SpaceConfig(levels=3))
        pts = interior(space, [(0.5, 0.3, 0.1)], level=0) + interior(space, [(0.5, 0.5, 0.2)], level=2)
        g = build(space, [make_path(space, 0, 0, pts)], rng)
        out = g.outputs[0]
        into_out = [e for e in g.edges if e.dst == out.id]
        assert [e.delay for e in into_out] == [2]
        assert all(0 <= e.delay <= 2 for e in g.edges)

    def test_descending_path_is_internal_error(self, rng):
        space = SearchSpace(SpaceConfig(levels=3))
        pts = interior(space, [(0.5, 0.3, 0.1)], level=2) + interior(space, [(0.5, 0.5, 0.2)], level=0)
        with pytest.raises(InternalError):
            build(space, [make_path(space, 2, 0, pts)], rng)

    def test_random_genomes_are_well_formed(self, rng):
        for _ in range(100):
            g, _ = random_genome(rng, n_paths=int(rng.integers(1, 12)), levels=int(rng.integers(1, 6)))
            order = evaluation_order(g)
            assert sorted(order) == [n.id for n in g.nodes] == list(range(len(g.nodes)))
            assert all(0 <= e.delay <= g.levels - 1 for e in g.edges)
            assert not any(e.src == e.dst and e.delay == 0 for e in g.edges)
            check_reachability(g)

    def test_provenance_points_within_eps(self, rng):
        g, space = random_genome(rng, n_paths=10)
        for nid, support in g.provenance.items():
            node = g.node(nid)
            for pid, dist in support:
                p = space.points[pid].pos
                assert dist == pytest.approx(math.hypot(p.x - node.pos.x, p.y - node.pos.y))
                assert dist < 0.05

    def test_type_roulette_uniform(self):
        space = SearchSpace(SpaceConfig(levels=1))
        path = make_path(space, 0, 0, interior(space, [(0.5, 0.5, 0.1)]))
        clusters, mapping = condense_paths([path], ClusterConfig())
        rng = np.random.default_rng(0)
        n = 100_000
        counts = np.zeros(6)
        for _ in range(n):
            g = build_genome([path], clusters, mapping, space, rng)
            counts[g.hidden[0].node_type] += 1
        assert np.all(np.abs(counts / n - 1 / 6) < 0.01)

    def test_type_roulette_follows_pheromones(self, rng):
        space = SearchSpace(SpaceConfig(levels=1))
        path = make_path(space, 0, 0, interior(space, [(0.5, 0.5, 0.1)]))
        space.points[path.points[1].point_id].type_pheromones[NodeType.LSTM] = 10.0
        clusters, mapping = condense_paths([path], ClusterConfig())
        types = [build_genome([path], clusters, mapping, space, rng).hidden[0].node_type for _ in range(2000)]
        assert types.count(NodeType.LSTM) / 2000 == pytest.approx(10 / 15, abs=0.04)


def check_reachability(g):
    fwd, bwd = {}, {}
    for e in g.edges:
        fwd.setdefault(e.src, set()).add(e.dst)
        bwd.setdefault(e.dst, set()).add(e.src)

    def closure(starts, adj):
        seen, todo = set(starts), list(starts)
        while todo:
            for m in adj.get(todo.pop(), ()):
                if m not in seen:
                    seen.add(m)
                    todo.append(m)
        return seen

    a = closure([n.id for n in g.inputs], fwd)
    b = closure([n.id for n in g.outputs], bwd)
    for n in g.nodes:
        if n.role != "output":
            assert n.id in a and n.id in b


class TestPrune:
    def test_drops_dead_ends_and_renumbers(self):
        P = Position(0.5, 0.5, 0)
        g = RnnGenome(
            2,
            [RnnNode(0, "input", P, None, 0, 0), RnnNode(1, "hidden", P, NodeType.GRU),
             RnnNode(2, "hidden", P, NodeType.MGU), RnnNode(3, "output", P, None, 0, 0)],
            [RnnEdge(0, 1, 1.0), RnnEdge(1, 3, 1.0), RnnEdge(0, 2, 1.0)],
            provenance={1: [(5, 0.0)], 2: [(6, 0.0)]},
        )
        p = prune(g)
        assert [n.id for n in p.nodes] == [0, 1, 2]
        assert [(e.src, e.dst) for e in p.edges] == [(0, 1), (1, 2)]
        assert p.provenance == {1: [(5, 0.0)]}

    def test_outputs_always_kept(self):
        P = Position(0.5, 0.5, 0)
        g = RnnGenome(1, [RnnNode(0, "output", P, None, 0, 0)], [])
        assert len(prune(g).nodes) == 1


class TestEncodings:
    def test_dot_empty_edges(self):
        g = RnnGenome(1, [RnnNode(0, "output", Position(0.5, 1, 0), None, 0, 0)], [])
        assert to_dot(g) == 'digraph rnn {\n  rankdir=LR;\n  n0 [label="out0", shape=doublecircle];\n}\n'

    def test_dot_deterministic_and_annotated(self, rng):
        g, _ = random_genome(rng, n_paths=8)
        text = to_dot(g)
        assert text == to_dot(g)
        edge_lines = [ln for ln in text.splitlines() if "->" in ln]
        keys = [tuple(int(t[1:]) for t in ln.split()[:3:2]) for ln in edge_lines]
        assert keys == sorted(keys)
        for e in g.edges:
            if e.delay:
                assert f"d={e.delay}" in text
        for n in g.hidden:
            assert f"{NodeType(n.node_type).name} L{n.pos.level}" in text

    def test_round_trip_random(self, rng):
        for _ in range(100):
            g, _ = random_genome(rng, n_paths=int(rng.integers(1, 8)))
            g.cell_params = {n.id: list(rng.normal(size=3)) for n in g.hidden[:2]}
            back = deserialize(serialize(g))
            assert back == g
            assert back.hash == g.hash

    def test_hash_ignores_provenance(self, rng):
        g, _ = random_genome(rng)
        h = g.hash
        g.provenance = {}
        assert g.hash == h

    def test_truncated(self, rng):
        g, _ = random_genome(rng)
        text = serialize(g)
        with pytest.raises(GenomeFormatError) as err:
            deserialize(text[: len(text) // 2])
        assert "line 1" in str(err.value)

    def test_unknown_version(self, rng):
        g, _ = random_genome(rng)
        d = g.to_dict()
        d["version"] = 99
        with pytest.raises(UnsupportedVersionError):
            deserialize(json.dumps(d))

    @pytest.mark.parametrize(
        "mutate, where",
        [
            (lambda d: d["nodes"][0].pop("x"), "$.nodes[0]"),
            (lambda d: d["nodes"][0].__setitem__("role", "sideways"), "$.nodes[0].role"),
            (lambda d: d["edges"][0].__setitem__("delay", "one"), "$.edges[0].delay"),
            (lambda d: d.__setitem__("cell_params", {"x": [1.0]}), "$.cell_params.x"),
            (lambda d: d.__setitem__("provenance", {"1": [[1]]}), "$.provenance.1"),
        ],
    )
    def test_schema_errors_carry_location(self, rng, mutate, where):
        g, _ = random_genome(rng)
        d = g.to_dict()
        mutate(d)
        with pytest.raises(GenomeFormatError) as err:
            from_dict(d)
        assert err.value.location == where

    def test_not_an_object(self):
        with pytest.raises(GenomeFormatError):
            deserialize("[1, 2]")

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=5))
    def test_float_exact_round_trip(self, ws):
        P = Position(0.5, 0.5, 0)
        nodes = [RnnNode(0, "input", P, None, 0, 0), RnnNode(1, "output", P, None, ws[0], 0)]
        g = RnnGenome(1, nodes, [RnnEdge(0, 1, w) for w in ws])
        assert deserialize(serialize(g)) == g
