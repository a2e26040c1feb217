"""Recurrent genomes built from condensed cant paths, plus DOT/JSON encodings.

JSON schema (version 1), fields always emitted in this order::

    {"version": 1, "levels": int,
     "nodes": [{"id", "role", "type", "level", "x", "y", "w", "bias", "index"}],
     "edges": [{"src", "dst", "weight", "delay"}],
     "cell_params": {"<node id>": [float, ...]},
     "provenance": {"<node id>": [[point_id, distance], ...]}}

``role`` is ``input``, ``hidden`` or ``output``; ``type`` is a ``NodeType``
name for hidden nodes and ``null`` otherwise; ``index`` is the input/output
column for anchors and ``-1`` for hidden nodes. The hash of a genome is the
SHA-256 of the compact encoding without ``provenance``.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Sequence

from .agents import Path
from .clustering import Cluster
from .errors import GenomeFormatError, InternalError, UnsupportedVersionError
from .space import NUM_NODE_TYPES, Position, SearchSpace, roulette

SCHEMA_VERSION = 1


class NodeType(IntEnum):
    SIMPLE = 0
    DELTA = 1
    GRU = 2
    LSTM = 3
    MGU = 4
    UGRNN = 5


assert len(NodeType) == NUM_NODE_TYPES


@dataclass
class RnnNode:
    id: int
    role: str
    pos: Position
    node_type: NodeType | None = None
    bias: float = 0.0
    index: int = -1


@dataclass
class RnnEdge:
    src: int
    dst: int
    weight: float
    delay: int = 0


@dataclass
class RnnGenome:
    levels: int
    nodes: list[RnnNode]
    edges: list[RnnEdge]
    # trained per-cell parameters, keyed by node id; absent means "initialize fresh"
    cell_params: dict[int, list[float]] = field(default_factory=dict)
    # node id -> [(space point id, distance to centroid)]
    provenance: dict[int, list[tuple[int, float]]] = field(default_factory=dict)

    def node(self, node_id: int) -> RnnNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    @property
    def inputs(self) -> list[RnnNode]:
        return [n for n in self.nodes if n.role == "input"]

    @property
    def outputs(self) -> list[RnnNode]:
        return [n for n in self.nodes if n.role == "output"]

    @property
    def hidden(self) -> list[RnnNode]:
        return [n for n in self.nodes if n.role == "hidden"]

    def node_weight(self, node_id: int) -> float:
        """Mean outgoing edge weight, or the bias for a node without fan-out."""
        ws = [e.weight for e in self.edges if e.src == node_id]
        if ws:
            return math.fsum(ws) / len(ws)
        return self.node(node_id).bias

    def to_dict(self, with_provenance: bool = True) -> dict:
        d = {
            "version": SCHEMA_VERSION,
            "levels": self.levels,
            "nodes": [
                {
                    "id": n.id,
                    "role": n.role,
                    "type": None if n.node_type is None else NodeType(n.node_type).name,
                    "level": n.pos.level,
                    "x": n.pos.x,
                    "y": n.pos.y,
                    "w": n.pos.w,
                    "bias": n.bias,
                    "index": n.index,
                }
                for n in self.nodes
            ],
            "edges": [
                {"src": e.src, "dst": e.dst, "weight": e.weight, "delay": e.delay} for e in self.edges
            ],
            "cell_params": {str(k): list(v) for k, v in sorted(self.cell_params.items())},
        }
        if with_provenance:
            d["provenance"] = {
                str(k): [[pid, dist] for pid, dist in v] for k, v in sorted(self.provenance.items())
            }
        return d

    @property
    def hash(self) -> str:
        blob = json.dumps(self.to_dict(with_provenance=False), separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _dist(a: Position, b: Position) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)


def _support(cluster: Cluster, space: SearchSpace, eps: float) -> list[tuple[int, float]]:
    """Space points near a centroid that a reward should reach."""
    best: dict[int, float] = {}
    c = cluster.centroid
    for m in cluster.members:
        cands = []
        if m.point_id is not None and m.point_id in space.points:
            cands.append(m.point_id)
        cands.extend(s for s in m.support if s in space.points)
        for pid in cands:
            d = _dist(space.points[pid].pos, c)
            if d < eps and d < best.get(pid, math.inf):
                best[pid] = d
    return sorted(best.items())


def build_genome(
    paths: Sequence[Path],
    clusters_by_level: dict[int, list[Cluster]],
    mapping: dict[tuple[int, int], tuple[int, int]],
    space: SearchSpace,
    rng,
    eps: float = 0.05,
) -> RnnGenome:
    """Turn condensed paths into a pruned genome.

    Consecutive points of a path become an edge between their nodes. Parallel
    edges are merged by averaging. A zero-delay edge that would run backwards
    in (level, y) order is dropped, which keeps the zero-delay graph acyclic.
    """
    nodes: list[RnnNode] = []
    input_ids: dict[tuple[int, int], int] = {}
    for lvl, idx in sorted({(p.level, p.input_index) for p in paths}):
        input_ids[(lvl, idx)] = len(nodes)
        nodes.append(RnnNode(len(nodes), "input", space.input_position(lvl, idx), None, 0.0, idx))

    hidden_ids: dict[tuple[int, int], int] = {}
    provenance: dict[int, list[tuple[int, float]]] = {}
    for lvl in sorted(clusters_by_level):
        for ci, cl in enumerate(clusters_by_level[lvl]):
            nid = len(nodes)
            hidden_ids[(lvl, ci)] = nid
            support = _support(cl, space, eps)
            if support:
                tp = [
                    math.fsum(space.points[pid].type_pheromones[t] for pid, _ in support) / len(support)
                    for t in range(NUM_NODE_TYPES)
                ]
            else:
                tp = [space.cfg.tau_init] * NUM_NODE_TYPES
            ntype = NodeType(roulette(tp, rng))
            c = cl.centroid
            nodes.append(RnnNode(nid, "hidden", Position(c.x, c.y, c.level, c.w), ntype, c.w))
            provenance[nid] = support

    output_ids: dict[int, int] = {}
    for idx in sorted({p.output_index for p in paths}):
        output_ids[idx] = len(nodes)
        nodes.append(RnnNode(len(nodes), "output", space.output_position(idx), None, 0.0, idx))

    def order_key(n: RnnNode):
        rank = {"input": 0, "hidden": 1, "output": 2}[n.role]
        if rank == 1:
            return (1, n.pos.level, n.pos.y, n.id)
        return (rank, 0, 0.0, n.id)

    contributions: dict[tuple[int, int, int], list[float]] = {}
    for pi, path in enumerate(paths):
        seq: list[tuple[int, float | None]] = [(input_ids[(path.level, path.input_index)], None)]
        prev_level = path.level
        for qi in range(1, len(path.points) - 1):
            pt = path.points[qi]
            if pt.pos.level < prev_level:
                raise InternalError(f"path {pi} descends from level {prev_level} to {pt.pos.level}")
            prev_level = pt.pos.level
            seq.append((hidden_ids[mapping[(pi, qi)]], pt.pos.w))
        seq.append((output_ids[path.output_index], None))

        for (a, wa), (b, wb) in zip(seq, seq[1:]):
            if a == b:
                continue
            src, dst = nodes[a], nodes[b]
            delay = max(src.pos.level - dst.pos.level, 0)
            if delay == 0 and order_key(dst) <= order_key(src):
                continue
            ws = [w for w in (wa, wb) if w is not None]
            weight = math.fsum(ws) / len(ws) if ws else 1.0
            contributions.setdefault((a, b, delay), []).append(weight)

    edges = [
        RnnEdge(a, b, math.fsum(ws) / len(ws), d) for (a, b, d), ws in sorted(contributions.items())
    ]
    genome = RnnGenome(space.levels, nodes, edges, {}, provenance)
    return prune(genome)


def prune(genome: RnnGenome) -> RnnGenome:
    """Drop nodes not on an input-to-output route and renumber ids densely.

    Output nodes are always kept so every genome yields a prediction.
    """
    fwd: dict[int, list[int]] = {}
    bwd: dict[int, list[int]] = {}
    for e in genome.edges:
        fwd.setdefault(e.src, []).append(e.dst)
        bwd.setdefault(e.dst, []).append(e.src)

    def reach(starts, adj):
        seen = set(starts)
        stack = list(starts)
        while stack:
            for nxt in adj.get(stack.pop(), ()):
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return seen

    from_in = reach([n.id for n in genome.inputs], fwd)
    to_out = reach([n.id for n in genome.outputs], bwd)
    keep = [n for n in genome.nodes if n.role == "output" or (n.id in from_in and n.id in to_out)]
    renum = {n.id: i for i, n in enumerate(keep)}
    nodes = [
        RnnNode(renum[n.id], n.role, n.pos, n.node_type, n.bias, n.index) for n in keep
    ]
    edges = [
        RnnEdge(renum[e.src], renum[e.dst], e.weight, e.delay)
        for e in genome.edges
        if e.src in renum and e.dst in renum
    ]
    return RnnGenome(
        genome.levels,
        nodes,
        edges,
        {renum[k]: v for k, v in genome.cell_params.items() if k in renum},
        {renum[k]: v for k, v in genome.provenance.items() if k in renum},
    )


def _node_label(n: RnnNode) -> str:
    if n.role == "input":
        return f"in{n.index} L{n.pos.level}"
    if n.role == "output":
        return f"out{n.index}"
    return f"{NodeType(n.node_type).name} L{n.pos.level}"


def to_dot(genome: RnnGenome) -> str:
    lines = ["digraph rnn {", "  rankdir=LR;"]
    for n in sorted(genome.nodes, key=lambda n: n.id):
        shape = {"input": "box", "output": "doublecircle"}.get(n.role, "ellipse")
        lines.append(f'  n{n.id} [label="{_node_label(n)}", shape={shape}];')
    for e in sorted(genome.edges, key=lambda e: (e.src, e.dst, e.delay)):
        if e.delay:
            lines.append(f'  n{e.src} -> n{e.dst} [label="{e.weight:.4f} d={e.delay}", style=dashed];')
        else:
            lines.append(f'  n{e.src} -> n{e.dst} [label="{e.weight:.4f}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def serialize(genome: RnnGenome) -> str:
    return json.dumps(genome.to_dict(), separators=(",", ":"))


def _field(obj, key, kind, where):
    if not isinstance(obj, dict) or key not in obj:
        raise GenomeFormatError(f"missing field {key!r}", where)
    val = obj[key]
    ok = {
        "int": isinstance(val, int) and not isinstance(val, bool),
        "num": isinstance(val, (int, float)) and not isinstance(val, bool),
        "str": isinstance(val, str),
        "list": isinstance(val, list),
        "dict": isinstance(val, dict),
    }[kind]
    if not ok:
        raise GenomeFormatError(f"field {key!r} should be {kind}", f"{where}.{key}")
    return val


def from_dict(d) -> RnnGenome:
    if not isinstance(d, dict):
        raise GenomeFormatError("genome must be a JSON object", "$")
    version = _field(d, "version", "int", "$")
    if version != SCHEMA_VERSION:
        raise UnsupportedVersionError(f"unsupported genome schema version {version}", "$.version")
    levels = _field(d, "levels", "int", "$")
    nodes = []
    for i, nd in enumerate(_field(d, "nodes", "list", "$")):
        where = f"$.nodes[{i}]"
        role = _field(nd, "role", "str", where)
        if role not in ("input", "hidden", "output"):
            raise GenomeFormatError(f"unknown role {role!r}", f"{where}.role")
        tname = nd.get("type") if isinstance(nd, dict) else None
        if role == "hidden":
            if tname not in NodeType.__members__:
                raise GenomeFormatError(f"unknown node type {tname!r}", f"{where}.type")
            ntype = NodeType[tname]
        else:
            ntype = None
        pos = Position(
            float(_field(nd, "x", "num", where)),
            float(_field(nd, "y", "num", where)),
            _field(nd, "level", "int", where),
            float(_field(nd, "w", "num", where)),
        )
        nodes.append(
            RnnNode(
                _field(nd, "id", "int", where),
                role,
                pos,
                ntype,
                float(_field(nd, "bias", "num", where)),
                _field(nd, "index", "int", where),
            )
        )
    edges = []
    for i, ed in enumerate(_field(d, "edges", "list", "$")):
        where = f"$.edges[{i}]"
        edges.append(
            RnnEdge(
                _field(ed, "src", "int", where),
                _field(ed, "dst", "int", where),
                float(_field(ed, "weight", "num", where)),
                _field(ed, "delay", "int", where),
            )
        )
    cell_params = {}
    for k, v in _field(d, "cell_params", "dict", "$").items():
        try:
            if not isinstance(v, list):
                raise TypeError("cell params must be a list")
            cell_params[int(k)] = [float(x) for x in v]
        except (TypeError, ValueError) as exc:
            raise GenomeFormatError(f"bad cell params: {exc}", f"$.cell_params.{k}") from None
    provenance = {}
    for k, v in d.get("provenance", {}).items():
        try:
            provenance[int(k)] = [(int(pid), float(dist)) for pid, dist in v]
        except (TypeError, ValueError) as exc:
            raise GenomeFormatError(f"bad provenance entry: {exc}", f"$.provenance.{k}") from None
    return RnnGenome(levels, nodes, edges, cell_params, provenance)


def deserialize(text: str) -> RnnGenome:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GenomeFormatError(exc.msg, f"line {exc.lineno} col {exc.colno}") from None
    return from_dict(d)
