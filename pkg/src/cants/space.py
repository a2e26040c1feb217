"""Stacked-plane continuous search space and its pheromone bookkeeping.

Each lag level is a unit square; ``y = 0`` is the input edge and ``y = 1`` the
output edge. Points additionally carry a synaptic-weight coordinate ``w``,
which is what lets the colony search weights without gradients.
"""
from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Sequence

from .errors import ConfigError

if TYPE_CHECKING:
    from .genome import RnnGenome

NUM_NODE_TYPES = 6
REMOVAL_TOL = 1e-9


@dataclass(slots=True)
class Position:
    x: float
    y: float
    level: int
    w: float = 0.0

    def clamped(self) -> "Position":
        return Position(min(max(self.x, 0.0), 1.0), min(max(self.y, 0.0), 1.0), self.level, self.w)


@dataclass(slots=True)
class PheromonePoint:
    id: int
    pos: Position
    pheromone: float
    type_pheromones: list[float] = field(default_factory=list)


@dataclass
class SpaceConfig:
    levels: int = 5
    tau_init: float = 1.0
    tau_max: float = 10.0
    tau_min: float = 0.1
    decay: float = 0.05
    deposit_const: float = 0.5
    input_count: int = 1
    output_count: int = 1

    def validate(self) -> None:
        if self.levels < 1:
            raise ConfigError(f"levels must be >= 1, got {self.levels}")
        if not self.tau_min < self.tau_init <= self.tau_max:
            raise ConfigError(
                f"need tau_min < tau_init <= tau_max, got "
                f"{self.tau_min}, {self.tau_init}, {self.tau_max}"
            )
        if not 0.0 < self.decay < 1.0:
            raise ConfigError(f"decay must lie in (0, 1), got {self.decay}")
        if self.deposit_const <= 0.0:
            raise ConfigError(f"deposit_const must be positive, got {self.deposit_const}")
        if self.input_count < 1 or self.output_count < 1:
            raise ConfigError("input_count and output_count must be >= 1")


def roulette(weights: Sequence[float], rng) -> int:
    """Index drawn with probability proportional to ``weights`` (one uniform draw)."""
    total = math.fsum(weights)
    u = rng.random() * total
    acc = 0.0
    for i, wgt in enumerate(weights):
        acc += wgt
        if u < acc:
            return i
    return len(weights) - 1


def spread(n: int) -> list[float]:
    """Uniform x coordinates for ``n`` anchor nodes along an edge of the plane."""
    if n == 1:
        return [0.5]
    return [i / (n - 1) for i in range(n)]


def center_of_mass(points: Sequence[PheromonePoint]) -> Position:
    """Pheromone-weighted mean of ``(x, y, w)``; the level of the first point is kept."""
    if not points:
        raise ValueError("center_of_mass needs at least one point")
    total = math.fsum(p.pheromone for p in points)
    share = [p.pheromone / total for p in points]
    return Position(
        math.fsum(s * p.pos.x for s, p in zip(share, points)),
        math.fsum(s * p.pos.y for s, p in zip(share, points)),
        points[0].pos.level,
        math.fsum(s * p.pos.w for s, p in zip(share, points)),
    ).clamped()


class SearchSpace:
    def __init__(self, cfg: SpaceConfig):
        cfg.validate()
        self.cfg = cfg
        self.points: dict[int, PheromonePoint] = {}
        # per level: (y, id) keys kept sorted for range scans along y
        self._index: list[list[tuple[float, int]]] = [[] for _ in range(cfg.levels)]
        self._next_id = 0
        self.level_pheromones = [2.0 * (lvl + 1) for lvl in range(cfg.levels)]
        self.input_pheromones = [[cfg.tau_init] * cfg.input_count for _ in range(cfg.levels)]
        self.output_pheromones = [cfg.tau_init] * cfg.output_count
        self.input_x = spread(cfg.input_count)
        self.output_x = spread(cfg.output_count)

    @property
    def levels(self) -> int:
        return self.cfg.levels

    def __len__(self) -> int:
        return len(self.points)

    def input_position(self, level: int, index: int) -> Position:
        return Position(self.input_x[index], 0.0, level, 0.0)

    def output_position(self, index: int) -> Position:
        return Position(self.output_x[index], 1.0, 0, 0.0)

    def total_pheromone(self) -> float:
        return math.fsum(p.pheromone for p in self.points.values())

    def level_points(self, level: int) -> list[PheromonePoint]:
        return [self.points[pid] for _, pid in self._index[level]]

    # -- discrete choices -------------------------------------------------

    def select_start_level(self, rng) -> int:
        return roulette(self.level_pheromones, rng)

    def select_climb_level(self, current: int, rng) -> int:
        if current >= self.levels - 1:
            return current
        return current + 1 + roulette(self.level_pheromones[current + 1:], rng)

    def climb_weights(self, current: int) -> tuple[float, float]:
        """(stay, climb) weights used to decide whether the next step climbs."""
        return self.level_pheromones[current], math.fsum(self.level_pheromones[current + 1:])

    def select_input(self, level: int, rng) -> int:
        return roulette(self.input_pheromones[level], rng)

    def select_output(self, rng) -> int:
        return roulette(self.output_pheromones, rng)

    # -- point store ------------------------------------------------------

    def deposit(self, pos: Position, pheromone: float | None = None) -> int:
        if not 0 <= pos.level < self.levels:
            raise ValueError(f"level {pos.level} outside [0, {self.levels})")
        tau = self.cfg.tau_init if pheromone is None else pheromone
        pid = self._next_id
        self._next_id += 1
        self.points[pid] = PheromonePoint(
            pid,
            pos.clamped(),
            min(tau, self.cfg.tau_max),
            [self.cfg.tau_init] * NUM_NODE_TYPES,
        )
        bisect.insort(self._index[pos.level], (self.points[pid].pos.y, pid))
        return pid

    def query_radius(self, center: Position, radius: float, same_level_forward_only: bool) -> list[PheromonePoint]:
        """Points on ``center.level`` within ``radius`` (inclusive) of ``center`` in (x, y).

        With ``same_level_forward_only`` only points at or ahead of ``center.y``
        are returned, since a cant never looks back on the plane it walks.
        """
        if radius <= 0:
            raise ValueError("radius must be positive")
        keys = self._index[center.level]
        lo_y = center.y if same_level_forward_only else center.y - radius
        lo = bisect.bisect_left(keys, (lo_y, -1))
        hi = bisect.bisect_right(keys, (center.y + radius, math.inf))
        out = []
        cx, cy = center.x, center.y
        for _, pid in keys[lo:hi]:
            p = self.points[pid]
            if math.hypot(p.pos.x - cx, p.pos.y - cy) <= radius:
                out.append(p)
        return out

    # -- reward and evaporation --------------------------------------------

    def _bump(self, value: float, amount: float) -> float:
        return min(value + amount, self.cfg.tau_max)

    def reward_genome(self, genome: "RnnGenome", eps: float, deposit_const: float | None = None) -> int:
        """Reinforce everything a population-entering genome was built from.

        Points backing each hidden node gain ``deposit_const * (1 - d / eps)``
        where ``d`` is their distance to the node's centroid, and their weight
        coordinate moves halfway toward the node's weight. Returns the number
        of points rewarded; ids that already evaporated are skipped.
        """
        const = self.cfg.deposit_const if deposit_const is None else deposit_const
        rewarded = 0
        used_levels = set()
        for node in genome.nodes:
            if node.role == "input":
                used_levels.add(node.pos.level)
                lvl_row = self.input_pheromones[node.pos.level]
                lvl_row[node.index] = self._bump(lvl_row[node.index], const)
                continue
            if node.role == "output":
                self.output_pheromones[node.index] = self._bump(self.output_pheromones[node.index], const)
                continue
            used_levels.add(node.pos.level)
            node_w = genome.node_weight(node.id)
            for pid, dist in genome.provenance.get(node.id, ()):
                p = self.points.get(pid)
                if p is None:
                    continue
                frac = max(0.0, 1.0 - dist / eps)
                p.pheromone = self._bump(p.pheromone, const * frac)
                p.pos.w = 0.5 * (p.pos.w + node_w)
                p.type_pheromones[node.node_type] = self._bump(p.type_pheromones[node.node_type], const)
                rewarded += 1
        for lvl in used_levels:
            self.level_pheromones[lvl] = self._bump(self.level_pheromones[lvl], const)
        return rewarded

    def decay_all(self) -> int:
        """One evaporation tick. Returns how many points vanished."""
        cfg = self.cfg
        dec, floor = cfg.decay, cfg.tau_min + cfg.decay
        dead = []
        for pid, p in self.points.items():
            p.pheromone -= dec
            # tolerance so a point sitting exactly one decay above the threshold goes
            if p.pheromone <= cfg.tau_min + REMOVAL_TOL:
                dead.append(pid)
            else:
                tp = p.type_pheromones
                for i in range(len(tp)):
                    tp[i] = max(tp[i] - dec, floor)
        for pid in dead:
            del self.points[pid]
        if dead:
            self._index = [[k for k in keys if k[1] in self.points] for keys in self._index]

        self.level_pheromones = [max(v - dec, floor) for v in self.level_pheromones]
        self.input_pheromones = [[max(v - dec, floor) for v in row] for row in self.input_pheromones]
        self.output_pheromones = [max(v - dec, floor) for v in self.output_pheromones]
        return len(dead)

    # -- export -----------------------------------------------------------

    def snapshot_rows(self) -> Iterable[tuple[int, float, float, float, float]]:
        for pid in sorted(self.points):
            p = self.points[pid]
            yield p.pos.level, p.pos.x, p.pos.y, p.pos.w, p.pheromone

    def write_snapshot(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["level", "x", "y", "w", "pheromone"])
            writer.writerows(self.snapshot_rows())
