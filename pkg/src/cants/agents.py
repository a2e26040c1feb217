"""Cant agents: evolvable movement behaviors and path generation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .space import Position, SearchSpace, center_of_mass, roulette

RATE_BOUNDS = (0.01, 0.98)
POLY_BOUNDS = (-1.0, 1.0)
FIELD_BOUNDS = (RATE_BOUNDS, RATE_BOUNDS, POLY_BOUNDS, POLY_BOUNDS)
MIN_SENSE_RANGE = 0.1
ARCHIVE_SIZE = 10
OUTPUT_Y = 0.99


@dataclass(frozen=True)
class CantBehavior:
    explore_rate: float
    sense_radius: float
    r1: float
    r2: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.explore_rate, self.sense_radius, self.r1, self.r2)

    @classmethod
    def from_values(cls, values) -> "CantBehavior":
        clipped = [min(max(float(v), lo), hi) for v, (lo, hi) in zip(values, FIELD_BOUNDS)]
        return cls(*clipped)

    def in_bounds(self) -> bool:
        return all(lo <= v <= hi for v, (lo, hi) in zip(self.as_tuple(), FIELD_BOUNDS))


@dataclass
class Cant:
    id: int
    behavior: CantBehavior
    rng: np.random.Generator
    # (behavior, fitness) pairs, best (lowest MSE) first
    archive: list[tuple[CantBehavior, float]] = field(default_factory=list)


class PointKind(str, Enum):
    INPUT = "input-anchor"
    OUTPUT = "output-anchor"
    EXPLORE = "exploration"
    EXPLOIT = "exploitation"


@dataclass(slots=True)
class PathPoint:
    pos: Position
    kind: PointKind
    point_id: int | None = None
    # ids of the space points an exploitation step was averaged from
    support: tuple[int, ...] = ()


@dataclass
class Path:
    level: int
    input_index: int
    output_index: int
    points: list[PathPoint]

    @property
    def interior(self) -> list[PathPoint]:
        return self.points[1:-1]


def random_behavior(rng) -> CantBehavior:
    return CantBehavior(
        rng.uniform(*RATE_BOUNDS),
        rng.uniform(*RATE_BOUNDS),
        rng.uniform(*POLY_BOUNDS),
        rng.uniform(*POLY_BOUNDS),
    )


def spawn_cant(rng, cant_id: int = 0) -> Cant:
    return Cant(cant_id, random_behavior(rng), rng)


def perceived_sense_range(b: CantBehavior, y: float) -> float:
    return max(b.sense_radius - (y * y * b.r1 + y * b.r2), MIN_SENSE_RANGE)


def explore_step(b: CantBehavior, pos: Position, climbing: bool, rng, bisect: float | None = None) -> Position:
    """Random step of length equal to the perceived sense range.

    Same-level moves pick a direction in the forward half plane; climbs may
    head anywhere, so a recurrent hop can land behind the current ``y``.
    """
    if bisect is None:
        bisect = rng.uniform(-1.0, 1.0) if climbing else rng.uniform(0.0, 1.0)
    theta = bisect * math.pi
    step = perceived_sense_range(b, pos.y)
    w = rng.uniform(-1.0, 1.0)
    return Position(pos.x + step * math.cos(theta), pos.y + step * math.sin(theta), pos.level, w).clamped()


def exploit_step(b: CantBehavior, pos: Position, sensed) -> Position:
    return center_of_mass(sensed)


def take_path(
    cant: Cant,
    space: SearchSpace,
    rng=None,
    min_progress: float = 0.1,
    max_per_level: int = 10,
) -> Path:
    """Walk from a chosen input anchor to the output edge.

    Each step may first climb to an older lag level, then either exploits
    (moves to the pheromone center of mass it senses) or explores (a random
    step, deposited into the space). Same-level steps advance at least
    ``min_progress`` in y and a level holds at most ``max_per_level`` points.
    """
    rng = cant.rng if rng is None else rng
    b = cant.behavior
    levels = space.levels
    budget = max_per_level * levels

    level = space.select_start_level(rng)
    inp = space.select_input(level, rng)
    pos = space.input_position(level, inp)
    points = [PathPoint(pos, PointKind.INPUT)]
    per_level = [0] * levels
    own: set[int] = set()

    while pos.y < OUTPUT_Y and len(points) - 1 < budget:
        climb = False
        if pos.level < levels - 1:
            if per_level[pos.level] >= max_per_level:
                climb = True
            else:
                climb = roulette(space.climb_weights(pos.level), rng) == 1
        elif per_level[pos.level] >= max_per_level:
            break
        target = space.select_climb_level(pos.level, rng) if climb else pos.level
        here = Position(pos.x, pos.y, target, pos.w)

        sensed = []
        if rng.random() >= b.explore_rate:
            radius = perceived_sense_range(b, pos.y)
            # a cant does not follow the trail it is laying down right now
            sensed = [
                p for p in space.query_radius(here, radius, same_level_forward_only=not climb)
                if p.id not in own
            ]
        if sensed:
            new = exploit_step(b, here, sensed)
            kind = PointKind.EXPLOIT
        else:
            new = explore_step(b, here, climb, rng)
            kind = PointKind.EXPLORE
        if not climb and new.y < pos.y + min_progress:
            new.y = min(pos.y + min_progress, 1.0)

        if kind is PointKind.EXPLORE:
            pid = space.deposit(new)
            own.add(pid)
            points.append(PathPoint(new, kind, pid))
        else:
            points.append(PathPoint(new, kind, None, tuple(p.id for p in sensed)))
        per_level[target] += 1
        pos = new

    out = space.select_output(rng)
    end = Position(space.output_x[out], 1.0, pos.level, pos.w)
    points.append(PathPoint(end, PointKind.OUTPUT))
    return Path(level, inp, out, points)


def mutate(b: CantBehavior, rng) -> CantBehavior:
    return random_behavior(rng)


def crossover(b1: CantBehavior, b2: CantBehavior, rng, u: float | None = None) -> CantBehavior:
    """Arithmetic line crossover ``b1 + u * (b2 - b1)`` with one ``u`` for all fields."""
    if u is None:
        u = rng.random()
    return CantBehavior.from_values(x1 + u * (x2 - x1) for x1, x2 in zip(b1.as_tuple(), b2.as_tuple()))


def archive_insert(cant: Cant, fitness: float) -> bool:
    arch = cant.archive
    if len(arch) >= ARCHIVE_SIZE and not fitness < arch[-1][1]:
        return False
    if len(arch) >= ARCHIVE_SIZE:
        arch.pop()
    i = 0
    while i < len(arch) and arch[i][1] <= fitness:
        i += 1
    arch.insert(i, (cant.behavior, fitness))
    return True


def evolve(cant: Cant, fitness: float, sigma_mutation: float = 0.2, rng=None) -> str:
    """Archive the current behavior if it earned it, then mutate or cross over.

    Returns the event name (``"mutate"`` or ``"crossover"``) for audit logs.
    """
    if math.isnan(fitness):
        raise ValueError("fitness must not be NaN")
    rng = cant.rng if rng is None else rng
    archive_insert(cant, fitness)
    if len(cant.archive) < ARCHIVE_SIZE or rng.random() < sigma_mutation:
        cant.behavior = mutate(cant.behavior, rng)
        return "mutate"
    cant.behavior = crossover(cant.archive[0][0], cant.archive[1][0], rng)
    return "crossover"
