import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cants.agents import (
    ARCHIVE_SIZE, Cant, CantBehavior, PointKind, archive_insert, crossover, evolve, explore_step,
    exploit_step, mutate, perceived_sense_range, spawn_cant, take_path,
)
from cants.space import PheromonePoint, Position, SearchSpace, SpaceConfig, center_of_mass

behaviors = st.builds(
    CantBehavior,
    st.floats(0.01, 0.98), st.floats(0.01, 0.98), st.floats(-1, 1), st.floats(-1, 1),
)


def hull_ok(b1, b2, c):
    return all(min(x, y) - 1e-12 <= z <= max(x, y) + 1e-12 for x, y, z in zip(b1.as_tuple(), b2.as_tuple(), c.as_tuple()))


class TestSpawn:
    def test_bounds(self, rng):
        for _ in range(10_000):
            assert spawn_cant(rng).behavior.in_bounds()

    def test_replay(self):
        a = spawn_cant(np.random.default_rng(3)).behavior
        b = spawn_cant(np.random.default_rng(3)).behavior
        assert a == b

    def test_explore_rate_mean(self, rng):
        rates = [spawn_cant(rng).behavior.explore_rate for _ in range(100_000)]
        assert abs(np.mean(rates) - 0.495) < 0.005

    def test_archive_starts_empty(self, rng):
        assert spawn_cant(rng).archive == []


class TestSenseRange:
    def test_zero_polynomial(self):
        b = CantBehavior(0.5, 0.5, 0.0, 0.0)
        assert all(perceived_sense_range(b, y) == 0.5 for y in (0, 0.3, 1))

    def test_floor(self):
        assert perceived_sense_range(CantBehavior(0.5, 0.2, 1.0, 1.0), 1.0) == 0.1

    def test_hand_value(self):
        b = CantBehavior(0.5, 0.6, -0.4, 0.2)
        assert perceived_sense_range(b, 0.5) == pytest.approx(0.6)

    @given(behaviors, st.floats(0, 1))
    def test_never_below_floor(self, b, y):
        assert perceived_sense_range(b, y) >= 0.1


class TestSteps:
    def test_bisect_half_is_pure_forward(self, rng):
        b = CantBehavior(0.5, 0.3, 0.0, 0.0)
        p = explore_step(b, Position(0.4, 0.2, 1), False, rng, bisect=0.5)
        assert p.x == pytest.approx(0.4, abs=1e-15)
        assert p.y == pytest.approx(0.5)
        assert p.level == 1
        assert -1 <= p.w <= 1

    def test_clamped(self, rng):
        b = CantBehavior(0.5, 0.98, -1.0, -1.0)
        for _ in range(200):
            p = explore_step(b, Position(0.99, 0.99, 0), bool(rng.integers(2)), rng)
            assert 0 <= p.x <= 1 and 0 <= p.y <= 1

    def test_forward_half_plane(self, rng):
        for _ in range(10_000):
            b = spawn_cant(rng).behavior
            start = Position(*rng.random(2), 0)
            assert explore_step(b, start, False, rng).y >= start.y

    def test_climbing_can_go_back(self, rng):
        b = CantBehavior(0.5, 0.5, 0.0, 0.0)
        ys = [explore_step(b, Position(0.5, 0.5, 0), True, rng).y for _ in range(200)]
        assert min(ys) < 0.5

    def test_exploit_single_point(self):
        pt = PheromonePoint(0, Position(0.3, 0.8, 2, 0.7), 4.0)
        p = exploit_step(CantBehavior(0.1, 0.1, 0, 0), Position(0.3, 0.6, 2), [pt])
        assert (p.x, p.y, p.w, p.level) == (0.3, 0.8, 0.7, 2)

    def test_exploit_midpoint(self):
        pts = [PheromonePoint(0, Position(0.2, 0.6, 0, 0.0), 2.0), PheromonePoint(1, Position(0.4, 0.8, 0, 1.0), 2.0)]
        p = exploit_step(CantBehavior(0.1, 0.1, 0, 0), Position(0, 0, 0), pts)
        assert (p.x, p.y, p.w) == pytest.approx((0.3, 0.7, 0.5))

    def test_exploit_is_center_of_mass(self, rng):
        pts = [PheromonePoint(i, Position(*rng.random(2), 1, rng.normal()), rng.uniform(0.2, 9)) for i in range(8)]
        assert exploit_step(CantBehavior(0.1, 0.1, 0, 0), Position(0, 0, 1), pts) == center_of_mass(pts)


def check_path(path, levels):
    assert path.points[0].kind is PointKind.INPUT and path.points[0].pos.y == 0.0
    assert path.points[-1].kind is PointKind.OUTPUT and path.points[-1].pos.y == 1.0
    assert len(path.interior) <= 10 * levels
    per_level = [0] * levels
    prev = path.points[0].pos
    assert prev.level == path.level
    for pt in path.interior:
        assert pt.pos.level >= prev.level
        if pt.pos.level == prev.level:
            assert pt.pos.y >= prev.y
        per_level[pt.pos.level] += 1
        prev = pt.pos
    assert max(per_level, default=0) <= 10


class TestTakePath:
    def test_structure(self, rng):
        space = SearchSpace(SpaceConfig(levels=5, input_count=3))
        for i in range(500):
            check_path(take_path(spawn_cant(np.random.default_rng(i)), space, rng), 5)

    def test_high_explore_rate_on_empty_space(self):
        for seed in range(50):
            space = SearchSpace(SpaceConfig())
            cant = Cant(0, CantBehavior(0.98, 0.3, 0.0, 0.0), np.random.default_rng(seed))
            assert all(p.kind is PointKind.EXPLORE for p in take_path(cant, space).interior)

    def test_explorations_are_deposited(self, rng):
        space = SearchSpace(SpaceConfig())
        path = take_path(spawn_cant(rng), space)
        ids = [p.point_id for p in path.interior if p.kind is PointKind.EXPLORE]
        assert len(space) == len(ids) and set(ids) == set(space.points)

    def test_at_most_ten_per_level(self):
        # a tiny sense radius with a flat profile gives the minimum 0.1 step
        space = SearchSpace(SpaceConfig(levels=1))
        cant = Cant(0, CantBehavior(0.98, 0.01, 0.0, 0.0), np.random.default_rng(0))
        path = take_path(cant, space)
        assert len(path.interior) <= 10
        check_path(path, 1)

    def test_replay(self):
        def run():
            space = SearchSpace(SpaceConfig(input_count=2))
            cants = [spawn_cant(np.random.default_rng(i), i) for i in range(4)]
            return [[(p.pos, p.kind, p.point_id, p.support) for p in take_path(c, space).points] for c in cants]

        assert run() == run()

    def test_exploitation_records_support(self):
        space = SearchSpace(SpaceConfig(levels=1))
        for y in np.linspace(0.05, 0.95, 19):
            space.deposit(Position(0.5, float(y), 0), 5.0)
        cant = Cant(0, CantBehavior(0.01, 0.3, 0.0, 0.0), np.random.default_rng(1))
        path = take_path(cant, space)
        exploits = [p for p in path.interior if p.kind is PointKind.EXPLOIT]
        assert exploits and all(p.support and p.point_id is None for p in exploits)


class TestGA:
    def test_mutate_ignores_input(self):
        a = mutate(CantBehavior(0.01, 0.01, -1, -1), np.random.default_rng(5))
        b = mutate(CantBehavior(0.98, 0.98, 1, 1), np.random.default_rng(5))
        assert a == b

    def test_mutate_bounds(self, rng):
        b = CantBehavior(0.5, 0.5, 0, 0)
        for _ in range(10_000):
            b = mutate(b, rng)
            assert b.in_bounds()

    def test_crossover_fixed_point(self, rng):
        b = CantBehavior(0.3, 0.6, -0.2, 0.9)
        assert crossover(b, b, rng) == b

    def test_crossover_endpoints(self, rng):
        b1, b2 = CantBehavior(0.1, 0.2, -0.5, 0.5), CantBehavior(0.9, 0.8, 0.5, -0.5)
        assert crossover(b1, b2, rng, u=0.0) == b1
        assert crossover(b1, b2, rng, u=1.0).as_tuple() == pytest.approx(b2.as_tuple())

    def test_crossover_hull(self, rng):
        for _ in range(10_000):
            b1, b2 = spawn_cant(rng).behavior, spawn_cant(rng).behavior
            assert hull_ok(b1, b2, crossover(b1, b2, rng))

    def test_crossover_shared_coefficient(self):
        b1, b2 = CantBehavior(0.1, 0.1, -1, -1), CantBehavior(0.9, 0.5, 1, 0)
        c = crossover(b1, b2, None, u=0.25)
        fracs = [(z - x) / (y - x) for x, y, z in zip(b1.as_tuple(), b2.as_tuple(), c.as_tuple())]
        assert fracs == pytest.approx([0.25] * 4)

    def test_first_evolve_mutates(self, rng):
        cant = spawn_cant(rng)
        assert evolve(cant, 0.5, sigma_mutation=0.0) == "mutate"
        assert len(cant.archive) == 1

    def test_sigma_one_always_mutates(self, rng):
        cant = spawn_cant(rng)
        for i in range(40):
            assert evolve(cant, float(i), sigma_mutation=1.0) == "mutate"

    def test_full_archive_sigma_zero_crosses(self, rng):
        cant = spawn_cant(rng)
        for i in range(ARCHIVE_SIZE):
            evolve(cant, float(i), 0.0)
        for f in rng.random(100):
            event = evolve(cant, float(f), 0.0)
            assert event == "crossover"
            assert hull_ok(cant.archive[0][0], cant.archive[1][0], cant.behavior)

    def test_archive_sorted_and_bounded(self, rng):
        cant = spawn_cant(rng)
        for f in rng.random(200):
            archive_insert(cant, float(f))
            fits = [fit for _, fit in cant.archive]
            assert fits == sorted(fits) and len(fits) <= ARCHIVE_SIZE

    def test_archive_rejects_non_improvement_when_full(self, rng):
        cant = spawn_cant(rng)
        for f in range(10):
            archive_insert(cant, float(f))
        assert not archive_insert(cant, 9.0)
        assert archive_insert(cant, 8.5)
        assert [f for _, f in cant.archive][-1] == 8.5

    def test_nan_rejected(self, rng):
        with pytest.raises(ValueError):
            evolve(spawn_cant(rng), math.nan)

    @settings(max_examples=300, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 2), st.floats(0, 10)), max_size=40), st.integers(0, 2**32 - 1))
    def test_bounds_under_any_sequence(self, ops, seed):
        rng = np.random.default_rng(seed)
        cant = spawn_cant(rng)
        for op, f in ops:
            if op == 0:
                cant.behavior = mutate(cant.behavior, rng)
            elif op == 1:
                cant.behavior = crossover(cant.behavior, spawn_cant(rng).behavior, rng)
            else:
                evolve(cant, f, 0.2)
            assert cant.behavior.in_bounds()
            assert all(b.in_bounds() for b, _ in cant.archive)
