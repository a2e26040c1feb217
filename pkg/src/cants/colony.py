"""The manager-side optimization loop: candidate generation, population, feedback."""
from __future__ import annotations

import bisect
import math
import time
from dataclasses import asdict, dataclass, fields

import numpy as np

from .agents import Cant, evolve, spawn_cant, take_path
from .clustering import ClusterConfig, condense_paths
from .errors import ConfigError
from .genome import RnnGenome, build_genome
from .rnn import WORST_FITNESS, FitnessReport
from .space import SearchSpace, SpaceConfig

MODES = ("bp_free", "bp")


def normalize_mode(mode: str) -> str:
    m = mode.replace("-", "_").lower()
    if m not in MODES:
        raise ConfigError(f"mode must be one of bp-free, bp; got {mode!r}")
    return m


@dataclass
class RunConfig:
    mode: str = "bp_free"
    iterations: int = 100
    agents: int = 15
    sigma_mutation: float = 0.2
    seed: int = 0
    levels: int = 5
    tau_init: float = 1.0
    tau_max: float = 10.0
    tau_min: float = 0.1
    decay: float = 0.05
    deposit_const: float = 0.5
    eps: float = 0.05
    min_pts: int = 2
    population_size: int = 10
    epochs: int = 30
    lr: float = 0.001
    # off for the random-search baseline: no reward and no behavior evolution
    feedback: bool = True

    def validate(self) -> None:
        self.mode = normalize_mode(self.mode)
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if self.agents < 1:
            raise ConfigError(f"agents must be >= 1, got {self.agents}")
        if not 0.0 <= self.sigma_mutation <= 1.0:
            raise ConfigError(f"sigma_mutation must lie in [0, 1], got {self.sigma_mutation}")
        if self.population_size < 1:
            raise ConfigError("population_size must be >= 1")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr < 0:
            raise ConfigError(f"lr must be >= 0, got {self.lr}")
        self.space_config(1).validate()
        self.cluster_config().validate()

    def space_config(self, input_count: int, output_count: int = 1) -> SpaceConfig:
        return SpaceConfig(
            self.levels, self.tau_init, self.tau_max, self.tau_min, self.decay,
            self.deposit_const, input_count, output_count,
        )

    def cluster_config(self) -> ClusterConfig:
        return ClusterConfig(self.eps, self.min_pts)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


class Population:
    """Fixed-capacity archive sorted by fitness, lower is better."""

    def __init__(self, capacity: int = 10):
        self.capacity = capacity
        self._fit: list[float] = []
        self._genomes: list[RnnGenome] = []

    def __len__(self) -> int:
        return len(self._fit)

    @property
    def fitnesses(self) -> list[float]:
        return list(self._fit)

    @property
    def entries(self) -> list[tuple[RnnGenome, float]]:
        return list(zip(self._genomes, self._fit))

    @property
    def best(self) -> tuple[RnnGenome, float] | None:
        return (self._genomes[0], self._fit[0]) if self._fit else None

    @property
    def best_fitness(self) -> float:
        return self._fit[0] if self._fit else math.inf

    def insert(self, genome: RnnGenome, fitness: float) -> bool:
        if not math.isfinite(fitness):
            raise ValueError("population fitness must be finite")
        if len(self._fit) >= self.capacity and not fitness < self._fit[-1]:
            return False
        # bisect_right places a newcomer after incumbents of equal fitness
        i = bisect.bisect_right(self._fit, fitness)
        self._fit.insert(i, fitness)
        self._genomes.insert(i, genome)
        if len(self._fit) > self.capacity:
            self._fit.pop()
            self._genomes.pop()
        return True


@dataclass
class IterationRecord:
    iteration: int
    candidate_hash: str
    fitness: float
    population_best: float
    space_points: int
    inserted: bool
    status: str
    gen_time: float
    eval_time: float
    train_time: float

    # columns that are identical across replays of a seeded single-worker run
    LOG_COLUMNS = (
        "iteration", "candidate_hash", "fitness", "population_best",
        "space_points", "inserted", "status",
    )
    TIMING_COLUMNS = ("iteration", "gen_time", "eval_time", "train_time")

    def log_row(self) -> list:
        return [
            self.iteration, self.candidate_hash, repr(self.fitness), repr(self.population_best),
            self.space_points, int(self.inserted), self.status,
        ]

    def timing_row(self) -> list:
        return [self.iteration, f"{self.gen_time:.6f}", f"{self.eval_time:.6f}", f"{self.train_time:.6f}"]


@dataclass
class Candidate:
    genome: RnnGenome
    gen_time: float
    index: int


class Colony:
    def __init__(self, cfg: RunConfig, input_count: int, output_count: int = 1):
        cfg.validate()
        self.cfg = cfg
        self.space = SearchSpace(cfg.space_config(input_count, output_count))
        seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.agents + 1)
        self.rng = np.random.default_rng(seeds[0])
        self.cants: list[Cant] = [
            spawn_cant(np.random.default_rng(s), i) for i, s in enumerate(seeds[1:])
        ]
        self.population = Population(cfg.population_size)
        self.records: list[IterationRecord] = []
        # (iteration, cant id, explore_rate, sense_radius, r1, r2, event)
        self.behavior_log: list[tuple] = []
        self.generated = 0
        self.on_improvement = None

    def generate_candidate(self) -> Candidate:
        t0 = time.perf_counter()
        paths = [take_path(c, self.space) for c in self.cants]
        clusters, mapping = condense_paths(paths, self.cfg.cluster_config())
        genome = build_genome(paths, clusters, mapping, self.space, self.rng, self.cfg.eps)
        cand = Candidate(genome, time.perf_counter() - t0, self.generated)
        self.generated += 1
        return cand

    def on_result(
        self,
        genome: RnnGenome,
        report: FitnessReport,
        candidate_hash: str | None = None,
        gen_time: float = 0.0,
    ) -> IterationRecord:
        """Apply one evaluation: insert, reward on entry, decay, evolve the cants."""
        fit = report.mse
        usable = math.isfinite(fit) and fit < WORST_FITNESS
        if not usable:
            fit = WORST_FITNESS
        before = self.population.best_fitness
        inserted = usable and self.population.insert(genome, fit)
        if inserted and self.cfg.feedback:
            self.space.reward_genome(genome, self.cfg.eps, self.cfg.deposit_const)
        self.space.decay_all()

        it = len(self.records)
        for c in self.cants:
            event = evolve(c, fit, self.cfg.sigma_mutation) if self.cfg.feedback else "none"
            self.behavior_log.append((it, c.id, *c.behavior.as_tuple(), event))

        rec = IterationRecord(
            it,
            candidate_hash or genome.hash,
            fit,
            self.population.best_fitness,
            len(self.space),
            inserted,
            report.status,
            gen_time,
            report.eval_wall_time,
            report.train_wall_time,
        )
        self.records.append(rec)
        if self.population.best_fitness < before and self.on_improvement is not None:
            self.on_improvement(self)
        return rec

    def summary(self) -> dict:
        best = self.population.best
        return {
            "mode": self.cfg.mode,
            "iterations": len(self.records),
            "generated": self.generated,
            "best_mse": best[1] if best else None,
            "best_hash": best[0].hash if best else None,
            "population": self.population.fitnesses,
        }

    def timing_summary(self) -> dict:
        return {
            "total_gen_time": math.fsum(r.gen_time for r in self.records),
            "total_eval_time": math.fsum(r.eval_time + r.train_time for r in self.records),
            "total_train_time": math.fsum(r.train_time for r in self.records),
        }

