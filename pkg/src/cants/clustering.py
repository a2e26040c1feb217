"""Density clustering of path points into neuron centroids."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

from .agents import Path, PathPoint
from .errors import ConfigError
from .space import Position

NOISE = -1


@dataclass
class ClusterConfig:
    eps: float = 0.05
    min_pts: int = 2

    def validate(self) -> None:
        if not self.eps > 0:
            raise ConfigError(f"eps must be positive, got {self.eps}")
        if self.min_pts < 1:
            raise ConfigError(f"min_pts must be >= 1, got {self.min_pts}")


@dataclass
class Cluster:
    centroid: Position
    members: list[PathPoint] = field(default_factory=list)
    source_level: int = 0


# only half of the eight surrounding cells, so every cell pair is visited once
_HALF_NEIGHBOURS = ((1, -1), (1, 0), (1, 1), (0, 1))


def neighborhoods(xy: Sequence[tuple[float, float]], eps: float) -> list[list[int]]:
    """Indices within ``eps`` (inclusive, self included) of every point.

    Points are hashed into square cells a hair wider than ``eps``, so any
    neighbour sits in the same or an adjacent cell and only those pairs are
    compared.
    """
    cell = eps * (1.0 + 1e-9)
    grid: dict[tuple[int, int], list[int]] = {}
    for i, (x, y) in enumerate(xy):
        grid.setdefault((math.floor(x / cell), math.floor(y / cell)), []).append(i)
    out: list[list[int]] = [[i] for i in range(len(xy))]
    hypot = math.hypot
    for (cx, cy), members in grid.items():
        for k, i in enumerate(members):
            xi, yi = xy[i]
            for j in members[k + 1:]:
                if hypot(xy[j][0] - xi, xy[j][1] - yi) <= eps:
                    out[i].append(j)
                    out[j].append(i)
        for dx, dy in _HALF_NEIGHBOURS:
            other = grid.get((cx + dx, cy + dy))
            if other is None:
                continue
            for i in members:
                xi, yi = xy[i]
                for j in other:
                    if hypot(xy[j][0] - xi, xy[j][1] - yi) <= eps:
                        out[i].append(j)
                        out[j].append(i)
    for nbrs in out:
        nbrs.sort()
    return out


def dbscan_labels(xy: Sequence[tuple[float, float]], eps: float, min_pts: int) -> list[int]:
    """Classic DBSCAN labels (``NOISE`` for noise), visiting points in input order.

    A border point reachable from two clusters keeps the first one that claims it.
    """
    nbrs = neighborhoods(xy, eps)
    labels = [None] * len(xy)
    cluster = 0
    for i in range(len(xy)):
        if labels[i] is not None:
            continue
        if len(nbrs[i]) < min_pts:
            labels[i] = NOISE
            continue
        labels[i] = cluster
        queue = deque(nbrs[i])
        while queue:
            j = queue.popleft()
            if labels[j] == NOISE:
                labels[j] = cluster
            if labels[j] is not None:
                continue
            labels[j] = cluster
            if len(nbrs[j]) >= min_pts:
                queue.extend(nbrs[j])
        cluster += 1
    return labels


def _centroid(members: list[PathPoint], level: int) -> Position:
    n = len(members)
    return Position(
        math.fsum(m.pos.x for m in members) / n,
        math.fsum(m.pos.y for m in members) / n,
        level,
        math.fsum(m.pos.w for m in members) / n,
    )


def dbscan(points: Sequence[PathPoint], cfg: ClusterConfig) -> tuple[list[Cluster], list[int]]:
    """Cluster points of one level.

    Noise points come back as singleton clusters (every path point must map to
    a neuron); their indices are also returned so callers can tell them apart.
    Clusters are ordered by their first member's input position.
    """
    cfg.validate()
    if not points:
        return [], []
    level = points[0].pos.level
    labels = dbscan_labels([(p.pos.x, p.pos.y) for p in points], cfg.eps, cfg.min_pts)
    groups: dict[object, list[PathPoint]] = {}
    noise = []
    for i, (p, lab) in enumerate(zip(points, labels)):
        if lab == NOISE:
            noise.append(i)
            groups[("noise", i)] = [p]
        else:
            groups.setdefault(lab, []).append(p)
    clusters = [Cluster(_centroid(m, level), m, level) for m in groups.values()]
    return clusters, noise


def condense_paths(paths: Sequence[Path], cfg: ClusterConfig):
    """Cluster interior points level by level.

    Returns ``(clusters_by_level, mapping)`` where ``mapping[(path_idx, point_idx)]``
    is ``(level, cluster_idx)`` for every interior point. Anchors are skipped.
    """
    by_level: dict[int, list[tuple[tuple[int, int], PathPoint]]] = {}
    for pi, path in enumerate(paths):
        for qi in range(1, len(path.points) - 1):
            pt = path.points[qi]
            by_level.setdefault(pt.pos.level, []).append(((pi, qi), pt))

    clusters_by_level: dict[int, list[Cluster]] = {}
    mapping: dict[tuple[int, int], tuple[int, int]] = {}
    for level in sorted(by_level):
        entries = by_level[level]
        clusters, _ = dbscan([pt for _, pt in entries], cfg)
        clusters_by_level[level] = clusters
        owner = {}
        for ci, cl in enumerate(clusters):
            for m in cl.members:
                owner[id(m)] = ci
        for key, pt in entries:
            mapping[key] = (level, owner[id(pt)])
    return clusters_by_level, mapping
