"""Navigation episode metrics: success rate, SPL, navigation error."""

from __future__ import annotations

import math
from dataclasses import dataclass

SHORT_CUTOFF = 150.0  # meters of shortest-path length


@dataclass(frozen=True)
class EpisodeResult:
    episode_id: str
    goal: tuple
    final_position: tuple
    shortest_path_length: float
    traveled_length: float
    success_radius: float = 20.0

    @property
    def nav_error(self) -> float:
        return math.dist(self.final_position[:2], self.goal[:2])

    @property
    def success(self) -> bool:
        return self.nav_error <= self.success_radius

    @property
    def spl(self) -> float:
        if not self.success:
            return 0.0
        l = self.shortest_path_length
        return l / max(self.traveled_length, l)

    @property
    def bucket(self) -> str:
        return "short" if self.shortest_path_length < SHORT_CUTOFF else "long"


def _bucket_stats(results) -> dict:
    if not results:
        return {"count": 0, "sr": None, "spl": None, "ne": None}
    n = len(results)
    return {
        "count": n,
        "sr": sum(1 for r in results if r.success) / n,
        "spl": sum(r.spl for r in results) / n,
        "ne": sum(r.nav_error for r in results) / n,
    }


def nav_metrics(results: list[EpisodeResult]) -> dict:
    """Per-bucket and overall SR / SPL / mean nav error."""
    results = list(results)
    return {
        "short": _bucket_stats([r for r in results if r.bucket == "short"]),
        "long": _bucket_stats([r for r in results if r.bucket == "long"]),
        "mean": _bucket_stats(results),
    }
