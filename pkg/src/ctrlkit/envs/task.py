"""Reach-task bookkeeping shared by the goal-based environments."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EPISODE_LEN = 75


@dataclass(frozen=True)
class ReachTask:
    """Goal specification for reach-to-target episodes.

    ``episode_len`` is part of the episode protocol and is fixed; success
    is judged on the final quarter of exactly this many steps.
    """

    goal: tuple = (0.5, 0.5)
    success_radius: float = 0.05
    episode_len: int = EPISODE_LEN

    def __post_init__(self):
        if len(self.goal) != 2:
            raise ValueError("goal must be 2-D")
        if not self.success_radius > 0:
            raise ValueError("success_radius must be positive")
        if self.episode_len != EPISODE_LEN:
            raise ValueError(f"episode_len is fixed at {EPISODE_LEN}")


def episode_success(evals, task: ReachTask) -> bool:
    """True iff the mean eval over the final quarter of a complete episode
    is below the task's success radius.
    """
    evals = np.asarray(evals, dtype=np.float64)
    if evals.ndim != 1 or evals.shape[0] != task.episode_len:
        raise ValueError(
            f"expected a complete {task.episode_len}-step eval sequence, "
            f"got shape {evals.shape}"
        )
    start = (3 * task.episode_len) // 4
    return float(np.mean(evals[start:])) < task.success_radius


def sample_annulus(rng, r_lo: float, r_hi: float) -> tuple:
    """Draw a point uniformly by area from the annulus r_lo <= r <= r_hi."""
    if not (0.0 <= r_lo <= r_hi):
        raise ValueError("need 0 <= r_lo <= r_hi")
    r = math.sqrt(rng.uniform(r_lo * r_lo, r_hi * r_hi))
    phi = rng.uniform(0.0, 2.0 * math.pi)
    return (r * math.cos(phi), r * math.sin(phi))
