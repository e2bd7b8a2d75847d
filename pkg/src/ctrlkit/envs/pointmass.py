"""Planar point mass pushed by a 2-D force toward a goal.

A double integrator: the simplest goal-reaching task, used for control
smoke tests and as the default interactive-service environment. The goal
lives in the task block of the state vector, so it can be moved on the
fly through setstate without touching the dynamics state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ctrlkit.envcore import Environment
from ctrlkit.envs.task import ReachTask
from ctrlkit.spaces import Space

VEL_CLAMP = 10.0
VEL_LIMIT = 100.0
GOAL_BOUND = 10.0


@dataclass(frozen=True)
class PointMassConfig:
    dt: float = 0.02
    substeps: int = 4
    mass: float = 1.0
    damping: float = 0.0
    action_scale: float = 5.0
    task: ReachTask = field(default_factory=lambda: ReachTask(goal=(0.0, 0.0)))

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if not self.mass > 0:
            raise ValueError("mass must be strictly positive")


class PointMass(Environment):
    def __init__(self, config: PointMassConfig | None = None):
        self.config = config or PointMassConfig()
        statespace = Space(
            (7,),
            lo=[-np.inf, -np.inf, -VEL_LIMIT, -VEL_LIMIT, 0.0, -GOAL_BOUND, -GOAL_BOUND],
            hi=[np.inf, np.inf, VEL_LIMIT, VEL_LIMIT, np.inf, GOAL_BOUND, GOAL_BOUND],
        )
        obsspace = Space(
            (6,),
            lo=[-np.inf, -np.inf, -VEL_CLAMP, -VEL_CLAMP, -np.inf, -np.inf],
            hi=[np.inf, np.inf, VEL_CLAMP, VEL_CLAMP, np.inf, np.inf],
        )
        actionspace = Space.vector(2, -1.0, 1.0)
        super().__init__(2, 2, 2, statespace, obsspace, actionspace)
        self.reset()

    @property
    def dt(self) -> float:
        return self.config.dt

    @property
    def task(self) -> ReachTask:
        return self.config.task

    def reset(self):
        self._qpos[0] = 0.0
        self._qpos[1] = 0.0
        self._qvel[0] = 0.0
        self._qvel[1] = 0.0
        self._t = 0.0
        self._task[0] = self.config.task.goal[0]
        self._task[1] = self.config.task.goal[1]

    def _advance(self, u):
        cfg = self.config
        x = self._qpos[0]
        y = self._qpos[1]
        vx = self._qvel[0]
        vy = self._qvel[1]
        fx = cfg.action_scale * u[0]
        fy = cfg.action_scale * u[1]
        inv_m = 1.0 / cfg.mass
        h = cfg.dt / cfg.substeps
        for _ in range(cfg.substeps):
            vx += h * (fx - cfg.damping * vx) * inv_m
            vy += h * (fy - cfg.damping * vy) * inv_m
            x += h * vx
            y += h * vy
        if not (
            math.isfinite(x)
            and math.isfinite(y)
            and math.isfinite(vx)
            and math.isfinite(vy)
        ):
            raise RuntimeError(
                f"dynamics diverged: pos=({x!r}, {y!r}) vel=({vx!r}, {vy!r})"
            )
        self._qpos[0] = x
        self._qpos[1] = y
        self._qvel[0] = vx
        self._qvel[1] = vy

    def _write_obs(self, out):
        out[0] = self._qpos[0]
        out[1] = self._qpos[1]
        out[2] = min(VEL_CLAMP, max(-VEL_CLAMP, self._qvel[0]))
        out[3] = min(VEL_CLAMP, max(-VEL_CLAMP, self._qvel[1]))
        out[4] = self._task[0] - self._qpos[0]
        out[5] = self._task[1] - self._qpos[1]

    def isdone(self) -> bool:
        return abs(self._qvel[0]) > VEL_LIMIT or abs(self._qvel[1]) > VEL_LIMIT

    def getreward(self, s, a, o) -> float:
        dist = math.hypot(o[4], o[5])
        return -dist - 1e-3 * (a[0] * a[0] + a[1] * a[1])

    def geteval(self, s, a, o) -> float:
        return math.hypot(o[4], o[5])

    def energy(self) -> float:
        vx = self._qvel[0]
        vy = self._qvel[1]
        return 0.5 * self.config.mass * (vx * vx + vy * vy)
