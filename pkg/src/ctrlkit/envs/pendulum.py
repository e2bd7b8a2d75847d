"""Torque-limited pendulum swing-up.

Angle convention: theta = 0 is upright, theta = pi hangs straight down
(the stable equilibrium and the reset state). Positive torque is
counter-clockwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ctrlkit.envcore import Environment
from ctrlkit.spaces import Space

VEL_CLAMP = 10.0
VEL_LIMIT = 100.0


@dataclass(frozen=True)
class PendulumConfig:
    dt: float = 0.02
    substeps: int = 4
    mass: float = 1.0
    length: float = 1.0
    gravity: float = 9.81
    damping: float = 0.0
    action_scale: float = 2.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if not (self.mass > 0 and self.length > 0):
            raise ValueError("mass and length must be strictly positive")


class Pendulum(Environment):
    """Single pendulum on a fixed pivot, torque actuated at the pivot."""

    def __init__(self, config: PendulumConfig | None = None):
        self.config = config or PendulumConfig()
        statespace = Space(
            (3,),
            lo=[-np.inf, -VEL_LIMIT, 0.0],
            hi=[np.inf, VEL_LIMIT, np.inf],
        )
        obsspace = Space(
            (3,),
            lo=[-1.0, -1.0, -VEL_CLAMP],
            hi=[1.0, 1.0, VEL_CLAMP],
        )
        actionspace = Space.vector(1, -1.0, 1.0)
        super().__init__(1, 1, 0, statespace, obsspace, actionspace)
        self.reset()

    @property
    def dt(self) -> float:
        return self.config.dt

    def reset(self):
        self._qpos[0] = math.pi
        self._qvel[0] = 0.0
        self._t = 0.0

    def _advance(self, u):
        cfg = self.config
        theta = self._qpos[0]
        omega = self._qvel[0]
        tau = cfg.action_scale * u[0]
        h = cfg.dt / cfg.substeps
        g_over_l = cfg.gravity / cfg.length
        inv_inertia = 1.0 / (cfg.mass * cfg.length * cfg.length)
        for _ in range(cfg.substeps):
            acc = g_over_l * math.sin(theta) + (tau - cfg.damping * omega) * inv_inertia
            omega += h * acc
            theta += h * omega
        if not (math.isfinite(theta) and math.isfinite(omega)):
            raise RuntimeError(
                f"dynamics diverged: theta={theta!r} omega={omega!r} u={u[0]!r}"
            )
        self._qpos[0] = theta
        self._qvel[0] = omega

    def _write_obs(self, out):
        theta = self._qpos[0]
        out[0] = math.cos(theta)
        out[1] = math.sin(theta)
        out[2] = min(VEL_CLAMP, max(-VEL_CLAMP, self._qvel[0]))

    def isdone(self) -> bool:
        return abs(self._qvel[0]) > VEL_LIMIT

    def getreward(self, s, a, o) -> float:
        return 0.5 * (1.0 + o[0]) - 1e-3 * (a[0] * a[0])

    def geteval(self, s, a, o) -> float:
        return abs(math.atan2(o[1], o[0]))

    def energy(self) -> float:
        """Total mechanical energy; constant under zero torque and damping."""
        cfg = self.config
        theta = self._qpos[0]
        omega = self._qvel[0]
        kinetic = 0.5 * cfg.mass * cfg.length * cfg.length * omega * omega
        potential = cfg.mass * cfg.gravity * cfg.length * math.cos(theta)
        return kinetic + potential
