"""Cart-pole swing-up on an unbounded frictionless track.

State layout: qpos = [cart position x, pole angle theta], qvel matching.
theta = 0 is the pole balanced upright; the reset state hangs the pole
straight down (theta = pi) with everything at rest. The pole is modelled
as a point mass on a massless rod, which keeps the energy function in
closed form:

    E = 1/2 (mc + mp) vx^2 + mp l cos(theta) vx w + 1/2 mp l^2 w^2
        + mp g l cos(theta)
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
class CartPoleConfig:
    dt: float = 0.02
    substeps: int = 4
    cart_mass: float = 1.0
    pole_mass: float = 0.1
    pole_length: float = 0.5
    gravity: float = 9.81
    cart_damping: float = 0.0
    pole_damping: float = 0.0
    action_scale: float = 3.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if not (self.cart_mass > 0 and self.pole_mass > 0 and self.pole_length > 0):
            raise ValueError("masses and lengths must be strictly positive")


class CartPoleSwingUp(Environment):
    """Force-actuated cart with a passive pole; the task is to swing the
    pole upright and keep it balanced."""

    def __init__(self, config: CartPoleConfig | None = None):
        self.config = config or CartPoleConfig()
        statespace = Space(
            (5,),
            lo=[-np.inf, -np.inf, -VEL_LIMIT, -VEL_LIMIT, 0.0],
            hi=[np.inf, np.inf, VEL_LIMIT, VEL_LIMIT, np.inf],
        )
        obsspace = Space(
            (5,),
            lo=[-np.inf, -1.0, -1.0, -VEL_CLAMP, -VEL_CLAMP],
            hi=[np.inf, 1.0, 1.0, VEL_CLAMP, VEL_CLAMP],
        )
        actionspace = Space.vector(1, -1.0, 1.0)
        super().__init__(2, 2, 0, statespace, obsspace, actionspace)
        self.reset()

    @property
    def dt(self) -> float:
        return self.config.dt

    def reset(self):
        self._qpos[0] = 0.0
        self._qpos[1] = math.pi
        self._qvel[0] = 0.0
        self._qvel[1] = 0.0
        self._t = 0.0

    def _advance(self, u):
        cfg = self.config
        x = self._qpos[0]
        theta = self._qpos[1]
        vx = self._qvel[0]
        w = self._qvel[1]
        force = cfg.action_scale * u[0]
        mc = cfg.cart_mass
        mp = cfg.pole_mass
        length = cfg.pole_length
        g = cfg.gravity
        ml = mp * length
        ml2 = ml * length
        h = cfg.dt / cfg.substeps
        for _ in range(cfg.substeps):
            sin_t = math.sin(theta)
            cos_t = math.cos(theta)
            # mass matrix [[mc+mp, ml ct], [ml ct, ml2]] solved in closed form
            r1 = force - cfg.cart_damping * vx + ml * sin_t * w * w
            r2 = ml * g * sin_t - cfg.pole_damping * w
            off = ml * cos_t
            det = ml2 * (mc + mp) - off * off
            ax = (ml2 * r1 - off * r2) / det
            aw = ((mc + mp) * r2 - off * r1) / det
            vx += h * ax
            w += h * aw
            x += h * vx
            theta += h * w
        if not (
            math.isfinite(x)
            and math.isfinite(theta)
            and math.isfinite(vx)
            and math.isfinite(w)
        ):
            raise RuntimeError(
                f"dynamics diverged: x={x!r} theta={theta!r} vx={vx!r} w={w!r} u={u[0]!r}"
            )
        self._qpos[0] = x
        self._qpos[1] = theta
        self._qvel[0] = vx
        self._qvel[1] = w

    def _write_obs(self, out):
        theta = self._qpos[1]
        out[0] = self._qpos[0]
        out[1] = math.cos(theta)
        out[2] = math.sin(theta)
        out[3] = min(VEL_CLAMP, max(-VEL_CLAMP, self._qvel[0]))
        out[4] = min(VEL_CLAMP, max(-VEL_CLAMP, self._qvel[1]))

    def isdone(self) -> bool:
        return abs(self._qvel[0]) > VEL_LIMIT or abs(self._qvel[1]) > VEL_LIMIT

    def getreward(self, s, a, o) -> float:
        # ((1 + cos)/2)^8 pays out only near upright: a swing passing
        # the top scores little, holding the balance scores ~1 per step,
        # and the return stays non-negative
        h = 0.5 * (1.0 + o[1])
        h2 = h * h
        h4 = h2 * h2
        return h4 * h4

    def geteval(self, s, a, o) -> float:
        return abs(math.atan2(o[2], o[1]))

    def energy(self) -> float:
        cfg = self.config
        theta = self._qpos[1]
        vx = self._qvel[0]
        w = self._qvel[1]
        mc = cfg.cart_mass
        mp = cfg.pole_mass
        length = cfg.pole_length
        kinetic = (
            0.5 * (mc + mp) * vx * vx
            + mp * length * math.cos(theta) * vx * w
            + 0.5 * mp * length * length * w * w
        )
        potential = mp * cfg.gravity * length * math.cos(theta)
        return kinetic + potential
