"""Planar n-link arm reaching spatial goals with its end effector.

The arm hangs in a horizontal plane (no gravity). Each joint is torque
actuated with viscous damping, so the dynamics stay second order and
model-predictive control has real work to do. Links are modelled as
massless rods with a point mass at each link tip; the resulting coupled
equations of motion are solved exactly per substep.

qpos holds relative joint angles (all zeros = arm straight along +x),
and the task block holds the 2-D goal. Goals drawn on randomized resets
are uniform by area over an annulus of the reachable disc.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ctrlkit.envcore import Environment
from ctrlkit.envs.task import ReachTask, sample_annulus
from ctrlkit.spaces import Space

VEL_CLAMP = 10.0
VEL_LIMIT = 100.0


@dataclass(frozen=True)
class ReacherConfig:
    dt: float = 0.02
    substeps: int = 4
    link_lengths: tuple = (0.5, 0.5)
    link_masses: tuple = (0.1, 0.1)
    damping: float = 0.35
    action_scale: float = 3.0
    goal_frac_lo: float = 0.2
    goal_frac_hi: float = 0.95
    task: ReachTask = field(default_factory=ReachTask)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if len(self.link_lengths) < 1 or len(self.link_lengths) != len(self.link_masses):
            raise ValueError("need equal, nonzero numbers of link lengths and masses")
        if any(l <= 0 for l in self.link_lengths) or any(
            m <= 0 for m in self.link_masses
        ):
            raise ValueError("masses and lengths must be strictly positive")
        if not (0.0 <= self.goal_frac_lo <= self.goal_frac_hi <= 1.0):
            raise ValueError("goal radius fractions must satisfy 0 <= lo <= hi <= 1")


class NLinkReacher(Environment):
    def __init__(self, config: ReacherConfig | None = None):
        self.config = cfg = config or ReacherConfig()
        n = len(cfg.link_lengths)
        self._n = n
        reach = float(sum(cfg.link_lengths))
        self.total_reach = reach
        self._goal_r_lo = cfg.goal_frac_lo * reach
        self._goal_r_hi = cfg.goal_frac_hi * reach
        goal_bound = 2.0 * reach
        statespace = Space(
            (2 * n + 3,),
            lo=[-np.inf] * n + [-VEL_LIMIT] * n + [0.0] + [-goal_bound] * 2,
            hi=[np.inf] * n + [VEL_LIMIT] * n + [np.inf] + [goal_bound] * 2,
        )
        obsspace = Space(
            (3 * n + 2,),
            lo=[-1.0] * (2 * n) + [-VEL_CLAMP] * n + [-np.inf] * 2,
            hi=[1.0] * (2 * n) + [VEL_CLAMP] * n + [np.inf] * 2,
        )
        actionspace = Space.vector(n, -1.0, 1.0)
        super().__init__(n, n, 2, statespace, obsspace, actionspace)

        # constant coupling coefficients c[j,k] = l_j l_k * (mass outboard
        # of joint max(j,k)), from the chain's kinetic energy
        lengths = np.asarray(cfg.link_lengths, dtype=np.float64)
        masses = np.asarray(cfg.link_masses, dtype=np.float64)
        outboard = np.cumsum(masses[::-1])[::-1]
        idx = np.arange(n)
        self._coupling = np.outer(lengths, lengths) * outboard[np.maximum.outer(idx, idx)]
        self._lengths = lengths
        if n == 2:
            self._c11 = self._coupling[0, 0]
            self._c12 = self._coupling[0, 1]
            self._c22 = self._coupling[1, 1]
        # scratch for the generic-n path
        self._phi = np.empty(n)
        self._phidot = np.empty(n)
        self.reset()

    @property
    def dt(self) -> float:
        return self.config.dt

    @property
    def nlinks(self) -> int:
        return self._n

    @property
    def task(self) -> ReachTask:
        return self.config.task

    def reset(self):
        self._qpos[:] = 0.0
        self._qvel[:] = 0.0
        self._t = 0.0
        self._task[0] = self.config.task.goal[0]
        self._task[1] = self.config.task.goal[1]

    def randreset(self, rng):
        super().randreset(rng)
        gx, gy = sample_annulus(rng, self._goal_r_lo, self._goal_r_hi)
        self._task[0] = gx
        self._task[1] = gy

    # -- dynamics -------------------------------------------------------

    def _advance(self, u):
        if self._n == 2:
            self._advance2(u)
        else:
            self._advance_n(u)
        if not np.all(np.isfinite(self._qvel)):
            raise RuntimeError(
                f"dynamics diverged: qpos={self._qpos!r} qvel={self._qvel!r} u={u!r}"
            )

    def _advance2(self, u):
        cfg = self.config
        t1 = self._qpos[0]
        t2 = self._qpos[1]
        w1 = self._qvel[0]
        w2 = self._qvel[1]
        tau1 = cfg.action_scale * u[0]
        tau2 = cfg.action_scale * u[1]
        d = cfg.damping
        c11 = self._c11
        c12 = self._c12
        c22 = self._c22
        h = cfg.dt / cfg.substeps
        for _ in range(cfg.substeps):
            s2 = math.sin(t2)
            c2 = math.cos(t2)
            m11 = c11 + 2.0 * c12 * c2 + c22
            m12 = c12 * c2 + c22
            cor = c12 * s2
            r1 = tau1 - d * w1 + cor * (2.0 * w1 * w2 + w2 * w2)
            r2 = tau2 - d * w2 - cor * w1 * w1
            det = m11 * c22 - m12 * m12
            a1 = (c22 * r1 - m12 * r2) / det
            a2 = (m11 * r2 - m12 * r1) / det
            w1 += h * a1
            w2 += h * a2
            t1 += h * w1
            t2 += h * w2
        self._qpos[0] = t1
        self._qpos[1] = t2
        self._qvel[0] = w1
        self._qvel[1] = w2

    def _advance_n(self, u):
        cfg = self.config
        q = self._qpos
        v = self._qvel
        phi = self._phi
        phidot = self._phidot
        h = cfg.dt / cfg.substeps
        tau = cfg.action_scale * u
        for _ in range(cfg.substeps):
            np.cumsum(q, out=phi)
            np.cumsum(v, out=phidot)
            diff = phi[:, None] - phi[None, :]
            amat = self._coupling * np.cos(diff)
            bvec = (self._coupling * np.sin(diff)) @ (phidot * phidot)
            # inertia in joint coordinates via suffix sums over both axes
            m = np.cumsum(np.cumsum(amat[::-1, ::-1], axis=0), axis=1)[::-1, ::-1]
            rhs = tau - cfg.damping * v - np.cumsum(bvec[::-1])[::-1]
            acc = np.linalg.solve(m, rhs)
            v += h * acc
            q += h * v

    # -- kinematics -----------------------------------------------------

    def fk_into(self, out):
        """Write all joint endpoint coordinates [x0, y0, ..., xn, yn],
        starting at the fixed base (0, 0)."""
        if len(out) != 2 * (self._n + 1):
            raise ValueError(f"FK buffer length {len(out)} != {2 * (self._n + 1)}")
        x = 0.0
        y = 0.0
        phi = 0.0
        out[0] = 0.0
        out[1] = 0.0
        for i in range(self._n):
            phi += self._qpos[i]
            x += self._lengths[i] * math.cos(phi)
            y += self._lengths[i] * math.sin(phi)
            out[2 * i + 2] = x
            out[2 * i + 3] = y

    def end_effector(self) -> tuple:
        x = 0.0
        y = 0.0
        phi = 0.0
        for i in range(self._n):
            phi += self._qpos[i]
            x += self._lengths[i] * math.cos(phi)
            y += self._lengths[i] * math.sin(phi)
        return (x, y)

    # -- observation / reward ------------------------------------------

    def _write_obs(self, out):
        n = self._n
        ex = 0.0
        ey = 0.0
        phi = 0.0
        for i in range(n):
            th = self._qpos[i]
            out[2 * i] = math.cos(th)
            out[2 * i + 1] = math.sin(th)
            out[2 * n + i] = min(VEL_CLAMP, max(-VEL_CLAMP, self._qvel[i]))
            phi += th
            ex += self._lengths[i] * math.cos(phi)
            ey += self._lengths[i] * math.sin(phi)
        out[3 * n] = self._task[0] - ex
        out[3 * n + 1] = self._task[1] - ey

    def isdone(self) -> bool:
        for i in range(self._n):
            if abs(self._qvel[i]) > VEL_LIMIT:
                return True
        return False

    def getreward(self, s, a, o) -> float:
        # distance weight 10 matches the reward scale the planner
        # temperature defaults are calibrated against
        n = self._n
        dist = math.hypot(o[3 * n], o[3 * n + 1])
        cost = 0.0
        for i in range(n):
            cost += a[i] * a[i]
        return -10.0 * dist - 1e-3 * cost

    def geteval(self, s, a, o) -> float:
        n = self._n
        return math.hypot(o[3 * n], o[3 * n + 1])

    def energy(self) -> float:
        """Kinetic energy; constant under zero torque and zero damping."""
        np.cumsum(self._qpos, out=self._phi)
        np.cumsum(self._qvel, out=self._phidot)
        diff = self._phi[:, None] - self._phi[None, :]
        amat = self._coupling * np.cos(diff)
        return 0.5 * float(self._phidot @ amat @ self._phidot)
