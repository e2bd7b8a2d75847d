"""Environment interface consumed by every other module.

All builtin environments follow the same contract:

* ``getstate_into`` / ``setstate`` give a complete, restorable snapshot;
  restoring a snapshot and replaying the same actions reproduces a
  trajectory bit-identically.
* In-place accessors (``getstate_into``, ``getobs_into``) fill caller
  buffers and perform no allocation in steady state, so they can sit in
  tight real-time loops.
* ``getreward`` / ``geteval`` are pure functions of ``(s, a, o)``: the
  reward is the shaped training signal, the eval the interpretable task
  metric, and neither touches environment state.

The flat state vector layout is fixed as ``[qpos | qvel | t | task]``.

An environment instance is single-owner: it is not safe for concurrent
use, but may be handed from one worker to another.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ctrlkit.spaces import Space


class ContractViolation(ValueError):
    """An interface precondition was broken (wrong length, out of bounds)."""


@dataclass(slots=True)
class StepResult:
    reward: float
    eval: float
    done: bool


class Environment:
    """Abstract environment with get/set state and in-place accessors.

    Subclasses construct their spaces, pass them to ``__init__``, and
    implement ``reset``, ``_advance`` (one control timestep of dynamics),
    ``_write_obs``, ``getreward`` and ``geteval``.
    """

    def __init__(self, nq, nv, ntask, statespace, obsspace, actionspace):
        self._nq = nq
        self._nv = nv
        self._ntask = ntask
        self._statespace = statespace
        self._obsspace = obsspace
        self._actionspace = actionspace
        if statespace.flat_len != nq + nv + 1 + ntask:
            raise ValueError("statespace length inconsistent with qpos/qvel/t/task")
        self._qpos = np.zeros(nq)
        self._qvel = np.zeros(nv)
        self._t = 0.0
        self._task = np.zeros(ntask)
        # scratch for step(): pre-step state, clamped action, post-step obs
        self._s_before = np.zeros(statespace.flat_len)
        self._a_buf = np.zeros(actionspace.flat_len)
        self._o_after = np.zeros(obsspace.flat_len)

    # -- layout ---------------------------------------------------------

    @property
    def nq(self) -> int:
        return self._nq

    @property
    def nv(self) -> int:
        return self._nv

    @property
    def ntask(self) -> int:
        return self._ntask

    # -- spaces ---------------------------------------------------------

    @property
    def statespace(self) -> Space:
        return self._statespace

    @property
    def obsspace(self) -> Space:
        return self._obsspace

    @property
    def actionspace(self) -> Space:
        return self._actionspace

    @property
    def rewardspace(self) -> Space:
        return Space.scalar()

    @property
    def evalspace(self) -> Space:
        return Space.scalar()

    @property
    def dt(self) -> float:
        raise NotImplementedError

    # -- state ----------------------------------------------------------

    def reset(self):
        """Reset to the fixed initial state."""
        raise NotImplementedError

    def randreset(self, rng):
        """Reset, then perturb each qpos/qvel component by U(-0.005, 0.005)."""
        self.reset()
        self._qpos += rng.uniform(-0.005, 0.005, self._nq)
        self._qvel += rng.uniform(-0.005, 0.005, self._nv)
        self._forward()

    def getstate_into(self, out):
        if len(out) != self._s_before.shape[0]:
            raise ContractViolation(
                f"state buffer length {len(out)} != {self._s_before.shape[0]}"
            )
        nq, nv = self._nq, self._nv
        out[:nq] = self._qpos
        out[nq : nq + nv] = self._qvel
        out[nq + nv] = self._t
        if self._ntask:
            out[nq + nv + 1 :] = self._task

    def getstate(self):
        out = np.empty(self._statespace.flat_len)
        self.getstate_into(out)
        return out

    def setstate(self, s):
        s = np.asarray(s, dtype=np.float64)
        space = self._statespace
        if s.ndim != 1 or s.shape[0] != space.flat_len:
            raise ContractViolation(f"state vector length {s.shape} != {space.flat_len}")
        if not np.all(np.isfinite(s)):
            raise ContractViolation("state vector has non-finite components")
        if np.any(s < space.lo) or np.any(s > space.hi):
            raise ContractViolation("state vector outside statespace bounds")
        nq, nv = self._nq, self._nv
        self._qpos[:] = s[:nq]
        self._qvel[:] = s[nq : nq + nv]
        self._t = float(s[nq + nv])
        if self._ntask:
            self._task[:] = s[nq + nv + 1 :]
        self._forward()

    def _forward(self):
        """Recompute derived quantities after a direct state write.

        The builtin analytic models hold no derived state, so the default
        is a no-op; subclasses with caches must invalidate them here.
        """

    # -- observation ----------------------------------------------------

    def getobs_into(self, out):
        if len(out) != self._o_after.shape[0]:
            raise ContractViolation(
                f"obs buffer length {len(out)} != {self._o_after.shape[0]}"
            )
        self._write_obs(out)

    def getobs(self):
        out = np.empty(self._obsspace.flat_len)
        self.getobs_into(out)
        return out

    def _write_obs(self, out):
        raise NotImplementedError

    # -- stepping -------------------------------------------------------

    def step(self, a) -> StepResult:
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 1 or a.shape[0] != self._a_buf.shape[0]:
            raise ContractViolation(
                f"action length {a.shape} != {self._a_buf.shape[0]}"
            )
        if not np.isfinite(a).all():
            raise ContractViolation("action has non-finite components")
        # out-of-range actions are clamped, not rejected
        self._actionspace.clamp_into(a, self._a_buf)
        self.getstate_into(self._s_before)
        self._advance(self._a_buf)
        self._t += self.dt
        self.getobs_into(self._o_after)
        r = self.getreward(self._s_before, self._a_buf, self._o_after)
        e = self.geteval(self._s_before, self._a_buf, self._o_after)
        return StepResult(float(r), float(e), bool(self.isdone()))

    def step_quick(self, a) -> float:
        """Advance one control step and return only the reward.

        Hot path for planners rolling out scratch models: skips action
        validation, the eval metric, the done check and the result
        record. The action must be a finite float64 vector of the right
        length; out-of-range components are still clamped.
        """
        self._actionspace.clamp_into(a, self._a_buf)
        self.getstate_into(self._s_before)
        self._advance(self._a_buf)
        self._t += self.dt
        self.getobs_into(self._o_after)
        return self.getreward(self._s_before, self._a_buf, self._o_after)

    def _advance(self, u):
        """Advance qpos/qvel by one control timestep under clamped control u."""
        raise NotImplementedError

    def isdone(self) -> bool:
        return False

    # -- reward / eval --------------------------------------------------

    def getreward(self, s, a, o) -> float:
        raise NotImplementedError

    def geteval(self, s, a, o) -> float:
        raise NotImplementedError
