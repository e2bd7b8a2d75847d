"""Model Predictive Path Integral control.

Candidate action sequences are the nominal plan plus smoothed Gaussian
perturbations; their returns are combined with exponential weights and
the plan is executed receding-horizon, one action per call.
"""

import dataclasses
import json
import math
import time
import warnings

import numpy as np

from ctrlkit.envs.task import EPISODE_LEN, episode_success
from ctrlkit.sampler import trajectory_rng

SMOOTHING_SUM_TOL = 1e-9


@dataclasses.dataclass(frozen=True)
class MppiConfig:
    """Planner knobs. beta0/beta1/1-beta0-beta1 are the filter taps on
    the fresh draw and the last two smoothed values; their sum may only
    reach 1, which smoothing_resolved() enforces or repairs."""

    H: int = 16
    K: int = 30
    temperature: float = 5.0
    beta0: float = 0.25
    beta1: float = 0.8
    sigma: float = 0.3

    def __post_init__(self):
        if self.H < 1:
            raise ValueError(f"H must be >= 1, got {self.H}")
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if not self.temperature > 0.0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        for name in ("beta0", "beta1"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.sigma < 0.0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")

    def smoothing_resolved(self, strict=False) -> "MppiConfig":
        """Return a config whose filter taps are admissible.

        A beta0 + beta1 sum above 1 makes the third tap negative and the
        filter unstable. strict mode rejects it; otherwise both taps are
        scaled down to sum to 1, with a warning.
        """
        s = self.beta0 + self.beta1
        if s <= 1.0 + SMOOTHING_SUM_TOL:
            return self
        if strict:
            raise ValueError(
                f"beta0 + beta1 = {s} exceeds 1; rejected in strict mode"
            )
        warnings.warn(
            f"beta0 + beta1 = {s} exceeds 1; normalizing taps to "
            f"{self.beta0 / s:.6f}, {self.beta1 / s:.6f}",
            stacklevel=2,
        )
        return dataclasses.replace(self, beta0=self.beta0 / s, beta1=self.beta1 / s)


@dataclasses.dataclass(slots=True)
class MppiPlan:
    """Nominal action sequence plus the last two executed-step noise
    aggregates, which seed the perturbation filter for continuity."""

    U: np.ndarray
    noise_prev1: np.ndarray
    noise_prev2: np.ndarray

    @classmethod
    def zeros(cls, horizon, adim) -> "MppiPlan":
        return cls(np.zeros((horizon, adim)), np.zeros(adim), np.zeros(adim))

    def clear(self):
        self.U[:] = 0.0
        self.noise_prev1[:] = 0.0
        self.noise_prev2[:] = 0.0


def sample_perturbations(config, rng, adim, init=None) -> np.ndarray:
    """Draw K smoothed noise sequences of shape (K, H, adim).

    eps[t] = beta0*n[t] + beta1*eps[t-1] + (1-beta0-beta1)*eps[t-2]
    with n[t] ~ N(0, sigma^2) i.i.d. and eps[-1] = eps[-2] = 0 unless
    init supplies the two lookback vectors.
    """
    b0, b1 = config.beta0, config.beta1
    if b0 + b1 > 1.0 + SMOOTHING_SUM_TOL:
        raise ValueError(
            f"beta0 + beta1 = {b0 + b1} exceeds 1; resolve smoothing first"
        )
    b2 = max(0.0, 1.0 - b0 - b1)
    k, h = config.K, config.H
    noise = rng.normal(0.0, config.sigma, (k, h, adim))
    eps = np.empty((k, h, adim))
    if init is None:
        e1 = e2 = np.zeros(adim)
    else:
        e1, e2 = init
    eps[:, 0] = b0 * noise[:, 0] + b1 * e1 + b2 * e2
    if h > 1:
        eps[:, 1] = b0 * noise[:, 1] + b1 * eps[:, 0] + b2 * e1
    for t in range(2, h):
        eps[:, t] = b0 * noise[:, t] + b1 * eps[:, t - 1] + b2 * eps[:, t - 2]
    return eps


def mppi_weights(returns, temperature) -> np.ndarray:
    """Exponential weights over candidate returns, max-shifted so the
    best candidate has unnormalized weight 1. Non-finite entries get
    weight 0; all non-finite is an error."""
    returns = np.asarray(returns, dtype=np.float64)
    finite = np.isfinite(returns)
    if not finite.any():
        raise FloatingPointError("all candidate returns are non-finite")
    w = np.zeros(returns.shape[0])
    best = returns[finite].max()
    w[finite] = np.exp((returns[finite] - best) / temperature)
    w /= w.sum()
    return w


@dataclasses.dataclass(slots=True)
class MppiDiagnostics:
    """Per-update planning stats; latency_s is filled by the act wrapper."""

    best_return: float
    mean_return: float
    weight_entropy: float
    n_discarded: int
    latency_s: float = 0.0

    def to_dict(self) -> dict:
        return {
            "best_return": self.best_return,
            "mean_return": self.mean_return,
            "weight_entropy": self.weight_entropy,
            "n_discarded": self.n_discarded,
            "latency_s": self.latency_s,
        }


DIAG_CSV_HEADER = "call,latency_s,best_return,mean_return,weight_entropy,n_discarded"


def diagnostics_to_csv(diags) -> str:
    lines = [DIAG_CSV_HEADER]
    for i, d in enumerate(diags):
        lines.append(
            f"{i},{d.latency_s:.9f},{d.best_return:.6f},{d.mean_return:.6f},"
            f"{d.weight_entropy:.6f},{d.n_discarded}"
        )
    return "\n".join(lines) + "\n"


def diagnostics_to_json(diags) -> str:
    return json.dumps([d.to_dict() for d in diags], indent=2) + "\n"


def mppi_update(plan, env, config, rng) -> MppiDiagnostics:
    """One planning pass from the env's current state.

    Rolls out each perturbed candidate on env via setstate snapshots,
    reweights, and folds the weighted noise into plan.U in place. The
    env is restored to its entry state before returning. Candidates
    whose rollout diverges are discarded with a warning.
    """
    snapshot = env.getstate()
    adim = env.actionspace.flat_len
    eps = sample_perturbations(
        config, rng, adim, init=(plan.noise_prev1, plan.noise_prev2)
    )
    returns = np.empty(config.K)
    a_buf = np.empty(adim)
    for k in range(config.K):
        env.setstate(snapshot)
        total = 0.0
        try:
            for t in range(config.H):
                np.add(plan.U[t], eps[k, t], out=a_buf)
                total += env.step_quick(a_buf)
        except (RuntimeError, FloatingPointError):
            total = -math.inf
        returns[k] = total
    env.setstate(snapshot)

    finite = np.isfinite(returns)
    discarded = int(config.K - finite.sum())
    if discarded:
        warnings.warn(
            f"discarded {discarded} diverged MPPI candidates", stacklevel=2
        )
    w = mppi_weights(returns, config.temperature)
    plan.U += np.tensordot(w, eps, axes=1)
    # keep the nominal inside the admissible action set; values beyond
    # the bounds execute identically but blind the weighting
    np.clip(plan.U, env.actionspace.lo, env.actionspace.hi, out=plan.U)

    # executed-boundary noise aggregate feeds the next filter call
    plan.noise_prev2[:] = plan.noise_prev1
    plan.noise_prev1[:] = np.tensordot(w, eps[:, 0], axes=1)

    active = w > 0.0
    entropy = float(-(w[active] * np.log(w[active])).sum())
    return MppiDiagnostics(
        best_return=float(returns[finite].max()),
        mean_return=float(returns[finite].mean()),
        weight_entropy=entropy,
        n_discarded=discarded,
    )


class MppiController:
    """Receding-horizon wrapper: plan on a scratch model, emit the first
    action, shift the plan left repeating the last action.

    n_refine runs the sampled update that many times per act from the
    same snapshot; extra passes sharpen the plan at a proportional
    latency cost."""

    def __init__(self, model_env, config=None, seed=0, strict=False, n_refine=1):
        if n_refine < 1:
            raise ValueError("n_refine must be >= 1")
        self.model = model_env
        self.config = (config or MppiConfig()).smoothing_resolved(strict=strict)
        self.rng = np.random.default_rng(seed)
        self.n_refine = int(n_refine)
        adim = model_env.actionspace.flat_len
        self.plan = MppiPlan.zeros(self.config.H, adim)
        self.diagnostics = []
        self._snap = np.empty(model_env.statespace.flat_len)

    def reset_plan(self):
        self.plan.clear()

    def act(self, env) -> np.ndarray:
        """Plan from env's current state and return the action to apply.
        env itself is never stepped."""
        t0 = time.perf_counter()
        env.getstate_into(self._snap)
        for _ in range(self.n_refine):
            self.model.setstate(self._snap)
            diag = mppi_update(self.plan, self.model, self.config, self.rng)
        action = self.plan.U[0].copy()
        self.plan.U[:-1] = self.plan.U[1:]
        self.plan.U[-1] = self.plan.U[-2]
        diag.latency_s = time.perf_counter() - t0
        self.diagnostics.append(diag)
        return action


@dataclasses.dataclass(slots=True)
class EpisodeRecord:
    """Outcome of one fixed-length controlled episode."""

    success: bool
    final_eval: float
    mean_reward: float
    steps: int
    mean_latency_s: float
    max_latency_s: float

    def to_dict(self) -> dict:
        return {
            "success": self.success,
            "final_eval": self.final_eval,
            "mean_reward": self.mean_reward,
            "steps": self.steps,
            "mean_latency_s": self.mean_latency_s,
            "max_latency_s": self.max_latency_s,
        }


def run_episodes(env, controller, n_episodes, seed,
                 episode_len=EPISODE_LEN) -> list:
    """Run fixed-length episodes with fresh randomized resets, scoring
    each against the env's reach task."""
    if n_episodes < 1:
        raise ValueError(f"n_episodes must be >= 1, got {n_episodes}")
    task = env.task
    records = []
    evals = np.empty(episode_len)
    for ep in range(n_episodes):
        env.randreset(trajectory_rng(seed, ep))
        controller.reset_plan()
        n_before = len(controller.diagnostics)
        rew_total = 0.0
        for t in range(episode_len):
            a = controller.act(env)
            res = env.step(a)
            evals[t] = res.eval
            rew_total += res.reward
        lats = [d.latency_s for d in controller.diagnostics[n_before:]]
        records.append(
            EpisodeRecord(
                success=episode_success(evals, task),
                final_eval=float(evals[-1]),
                mean_reward=rew_total / episode_len,
                steps=episode_len,
                mean_latency_s=float(np.mean(lats)),
                max_latency_s=float(np.max(lats)),
            )
        )
    return records
