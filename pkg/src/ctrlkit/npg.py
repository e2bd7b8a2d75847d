"""Natural policy gradient trainer.

Each iteration samples a batch of on-policy trajectories, estimates
advantages with GAE, solves the Fisher system for the natural direction
with conjugate gradient, takes a normalized-step update, and refits the
value network on the batch's return targets.
"""

import dataclasses
import json
import time

import numpy as np

from ctrlkit.neural import (
    Adam,
    DiagGaussianPolicy,
    Mlp,
    conjugate_gradient,
    save_policy,
    save_value,
    value_fit,
)
from ctrlkit.sampler import parallel_rollouts, rollout, trajectory_rng

CHECKPOINT_EVERY = 25
STEP_TINY = 1e-12
KL_TRUST_FACTOR = 2.0
MAX_BACKTRACKS = 12


@dataclasses.dataclass(frozen=True)
class NpgConfig:
    """Trainer knobs; the step size is the normalized trust-region
    radius, not a learning rate."""

    gamma: float = 0.995
    gae_lambda: float = 0.97
    step_size: float = 0.1
    n_samples: int = 10000
    hmax: int = 1000
    iterations: int = 100
    cg_iters: int = 12
    cg_tol: float = 1e-10
    damping: float = 1e-4
    normalize_advantages: bool = True
    policy_hidden: tuple = (64, 64)
    value_hidden: tuple = (128, 128)
    value_lr: float = 1e-3
    eval_episodes: int = 10
    workers: int = 1

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError(f"gae_lambda must be in [0, 1], got {self.gae_lambda}")
        if not self.step_size > 0.0:
            raise ValueError(f"step_size must be > 0, got {self.step_size}")
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be >= 1, got {self.n_samples}")
        if self.hmax < 1:
            raise ValueError(f"hmax must be >= 1, got {self.hmax}")
        if self.iterations < 0:
            raise ValueError(f"iterations must be >= 0, got {self.iterations}")
        if self.cg_iters < 1:
            raise ValueError(f"cg_iters must be >= 1, got {self.cg_iters}")
        if self.damping < 0.0:
            raise ValueError(f"damping must be >= 0, got {self.damping}")
        if self.eval_episodes < 0:
            raise ValueError(f"eval_episodes must be >= 0, got {self.eval_episodes}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")


@dataclasses.dataclass(slots=True)
class IterationReport:
    """Per-iteration training record; returns come from the iteration's
    own sampling batch."""

    iteration: int
    stoc_return: float
    det_return: float
    eval_mean: float
    kl: float
    value_loss_initial: float
    value_loss_final: float
    wall_s: float
    degenerate: bool = False

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


REPORT_CSV_HEADER = (
    "iteration,stoc_return,det_return,eval_mean,kl,"
    "value_loss_initial,value_loss_final,degenerate"
)


def report_csv_row(r) -> str:
    return (
        f"{r.iteration},{r.stoc_return:.12g},{r.det_return:.12g},"
        f"{r.eval_mean:.12g},{r.kl:.12g},{r.value_loss_initial:.12g},"
        f"{r.value_loss_final:.12g},{int(r.degenerate)}"
    )


def reports_to_csv(reports) -> str:
    """Deterministic per-iteration log: no timing columns, so equal seeds
    diff byte-equal across runs."""
    lines = [REPORT_CSV_HEADER]
    for r in reports:
        lines.append(report_csv_row(r))
    return "\n".join(lines) + "\n"


def timing_to_csv(reports) -> str:
    lines = ["iteration,wall_s"]
    for r in reports:
        lines.append(f"{r.iteration},{r.wall_s:.9f}")
    return "\n".join(lines) + "\n"


def gae_advantages(rews, values, gamma, lam):
    """Generalized advantage estimates for one trajectory.

    values has one more entry than rews: the bootstrap value of the
    state after the last step (zero when that state was terminal).
    Returns (advantages, value_targets).
    """
    rews = np.asarray(rews, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    t = rews.shape[0]
    if values.shape != (t + 1,):
        raise ValueError(
            f"need {t + 1} value predictions for {t} rewards, got {values.shape}"
        )
    deltas = rews + gamma * values[1:] - values[:-1]
    adv = np.empty(t)
    acc = 0.0
    for i in range(t - 1, -1, -1):
        acc = deltas[i] + gamma * lam * acc
        adv[i] = acc
    return adv, adv + values[:-1]


def batch_advantages(batch, value_net, gamma, lam):
    """GAE over every trajectory of a sampled batch, concatenated.

    Bootstraps truncated trajectories with the value of their final
    observation; terminal ones bootstrap at zero.
    """
    all_values = value_net.forward(batch.obs)[:, 0]
    final_values = value_net.forward(batch.final_obs)[:, 0]
    n = batch.total_steps
    adv = np.empty(n)
    targets = np.empty(n)
    values = np.empty(batch.lengths().max() + 1)
    for i in range(batch.ntraj):
        lo, hi = batch.offsets[i], batch.offsets[i + 1]
        t = hi - lo
        values[:t] = all_values[lo:hi]
        values[t] = 0.0 if batch.terminated[i] else final_values[i]
        adv[lo:hi], targets[lo:hi] = gae_advantages(
            batch.rews[lo:hi], values[: t + 1], gamma, lam
        )
    return adv, targets


def stochastic_controller(policy):
    def controller(obs, rng):
        return policy.act(obs, rng)

    return controller


def deterministic_controller(policy):
    def controller(obs, rng):
        return policy.act_deterministic(obs)

    return controller


def diag_gaussian_kl(mu0, logstd0, mu1, logstd1) -> float:
    """Mean KL(pi_old || pi_new) between diagonal Gaussians, batched
    over rows of mu0/mu1."""
    var0 = np.exp(2.0 * logstd0)
    var1 = np.exp(2.0 * logstd1)
    per_dim = (
        (logstd1 - logstd0)
        + (var0 + (mu0 - mu1) ** 2) / (2.0 * var1)
        - 0.5
    )
    return float(per_dim.sum(axis=1).mean())


@dataclasses.dataclass(slots=True)
class StepInfo:
    kl: float
    value_loss_initial: float
    value_loss_final: float
    degenerate: bool


def npg_step(policy, value_net, value_adam, batch, advantages, targets,
             config, fit_rng) -> StepInfo:
    """One natural-gradient policy update plus the value refit.

    The policy moves by sqrt(step_size / g.F^-1 g) along the CG solution
    of F x = g; a non-positive curvature estimate skips the move and is
    reported as degenerate. The realized step is halved until the
    measured KL stays inside KL_TRUST_FACTOR * step_size: the local
    quadratic model predicts KL = step_size / 2, but a long move through
    a flat region of a tanh network can overshoot it badly.
    """
    adv = advantages
    if config.normalize_advantages:
        std = adv.std()
        adv = (adv - adv.mean()) / (std if std > 0.0 else 1.0)

    cache = policy.score_cache(batch.obs, batch.acts)
    g = cache.weighted_sum(adv / adv.shape[0])

    params_old = policy.params.copy()
    mu_old = policy.mean_net.forward(batch.obs)
    logstd_old = policy.logstd.copy()

    def measured_kl():
        return diag_gaussian_kl(
            mu_old, logstd_old, policy.mean_net.forward(batch.obs), policy.logstd
        )

    degenerate = False
    kl = 0.0
    if np.any(g != 0.0):
        sol = conjugate_gradient(
            lambda v: cache.fisher_vector_product(v, damping=config.damping),
            g,
            iters=config.cg_iters,
            tol=config.cg_tol,
        )
        gx = float(g @ sol.x)
        if gx > 0.0:
            step = np.sqrt(config.step_size / (gx + STEP_TINY)) * sol.x
            np.add(params_old, step, out=policy.params)
            kl = measured_kl()
            for _ in range(MAX_BACKTRACKS):
                if kl <= KL_TRUST_FACTOR * config.step_size:
                    break
                step *= 0.5
                np.add(params_old, step, out=policy.params)
                kl = measured_kl()
        else:
            degenerate = True
    else:
        degenerate = True

    fit = value_fit(value_net, batch.obs, targets, value_adam, fit_rng)
    return StepInfo(kl, fit.loss_initial, fit.loss_final, degenerate)


def _iteration_seed(seed, iteration, label) -> int:
    return int(np.random.SeedSequence([seed, iteration, label]).generate_state(1)[0])


def evaluate_deterministic(env, policy, seed, episodes, hmax):
    """Mean return and mean eval metric of the mean-action policy over
    seeded episodes."""
    controller = deterministic_controller(policy)
    returns = np.empty(episodes)
    evals = np.empty(episodes)
    for ep in range(episodes):
        rng = trajectory_rng(seed, ep)
        env.randreset(rng)
        tr = rollout(env, controller, hmax, rng)
        returns[ep] = tr.rews.sum()
        evals[ep] = tr.evals.mean()
    return float(returns.mean()), float(evals.mean())


def _checkpoint(out_dir, iteration, policy, value_net):
    save_policy(f"{out_dir}/policy_{iteration:05d}", policy)
    save_value(f"{out_dir}/value_{iteration:05d}", value_net)


def train(env_factory, config, seed, out_dir=None, policy=None,
          value_net=None, value_adam=None, start_iteration=0):
    """Generator over IterationReports for `config.iterations` NPG steps.

    Pass the policy/value/optimizer trio from a loaded checkpoint plus
    start_iteration to continue a run under its original numbering.
    Checkpoints (when out_dir is given) are written before the first
    iteration, every 25th iteration, and at the end.
    """
    probe = env_factory()
    dobs = probe.obsspace.flat_len
    dact = probe.actionspace.flat_len

    if policy is None:
        policy = DiagGaussianPolicy(
            dobs, dact, hidden=config.policy_hidden,
            rng=np.random.default_rng(np.random.SeedSequence([seed, 0xB0])),
        )
    if value_net is None:
        value_net = Mlp(
            (dobs, *config.value_hidden, 1),
            rng=np.random.default_rng(np.random.SeedSequence([seed, 0xB1])),
        )
    if value_adam is None:
        value_adam = Adam(value_net.nparams, lr=config.value_lr)

    if out_dir is not None and start_iteration == 0:
        _checkpoint(out_dir, 0, policy, value_net)

    last_saved = start_iteration
    for it in range(start_iteration, config.iterations):
        t0 = time.perf_counter()
        batch = parallel_rollouts(
            env_factory,
            stochastic_controller(policy),
            config.n_samples,
            workers=config.workers,
            seed=_iteration_seed(seed, it, 1),
            hmax=config.hmax,
        )
        adv, targets = batch_advantages(
            batch, value_net, config.gamma, config.gae_lambda
        )
        fit_rng = np.random.default_rng(np.random.SeedSequence([seed, it, 2]))
        info = npg_step(
            policy, value_net, value_adam, batch, adv, targets, config, fit_rng
        )
        stoc_return = float(
            np.add.reduceat(batch.rews, batch.offsets[:-1]).mean()
        )
        if config.eval_episodes > 0:
            det_return, eval_mean = evaluate_deterministic(
                probe, policy, _iteration_seed(seed, it, 3),
                config.eval_episodes, config.hmax,
            )
        else:
            det_return, eval_mean = float("nan"), float("nan")

        iteration = it + 1
        if out_dir is not None and iteration % CHECKPOINT_EVERY == 0:
            _checkpoint(out_dir, iteration, policy, value_net)
            last_saved = iteration
        yield IterationReport(
            iteration=iteration,
            stoc_return=stoc_return,
            det_return=det_return,
            eval_mean=eval_mean,
            kl=info.kl,
            value_loss_initial=info.value_loss_initial,
            value_loss_final=info.value_loss_final,
            wall_s=time.perf_counter() - t0,
            degenerate=info.degenerate,
        )
    if out_dir is not None and config.iterations > max(last_saved, start_iteration):
        _checkpoint(out_dir, config.iterations, policy, value_net)


def train_collect(env_factory, config, seed, **kw) -> list:
    """Run train to completion and return the report list."""
    return list(train(env_factory, config, seed, **kw))
