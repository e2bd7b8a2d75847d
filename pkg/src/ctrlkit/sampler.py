"""Trajectory collection and throughput measurement.

Work is split by whole trajectories, one environment instance per
worker. Every trajectory draws its RNG from a counter-indexed seed
stream, so the collected batch depends only on (seed, N), never on the
worker count or on scheduling order.
"""

import dataclasses
import json
import multiprocessing
import queue as queue_mod
import time
import traceback

import numpy as np

WORKER_TIMEOUT_S = 120.0


@dataclasses.dataclass(slots=True)
class Trajectory:
    """Step records for one episode plus the closing observation.

    Row t holds the state and observation the controller saw, the action
    it chose, and the reward/eval/done produced by that action.
    """

    states: np.ndarray
    obs: np.ndarray
    acts: np.ndarray
    rews: np.ndarray
    evals: np.ndarray
    dones: np.ndarray
    final_obs: np.ndarray
    terminated: bool

    @property
    def length(self) -> int:
        return self.rews.shape[0]


@dataclasses.dataclass(slots=True)
class TrajectoryBatch:
    """Concatenated trajectories with offset bookkeeping.

    offsets has ntraj+1 entries, starts at 0, is strictly increasing,
    and ends at the total step count.
    """

    states: np.ndarray
    obs: np.ndarray
    acts: np.ndarray
    rews: np.ndarray
    evals: np.ndarray
    dones: np.ndarray
    offsets: np.ndarray
    final_obs: np.ndarray
    terminated: np.ndarray

    @property
    def ntraj(self) -> int:
        return self.offsets.shape[0] - 1

    @property
    def total_steps(self) -> int:
        return int(self.offsets[-1])

    def lengths(self) -> np.ndarray:
        return np.diff(self.offsets)

    def trajectory(self, i: int) -> Trajectory:
        if not 0 <= i < self.ntraj:
            raise IndexError(f"trajectory index {i} out of range")
        lo, hi = int(self.offsets[i]), int(self.offsets[i + 1])
        return Trajectory(
            self.states[lo:hi],
            self.obs[lo:hi],
            self.acts[lo:hi],
            self.rews[lo:hi],
            self.evals[lo:hi],
            self.dones[lo:hi],
            self.final_obs[i],
            bool(self.terminated[i]),
        )

    @classmethod
    def from_trajectories(cls, trajs) -> "TrajectoryBatch":
        if not trajs:
            raise ValueError("cannot build a batch from zero trajectories")
        offsets = np.zeros(len(trajs) + 1, dtype=np.int64)
        for i, tr in enumerate(trajs):
            if tr.length < 1:
                raise ValueError(f"trajectory {i} is empty")
            offsets[i + 1] = offsets[i] + tr.length
        return cls(
            states=np.concatenate([tr.states for tr in trajs]),
            obs=np.concatenate([tr.obs for tr in trajs]),
            acts=np.concatenate([tr.acts for tr in trajs]),
            rews=np.concatenate([tr.rews for tr in trajs]),
            evals=np.concatenate([tr.evals for tr in trajs]),
            dones=np.concatenate([tr.dones for tr in trajs]),
            offsets=offsets,
            final_obs=np.stack([tr.final_obs for tr in trajs]),
            terminated=np.array([tr.terminated for tr in trajs]),
        )


class RolloutBuffer:
    """Preallocated step storage reused across rollouts."""

    __slots__ = ("states", "obs", "acts", "rews", "evals", "dones", "final_obs")

    def __init__(self, sdim, odim, adim, hmax):
        self.states = np.zeros((hmax, sdim))
        self.obs = np.zeros((hmax, odim))
        self.acts = np.zeros((hmax, adim))
        self.rews = np.zeros(hmax)
        self.evals = np.zeros(hmax)
        self.dones = np.zeros(hmax, dtype=bool)
        self.final_obs = np.zeros(odim)

    @classmethod
    def for_env(cls, env, hmax) -> "RolloutBuffer":
        return cls(
            env.statespace.flat_len,
            env.obsspace.flat_len,
            env.actionspace.flat_len,
            hmax,
        )

    @property
    def capacity(self) -> int:
        return self.rews.shape[0]


def rollout(env, controller, hmax, rng, buf=None) -> Trajectory:
    """Run controller(obs, rng) for up to hmax steps from the env's
    current state, recording every step. Stops early when a step reports
    done. The per-step loop writes only into preallocated buffers.
    """
    if hmax < 1:
        raise ValueError(f"hmax must be >= 1, got {hmax}")
    if buf is None:
        buf = RolloutBuffer.for_env(env, hmax)
    if buf.capacity < hmax:
        raise ValueError(f"buffer capacity {buf.capacity} < hmax {hmax}")
    adim = buf.acts.shape[1]
    t = 0
    terminated = False
    while t < hmax:
        env.getstate_into(buf.states[t])
        env.getobs_into(buf.obs[t])
        a = controller(buf.obs[t], rng)
        if not isinstance(a, np.ndarray) or a.shape != (adim,):
            raise ValueError(
                f"controller returned {a!r}, expected float array of shape ({adim},)"
            )
        buf.acts[t] = a
        res = env.step(a)
        buf.rews[t] = res.reward
        buf.evals[t] = res.eval
        buf.dones[t] = res.done
        t += 1
        if res.done:
            terminated = True
            break
    env.getobs_into(buf.final_obs)
    return Trajectory(
        states=buf.states[:t].copy(),
        obs=buf.obs[:t].copy(),
        acts=buf.acts[:t].copy(),
        rews=buf.rews[:t].copy(),
        evals=buf.evals[:t].copy(),
        dones=buf.dones[:t].copy(),
        final_obs=buf.final_obs.copy(),
        terminated=terminated,
    )


def trajectory_rng(seed, index) -> np.random.Generator:
    """RNG stream for one trajectory, keyed by its global index."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(index,))
    )


def parallel_rollouts(
    env_factory, controller, n_samples, workers, seed, hmax=1000
) -> TrajectoryBatch:
    """Collect whole trajectories until their total step count reaches
    n_samples. Trajectory i starts from randreset(trajectory_rng(seed, i)),
    and the batch is the shortest index-prefix whose lengths sum to at
    least n_samples, so the result is identical for any worker count.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    if workers == 1:
        return _collect_inline(env_factory, controller, n_samples, seed, hmax)
    return _collect_forked(env_factory, controller, n_samples, workers, seed, hmax)


def _run_trajectory(env, controller, seed, index, hmax, buf) -> Trajectory:
    rng = trajectory_rng(seed, index)
    env.randreset(rng)
    return rollout(env, controller, hmax, rng, buf)


def _collect_inline(env_factory, controller, n_samples, seed, hmax):
    env = env_factory()
    buf = RolloutBuffer.for_env(env, hmax)
    trajs = []
    total = 0
    index = 0
    while total < n_samples:
        tr = _run_trajectory(env, controller, seed, index, hmax, buf)
        trajs.append(tr)
        total += tr.length
        index += 1
    return TrajectoryBatch.from_trajectories(trajs)


def _prefix_count(got, n_samples):
    """Length of the shortest complete index-prefix in `got` whose step
    total reaches n_samples, or None if no such prefix is complete yet."""
    total = 0
    k = 0
    while k in got:
        total += got[k].length
        k += 1
        if total >= n_samples:
            return k
    return None


def _rollout_worker(env_factory, controller, seed, hmax, widx, stride, stop, outq):
    try:
        env = env_factory()
        buf = RolloutBuffer.for_env(env, hmax)
    except Exception:
        outq.put(("error", widx, traceback.format_exc()))
        return
    try:
        index = widx
        while not stop.is_set():
            tr = _run_trajectory(env, controller, seed, index, hmax, buf)
            outq.put(("traj", index, tr))
            index += stride
    except Exception:
        outq.put(("error", widx, traceback.format_exc()))
        return
    outq.put(("exit", widx, None))


def _collect_forked(env_factory, controller, n_samples, workers, seed, hmax):
    ctx = multiprocessing.get_context("fork")
    stop = ctx.Event()
    outq = ctx.Queue()
    procs = [
        ctx.Process(
            target=_rollout_worker,
            args=(env_factory, controller, seed, hmax, w, workers, stop, outq),
            daemon=True,
        )
        for w in range(workers)
    ]
    for p in procs:
        p.start()
    got = {}
    finished = 0
    failure = None
    while finished < workers:
        try:
            kind, idx, payload = outq.get(timeout=WORKER_TIMEOUT_S)
        except queue_mod.Empty:
            stop.set()
            raise RuntimeError("rollout worker produced no output before timeout")
        if kind == "traj":
            got[idx] = payload
            if not stop.is_set() and _prefix_count(got, n_samples) is not None:
                stop.set()
        elif kind == "error":
            finished += 1
            if failure is None:
                failure = (idx, payload)
            stop.set()
        else:
            finished += 1
    for p in procs:
        p.join()
    if failure is not None:
        raise RuntimeError(f"rollout worker {failure[0]} failed:\n{failure[1]}")
    k = _prefix_count(got, n_samples)
    if k is None:
        raise RuntimeError("workers exited before the sample target was reached")
    return TrajectoryBatch.from_trajectories([got[i] for i in range(k)])


# -- throughput --------------------------------------------------------


@dataclasses.dataclass(slots=True)
class ThroughputReport:
    """Sampling rate and per-step latency spread for one worker count."""

    workers: int
    total_steps: int
    per_worker_steps: tuple
    wall_s: float
    samples_per_sec: float
    jitter_max_s: float
    jitter_p99_s: float

    def to_dict(self) -> dict:
        return {
            "workers": self.workers,
            "total_steps": self.total_steps,
            "per_worker_steps": list(self.per_worker_steps),
            "wall_s": self.wall_s,
            "samples_per_sec": self.samples_per_sec,
            "jitter_max_s": self.jitter_max_s,
            "jitter_p99_s": self.jitter_p99_s,
        }


CSV_HEADER = "workers,samples_per_sec,wall_s,jitter_max_s,jitter_p99_s"


def reports_to_csv(reports) -> str:
    lines = [CSV_HEADER]
    for r in reports:
        lines.append(
            f"{r.workers},{r.samples_per_sec:.3f},{r.wall_s:.6f},"
            f"{r.jitter_max_s:.9f},{r.jitter_p99_s:.9f}"
        )
    return "\n".join(lines) + "\n"


def reports_to_json(reports) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2) + "\n"


def _bench_worker(env_factory, controller, seed, hmax, widx, duration_s,
                  barrier, outq):
    try:
        try:
            env = env_factory()
        except Exception:
            # release peers stuck at the start barrier
            barrier.abort()
            raise
        rng = trajectory_rng(seed, widx)
        if controller is None:
            fixed = np.zeros(env.actionspace.flat_len)

            def controller(obs, rng, _fixed=fixed):
                return _fixed

        obs_buf = np.zeros(env.obsspace.flat_len)
        # warm-up rollout, discarded
        env.randreset(rng)
        for _ in range(hmax):
            env.getobs_into(obs_buf)
            if env.step(controller(obs_buf, rng)).done:
                break
        cap = max(1, int(duration_s * 800_000))
        lat = np.empty(cap)
        count = 0
        ep = 0
        env.randreset(rng)
        barrier.wait()
        t0 = time.perf_counter()
        deadline = t0 + duration_s
        while count < cap:
            s0 = time.perf_counter()
            env.getobs_into(obs_buf)
            a = controller(obs_buf, rng)
            done = env.step(a).done
            s1 = time.perf_counter()
            lat[count] = s1 - s0
            count += 1
            ep += 1
            if done or ep >= hmax:
                env.randreset(rng)
                ep = 0
            if s1 >= deadline:
                break
        elapsed = time.perf_counter() - t0
        outq.put(("ok", widx, (count, elapsed, lat[:count].copy())))
    except Exception:
        outq.put(("error", widx, traceback.format_exc()))


def benchmark_throughput(
    env_factory, workers_list, duration_s, seed=0, hmax=1000, controller=None
):
    """Measure sampling throughput for each worker count in workers_list.

    Each worker runs one discarded warm-up rollout, waits at a barrier,
    then samples for duration_s seconds recording per-step latency for
    step + getobs_into + controller. A None controller means zero
    actions. Jitter is the absolute deviation of per-step latency from
    the pooled mean.
    """
    if duration_s < 0.1:
        raise ValueError(f"duration_s too small: {duration_s}")
    if not workers_list:
        raise ValueError("workers_list is empty")
    reports = []
    for w in workers_list:
        if w < 1:
            raise ValueError(f"worker count must be >= 1, got {w}")
        reports.append(
            _bench_one(env_factory, w, duration_s, seed, hmax, controller)
        )
    return reports


def _bench_one(env_factory, workers, duration_s, seed, hmax, controller):
    ctx = multiprocessing.get_context("fork")
    outq = ctx.Queue()
    barrier = ctx.Barrier(workers)
    procs = [
        ctx.Process(
            target=_bench_worker,
            args=(env_factory, controller, seed, hmax, w, duration_s,
                  barrier, outq),
            daemon=True,
        )
        for w in range(workers)
    ]
    for p in procs:
        p.start()
    results = {}
    failures = []
    for _ in range(workers):
        try:
            kind, widx, payload = outq.get(timeout=WORKER_TIMEOUT_S + duration_s)
        except queue_mod.Empty:
            raise RuntimeError("benchmark worker produced no output before timeout")
        if kind == "error":
            failures.append((widx, payload))
        else:
            results[widx] = payload
    for p in procs:
        p.join()
    if failures:
        # prefer the root cause over peers that saw the aborted barrier
        root = [f for f in failures if "BrokenBarrier" not in f[1]] or failures
        raise RuntimeError(f"benchmark worker {root[0][0]} failed:\n{root[0][1]}")
    counts = tuple(results[w][0] for w in range(workers))
    wall = max(results[w][1] for w in range(workers))
    pooled = np.concatenate([results[w][2] for w in range(workers)])
    dev = np.abs(pooled - pooled.mean())
    total = int(sum(counts))
    return ThroughputReport(
        workers=workers,
        total_steps=total,
        per_worker_steps=counts,
        wall_s=float(wall),
        samples_per_sec=float(total / wall),
        jitter_max_s=float(dev.max()),
        jitter_p99_s=float(np.quantile(dev, 0.99)),
    )
