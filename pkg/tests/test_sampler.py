"""Rollout recording, worker-count-invariant batch collection, and the
throughput benchmark protocol."""

import gc
import sys

import numpy as np
import pytest

from ctrlkit.envs import make_env
from ctrlkit.sampler import (
    RolloutBuffer,
    TrajectoryBatch,
    benchmark_throughput,
    parallel_rollouts,
    reports_to_csv,
    reports_to_json,
    rollout,
    trajectory_rng,
)


def pendulum():
    return make_env("pendulum")


def pointmass():
    return make_env("pointmass")


def zeros_controller(adim):
    fixed = np.zeros(adim)

    def ctrl(obs, rng):
        return fixed

    return ctrl


def random_controller(adim):
    def ctrl(obs, rng):
        return rng.uniform(-1.0, 1.0, adim)

    return ctrl


# -- rollout -----------------------------------------------------------

def test_rollout_runs_to_horizon_without_termination():
    env = pendulum()
    env.reset()
    tr = rollout(env, zeros_controller(1), 50, np.random.default_rng(0))
    assert tr.length == 50
    assert not tr.terminated
    assert not tr.dones.any()
    assert tr.states.shape == (50, 3)
    assert tr.obs.shape == (50, 3)
    assert tr.acts.shape == (50, 1)


def test_rollout_first_row_is_reset_state():
    env = pendulum()
    env.reset()
    start = env.getstate()
    tr = rollout(env, zeros_controller(1), 5, np.random.default_rng(0))
    assert np.array_equal(tr.states[0], start)


def test_rollout_stops_at_first_done_step():
    env = pendulum()
    env.reset()
    # gravity at the horizontal pushes the rate over the bound in one step
    env.setstate(np.array([np.pi / 2.0, 99.99, 0.0]))
    tr = rollout(env, zeros_controller(1), 50, np.random.default_rng(0))
    assert tr.length == 1
    assert tr.terminated
    assert tr.dones[0]


def test_rollout_records_step_results():
    env = pendulum()
    env.reset()
    tr = rollout(env, zeros_controller(1), 10, np.random.default_rng(0))
    env2 = pendulum()
    env2.reset()
    for t in range(10):
        res = env2.step(tr.acts[t])
        assert tr.rews[t] == res.reward
        assert tr.evals[t] == res.eval
    assert np.array_equal(tr.final_obs, env2.getobs())


def test_rollout_rejects_bad_controller_output():
    env = pendulum()
    env.reset()
    with pytest.raises(ValueError, match="controller returned"):
        rollout(env, lambda obs, rng: np.zeros(3), 5, np.random.default_rng(0))
    env.reset()
    with pytest.raises(ValueError, match="controller returned"):
        rollout(env, lambda obs, rng: 0.0, 5, np.random.default_rng(0))


def test_rollout_deterministic_for_fixed_seed():
    def once():
        env = pointmass()
        rng = np.random.default_rng(123)
        env.randreset(rng)
        return rollout(env, random_controller(2), 40, rng)

    a, b = once(), once()
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.acts, b.acts)
    assert np.array_equal(a.rews, b.rews)


def test_rollout_buffer_reuse_keeps_results_independent():
    env = pendulum()
    buf = RolloutBuffer.for_env(env, 20)
    env.reset()
    first = rollout(env, random_controller(1), 20, np.random.default_rng(1), buf)
    snap = first.acts.copy()
    env.reset()
    rollout(env, random_controller(1), 20, np.random.default_rng(2), buf)
    assert np.array_equal(first.acts, snap)


def test_rollout_validates_horizon_and_capacity():
    env = pendulum()
    env.reset()
    with pytest.raises(ValueError):
        rollout(env, zeros_controller(1), 0, np.random.default_rng(0))
    small = RolloutBuffer.for_env(env, 5)
    with pytest.raises(ValueError, match="capacity"):
        rollout(env, zeros_controller(1), 10, np.random.default_rng(0), small)


def test_rollout_loop_does_not_grow_the_heap():
    env = pendulum()
    buf = RolloutBuffer.for_env(env, 200)
    ctrl = zeros_controller(1)
    rng = np.random.default_rng(0)
    gc.collect()
    gc.disable()
    try:
        # early windows absorb one-time cache fills; the loop shape keeps
        # the counter's own boxed int from skewing later readings
        deltas = []
        for _ in range(6):
            before = sys.getallocatedblocks()
            for _ in range(5):
                env.reset()
                rollout(env, ctrl, 200, rng, buf)
            deltas.append(sys.getallocatedblocks() - before)
    finally:
        gc.enable()
    assert deltas[2:] == [0, 0, 0, 0]


# -- parallel collection -----------------------------------------------

def test_single_worker_collects_exact_prefix():
    batch = parallel_rollouts(pendulum, zeros_controller(1), 300, 1, 7, hmax=75)
    assert batch.ntraj == 4
    assert batch.total_steps == 300
    assert np.array_equal(batch.lengths(), [75, 75, 75, 75])
    assert batch.offsets[0] == 0
    assert np.all(np.diff(batch.offsets) > 0)


def test_counting_bound_at_train_scale():
    batch = parallel_rollouts(pendulum, zeros_controller(1), 10_000, 1, 0,
                              hmax=1000)
    assert batch.ntraj == 10
    assert batch.total_steps == 10_000
    assert 10 <= batch.ntraj <= 10_009


def test_trajectory_content_keyed_by_index_not_worker():
    tr_direct_rng = trajectory_rng(99, 3)
    env = pointmass()
    env.randreset(tr_direct_rng)
    direct = rollout(env, random_controller(2), 60, tr_direct_rng)

    batch = parallel_rollouts(pointmass, random_controller(2), 240, 1, 99,
                              hmax=60)
    assert np.array_equal(batch.trajectory(3).states, direct.states)
    assert np.array_equal(batch.trajectory(3).acts, direct.acts)


def test_worker_count_does_not_change_the_batch():
    args = (pointmass, random_controller(2), 360, )
    one = parallel_rollouts(pointmass, random_controller(2), 360, 1, 42, hmax=60)
    three = parallel_rollouts(pointmass, random_controller(2), 360, 3, 42, hmax=60)
    assert one.ntraj == three.ntraj
    assert np.array_equal(one.offsets, three.offsets)
    assert np.array_equal(one.states, three.states)
    assert np.array_equal(one.obs, three.obs)
    assert np.array_equal(one.acts, three.acts)
    assert np.array_equal(one.rews, three.rews)
    assert np.array_equal(one.final_obs, three.final_obs)
    assert np.array_equal(one.terminated, three.terminated)


def test_forked_collection_repeatable():
    a = parallel_rollouts(pendulum, random_controller(1), 150, 2, 5, hmax=50)
    b = parallel_rollouts(pendulum, random_controller(1), 150, 2, 5, hmax=50)
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.acts, b.acts)


def test_factory_failure_reports_worker_index():
    def broken():
        raise OSError("no device")

    with pytest.raises(RuntimeError, match="worker"):
        parallel_rollouts(broken, zeros_controller(1), 10, 2, 0, hmax=10)


def test_parallel_rollouts_validates_arguments():
    with pytest.raises(ValueError):
        parallel_rollouts(pendulum, zeros_controller(1), 0, 1, 0)
    with pytest.raises(ValueError):
        parallel_rollouts(pendulum, zeros_controller(1), 10, 0, 0)


def test_batch_trajectory_slices_roundtrip():
    batch = parallel_rollouts(pendulum, zeros_controller(1), 120, 1, 3, hmax=40)
    rebuilt = TrajectoryBatch.from_trajectories(
        [batch.trajectory(i) for i in range(batch.ntraj)]
    )
    assert np.array_equal(rebuilt.states, batch.states)
    assert np.array_equal(rebuilt.offsets, batch.offsets)
    with pytest.raises(IndexError):
        batch.trajectory(batch.ntraj)


def test_batch_requires_trajectories():
    with pytest.raises(ValueError):
        TrajectoryBatch.from_trajectories([])


# -- throughput benchmark ----------------------------------------------

def test_benchmark_smoke_single_worker():
    reports = benchmark_throughput(pendulum, [1], 0.5, seed=0, hmax=200)
    assert len(reports) == 1
    r = reports[0]
    assert r.workers == 1
    assert r.samples_per_sec > 0
    assert r.total_steps == sum(r.per_worker_steps)
    assert r.jitter_max_s >= r.jitter_p99_s >= 0.0
    assert r.samples_per_sec == pytest.approx(r.total_steps / r.wall_s)


def test_benchmark_csv_shape():
    reports = benchmark_throughput(pendulum, [1, 1], 0.3, seed=0, hmax=100)
    csv = reports_to_csv(reports)
    lines = csv.strip().split("\n")
    assert lines[0] == "workers,samples_per_sec,wall_s,jitter_max_s,jitter_p99_s"
    assert len(lines) == 3
    for line in lines[1:]:
        cells = line.split(",")
        assert len(cells) == 5
        assert int(cells[0]) == 1
        assert float(cells[1]) > 0


def test_benchmark_json_fields():
    import json

    reports = benchmark_throughput(pendulum, [1], 0.3, seed=0, hmax=100)
    data = json.loads(reports_to_json(reports))
    assert isinstance(data, list) and len(data) == 1
    for key in ("workers", "total_steps", "per_worker_steps", "wall_s",
                "samples_per_sec", "jitter_max_s", "jitter_p99_s"):
        assert key in data[0]


def test_benchmark_validates_arguments():
    with pytest.raises(ValueError):
        benchmark_throughput(pendulum, [], 1.0)
    with pytest.raises(ValueError):
        benchmark_throughput(pendulum, [0], 1.0)
    with pytest.raises(ValueError):
        benchmark_throughput(pendulum, [1], 0.01)


def test_benchmark_propagates_factory_failure():
    def broken():
        raise OSError("no device")

    with pytest.raises(RuntimeError, match="worker"):
        benchmark_throughput(broken, [2], 0.3)
