"""End-to-end verification suite: one test per shipped guarantee.

Each test pins its tolerances and wall-clock budget at the assert site:

- sampling throughput reaches 2.8x from 1 to 4 workers (needs 4 cores)
- a 10,000-step rollout allocates nothing after warm-up
- reacher MPPI wins >= 95% of 40 episodes at real-time latency
- cartpole NPG at the reference hyperparameters triples its return
  in at least 4 of 5 seeds
- closed-form numerical oracles: GAE endpoints, analytic gradients,
  CG vs dense solve, MPPI weights, integrator accuracy, energy drift
- fixed seeds reproduce rollouts, batches, and training logs exactly
- the live loop absorbs an impulse, exports kinematics, and holds its
  period with two clients attached
"""

import gc
import json
import math
import os
import pathlib
import sys
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

import ctrlkit.npg as npg
from ctrlkit import liveserve
from ctrlkit.envs import REGISTRY, NLinkReacher, PointMass, make_env
from ctrlkit.envs.pointmass import PointMassConfig
from ctrlkit.envs.task import ReachTask
from ctrlkit.mppi import MppiConfig, MppiController, mppi_weights, run_episodes
from ctrlkit.neural import DiagGaussianPolicy, Mlp, conjugate_gradient, mse_loss
from ctrlkit.npg import NpgConfig, gae_advantages, train_collect
from ctrlkit.sampler import (
    RolloutBuffer,
    benchmark_throughput,
    parallel_rollouts,
    rollout,
)

FK_FIXTURE = pathlib.Path(__file__).resolve().parent.parent / "frontend" / "src" / "fk_vectors.json"


def cartpole():
    return make_env("cartpole")


def pointmass_at(goal):
    return PointMass(PointMassConfig(task=ReachTask(goal=goal)))


def finite_diff(f, params, h=1e-5):
    g = np.empty_like(params)
    for i in range(params.shape[0]):
        p0 = params[i]
        params[i] = p0 + h
        up = f()
        params[i] = p0 - h
        dn = f()
        params[i] = p0
        g[i] = (up - dn) / (2.0 * h)
    return g


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(1.0, np.linalg.norm(b))


def test_sampling_scales_to_four_workers():
    ncpu = os.cpu_count() or 1
    if ncpu < 4:
        pytest.skip(
            f"worker scaling needs >= 4 cores; this machine has {ncpu}, "
            "so the 2.8x-at-4-workers property cannot be measured here"
        )
    t0 = time.perf_counter()
    one, four = benchmark_throughput(cartpole, [1, 4], 6.0, seed=0, hmax=250)
    wall = time.perf_counter() - t0
    speedup = four.samples_per_sec / one.samples_per_sec
    assert speedup >= 2.8, (
        f"4-worker speedup {speedup:.2f} below 2.8 "
        f"({four.samples_per_sec:.0f} vs {one.samples_per_sec:.0f} samples/s)"
    )
    assert wall < 60.0, f"scaling measurement took {wall:.1f}s, budget 60s"


def test_ten_thousand_step_rollout_allocates_nothing():
    env = cartpole()
    buf = RolloutBuffer.for_env(env, 10_000)
    fixed = np.zeros(env.actionspace.flat_len)

    def ctrl(obs, rng):
        return fixed

    rng = np.random.default_rng(0)
    env.reset()
    warm = rollout(env, ctrl, 10_000, rng, buf)
    assert warm.length == 10_000

    gc.collect()
    gc.disable()
    try:
        # window 0 absorbs residual one-time cache fills; each later
        # window is one full 10,000-step rollout measured by the block
        # counter and must come back exactly flat
        deltas = []
        for _ in range(4):
            before = sys.getallocatedblocks()
            env.reset()
            rollout(env, ctrl, 10_000, rng, buf)
            deltas.append(sys.getallocatedblocks() - before)
    finally:
        gc.enable()
    assert deltas[1:] == [0, 0, 0], (
        f"10,000-step rollout allocated after warm-up: block deltas {deltas}"
    )


@pytest.mark.filterwarnings("ignore:beta0")
def test_reacher_planner_success_rate_and_latency():
    t0 = time.perf_counter()
    env = NLinkReacher()
    controller = MppiController(
        NLinkReacher(),
        MppiConfig(H=16, K=30, temperature=5.0, sigma=0.6),
        seed=2025,
        n_refine=3,
    )
    records = run_episodes(env, controller, 40, seed=2024)
    wall = time.perf_counter() - t0

    assert all(r.steps == 75 for r in records)
    wins = sum(r.success for r in records)
    assert wins >= 38, f"{wins}/40 reacher episodes succeeded; need >= 38 (95%)"
    latency = float(np.mean([d.latency_s for d in controller.diagnostics]))
    assert latency < env.dt, (
        f"mean per-step planning latency {latency * 1e3:.1f}ms is not "
        f"real-time against dt={env.dt * 1e3:.0f}ms"
    )
    assert wall < 120.0, f"reacher campaign took {wall:.1f}s, budget 120s"


def test_cartpole_trainer_triples_return_in_most_seeds():
    cfg = NpgConfig()
    assert (cfg.gamma, cfg.gae_lambda, cfg.step_size) == (0.995, 0.97, 0.1)
    assert cfg.n_samples == 10_000
    assert cfg.policy_hidden == (64, 64)
    assert cfg.value_hidden == (128, 128)

    t0 = time.perf_counter()
    outcomes = []
    for seed in range(5):
        reports = train_collect(cartpole, cfg, seed)
        det = np.array([r.det_return for r in reports])
        early = float(det[0:10].mean())
        late = float(det[90:100].mean())
        # a flat-zero curve shows no improvement; late must clear zero
        # so 0 >= 3*0 cannot pass vacuously
        ok = late >= 3.0 * early and late > 0.0
        outcomes.append((seed, early, late, ok))
    wall = time.perf_counter() - t0

    improved = sum(ok for *_, ok in outcomes)
    detail = ", ".join(
        f"seed {s}: {e:.2f} -> {l:.2f} {'ok' if ok else 'FLAT'}"
        for s, e, l, ok in outcomes
    )
    assert improved >= 4, f"return tripled in only {improved}/5 seeds ({detail})"
    assert wall < 1200.0, f"five training runs took {wall:.0f}s, budget 1200s"


def test_numerical_oracles():
    rng = np.random.default_rng(12345)

    # GAE endpoints: lambda=0 is the TD residual, lambda=1 the
    # discounted return minus the baseline
    for _ in range(5):
        t = int(rng.integers(10, 60))
        gamma = float(rng.uniform(0.5, 1.0))
        r = rng.normal(0.0, 2.0, t)
        v = rng.normal(0.0, 1.0, t + 1)
        adv0, _ = gae_advantages(r, v, gamma=gamma, lam=0.0)
        assert np.abs(adv0 - (r + gamma * v[1:] - v[:-1])).max() < 1e-10
        adv1, _ = gae_advantages(r, v, gamma=gamma, lam=1.0)
        ret = np.empty(t)
        acc = v[t]
        for i in range(t - 1, -1, -1):
            acc = r[i] + gamma * acc
            ret[i] = acc
        assert np.abs(adv1 - (ret - v[:-1])).max() < 1e-10

    # analytic gradients vs central differences, 100 random draws
    # split across the two backward paths
    for trial in range(60):
        pol = DiagGaussianPolicy(3, 2, hidden=(5,),
                                 rng=np.random.default_rng(trial))
        obs = rng.standard_normal(3)
        act = rng.standard_normal(2)
        g = pol.grad_logprob(obs, act)
        fd = finite_diff(lambda: pol.logprob1(obs, act), pol.params)
        assert rel_err(g, fd) < 1e-4
    for trial in range(40):
        net = Mlp((3, rng.integers(2, 6), 1),
                  rng=np.random.default_rng(1000 + trial))
        x = rng.standard_normal((7, 3))
        y = rng.standard_normal(7)
        pred, acts = net.forward_cached(x)
        dout = (2.0 / 7.0) * (pred[:, 0] - y)
        g = net.backward(acts, dout[:, None])
        fd = finite_diff(lambda: mse_loss(net, x, y), net.params)
        assert rel_err(g, fd) < 1e-4

    # CG against a dense solver on random 20x20 SPD systems
    for _ in range(5):
        m = rng.standard_normal((20, 20))
        a = m @ m.T + 20.0 * np.eye(20)
        b = rng.standard_normal(20)
        res = conjugate_gradient(lambda v: a @ v, b, iters=200, tol=1e-14)
        exact = np.linalg.solve(a, b)
        assert np.linalg.norm(res.x - exact) / np.linalg.norm(exact) < 1e-8

    # exponential weights vs direct computation, including invariance
    # to shifting every candidate return by a constant
    for lam in (0.05, 5.0):
        returns = rng.normal(0.0, 3.0, 30)
        w = mppi_weights(returns, lam)
        direct = np.exp((returns - returns.max()) / lam)
        direct /= direct.sum()
        assert np.abs(w - direct).max() < 1e-12
        for shift in (-7.5, 3.25, 50.0):
            assert np.abs(mppi_weights(returns + shift, lam) - w).max() < 1e-12

    # each integrator against itself at 100x finer substeps, and the
    # energy band of the undriven conservative systems
    def pair(name, base, **kw):
        cls, cfg_cls = REGISTRY[name]
        return cls(cfg_cls(substeps=base, **kw)), cls(cfg_cls(substeps=base * 100, **kw))

    def final_state_gap(coarse, fine, actions):
        fine.setstate(coarse.getstate())
        for a in actions:
            coarse.step(a)
            fine.step(a)
        n = coarse.nq + coarse.nv
        sc = coarse.getstate()[:n]
        sf = fine.getstate()[:n]
        return np.linalg.norm(sc - sf) / max(1.0, np.linalg.norm(sf))

    drive = np.random.default_rng(7)

    coarse, fine = pair("pendulum", 128)
    coarse.reset()
    coarse._qpos[0] = math.pi - 1.0
    coarse._qvel[0] = 0.5
    assert final_state_gap(coarse, fine, drive.uniform(-0.5, 0.5, (100, 1))) < 1e-4

    coarse, fine = pair("cartpole", 128)
    coarse.reset()
    coarse._qpos[1] = math.pi - 0.8
    coarse._qvel[:] = [0.3, 0.5]
    assert final_state_gap(coarse, fine, drive.uniform(-0.5, 0.5, (100, 1))) < 1e-4

    coarse, fine = pair("pointmass", 64)
    coarse.reset()
    assert final_state_gap(coarse, fine, drive.uniform(-0.5, 0.5, (100, 2))) < 1e-4

    coarse, fine = pair("reacher", 1024)
    coarse.reset()
    coarse._qvel[:] = [1.0, -2.0]
    assert final_state_gap(coarse, fine, np.zeros((100, 2))) < 1e-4

    def drift(env, steps=1000):
        e0 = env.energy()
        zero = np.zeros(env.actionspace.flat_len)
        for _ in range(steps):
            env.step(zero)
        return abs(env.energy() - e0) / abs(e0)

    env, _ = pair("pendulum", 128, damping=0.0)
    env.reset()
    env._qpos[0] = math.pi - 1.0
    env._qvel[0] = 0.5
    assert drift(env) < 1e-3

    env, _ = pair("cartpole", 128)
    env.reset()
    env._qpos[1] = math.pi - 0.8
    env._qvel[:] = [0.3, 0.5]
    assert drift(env) < 1e-3

    env, _ = pair("reacher", 256, damping=0.0)
    env.reset()
    env._qpos[:] = [0.3, -0.7]
    env._qvel[:] = [1.0, -2.0]
    assert drift(env) < 1e-3


def test_fixed_seeds_reproduce_everything_bitwise():
    def wander(obs, rng):
        return rng.uniform(-1.0, 1.0, 2)

    # single rollout
    def once():
        env = make_env("pointmass")
        rng = np.random.default_rng(321)
        env.randreset(rng)
        return rollout(env, wander, 60, rng)

    a, b = once(), once()
    for field in ("states", "obs", "acts", "rews", "evals"):
        assert np.array_equal(getattr(a, field), getattr(b, field)), field

    # batch content independent of worker count
    def pm():
        return make_env("pointmass")

    one = parallel_rollouts(pm, wander, 240, 1, 11, hmax=60)
    three = parallel_rollouts(pm, wander, 240, 3, 11, hmax=60)
    for field in ("states", "obs", "acts", "rews", "offsets",
                  "final_obs", "terminated"):
        assert np.array_equal(getattr(one, field), getattr(three, field)), field

    # full training log byte-equal across runs
    def goal_env():
        return pointmass_at((1.0, 0.0))

    cfg = NpgConfig(n_samples=120, hmax=25, iterations=3,
                    policy_hidden=(8,), value_hidden=(8,), eval_episodes=1)
    logs = [
        npg.reports_to_csv(train_collect(goal_env, cfg, 5))
        for _ in range(2)
    ]
    assert logs[0] == logs[1]


def test_live_loop_interaction():
    # a protocol-delivered impulse spikes the task metric, and the
    # planner pulls it back under the success radius within 50 ticks
    loop = liveserve.LiveLoop(
        PointMass(),
        MppiController(
            PointMass(),
            MppiConfig(H=12, K=16, sigma=0.4, temperature=0.05,
                       beta0=0.25, beta1=0.75),
            seed=7,
            n_refine=2,
        ),
    )
    _, q = loop.subscribe()
    env = loop.env
    radius = env.task.success_radius

    def pump():
        loop.tick_once()
        frames = []
        while not q.empty():
            frames.append(q.get_nowait())
        states = [m for m in frames if m["type"] == "state"]
        return states[-1]

    for _ in range(10):
        settled = pump()
    assert settled["eval"] < radius

    cmd = liveserve.parse_command(
        json.dumps({"type": "perturb", "dims": [0, 1], "impulse": [1.0, 0.5]}),
        env.nv, env.ntask,
    )
    assert loop.submit(cmd)
    evals = [pump()["eval"] for _ in range(50)]
    assert max(evals[:20]) > radius, "impulse never registered on the task metric"
    assert evals[-1] < radius, (
        f"metric still {evals[-1]:.4f} after 50 ticks, radius {radius}"
    )

    # exported kinematics vectors match the simulation and the client
    # fixture shipped with the browser UI, both to 1e-6
    vectors = liveserve.fk_vectors()
    probe = NLinkReacher()
    probe.reset()
    scratch = np.empty(2 * (probe.nq + 1))
    for case in vectors["reacher"]["cases"]:
        state = probe.getstate()
        state[: probe.nq] = case["qpos"]
        state[probe.nq: probe.nq + probe.nv] = 0.0
        probe.setstate(state)
        probe.fk_into(scratch)
        flat = np.asarray(case["points"], dtype=np.float64).ravel()
        assert np.abs(flat - scratch).max() < 1e-6

    with open(FK_FIXTURE) as f:
        fixture = json.load(f)
    assert sorted(fixture) == sorted(vectors)
    for kind, entry in vectors.items():
        recorded = fixture[kind]["cases"]
        assert len(recorded) == len(entry["cases"])
        for got, want in zip(entry["cases"], recorded):
            assert np.abs(np.asarray(got["qpos"]) - want["qpos"]).max() < 1e-6
            assert np.abs(
                np.asarray(got["points"]) - np.asarray(want["points"])
            ).max() < 1e-6

    # the running service holds its period within 5% of dt while two
    # clients stay attached and consuming
    service = liveserve.LiveService(
        PointMass(),
        MppiController(
            PointMass(),
            MppiConfig(H=8, K=8, sigma=0.3, temperature=0.05,
                       beta0=0.25, beta1=0.75),
            seed=3,
        ),
        env_name="pointmass",
    )
    dt = service.loop.env.dt

    def read_state(ws):
        while True:
            m = json.loads(ws.receive_text())
            if m["type"] == "state":
                return m

    with TestClient(service.app) as client:
        with client.websocket_connect("/ws") as w1, \
                client.websocket_connect("/ws") as w2:
            for _ in range(60):
                read_state(w1)
                read_state(w2)
            status = client.get("/status").json()
    assert status["n_ticks"] >= 50
    period = status["mean_period_s"]
    assert abs(period - dt) / dt < 0.05, (
        f"mean loop period {period * 1e3:.2f}ms drifted beyond 5% of "
        f"dt={dt * 1e3:.0f}ms with two clients attached"
    )
