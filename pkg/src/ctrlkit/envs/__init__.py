"""Builtin analytic environments and the name registry used by the CLI
and services.

Each entry maps a short name to (environment class, config class). Model
constants are plain dataclasses, loadable from JSON dicts with unknown
keys rejected.
"""

from __future__ import annotations

from ctrlkit.configio import dataclass_from_dict
from ctrlkit.envs.cartpole import CartPoleConfig, CartPoleSwingUp
from ctrlkit.envs.pendulum import Pendulum, PendulumConfig
from ctrlkit.envs.pointmass import PointMass, PointMassConfig
from ctrlkit.envs.reacher import NLinkReacher, ReacherConfig
from ctrlkit.envs.task import ReachTask, episode_success, sample_annulus

REGISTRY = {
    "cartpole": (CartPoleSwingUp, CartPoleConfig),
    "pendulum": (Pendulum, PendulumConfig),
    "pointmass": (PointMass, PointMassConfig),
    "reacher": (NLinkReacher, ReacherConfig),
}


def env_names():
    return sorted(REGISTRY)


def make_env(name: str, config: dict | None = None):
    """Construct a registered environment, optionally from a config dict."""
    try:
        env_cls, cfg_cls = REGISTRY[name]
    except KeyError:
        raise ValueError(
            f"unknown environment {name!r}; known: {', '.join(env_names())}"
        ) from None
    cfg = dataclass_from_dict(cfg_cls, config, path=f"env.{name}") if config else None
    return env_cls(cfg) if cfg is not None else env_cls()


__all__ = [
    "REGISTRY",
    "env_names",
    "make_env",
    "CartPoleSwingUp",
    "CartPoleConfig",
    "Pendulum",
    "PendulumConfig",
    "PointMass",
    "PointMassConfig",
    "NLinkReacher",
    "ReacherConfig",
    "ReachTask",
    "episode_success",
    "sample_annulus",
]
