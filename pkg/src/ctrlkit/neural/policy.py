"""Diagonal Gaussian policy: MLP mean, state-independent log-std.

The full parameter vector is [mean-network params | logstd], one flat
float64 array shared by views, so the whole policy moves under a single
vector update. Score computations below are exact gradients of

    log N(a; mu(o), diag(exp(2 logstd)))
"""

from __future__ import annotations

import math

import numpy as np

from ctrlkit.neural.mlp import Mlp, param_count

LOG2PI = math.log(2.0 * math.pi)


class DiagGaussianPolicy:
    def __init__(self, dobs, dact, hidden=(64, 64), rng=None, logstd_init=-0.5,
                 final_gain=0.01, params=None):
        self.dobs = int(dobs)
        self.dact = int(dact)
        self.sizes = (self.dobs, *[int(h) for h in hidden], self.dact)
        n_mean = param_count(self.sizes)
        self.nparams = n_mean + self.dact
        self.logstd_offset = n_mean
        if params is None:
            params = np.zeros(self.nparams)
        elif params.shape != (self.nparams,):
            raise ValueError(f"parameter vector shape {params.shape} != ({self.nparams},)")
        self.params = params
        self.mean_net = Mlp(self.sizes, params=params[:n_mean])
        self.logstd = params[n_mean:]
        if rng is not None:
            self.mean_net.initialize(rng, final_gain=final_gain)
            self.logstd[:] = logstd_init

    # -- acting ---------------------------------------------------------

    def mean(self, obs):
        return self.mean_net.forward1(obs)

    def act(self, obs, rng):
        """Sample a ~ N(mu(obs), sigma^2). Deterministic given rng state."""
        mu = self.mean_net.forward1(obs)
        return mu + np.exp(self.logstd) * rng.standard_normal(self.dact)

    def act_deterministic(self, obs):
        return self.mean_net.forward1(obs)

    # -- densities ------------------------------------------------------

    def logprob(self, obs, act):
        """Batched log-density: obs (B, dobs), act (B, dact) -> (B,)."""
        mu = self.mean_net.forward(obs)
        inv_var = np.exp(-2.0 * self.logstd)
        z2 = (act - mu) ** 2 * inv_var
        return -0.5 * (z2.sum(axis=1) + self.dact * LOG2PI) - self.logstd.sum()

    def logprob1(self, obs, act):
        mu = self.mean_net.forward1(obs)
        z = (act - mu) * np.exp(-self.logstd)
        return float(-0.5 * (z @ z + self.dact * LOG2PI) - self.logstd.sum())

    # -- scores ---------------------------------------------------------

    def grad_logprob(self, obs, act, grad_out=None):
        """Exact gradient of logprob1 w.r.t. the full flat parameters."""
        if grad_out is None:
            grad_out = np.empty(self.nparams)
        x = obs.reshape(1, -1)
        mu, acts = self.mean_net.forward_cached(x)
        inv_var = np.exp(-2.0 * self.logstd)
        dmu = (act - mu[0]) * inv_var
        self.mean_net.backward(acts, dmu.reshape(1, -1),
                               grad_out=grad_out[: self.logstd_offset])
        z2 = (act - mu[0]) ** 2 * inv_var
        grad_out[self.logstd_offset :] = z2 - 1.0
        return grad_out

    def score_cache(self, obs, act):
        """Precompute everything needed for batched score algebra.

        obs (B, dobs), act (B, dact). The per-sample score decomposes per
        layer into outer products of cached activations and deltas, so
        score dot products and weighted score sums never materialize the
        (B x nparams) score matrix.
        """
        mu, acts = self.mean_net.forward_cached(obs)
        inv_var = np.exp(-2.0 * self.logstd)
        dmu = (act - mu) * inv_var
        z2 = (act - mu) ** 2 * inv_var
        return _ScoreCache(self, acts, dmu, z2 - 1.0)

    def clone(self):
        other = DiagGaussianPolicy(self.dobs, self.dact,
                                   hidden=self.sizes[1:-1],
                                   params=self.params.copy())
        return other


class _ScoreCache:
    """Batched view of per-sample score vectors g_i = d logpi_i / d theta."""

    def __init__(self, policy, acts, dmu, dlogstd):
        self.policy = policy
        self.acts = acts
        self.dmu = dmu
        self.dlogstd = dlogstd
        self.n = dmu.shape[0]

    def weighted_sum(self, coeffs, grad_out=None):
        """sum_i coeffs[i] * g_i as a flat vector (one backward pass)."""
        pol = self.policy
        if grad_out is None:
            grad_out = np.empty(pol.nparams)
        weighted = self.dmu * coeffs[:, None]
        pol.mean_net.backward(self.acts, weighted,
                              grad_out=grad_out[: pol.logstd_offset])
        grad_out[pol.logstd_offset :] = self.dlogstd.T @ coeffs
        return grad_out

    def dots(self, v):
        """Per-sample dot products (g_i . v) as a (B,) vector (one jvp)."""
        pol = self.policy
        jv = pol.mean_net.jvp(self.acts, v[: pol.logstd_offset])
        return (jv * self.dmu).sum(axis=1) + self.dlogstd @ v[pol.logstd_offset :]

    def fisher_vector_product(self, v, damping=0.0):
        """(1/B) sum_i g_i (g_i . v) + damping * v, matrix-free."""
        s = self.dots(v)
        out = self.weighted_sum(s)
        out /= self.n
        if damping:
            out += damping * v
        return out
