"""Multilayer perceptron over one flat float64 parameter vector.

tanh hidden layers, linear output. The flat layout is, per layer, the
(fan_in x fan_out) weight matrix in C order followed by the bias vector;
layer views alias the flat vector, so optimizers update parameters
through it directly. Gradients are hand-derived reverse mode; a forward
mode directional derivative (jvp) supports matrix-free curvature
products. All math is float64.
"""

from __future__ import annotations

import numpy as np


def param_count(sizes) -> int:
    return sum((sizes[i] + 1) * sizes[i + 1] for i in range(len(sizes) - 1))


class Mlp:
    def __init__(self, sizes, params=None, rng=None, final_gain=1.0):
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ValueError(f"need at least two positive layer sizes, got {sizes}")
        self.sizes = sizes
        self.nparams = param_count(sizes)
        if params is None:
            params = np.zeros(self.nparams)
        elif params.shape != (self.nparams,):
            raise ValueError(
                f"parameter buffer shape {params.shape} != ({self.nparams},)"
            )
        self.params = params
        self.weights = []
        self.biases = []
        ofs = 0
        for i in range(len(sizes) - 1):
            ni, no = sizes[i], sizes[i + 1]
            self.weights.append(params[ofs : ofs + ni * no].reshape(ni, no))
            ofs += ni * no
            self.biases.append(params[ofs : ofs + no])
            ofs += no
        if rng is not None:
            self.initialize(rng, final_gain=final_gain)

    def initialize(self, rng, final_gain=1.0):
        """Uniform fan-in scaled weights, zero biases; the final layer is
        scaled by final_gain (small values keep initial outputs near 0)."""
        last = len(self.weights) - 1
        for i, w in enumerate(self.weights):
            bound = 1.0 / np.sqrt(w.shape[0])
            gain = final_gain if i == last else 1.0
            w[:] = gain * rng.uniform(-bound, bound, w.shape)
            self.biases[i][:] = 0.0

    # -- passes ---------------------------------------------------------

    def forward(self, x):
        """x: (batch, d_in) -> (batch, d_out)."""
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i != last:
                h = np.tanh(h)
        return h

    def forward1(self, x):
        """Single-sample forward, x: (d_in,) -> (d_out,)."""
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i != last:
                h = np.tanh(h)
        return h

    def forward_cached(self, x):
        """Forward pass keeping every layer input for backward/jvp.

        Returns (output, acts) where acts[0] is x and acts[i] the input
        of layer i (post-tanh for hidden layers).
        """
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i != last:
                h = np.tanh(h)
                acts.append(h)
        return h, acts

    def backward(self, acts, dout, grad_out=None):
        """Reverse-mode gradient summed over the batch.

        acts: from forward_cached. dout: (batch, d_out) upstream gradient
        per sample. Returns the flat gradient vector (allocating unless
        grad_out is given).
        """
        if grad_out is None:
            grad_out = np.empty(self.nparams)
        gw, gb = self._grad_views(grad_out)
        delta = dout
        for i in range(len(self.weights) - 1, -1, -1):
            np.matmul(acts[i].T, delta, out=gw[i])
            np.sum(delta, axis=0, out=gb[i])
            if i > 0:
                delta = (delta @ self.weights[i].T) * (1.0 - acts[i] * acts[i])
        return grad_out

    def jvp(self, acts, v):
        """Directional derivative of the output along flat direction v,
        evaluated batched at the inputs recorded in acts: (batch, d_out).
        """
        vw, vb = self._grad_views(v)
        dh = None
        last = len(self.weights) - 1
        for i in range(len(self.weights)):
            dz = acts[i] @ vw[i] + vb[i]
            if dh is not None:
                dz = dz + dh @ self.weights[i]
            if i != last:
                nxt = acts[i + 1]
                dh = (1.0 - nxt * nxt) * dz
            else:
                dh = dz
        return dh

    def _grad_views(self, flat):
        ws, bs = [], []
        ofs = 0
        for i in range(len(self.sizes) - 1):
            ni, no = self.sizes[i], self.sizes[i + 1]
            ws.append(flat[ofs : ofs + ni * no].reshape(ni, no))
            ofs += ni * no
            bs.append(flat[ofs : ofs + no])
            ofs += no
        return ws, bs
