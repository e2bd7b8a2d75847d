"""Adam over a flat parameter vector."""

from __future__ import annotations

import numpy as np


class Adam:
    def __init__(self, nparams, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = np.zeros(nparams)
        self.v = np.zeros(nparams)

    def update(self, params, grad):
        """Apply one descent step in place; params and grad are flat."""
        if params.shape != self.m.shape or grad.shape != self.m.shape:
            raise ValueError("parameter/gradient shape mismatch with optimizer state")
        self.t += 1
        self.m += (1.0 - self.beta1) * (grad - self.m)
        self.v += (1.0 - self.beta2) * (grad * grad - self.v)
        mhat = self.m / (1.0 - self.beta1**self.t)
        vhat = self.v / (1.0 - self.beta2**self.t)
        params -= self.lr * mhat / (np.sqrt(vhat) + self.eps)
