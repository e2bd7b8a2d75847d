"""Mini-batch MSE regression used for value-function fitting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# the fit runs exactly this many passes over the data each call
FIT_EPOCHS = 2
FIT_BATCH = 64


@dataclass(slots=True)
class FitReport:
    loss_initial: float
    loss_final: float
    epochs: int
    batches: int


def mse_loss(net, x, y) -> float:
    pred = net.forward(x)[:, 0]
    d = pred - y
    return float(d @ d) / d.shape[0]


def value_fit(net, x, y, adam, rng, batch_size=FIT_BATCH, epochs=FIT_EPOCHS):
    """Fit net to (x, y) with mini-batch Adam on MSE.

    Runs exactly `epochs` shuffled passes; returns initial/final loss.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise ValueError(f"inconsistent dataset shapes {x.shape} / {y.shape}")
    n = x.shape[0]
    if n == 0:
        raise ValueError("empty dataset")
    loss0 = mse_loss(net, x, y)
    grad = np.empty(net.nparams)
    batches = 0
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            xb = x[idx]
            yb = y[idx]
            pred, acts = net.forward_cached(xb)
            dout = (2.0 / idx.shape[0]) * (pred[:, 0] - yb)
            net.backward(acts, dout[:, None], grad_out=grad)
            adam.update(net.params, grad)
            batches += 1
    return FitReport(loss0, mse_loss(net, x, y), epochs, batches)
