"""Checkpoint format for network parameters.

A checkpoint is a pair of files sharing one base path:

* ``<base>.bin`` — the flat parameter vector as consecutive 64-bit
  little-endian IEEE floats, no header, in the network's canonical
  order (per layer: weight matrix rows, then biases; for policies the
  log-std vector follows all mean-network parameters).
* ``<base>.json`` — sidecar with ``layer_sizes`` (the MLP sizes) and
  ``logstd_offset`` (flat index where log-std begins; null for plain
  value networks).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ctrlkit.neural.mlp import Mlp, param_count
from ctrlkit.neural.policy import DiagGaussianPolicy


def save_checkpoint(base, params, layer_sizes, logstd_offset=None, extra=None):
    base = Path(base)
    base.parent.mkdir(parents=True, exist_ok=True)
    params = np.ascontiguousarray(params, dtype="<f8")
    base.with_suffix(".bin").write_bytes(params.tobytes())
    meta = {
        "layer_sizes": [int(s) for s in layer_sizes],
        "logstd_offset": None if logstd_offset is None else int(logstd_offset),
        "param_count": int(params.shape[0]),
    }
    if extra:
        meta.update(extra)
    with open(base.with_suffix(".json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(base):
    base = Path(base)
    with open(base.with_suffix(".json"), "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    raw = base.with_suffix(".bin").read_bytes()
    params = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    expected = meta.get("param_count")
    if expected is not None and params.shape[0] != expected:
        raise ValueError(
            f"{base}.bin holds {params.shape[0]} parameters, sidecar says {expected}"
        )
    sizes = meta["layer_sizes"]
    ofs = meta.get("logstd_offset")
    n_mean = param_count(sizes)
    want = n_mean if ofs is None else n_mean + sizes[-1]
    if params.shape[0] != want:
        raise ValueError(
            f"{base}.bin parameter count {params.shape[0]} inconsistent with "
            f"layer sizes {sizes}"
        )
    if ofs is not None and ofs != n_mean:
        raise ValueError(f"logstd_offset {ofs} != mean parameter count {n_mean}")
    return params, meta


def save_policy(base, policy: DiagGaussianPolicy, extra=None):
    save_checkpoint(base, policy.params, policy.sizes,
                    logstd_offset=policy.logstd_offset, extra=extra)


def load_policy(base) -> DiagGaussianPolicy:
    params, meta = load_checkpoint(base)
    if meta.get("logstd_offset") is None:
        raise ValueError(f"{base} is not a policy checkpoint (no logstd_offset)")
    sizes = meta["layer_sizes"]
    return DiagGaussianPolicy(sizes[0], sizes[-1], hidden=tuple(sizes[1:-1]),
                              params=params)


def save_value(base, net: Mlp, extra=None):
    save_checkpoint(base, net.params, net.sizes, logstd_offset=None, extra=extra)


def load_value(base) -> Mlp:
    params, meta = load_checkpoint(base)
    return Mlp(meta["layer_sizes"], params=params)
