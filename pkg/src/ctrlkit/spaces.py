"""Shape-and-bounds descriptors for state/observation/action/eval vectors."""

from __future__ import annotations

import math

import numpy as np


class Space:
    """A bounded real vector space.

    Attributes:
        dims: extent per axis (all builtin spaces are rank 1).
        lo, hi: per-element bounds over the flattened space; unbounded
            dimensions carry -inf / +inf.
    """

    __slots__ = ("dims", "lo", "hi")

    def __init__(self, dims, lo=-math.inf, hi=math.inf):
        self.dims = tuple(int(d) for d in dims)
        n = self.flat_len
        if n <= 0:
            raise ValueError(f"space must have positive size, got dims={self.dims}")
        self.lo = np.broadcast_to(np.asarray(lo, dtype=np.float64), (n,)).copy()
        self.hi = np.broadcast_to(np.asarray(hi, dtype=np.float64), (n,)).copy()
        if np.any(self.lo > self.hi):
            raise ValueError("space lower bound exceeds upper bound")

    @classmethod
    def vector(cls, n, lo=-math.inf, hi=math.inf):
        return cls((n,), lo, hi)

    @classmethod
    def scalar(cls, lo=-math.inf, hi=math.inf):
        return cls((1,), lo, hi)

    @property
    def rank(self):
        return len(self.dims)

    @property
    def flat_len(self):
        return int(np.prod(self.dims)) if self.dims else 1

    def contains(self, x):
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.shape[0] != self.flat_len:
            return False
        return bool(np.all(x >= self.lo) and np.all(x <= self.hi))

    def clamp_into(self, x, out):
        """Clamp x elementwise into [lo, hi], writing to out.

        Calls the min/max ufuncs directly: the np.clip wrapper churns
        bound-method objects, which shows up in allocation counters.
        """
        np.maximum(x, self.lo, out=out)
        np.minimum(out, self.hi, out=out)

    def zeros(self):
        return np.zeros(self.flat_len)

    def __repr__(self):
        return f"Space(dims={self.dims})"

    def __eq__(self, other):
        return (
            isinstance(other, Space)
            and self.dims == other.dims
            and np.array_equal(self.lo, other.lo)
            and np.array_equal(self.hi, other.hi)
        )
