from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class FlowField:
    """Per-pixel displacement in pixels; ``u`` along columns (x), ``v`` along rows (y)."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.u.shape != self.v.shape or self.u.ndim != 2:
            raise ValueError(f"u and v must be 2D arrays of equal shape, got {self.u.shape} and {self.v.shape}")

    @classmethod
    def zeros(cls, shape):
        return cls(np.zeros(shape), np.zeros(shape))

    @classmethod
    def constant(cls, shape, u, v):
        return cls(np.full(shape, float(u)), np.full(shape, float(v)))

    @classmethod
    def from_array(cls, arr):
        """From an ``(H, W, 2)`` array as stored in .flo files."""
        arr = np.asarray(arr)
        return cls(arr[..., 0], arr[..., 1])

    @property
    def shape(self):
        return self.u.shape

    def to_array(self):
        return np.stack([self.u, self.v], axis=-1)

    def copy(self):
        return FlowField(self.u.copy(), self.v.copy())

    def __add__(self, other):
        return FlowField(self.u + other.u, self.v + other.v)

    def __sub__(self, other):
        return FlowField(self.u - other.u, self.v - other.v)

    def __neg__(self):
        return FlowField(-self.u, -self.v)
