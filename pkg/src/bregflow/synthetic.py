"""Synthetic frame pairs with known flow, for tests and demos."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .flowfield import FlowField
from .imageops import bilinear_sample

__all__ = ["texture", "flow_pair", "ramp", "FLOW_KINDS"]

FLOW_KINDS = ("translate", "smooth", "piecewise")


def texture(shape, seed=0, scale=3.0):
    """Smooth random texture in ``[0, 255]`` (Gaussian-filtered white noise)."""
    rng = np.random.default_rng(seed)
    t = ndimage.gaussian_filter(rng.standard_normal(shape), scale)
    t = (t - t.min()) / (t.max() - t.min())
    return 255.0 * t


def _true_flow(shape, kind, amp):
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    if kind == "translate":
        return FlowField(np.full(shape, float(amp)), np.zeros(shape))
    if kind == "smooth":
        return FlowField(amp * np.sin(2 * np.pi * yy / h) + 0.5, 0.5 * amp * np.cos(2 * np.pi * xx / w))
    if kind == "piecewise":
        return FlowField(np.where(xx > w / 2, amp, -amp / 2), np.where(yy > h / 2, amp / 2, 0.0))
    raise ValueError(f"unknown flow kind {kind!r}; expected one of {FLOW_KINDS}")


def flow_pair(shape=(64, 80), kind="translate", amp=1.0, seed=0, margin=None, scale=3.0):
    """Frames ``f0, f1`` with ``f1(x + w(x)) = f0(x)`` and the flow ``w``.

    ``f1`` is a crop of a larger texture and ``f0`` samples that texture at
    the displaced positions, so the true flow is exact up to bilinear
    interpolation and never points outside the texture.
    """
    h, w = shape
    flow = _true_flow(shape, kind, amp)
    m = int(np.ceil(2 * abs(amp))) + 4 if margin is None else int(margin)
    T = texture((h + 2 * m, w + 2 * m), seed, scale)
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    f1 = T[m:m + h, m:m + w].copy()
    f0 = bilinear_sample(T, xx + m + flow.u, yy + m + flow.v)
    return f0, f1, flow


def ramp(shape, a=1.0, b=0.0, c=0.0):
    """The plane ``a x + b y + c``."""
    yy, xx = np.mgrid[0:shape[0], 0:shape[1]].astype(float)
    return a * xx + b * yy + c
