"""Flow accuracy measures and the colour-wheel rendering."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .flowfield import FlowField

__all__ = [
    "UNKNOWN_FLOW_THRESHOLD",
    "valid_mask",
    "angular_errors",
    "endpoint_errors",
    "aae",
    "aee",
    "ErrorReport",
    "evaluate",
    "make_colorwheel",
    "flow_hue",
    "colorize_flow",
]

#: Middlebury marks pixels without ground truth with components above this.
UNKNOWN_FLOW_THRESHOLD = 1e9


def valid_mask(truth, valid=None):
    """Pixels with known ground truth (and inside ``valid`` when given)."""
    ok = (np.abs(truth.u) <= UNKNOWN_FLOW_THRESHOLD) & (np.abs(truth.v) <= UNKNOWN_FLOW_THRESHOLD)
    ok &= np.isfinite(truth.u) & np.isfinite(truth.v)
    if valid is not None:
        ok &= np.asarray(valid, dtype=bool)
    return ok


def _check(estimated, truth):
    if estimated.shape != truth.shape:
        raise ValueError(f"flow shapes differ: {estimated.shape} vs {truth.shape}")


def angular_errors(estimated, truth):
    """Per-pixel angle in degrees between ``(u, v, 1)`` vectors."""
    _check(estimated, truth)
    num = estimated.u * truth.u + estimated.v * truth.v + 1.0
    den = np.sqrt((estimated.u ** 2 + estimated.v ** 2 + 1.0) * (truth.u ** 2 + truth.v ** 2 + 1.0))
    with np.errstate(invalid="ignore", over="ignore"):
        cos = np.clip(num / den, -1.0, 1.0)
    return np.degrees(np.arccos(cos))


def endpoint_errors(estimated, truth):
    _check(estimated, truth)
    return np.hypot(estimated.u - truth.u, estimated.v - truth.v)


def _mean(errors, mask):
    if not np.any(mask):
        raise ValueError("no valid pixels to evaluate")
    return float(np.mean(errors[mask]))


def aae(estimated, truth, valid=None):
    """Average angular error in degrees over pixels with known ground truth."""
    return _mean(angular_errors(estimated, truth), valid_mask(truth, valid))


def aee(estimated, truth, valid=None):
    """Average endpoint error in pixels over pixels with known ground truth."""
    return _mean(endpoint_errors(estimated, truth), valid_mask(truth, valid))


@dataclass
class ErrorReport:
    aae: float
    aee: float
    n_pixels: int
    angular: Optional[np.ndarray] = None
    endpoint: Optional[np.ndarray] = None

    def __str__(self):
        return f"AAE {self.aae:.2f}  AEE {self.aee:.2f}"


def evaluate(estimated, truth, valid=None, keep_maps=False):
    mask = valid_mask(truth, valid)
    ang = angular_errors(estimated, truth)
    end = endpoint_errors(estimated, truth)
    return ErrorReport(
        aae=_mean(ang, mask),
        aee=_mean(end, mask),
        n_pixels=int(mask.sum()),
        angular=np.where(mask, ang, np.nan) if keep_maps else None,
        endpoint=np.where(mask, end, np.nan) if keep_maps else None,
    )


def make_colorwheel():
    """The 55-entry Middlebury colour wheel (RGB, 0..255).

    Segments red-yellow (15), yellow-green (6), green-cyan (4), cyan-blue
    (11), blue-magenta (13), magenta-red (6).
    """
    segments = [(15, (255, 0, 0), (255, 255, 0)),
                (6, (255, 255, 0), (0, 255, 0)),
                (4, (0, 255, 0), (0, 255, 255)),
                (11, (0, 255, 255), (0, 0, 255)),
                (13, (0, 0, 255), (255, 0, 255)),
                (6, (255, 0, 255), (255, 0, 0))]
    rows = []
    for n, start, stop in segments:
        t = np.arange(n) / n
        start = np.array(start, float)
        stop = np.array(stop, float)
        rows.append(np.floor(start + np.outer(t, stop - start)))
    return np.concatenate(rows)


def flow_hue(u, v, ncols=55):
    """Continuous colour-wheel position in ``[0, ncols)`` of the flow direction.

    ``(-1, 0)`` (pointing left) sits at 0 and the position grows with the
    angle ``atan2(-v, -u)``, one full turn spanning the wheel.
    """
    angle = np.arctan2(-np.asarray(v, float), -np.asarray(u, float))  # (-pi, pi]
    return np.mod((angle / (2 * np.pi)) * ncols, ncols)


def colorize_flow(flow, max_magnitude=None):
    """Render a flow field as an RGB ``uint8`` image.

    Hue encodes direction via :func:`flow_hue`; the saturation grows
    linearly with the magnitude up to ``max_magnitude`` and is clamped
    beyond, so zero flow is white. ``max_magnitude`` defaults to the 99th
    percentile of the finite magnitudes (1 if that is zero).
    """
    u = np.where(np.isfinite(flow.u) & (np.abs(flow.u) <= UNKNOWN_FLOW_THRESHOLD), flow.u, 0.0)
    v = np.where(np.isfinite(flow.v) & (np.abs(flow.v) <= UNKNOWN_FLOW_THRESHOLD), flow.v, 0.0)
    mag = np.hypot(u, v)
    if max_magnitude is None:
        max_magnitude = float(np.percentile(mag, 99)) if mag.size else 1.0
        if max_magnitude <= 0:
            max_magnitude = 1.0
    if not max_magnitude > 0:
        raise ValueError("max_magnitude must be positive")
    wheel = make_colorwheel() / 255.0
    ncols = wheel.shape[0]
    pos = flow_hue(u, v, ncols)
    k0 = np.floor(pos).astype(int) % ncols
    k1 = (k0 + 1) % ncols
    f = (pos - np.floor(pos))[..., None]
    col = (1 - f) * wheel[k0] + f * wheel[k1]
    rad = np.minimum(mag / max_magnitude, 1.0)[..., None]
    col = 1 - rad * (1 - col)
    return np.floor(255 * col + 0.5).astype(np.uint8)
