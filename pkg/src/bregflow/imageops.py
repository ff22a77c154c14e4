"""Image-side preprocessing: smoothing, derivatives, pyramids, warping,
median filtering and forward/backward occlusion checks.

Images are 2D float arrays indexed ``[row, col]`` (``y``, ``x``) with unit
grid spacing. All stencils use reflecting (half-sample symmetric) boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .flowfield import FlowField

__all__ = [
    "gaussian_kernel",
    "gaussian_smooth",
    "Derivatives",
    "derivatives",
    "Pyramid",
    "pyramid_shapes",
    "build_pyramid",
    "resample",
    "upsample_flow",
    "bilinear_sample",
    "warp",
    "median_filter_flow",
    "detect_occlusions",
    "DEFAULT_OCCLUSION_THRESHOLD",
]

DEFAULT_OCCLUSION_THRESHOLD = 0.75


def gaussian_kernel(sigma):
    """Sampled Gaussian truncated at ``+-ceil(3 sigma)`` and normalised to sum 1."""
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(img, sigma):
    """Separable Gaussian convolution; ``sigma == 0`` returns the input unchanged."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    img = np.asarray(img, dtype=float)
    if sigma == 0:
        return img.copy()
    k = gaussian_kernel(sigma)
    out = ndimage.correlate1d(img, k, axis=0, mode="reflect")
    return ndimage.correlate1d(out, k, axis=1, mode="reflect")


@dataclass
class Derivatives:
    """Spatial and spatio-temporal derivative fields of a frame pair."""

    fx: np.ndarray
    fy: np.ndarray
    fxx: np.ndarray
    fxy: np.ndarray
    fyy: np.ndarray
    ft: np.ndarray
    fxt: np.ndarray
    fyt: np.ndarray

    def relinearize(self, u0, v0):
        """Offsets for a data term linearised around the flow ``(u0, v0)``.

        The linearised residual ``fx du + fy dv + ft`` in the increment
        ``(du, dv) = (u - u0, v - v0)`` equals ``fx u + fy v + ft'`` with
        ``ft' = ft - fx u0 - fy v0``; same for the gradient rows. Solving for
        the total flow with these offsets is the same as solving for the
        increment while regularising the total flow.
        """
        return Derivatives(
            self.fx, self.fy, self.fxx, self.fxy, self.fyy,
            self.ft - self.fx * u0 - self.fy * v0,
            self.fxt - self.fxx * u0 - self.fxy * v0,
            self.fyt - self.fxy * u0 - self.fyy * v0,
        )


def _dx(f):
    p = np.pad(f, ((0, 0), (1, 1)), mode="symmetric")
    return 0.5 * (p[:, 2:] - p[:, :-2])


def _dy(f):
    p = np.pad(f, ((1, 1), (0, 0)), mode="symmetric")
    return 0.5 * (p[2:, :] - p[:-2, :])


def _dxx(f):
    p = np.pad(f, ((0, 0), (1, 1)), mode="symmetric")
    return p[:, 2:] - 2.0 * f + p[:, :-2]


def _dyy(f):
    p = np.pad(f, ((1, 1), (0, 0)), mode="symmetric")
    return p[2:, :] - 2.0 * f + p[:-2, :]


def derivatives(img_t, img_t1):
    """Central-difference derivatives of a frame pair.

    Spatial derivatives are taken on the average of the two frames,
    ``ft = img_t1 - img_t`` and ``fxt``, ``fyt`` are the spatial derivatives
    of ``ft``.
    """
    f0 = np.asarray(img_t, dtype=float)
    f1 = np.asarray(img_t1, dtype=float)
    if f0.shape != f1.shape:
        raise ValueError(f"frame shapes differ: {f0.shape} vs {f1.shape}")
    if f0.ndim != 2 or min(f0.shape) < 3:
        raise ValueError("derivatives need 2D frames of at least 3x3 pixels")
    avg = 0.5 * (f0 + f1)
    ft = f1 - f0
    fx = _dx(avg)
    return Derivatives(
        fx=fx,
        fy=_dy(avg),
        fxx=_dxx(avg),
        fxy=_dy(fx),
        fyy=_dyy(avg),
        ft=ft,
        fxt=_dx(ft),
        fyt=_dy(ft),
    )


@dataclass
class Pyramid:
    """Frame pairs, finest level first."""

    levels: list
    scale: float

    def __len__(self):
        return len(self.levels)

    @property
    def shapes(self):
        return [lvl[0].shape for lvl in self.levels]


def pyramid_shapes(shape, scale, min_size):
    """Level shapes: each level is ``round(scale * previous)`` per axis; levels
    are added while the smaller dimension stays ``>= min_size``."""
    if not 0 < scale < 1:
        raise ValueError("scale must lie in (0, 1)")
    shapes = [tuple(int(s) for s in shape)]
    while True:
        nxt = tuple(int(round(scale * s)) for s in shapes[-1])
        if min(nxt) < min_size or nxt == shapes[-1]:
            return shapes
        shapes.append(nxt)


def resample(img, shape):
    """Bilinear resampling to ``shape`` with pixel-centre alignment."""
    img = np.asarray(img, dtype=float)
    h, w = img.shape
    H, W = shape
    ys = (np.arange(H) + 0.5) * (h / H) - 0.5
    xs = (np.arange(W) + 0.5) * (w / W) - 0.5
    yy, xx = np.meshgrid(np.clip(ys, 0, h - 1), np.clip(xs, 0, w - 1), indexing="ij")
    return bilinear_sample(img, xx, yy)


def build_pyramid(f0, f1, scale=0.9, min_size=16):
    """Coarse-to-fine pyramid of a frame pair.

    Each level is obtained from the previous one by a Gaussian anti-alias
    with ``sigma = 0.5 sqrt(1/scale^2 - 1)`` followed by bilinear
    resampling.
    """
    f0 = np.asarray(f0, dtype=float)
    f1 = np.asarray(f1, dtype=float)
    shapes = pyramid_shapes(f0.shape, scale, min_size)
    sigma = 0.5 * math.sqrt(1.0 / scale ** 2 - 1.0)
    levels = [(f0, f1)]
    for shp in shapes[1:]:
        a, b = levels[-1]
        levels.append((resample(gaussian_smooth(a, sigma), shp),
                       resample(gaussian_smooth(b, sigma), shp)))
    return Pyramid(levels, scale)


def upsample_flow(flow, shape):
    """Bilinear upsampling of both components, rescaled to the finer grid."""
    h, w = flow.shape
    return FlowField(resample(flow.u, shape) * (shape[1] / w),
                     resample(flow.v, shape) * (shape[0] / h))


def bilinear_sample(img, x, y):
    """Sample ``img`` at real positions; coordinates are clamped to the domain."""
    h, w = img.shape
    x = np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(x).astype(np.intp), w - 2) if w > 1 else np.zeros(x.shape, np.intp)
    y0 = np.minimum(np.floor(y).astype(np.intp), h - 2) if h > 1 else np.zeros(y.shape, np.intp)
    ax = x - x0
    ay = y - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    top = img[y0, x0] * (1.0 - ax) + img[y0, x1] * ax
    bot = img[y1, x0] * (1.0 - ax) + img[y1, x1] * ax
    return top * (1.0 - ay) + bot * ay


def warp(img, flow):
    """Backward warp: ``out(x, y) = img(x + u, y + v)`` by bilinear sampling.

    Returns
    -------
    out : ndarray
        Warped image; targets outside the domain take the nearest boundary
        value.
    outside : ndarray of bool
        True where the target position left the image domain.
    """
    img = np.asarray(img, dtype=float)
    if img.shape != flow.shape:
        raise ValueError("image and flow shapes differ")
    h, w = img.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    tx = xx + flow.u
    ty = yy + flow.v
    outside = (tx < 0) | (tx > w - 1) | (ty < 0) | (ty > h - 1)
    return bilinear_sample(img, tx, ty), outside


def median_filter_flow(flow, radius=1):
    """Componentwise ``(2r+1) x (2r+1)`` median with reflecting boundaries."""
    if radius < 1:
        raise ValueError("radius must be >= 1")
    size = 2 * radius + 1
    return FlowField(ndimage.median_filter(flow.u, size=size, mode="reflect"),
                     ndimage.median_filter(flow.v, size=size, mode="reflect"))


def detect_occlusions(flow_fwd, flow_bwd, threshold=DEFAULT_OCCLUSION_THRESHOLD):
    """Forward/backward cross-check.

    A pixel is visible (``True``) when its forward vector and the backward
    vector sampled at its target nearly cancel,
    ``||w_f(x) + w_b(x + w_f(x))|| <= threshold``. Targets outside the image
    are occluded.
    """
    if flow_fwd.shape != flow_bwd.shape:
        raise ValueError("forward and backward flows differ in shape")
    h, w = flow_fwd.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    tx = xx + flow_fwd.u
    ty = yy + flow_fwd.v
    outside = (tx < 0) | (tx > w - 1) | (ty < 0) | (ty > h - 1)
    bu = bilinear_sample(flow_bwd.u, tx, ty)
    bv = bilinear_sample(flow_bwd.v, tx, ty)
    err = np.hypot(flow_fwd.u + bu, flow_fwd.v + bv)
    return (err <= threshold) & ~outside
