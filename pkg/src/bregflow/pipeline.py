"""Coarse-to-fine warping driver around the per-level solvers."""

from __future__ import annotations

import numpy as np

from .flowfield import FlowField
from .imageops import (build_pyramid, derivatives, detect_occlusions, gaussian_smooth,
                       median_filter_flow, upsample_flow, warp)
from .linsys import assemble_motion_tensor
from .solvers import solve_brox_level, solve_horn_schunck, solve_osb_level

__all__ = ["MODELS", "level_tensor", "solve_level", "compute_flow"]

MODELS = ("osb", "brox", "horn_schunck")


def level_tensor(f0, f1, flow, gamma, visible=None):
    """Warp ``f1`` towards ``f0`` by ``flow`` and linearise the data term there."""
    f1w, _ = warp(f1, flow)
    der = derivatives(f0, f1w).relinearize(flow.u, flow.v)
    return assemble_motion_tensor(der, gamma, visible)


def solve_level(f0, f1, flow, model, params, visible=None):
    """One pyramid level: re-linearise once, then run the model's solver.

    Returns the updated total flow and the level's trace (``None`` for the
    Horn-Schunck baseline, which has no Bregman loop).
    """
    tensor = level_tensor(f0, f1, flow, params.gamma, visible)
    if model == "osb":
        return solve_osb_level(tensor, params, flow)
    if model == "brox":
        return solve_brox_level(tensor, params, flow)
    if model == "horn_schunck":
        alpha = params.mu / params.lam
        sweeps = params.N * params.M * params.gs_sweeps
        return solve_horn_schunck(tensor, alpha, sweeps, flow, params.ordering), None
    raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")


def compute_flow(f0, f1, model, params, return_traces=False):
    """Estimate the flow from ``f0`` to ``f1``.

    Both frames are presmoothed with ``params.sigma`` and put into a pyramid
    with factor ``params.pyramid_scale``. From the coarsest level on, the
    previous flow is upsampled, median filtered (if ``params.median``) and
    refined by the level solver after warping ``f1`` with it.

    With ``params.occlusion_on`` a backward flow is estimated alongside and
    pixels failing the forward/backward cross-check, or whose target leaves
    the image, get their data term switched off.

    For ``model="horn_schunck"`` the smoothness weight is ``mu / lam`` and
    the sweep count per level ``N * M * gs_sweeps``.

    Returns
    -------
    flow : FlowField
    traces : list of BregmanTrace, only when ``return_traces`` is set
        One per level, coarsest first.
    """
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")
    f0 = np.asarray(f0, dtype=float)
    f1 = np.asarray(f1, dtype=float)
    if f0.shape != f1.shape:
        raise ValueError(f"frame shapes differ: {f0.shape} vs {f1.shape}")
    g0 = gaussian_smooth(f0, params.sigma)
    g1 = gaussian_smooth(f1, params.sigma)
    pyr = build_pyramid(g0, g1, params.pyramid_scale, params.min_size)

    fwd = bwd = None
    traces = []
    for a, b in reversed(pyr.levels):
        shape = a.shape
        if fwd is None:
            fwd = FlowField.zeros(shape)
            bwd = FlowField.zeros(shape) if params.occlusion_on else None
        else:
            fwd = upsample_flow(fwd, shape)
            if params.median:
                fwd = median_filter_flow(fwd, params.median_radius)
            if bwd is not None:
                bwd = upsample_flow(bwd, shape)
                if params.median:
                    bwd = median_filter_flow(bwd, params.median_radius)

        if params.occlusion_on:
            vis_f = _visible(fwd, bwd, params.occlusion_threshold)
            vis_b = _visible(bwd, fwd, params.occlusion_threshold)
            bwd, _ = solve_level(b, a, bwd, model, params, vis_b)
        else:
            vis_f = None
        fwd, trace = solve_level(a, b, fwd, model, params, vis_f)
        traces.append(trace)

    return (fwd, traces) if return_traces else fwd


def _visible(flow, other, threshold):
    if not (np.any(flow.u) or np.any(flow.v) or np.any(other.u) or np.any(other.v)):
        return None
    return detect_occlusions(flow, other, threshold)
