"""Split Bregman flow solvers on a single pyramid level.

Both Bregman solvers work on the total flow of the level; the data term
enters through a :class:`~bregflow.linsys.MotionTensor` whose offsets were
linearised around the flow the level starts from (see
:meth:`bregflow.imageops.Derivatives.relinearize`).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .bregman import BregmanTrace, gshrink, shrink
from .flowfield import FlowField
from .linsys import assemble_motion_tensor, solve_uv_system

__all__ = [
    "SolverParams",
    "PRESETS",
    "grad",
    "grad_adjoint",
    "total_variation",
    "osb_energy",
    "brox_energy",
    "solve_osb_level",
    "solve_brox_level",
    "solve_horn_schunck",
]


@dataclass(frozen=True)
class SolverParams:
    """Parameters of the flow solvers and of the coarse-to-fine pipeline.

    ``lam``, ``gamma`` and ``mu`` carry the meaning they have in the split
    Bregman listings: ``lam`` weighs the data term, ``gamma`` the gradient
    constancy part of it, ``mu`` is the Bregman coupling weight.
    """

    lam: float
    mu: float
    gamma: float = 0.0
    sigma: float = 0.0
    N: int = 30
    M: int = 3
    gs_sweeps: int = 10
    pyramid_scale: float = 0.9
    min_size: int = 16
    median: bool = True
    median_radius: int = 1
    occlusion_on: bool = False
    occlusion_threshold: float = 0.75
    ordering: str = "raster"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not (self.lam > 0 and self.mu > 0):
            raise ValueError("lam and mu must be positive")
        if self.gamma < 0 or self.sigma < 0:
            raise ValueError("gamma and sigma must be non-negative")
        if min(self.N, self.M, self.gs_sweeps) < 1:
            raise ValueError("N, M and gs_sweeps must be >= 1")
        if not 0 < self.pyramid_scale < 1:
            raise ValueError("pyramid_scale must lie in (0, 1)")
        if self.min_size < 3:
            raise ValueError("min_size must be >= 3")
        if self.ordering not in ("raster", "red-black"):
            raise ValueError(f"unknown ordering {self.ordering!r}")

    def with_(self, **changes):
        return replace(self, **changes)


#: Parameter rows of the published OSB / Brox experiments, keyed by
#: ``(model, sequence)``; sequences are the Middlebury directory names.
PRESETS = {
    ("osb", "RubberWhale"): SolverParams(lam=0.01, mu=11.25, gamma=20.0, sigma=0.4, N=30, M=3, gs_sweeps=10),
    ("osb", "Grove2"): SolverParams(lam=0.025, mu=6.3, gamma=1.5, sigma=0.75, N=30, M=3, gs_sweeps=10),
    ("brox", "RubberWhale"): SolverParams(lam=0.0065, mu=0.23, gamma=1.0, sigma=0.38, N=150, M=3, gs_sweeps=10),
    ("brox", "Grove2"): SolverParams(lam=0.065, mu=0.41, gamma=1.0, sigma=0.9, N=150, M=3, gs_sweeps=10),
}


def grad(w):
    """Forward differences, zero across the last column / row."""
    gx = np.zeros_like(w)
    gy = np.zeros_like(w)
    gx[:, :-1] = w[:, 1:] - w[:, :-1]
    gy[:-1, :] = w[1:, :] - w[:-1, :]
    return gx, gy


def grad_adjoint(px, py):
    """Adjoint of :func:`grad` (the negative backward divergence)."""
    out = np.zeros_like(px)
    out[:, 1:] += px[:, :-1]
    out[:, :-1] -= px[:, :-1]
    out[1:, :] += py[:-1, :]
    out[:-1, :] -= py[:-1, :]
    return out


def total_variation(u, v):
    """Coupled isotropic TV ``sum_i ||(grad u_i, grad v_i)||``."""
    ux, uy = grad(u)
    vx, vy = grad(v)
    return float(np.sum(np.sqrt(ux * ux + uy * uy + vx * vx + vy * vy)))


def osb_energy(tensor, lam, u, v):
    """``lam/2 D1(u, v) + TV(u, v)``."""
    return 0.5 * lam * tensor.quadratic_data(u, v) + total_variation(u, v)


def brox_energy(tensor, lam, u, v):
    """``lam D2(u, v) + TV(u, v)``."""
    return lam * tensor.l1_data(u, v) + total_variation(u, v)


def _shrink_or_pass(x, alpha):
    # a zero weight puts no penalty on the slack
    return x if alpha == 0 else shrink(x, alpha)


def _smooth_shrink(u, v, bu, bv, mu):
    ux, uy = grad(u)
    vx, vy = grad(v)
    stacked = np.stack([ux + bu[0], uy + bu[1], vx + bv[0], vy + bv[1]], axis=-1)
    d = gshrink(stacked, 1.0 / mu, axis=-1)
    return (d[..., 0], d[..., 1]), (d[..., 2], d[..., 3]), (ux, uy), (vx, vy)


def _smooth_residual(du, dv, gu, gv):
    return sum(float(np.sum((a - b) ** 2)) for a, b in zip(du + dv, gu + gv))


def solve_osb_level(tensor, params, init=None):
    """Split Bregman for ``lam/2 D1(u, v) + TV(u, v)`` on one level.

    The ``(u, v)`` subproblem is divided by ``lam``, so the stencil system
    uses the motion tensor as is with ``theta = mu / lam``; its right-hand
    side is ``-(c_u, c_v) + theta * grad^T(d - b)``. The slack update
    shrinks the per-pixel 4-vector ``(grad u + b^u, grad v + b^v)`` with
    threshold ``1/mu``.

    Returns
    -------
    flow : FlowField
    trace : BregmanTrace
        ``H`` is ``1/2 ||d - grad(u, v)||^2`` after each outer iteration
        (record 0 is the start), ``J`` the OSB energy.
    """
    shape = tensor.shape
    flow = FlowField.zeros(shape) if init is None else init.copy()
    if flow.shape != shape:
        raise ValueError("init flow does not match the tensor")
    lam, mu = params.lam, params.mu
    theta = mu / lam
    cu, cv = tensor.data_offsets()
    zero = np.zeros(shape)
    du, dv = (zero, zero), (zero, zero)
    bu, bv = (zero, zero), (zero, zero)

    trace = BregmanTrace()
    gu, gv = grad(flow.u), grad(flow.v)
    trace.append(0.5 * _smooth_residual(du, dv, gu, gv), osb_energy(tensor, lam, flow.u, flow.v))

    for i in range(params.N):
        for _ in range(params.M):
            rhs_u = -cu + theta * grad_adjoint(du[0] - bu[0], du[1] - bu[1])
            rhs_v = -cv + theta * grad_adjoint(dv[0] - bv[0], dv[1] - bv[1])
            flow = solve_uv_system(tensor, rhs_u, rhs_v, theta, flow, params.gs_sweeps, params.ordering)
            du, dv, gu, gv = _smooth_shrink(flow.u, flow.v, bu, bv, mu)
        bu = (bu[0] + gu[0] - du[0], bu[1] + gu[1] - du[1])
        bv = (bv[0] + gv[0] - dv[0], bv[1] + gv[1] - dv[1])
        H = 0.5 * _smooth_residual(du, dv, gu, gv)
        trace.append(H, osb_energy(tensor, lam, flow.u, flow.v))
        if H > trace.records[-2].H + 1e-6 and i > 0:
            trace.warn(f"smoothness constraint residual increased at k={i + 1}")
    return flow, trace


def solve_brox_level(tensor, params, init=None):
    """Split Bregman for ``lam D2(u, v) + TV(u, v)`` on one level.

    Every term goes into the constraints with slacks ``d, d_x, d_y`` for the
    three constancy rows and ``d^u, d^v`` for the gradients. All coupling
    terms share the weight ``mu/2``, so after division by it the ``(u, v)``
    system has unit-weighted data rows (a motion tensor with gamma 1) and
    ``theta = 1``. Data slacks are shrunk with ``lam/mu`` (grey) and
    ``lam*gamma/mu`` (gradient); the accumulators ``a, a_x, a_y`` start at
    the temporal offsets and collect the constraint residuals.

    ``tensor`` supplies the derivatives; its own ``gamma`` is ignored in
    favour of ``params.gamma``.
    """
    shape = tensor.shape
    flow = FlowField.zeros(shape) if init is None else init.copy()
    if flow.shape != shape:
        raise ValueError("init flow does not match the tensor")
    lam, mu, gamma = params.lam, params.mu, params.gamma
    der = tensor.derivs
    system = assemble_motion_tensor(der, 1.0)
    data = assemble_motion_tensor(der, gamma)
    theta = 1.0
    t_grey, t_grad = lam / mu, lam * gamma / mu

    zero = np.zeros(shape)
    d0 = dx = dy = zero
    du, dv = (zero, zero), (zero, zero)
    bu, bv = (zero, zero), (zero, zero)
    a0, ax, ay = der.ft.copy(), der.fxt.copy(), der.fyt.copy()

    def rows(u, v):
        return (der.fx * u + der.fy * v,
                der.fxx * u + der.fxy * v,
                der.fxy * u + der.fyy * v)

    def constraint_residual(r, gu, gv):
        return 0.5 * (float(np.sum((d0 - r[0] - der.ft) ** 2) + np.sum((dx - r[1] - der.fxt) ** 2)
                            + np.sum((dy - r[2] - der.fyt) ** 2)) + _smooth_residual(du, dv, gu, gv))

    trace = BregmanTrace()
    trace.append(constraint_residual(rows(flow.u, flow.v), grad(flow.u), grad(flow.v)),
                 brox_energy(data, lam, flow.u, flow.v))

    for i in range(params.N):
        for _ in range(params.M):
            e0, ex, ey = d0 - a0, dx - ax, dy - ay
            rhs_u = der.fx * e0 + der.fxx * ex + der.fxy * ey \
                + theta * grad_adjoint(du[0] - bu[0], du[1] - bu[1])
            rhs_v = der.fy * e0 + der.fxy * ex + der.fyy * ey \
                + theta * grad_adjoint(dv[0] - bv[0], dv[1] - bv[1])
            flow = solve_uv_system(system, rhs_u, rhs_v, theta, flow, params.gs_sweeps, params.ordering)
            r = rows(flow.u, flow.v)
            d0 = _shrink_or_pass(r[0] + a0, t_grey)
            dx = _shrink_or_pass(r[1] + ax, t_grad)
            dy = _shrink_or_pass(r[2] + ay, t_grad)
            du, dv, gu, gv = _smooth_shrink(flow.u, flow.v, bu, bv, mu)
        a0 = a0 + der.ft - d0 + r[0]
        ax = ax + der.fxt - dx + r[1]
        ay = ay + der.fyt - dy + r[2]
        bu = (bu[0] + gu[0] - du[0], bu[1] + gu[1] - du[1])
        bv = (bv[0] + gv[0] - dv[0], bv[1] + gv[1] - dv[1])
        H = constraint_residual(r, gu, gv)
        trace.append(H, brox_energy(data, lam, flow.u, flow.v))
        if H > trace.records[-2].H + 1e-6 and i > 0:
            trace.warn(f"constraint residual increased at k={i + 1}")
    return flow, trace


def solve_horn_schunck(tensor, alpha, sweeps, init=None, ordering="raster"):
    """Horn-Schunck baseline: one Gauss-Seidel solve of the Euler-Lagrange system.

    Uses the grey value rows only (the tensor's gradient rows are ignored)
    and ``theta = alpha``.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    grey = assemble_motion_tensor(tensor.derivs, 0.0)
    cu, cv = grey.data_offsets()
    init = FlowField.zeros(tensor.shape) if init is None else init
    return solve_uv_system(grey, -cu, -cv, alpha, init, sweeps, ordering)
