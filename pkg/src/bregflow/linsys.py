"""Motion tensor and the coupled 5-point stencil system shared by all solvers.

The system, per pixel ``i``::

    J11 u_i + J12 v_i - theta * sum_{k in N(i)} (u_k - u_i) = R_u
    J12 u_i + J22 v_i - theta * sum_{k in N(i)} (v_k - v_i) = R_v

with unit grid spacing and neighbours outside the image simply absent.
Nothing here ever materialises the matrix; the dense assembly exists only
for testing small grids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .flowfield import FlowField
from .imageops import Derivatives

__all__ = [
    "MotionTensor",
    "assemble_motion_tensor",
    "apply_operator",
    "quadratic_form",
    "system_energy",
    "assemble_dense",
    "solve_uv_system",
    "SPDReport",
    "spd_check",
]


@dataclass
class MotionTensor:
    """Per-pixel Gram matrix of the linearised constancy rows plus offsets.

    The data rows at a pixel are ``(fx, fy | ft)``,
    ``sqrt(gamma) (fxx, fxy | fxt)`` and ``sqrt(gamma) (fxy, fyy | fyt)``.
    """

    J11: np.ndarray
    J12: np.ndarray
    J22: np.ndarray
    derivs: Derivatives
    gamma: float

    @property
    def shape(self):
        return self.J11.shape

    def data_offsets(self):
        """Linear part ``(c_u, c_v)`` of the quadratic data term's gradient."""
        d, g = self.derivs, self.gamma
        cu = d.fx * d.ft + g * (d.fxx * d.fxt + d.fxy * d.fyt)
        cv = d.fy * d.ft + g * (d.fxy * d.fxt + d.fyy * d.fyt)
        return cu, cv

    def data_residuals(self, u, v):
        """The three linearised constancy residuals at every pixel."""
        d = self.derivs
        return (d.fx * u + d.fy * v + d.ft,
                d.fxx * u + d.fxy * v + d.fxt,
                d.fxy * u + d.fyy * v + d.fyt)

    def quadratic_data(self, u, v):
        """``D1``: squared grey residual plus ``gamma`` times squared gradient residuals."""
        r0, r1, r2 = self.data_residuals(u, v)
        return float(np.sum(r0 * r0) + self.gamma * np.sum(r1 * r1 + r2 * r2))

    def l1_data(self, u, v):
        """``D2``: absolute grey residual plus ``gamma`` times absolute gradient residuals."""
        r0, r1, r2 = self.data_residuals(u, v)
        return float(np.sum(np.abs(r0)) + self.gamma * np.sum(np.abs(r1) + np.abs(r2)))

    def eigenvalues(self):
        """Per-pixel eigenvalues (ascending) of ``[[J11, J12], [J12, J22]]``."""
        tr = 0.5 * (self.J11 + self.J22)
        disc = np.sqrt(0.25 * (self.J11 - self.J22) ** 2 + self.J12 ** 2)
        return np.stack([tr - disc, tr + disc], axis=-1)


def assemble_motion_tensor(derivs, gamma, occlusion=None):
    """Build the motion tensor from derivative fields.

    Pixels where ``occlusion`` is False (occluded) get every derivative and
    offset zeroed, which switches their data term off.
    """
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    d = derivs
    if occlusion is not None:
        keep = np.asarray(occlusion, dtype=bool).astype(float)
        d = Derivatives(*(getattr(derivs, name) * keep for name in
                          ("fx", "fy", "fxx", "fxy", "fyy", "ft", "fxt", "fyt")))
    J11 = d.fx ** 2 + gamma * (d.fxx ** 2 + d.fxy ** 2)
    J12 = d.fx * d.fy + gamma * (d.fxx * d.fxy + d.fxy * d.fyy)
    J22 = d.fy ** 2 + gamma * (d.fxy ** 2 + d.fyy ** 2)
    return MotionTensor(J11, J12, J22, d, float(gamma))


def _laplacian_neg(w):
    """``sum_{k in N(i)} (w_i - w_k)`` with absent neighbours dropped."""
    out = np.zeros_like(w)
    dx = w[:, 1:] - w[:, :-1]
    dy = w[1:, :] - w[:-1, :]
    out[:, :-1] -= dx
    out[:, 1:] += dx
    out[:-1, :] -= dy
    out[1:, :] += dy
    return out


def apply_operator(tensor, theta, u, v):
    """Matrix-free product of the system matrix with ``(u, v)``."""
    Mu = tensor.J11 * u + tensor.J12 * v + theta * _laplacian_neg(u)
    Mv = tensor.J12 * u + tensor.J22 * v + theta * _laplacian_neg(v)
    return Mu, Mv


def quadratic_form(tensor, theta, u, v):
    """``(u, v)^T M (u, v)`` in its sum-of-squares arrangement.

    The data part is the squared constancy rows evaluated without offsets,
    the smoothness part ``theta`` times the squared differences across every
    right and down edge, so the value is non-negative by construction and
    exactly zero for a constant field orthogonal to a constant gradient.
    """
    d = tensor.derivs
    g = tensor.gamma
    r0 = d.fx * u + d.fy * v
    r1 = d.fxx * u + d.fxy * v
    r2 = d.fxy * u + d.fyy * v
    data = np.sum(r0 * r0) + g * np.sum(r1 * r1 + r2 * r2)
    smooth = (np.sum((u[:, 1:] - u[:, :-1]) ** 2) + np.sum((u[1:, :] - u[:-1, :]) ** 2)
              + np.sum((v[:, 1:] - v[:, :-1]) ** 2) + np.sum((v[1:, :] - v[:-1, :]) ** 2))
    return float(data + theta * smooth)


def system_energy(tensor, theta, rhs_u, rhs_v, u, v):
    """``1/2 x^T M x - x^T R``; minimised by the solution of the system."""
    Mu, Mv = apply_operator(tensor, theta, u, v)
    return float(0.5 * np.sum(u * Mu + v * Mv) - np.sum(u * rhs_u + v * rhs_v))


def assemble_dense(tensor, theta):
    """Dense ``2n x 2n`` matrix, unknowns ordered ``(u_1..u_n, v_1..v_n)``.

    Built column by column from :func:`apply_operator`; meant for tiny grids.
    """
    h, w = tensor.shape
    n = h * w
    M = np.zeros((2 * n, 2 * n))
    e = np.zeros(2 * n)
    for j in range(2 * n):
        e[:] = 0.0
        e[j] = 1.0
        Mu, Mv = apply_operator(tensor, theta, e[:n].reshape(h, w), e[n:].reshape(h, w))
        M[:n, j] = Mu.ravel()
        M[n:, j] = Mv.ravel()
    return M


@numba.njit(cache=True)
def _gs_kernel(J11, J12, J22, ru, rv, theta, u, v, sweeps, red_black):
    h, w = u.shape
    ncolors = 2 if red_black else 1
    step = 2 if red_black else 1
    for _ in range(sweeps):
        for color in range(ncolors):
            for i in range(h):
                j0 = (i + color) % 2 if red_black else 0
                for j in range(j0, w, step):
                    n = 0
                    su = 0.0
                    sv = 0.0
                    if j > 0:
                        su += u[i, j - 1]
                        sv += v[i, j - 1]
                        n += 1
                    if j < w - 1:
                        su += u[i, j + 1]
                        sv += v[i, j + 1]
                        n += 1
                    if i > 0:
                        su += u[i - 1, j]
                        sv += v[i - 1, j]
                        n += 1
                    if i < h - 1:
                        su += u[i + 1, j]
                        sv += v[i + 1, j]
                        n += 1
                    a = J11[i, j] + theta * n
                    c = J22[i, j] + theta * n
                    b = J12[i, j]
                    r1 = ru[i, j] + theta * su
                    r2 = rv[i, j] + theta * sv
                    det = a * c - b * b
                    if not det > 0.0:
                        return False
                    inv = 1.0 / det
                    u[i, j] = (c * r1 - b * r2) * inv
                    v[i, j] = (a * r2 - b * r1) * inv
    return True


def solve_uv_system(tensor, rhs_u, rhs_v, theta, init, sweeps, ordering="raster"):
    """Block Gauss-Seidel sweeps on the coupled stencil system.

    Every pixel update solves its 2x2 block exactly. ``ordering`` is
    ``"raster"`` (row-major) or ``"red-black"`` (checkerboard, the two
    colours updated in turn).

    Raises
    ------
    numpy.linalg.LinAlgError
        If a local 2x2 block is singular, which requires ``theta == 0``.
    """
    if theta < 0:
        raise ValueError("theta must be non-negative")
    if ordering not in ("raster", "red-black"):
        raise ValueError(f"unknown ordering {ordering!r}")
    u = np.array(init.u, dtype=np.float64, order="C")
    v = np.array(init.v, dtype=np.float64, order="C")
    args = [np.ascontiguousarray(a, dtype=np.float64) for a in
            (tensor.J11, tensor.J12, tensor.J22, rhs_u, rhs_v)]
    if not _gs_kernel(*args, float(theta), u, v, int(sweeps), ordering == "red-black"):
        raise np.linalg.LinAlgError("singular 2x2 block in Gauss-Seidel sweep")
    return FlowField(u, v)


@dataclass
class SPDReport:
    min_random_form: float
    trials: int
    constant_form_min: float
    degenerate: bool
    witness: tuple
    witness_form: float

    @property
    def positive_definite(self):
        return self.min_random_form > 0 and not self.degenerate

    def lines(self):
        status = "min quadratic form > 0" if self.min_random_form > 0 else "min quadratic form <= 0"
        out = [f"{status} over {self.trials} random probes (min {self.min_random_form:.6e})",
               f"constant-field minimum {self.constant_form_min:.6e}"]
        if self.degenerate:
            out.append("degenerate: constant flow orthogonal to a constant image gradient "
                       f"(planar image), witness ({self.witness[0]:.6g}, {self.witness[1]:.6g}) "
                       f"gives form {self.witness_form:.3e}")
        else:
            out.append("not degenerate: image gradients are not all parallel")
        return out


def spd_check(tensor, theta, trials=1000, seed=0, rtol=1e-10):
    """Empirical positive-definiteness check of the stencil system.

    Evaluates the quadratic form on ``trials`` random unit-norm fields and
    checks the only possible null directions, the constant fields: the form
    restricted to constants is ``c^T (sum_i J_i) c``, singular exactly when
    all gradient rows are parallel, i.e. when the image is a plane.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    shape = tensor.shape
    worst = np.inf
    for _ in range(trials):
        u = rng.standard_normal(shape)
        v = rng.standard_normal(shape)
        nrm = np.sqrt(np.sum(u * u) + np.sum(v * v))
        worst = min(worst, quadratic_form(tensor, theta, u / nrm, v / nrm))

    S = np.array([[tensor.J11.sum(), tensor.J12.sum()],
                  [tensor.J12.sum(), tensor.J22.sum()]])
    evals, evecs = np.linalg.eigh(S)
    n = tensor.J11.size
    ones = np.ones(shape)
    candidates = [tuple(evecs[:, 0])]
    d = tensor.derivs
    mag = d.fx ** 2 + d.fy ** 2
    k = np.unravel_index(np.argmax(mag), shape)
    if mag[k] > 0:
        perp = np.array([-d.fy[k], d.fx[k]]) / np.sqrt(mag[k])
        candidates.append(tuple(perp))
    # normalised so the constant field has unit norm overall
    forms = [quadratic_form(tensor, theta, c[0] * ones / np.sqrt(n), c[1] * ones / np.sqrt(n))
             for c in candidates]
    best = int(np.argmin(forms))
    degenerate = evals[0] <= rtol * max(evals[1], np.finfo(float).tiny)
    return SPDReport(
        min_random_form=float(worst),
        trials=trials,
        constant_form_min=float(evals[0]) / n,
        degenerate=bool(degenerate),
        witness=candidates[best],
        witness_form=float(forms[best]),
    )
