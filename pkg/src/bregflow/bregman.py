"""Model-agnostic Bregman machinery.

Shrinkage operators, the Bregman divergence, the Bregman iteration in its
"add back the residual" form, a generic split Bregman driver and convergence
diagnostics that check the monotonicity and 1/k error envelopes on a trace.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "shrink",
    "gshrink",
    "bregman_divergence",
    "ConvexProblem",
    "TraceRecord",
    "BregmanTrace",
    "bregman_iterate",
    "split_bregman",
    "ConvergenceReport",
    "convergence_report",
    "quadratic_inner_solver",
    "prox_gradient_inner_solver",
    "EPS_SOLVER",
]

#: Absolute slack used when checking monotonicity of inexactly solved iterates.
EPS_SOLVER = 1e-6


def _check_alpha(alpha):
    if not np.isscalar(alpha) or not alpha > 0:
        raise ValueError(f"shrinkage threshold must be positive, got {alpha!r}")


def shrink(y, alpha):
    """Soft shrinkage, applied componentwise.

    Returns ``y - alpha`` above the threshold, ``y + alpha`` below ``-alpha``
    and 0 on the closed interval ``[-alpha, alpha]``. With ``alpha = 1/lam``
    this is the minimiser of ``||x||_1 + lam/2 ||x - y||^2``.
    """
    _check_alpha(alpha)
    y = np.asarray(y, dtype=float)
    out = np.where(y > alpha, y - alpha, np.where(y < -alpha, y + alpha, 0.0))
    return out if out.ndim else float(out)


def gshrink(b, alpha, axis=None):
    """Generalised (Euclidean) shrinkage.

    ``max(||b|| - alpha, 0) * b / ||b||`` with the convention that the zero
    vector maps to zero. With ``axis`` given, every slice along that axis is
    treated as its own vector, which is how per-pixel groups are shrunk.

    Parameters
    ----------
    b : array_like
        Vector, or stack of vectors when ``axis`` is set.
    alpha : float
        Positive threshold.
    axis : int, optional
        Axis holding the vector components. ``None`` shrinks ``b`` as one
        flat vector.
    """
    _check_alpha(alpha)
    b = np.asarray(b, dtype=float)
    if axis is None:
        norm = np.sqrt(np.sum(b * b))
    else:
        norm = np.sqrt(np.sum(b * b, axis=axis, keepdims=True))
    scale = np.maximum(norm - alpha, 0.0)
    # 0 * 0/0 = 0: pixels with norm <= alpha have scale exactly 0.
    with np.errstate(invalid="ignore", divide="ignore"):
        factor = np.where(norm > alpha, scale / np.where(norm > 0, norm, 1.0), 0.0)
    return b * factor


def bregman_divergence(J, x, y, p):
    """``J(x) - J(y) - <p, x - y>`` for a subgradient ``p`` of ``J`` at ``y``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p = np.asarray(p, dtype=float)
    return float(J(x) - J(y) - np.sum(p * (x - y)))


def _as_operator(A):
    """Return (matvec, rmatvec) for a dense matrix or a LinearOperator."""
    if hasattr(A, "matvec") and hasattr(A, "rmatvec"):
        return A.matvec, A.rmatvec
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return (lambda x: A @ x), (lambda y: A.T @ y)


@dataclass
class ConvexProblem:
    """``min J(u)  s.t.  H(u) = 1/2 ||A u - b||^2 = 0``.

    ``A`` may be a dense array or anything with ``matvec``/``rmatvec``
    (e.g. ``scipy.sparse.linalg.LinearOperator``).
    """

    J: Callable[[np.ndarray], float]
    A: object
    b: np.ndarray

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float)
        self._mv, self._rmv = _as_operator(self.A)

    def matvec(self, u):
        return self._mv(u)

    def rmatvec(self, r):
        return self._rmv(r)

    def residual(self, u):
        return self.matvec(u) - self.b

    def H(self, u):
        r = self.residual(u)
        return 0.5 * float(r @ r)

    def grad_H(self, u):
        return self.rmatvec(self.residual(u))


@dataclass
class TraceRecord:
    k: int
    H: float
    J: float
    divergence: Optional[float] = None


@dataclass
class BregmanTrace:
    """Per-iteration history of a Bregman run, indexed from 0."""

    records: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    stopped_early: bool = False

    def append(self, H, J, divergence=None):
        self.records.append(TraceRecord(len(self.records), float(H), float(J), divergence))

    def warn(self, message):
        self.warnings.append(message)

    @property
    def H(self):
        return np.array([r.H for r in self.records])

    @property
    def J(self):
        return np.array([r.J for r in self.records])

    @property
    def divergence(self):
        return np.array([np.nan if r.divergence is None else r.divergence for r in self.records])

    def __len__(self):
        return len(self.records)

    def to_csv(self, path_or_file, skip_initial=False):
        """Write ``k,H,J,divergence`` rows, one per record.

        ``skip_initial`` drops the ``k = 0`` start record so the file holds
        one row per iteration.
        """
        lines = ["k,H,J,divergence"]
        for r in self.records:
            if skip_initial and r.k == 0:
                continue
            div = "" if r.divergence is None else repr(r.divergence)
            lines.append(f"{r.k},{r.H!r},{r.J!r},{div}")
        text = "\n".join(lines) + "\n"
        if hasattr(path_or_file, "write"):
            path_or_file.write(text)
        else:
            with open(path_or_file, "w", encoding="utf-8") as fh:
                fh.write(text)


def quadratic_inner_solver(Q, c=None):
    """Exact inner solver for ``J(u) = 1/2 u^T Q u + c^T u`` with a dense ``A``.

    Returns a callable ``solver(problem, lam, target, u_prev)`` that minimises
    ``J(u) + lam/2 ||A u - target||^2`` by a direct solve.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    c = np.zeros(Q.shape[0]) if c is None else np.asarray(c, dtype=float)

    def solver(problem, lam, target, u_prev):
        A = np.atleast_2d(np.asarray(problem.A, dtype=float))
        lhs = Q + lam * A.T @ A
        rhs = lam * A.T @ target - c
        return np.linalg.solve(lhs, rhs)

    return solver


def prox_gradient_inner_solver(prox_J, lipschitz_AtA=None, tol=1e-13, max_iter=200_000):
    """FISTA inner solver for ``J(u) + lam/2 ||A u - target||^2``.

    ``prox_J(v, t)`` must return ``argmin_u J(u) + 1/(2t) ||u - v||^2``.
    The loop stops once successive iterates move less than ``tol`` (in the
    max norm), which for the small problems used here corresponds to an
    objective gradient well below 1e-10.
    """

    def solver(problem, lam, target, u_prev):
        L = lipschitz_AtA
        if L is None:
            A = np.atleast_2d(np.asarray(problem.A, dtype=float))
            L = np.linalg.norm(A, 2) ** 2
        step = 1.0 / (lam * L)
        x = np.array(u_prev, dtype=float)
        y = x.copy()
        t = 1.0
        for _ in range(max_iter):
            grad = lam * problem.rmatvec(problem.matvec(y) - target)
            x_new = prox_J(y - step * grad, step)
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = x_new + ((t - 1.0) / t_new) * (x_new - x)
            moved = np.max(np.abs(x_new - x))
            x, t = x_new, t_new
            if moved < tol:
                break
        return x

    return solver


def bregman_iterate(problem, lam, u0, max_iters, inner_solver, tol=1e-8,
                    reference=None, eps_solver=EPS_SOLVER):
    """Bregman iteration for ``min J(u) s.t. A u = b`` (residual add-back form).

    ::

        b0 = b
        u_{k+1} = argmin_u J(u) + lam/2 ||A u - b_k||^2
        b_{k+1} = b_k + b - A u_{k+1}

    ``u0`` must admit ``0`` as a subgradient of ``J``; the subgradient of ``J``
    at ``u_k`` is then ``p_k = lam A^T (b_k - b)``, which is what the optional
    divergence column of the trace is computed with.

    Parameters
    ----------
    problem : ConvexProblem
    lam : float
        Penalty weight, positive.
    u0 : array_like
        Starting point with ``0`` in the subdifferential of ``J``.
    max_iters : int
        Maximum number of Bregman updates.
    inner_solver : callable
        ``inner_solver(problem, lam, target, u_prev) -> u``.
    tol : float
        Stop as soon as ``H(u_k) <= tol * max(H(u0), 1/2 ||b||^2)``; with both
        zero the comparison is absolute.
    reference : array_like, optional
        Feasible point ``u~``; when given, ``D_J^{p_k}(u~, u_k)`` is recorded.
    eps_solver : float
        Allowed increase of ``H`` before a monotonicity warning is recorded.

    Returns
    -------
    u : ndarray
    trace : BregmanTrace
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    u = np.array(u0, dtype=float)
    b = problem.b
    bk = b.copy()
    trace = BregmanTrace()
    ref = None if reference is None else np.asarray(reference, dtype=float)

    def record(u, bk):
        div = None
        if ref is not None:
            p = lam * problem.rmatvec(bk - b)
            div = bregman_divergence(problem.J, ref, u, p)
        H = problem.H(u)
        trace.append(H, problem.J(u), div)
        return H

    H = record(u, bk)
    threshold = tol * max(H, 0.5 * float(b @ b))
    if H <= threshold:
        trace.stopped_early = True
        return u, trace

    for k in range(max_iters):
        u = np.asarray(inner_solver(problem, lam, bk, u), dtype=float)
        if not np.all(np.isfinite(u)):
            raise FloatingPointError(f"inner solver returned non-finite iterate at k={k + 1}")
        bk = bk + b - problem.matvec(u)
        H_prev, H = H, record(u, bk)
        if H > H_prev + eps_solver:
            trace.warn(f"H increased at k={k + 1}: {H_prev:.3e} -> {H:.3e}")
        if H <= threshold:
            trace.stopped_early = True
            break
    return u, trace


def split_bregman(G, Lambda, b, mu, N, M, u_solver, u0, norm_kind="l1", group_size=None,
                  eps_solver=EPS_SOLVER):
    """Split Bregman for ``min ||Lambda u + b||_k + G(u)``, ``k`` in {1, 2}.

    The slack ``d = Lambda u + b`` is enforced by an outer Bregman loop of
    ``N`` iterations, each running ``M`` alternating sweeps of

    * ``u <- argmin G(u) + mu/2 ||d - Lambda u - b_k||^2``  (``u_solver``)
    * ``d <- shrink(Lambda u + b_k, 1/mu)`` or its grouped Euclidean variant

    followed by ``b_{k+1} = b_k + b - d + Lambda u``.

    Parameters
    ----------
    G : callable
        Smooth convex part, only evaluated for the trace.
    Lambda : array_like or LinearOperator
    b : array_like
        Offset of the affine map inside the norm.
    mu : float
        Coupling weight.
    N, M : int
        Outer Bregman iterations and alternating sweeps per iteration.
    u_solver : callable
        ``u_solver(target, u_prev) -> u`` minimising
        ``G(u) + mu/2 ||Lambda u - target||^2``.
    norm_kind : {"l1", "l2"}
        ``"l2"`` uses :func:`gshrink` on consecutive groups of
        ``group_size`` entries of ``d`` (one group when omitted).
    u0 : array_like
        A minimiser of ``G`` (so that 0 is a subgradient at the start).

    Returns
    -------
    u, d : ndarray
    trace : BregmanTrace
        ``H`` holds ``||d - Lambda u - b||^2`` after every outer iteration
        (index 0 is the initial state), ``J`` the objective
        ``||Lambda u + b||_k + G(u)``.
    """
    if not (mu > 0 and N >= 1 and M >= 1):
        raise ValueError("need mu > 0, N >= 1 and M >= 1")
    if norm_kind not in ("l1", "l2"):
        raise ValueError(f"unknown norm_kind {norm_kind!r}")
    mv, _ = _as_operator(Lambda)
    b = np.asarray(b, dtype=float)
    m = b.size
    u = np.array(u0, dtype=float)
    d = np.zeros(m)
    bk = b.copy()
    gsize = m if group_size is None else int(group_size)
    if m % gsize:
        raise ValueError("group_size must divide the slack length")

    def norm(x):
        if norm_kind == "l1":
            return float(np.sum(np.abs(x)))
        return float(np.sum(np.sqrt(np.sum(x.reshape(-1, gsize) ** 2, axis=1))))

    def d_update(x):
        if norm_kind == "l1":
            return shrink(x, 1.0 / mu)
        return gshrink(x.reshape(-1, gsize), 1.0 / mu, axis=1).ravel()

    trace = BregmanTrace()

    def record():
        r = d - mv(u) - b
        trace.append(float(r @ r), norm(mv(u) + b) + G(u))

    record()
    for k in range(N):
        for _ in range(M):
            u = np.asarray(u_solver(d - bk, u), dtype=float)
            d = d_update(mv(u) + bk)
        bk = bk + b - d + mv(u)
        record()
        H_prev, H = trace.records[-2].H, trace.records[-1].H
        if k > 0 and H > H_prev + eps_solver:
            trace.warn(f"constraint residual increased at k={k + 1}: {H_prev:.3e} -> {H:.3e}")
    return u, d, trace


@dataclass
class ConvergenceReport:
    """Outcome of :func:`convergence_report`; violations are data, not errors."""

    monotone: bool
    monotonicity_violations: list
    envelope_checked: bool
    envelope_violations: list
    max_envelope_violation: float
    divergence_checked: bool
    divergence_violations: list
    max_divergence_violation: float

    @property
    def ok(self):
        return self.monotone and not self.envelope_violations and not self.divergence_violations

    def lines(self):
        out = [f"monotone H: {'yes' if self.monotone else 'no'}"]
        for k, prev, cur in self.monotonicity_violations:
            out.append(f"  H increased at k={k}: {prev:.6e} -> {cur:.6e}")
        if self.envelope_checked:
            out.append(f"1/k envelope on H: {'ok' if not self.envelope_violations else 'violated'}"
                       f" (largest excess {self.max_envelope_violation:.3e})")
        if self.divergence_checked:
            out.append(f"1/k envelope on divergence: "
                       f"{'ok' if not self.divergence_violations else 'violated'}"
                       f" (largest excess {self.max_divergence_violation:.3e})")
        return out


def convergence_report(trace, lam, d0=None, q_norm=None, eps=EPS_SOLVER, start=0):
    """Check a trace against the Bregman convergence guarantees.

    * ``H_{k+1} <= H_k + eps`` for all ``k >= start``; split Bregman traces
      should pass ``start=1``, since their record 0 holds the slack-free
      start where the constraint residual is trivially small;
    * ``H_k <= d0 / (lam k)`` for ``k >= 1`` when ``d0`` is given, where
      ``d0`` is the divergence between a feasible point and the start;
    * ``D_k <= q_norm^2 / (2 lam k)`` when ``q_norm`` is given and the trace
      carries divergences.

    Envelope checks use a relative slack of ``1e-12`` on the bound.
    """
    if len(trace) == 0:
        raise ValueError("empty trace")
    H = trace.H
    mono = [(k, float(H[k - 1]), float(H[k])) for k in range(start + 1, len(H))
            if H[k] > H[k - 1] + eps]

    env, max_env = [], -np.inf
    if d0 is not None:
        if not np.isfinite(d0):
            raise ValueError("d0 must be finite")
        for k in range(1, len(H)):
            bound = d0 / (lam * k)
            excess = H[k] - bound
            max_env = max(max_env, float(excess))
            if excess > 1e-12 * max(abs(bound), 1.0):
                env.append((k, float(H[k]), float(bound)))

    div, max_div = [], -np.inf
    if q_norm is not None:
        D = trace.divergence
        for k in range(1, len(D)):
            if np.isnan(D[k]):
                continue
            bound = q_norm ** 2 / (2.0 * lam * k)
            excess = D[k] - bound
            max_div = max(max_div, float(excess))
            if excess > 1e-12 * max(abs(bound), 1.0):
                div.append((k, float(D[k]), float(bound)))

    return ConvergenceReport(
        monotone=not mono,
        monotonicity_violations=mono,
        envelope_checked=d0 is not None,
        envelope_violations=env,
        max_envelope_violation=max_env,
        divergence_checked=q_norm is not None,
        divergence_violations=div,
        max_divergence_violation=max_div,
    )
