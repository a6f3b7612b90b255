"""Deterministic sparse direct solvers for the reduced systems.

Desk-scale problems (<= a few 10^5 dofs) go through SuperLU; every solve
verifies its own residual and returns a :class:`SolveReport`. Saddle-point
systems are solved monolithically with the pressure-mean constraint appended
as one Lagrange-multiplier row, which keeps the matrix square and the
returned pressure exactly mean-free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import SaddleSystem

SPD_RTOL = 1e-10
SADDLE_RTOL = 1e-9


class SolverError(RuntimeError):
    """Raised when a factorization breaks down or the residual contract fails."""

    def __init__(self, report: "SolveReport", msg: str):
        super().__init__(msg)
        self.report = report


@dataclass(frozen=True)
class SolveReport:
    residual_norm: float
    factor_or_iter_count: int
    status: str  # "ok" | "singular" | "not_converged"


def _splu(a_csc, pivot_thresh=1.0):
    # a small pivot threshold keeps the COLAMD fill prediction intact on the
    # indefinite saddle matrices; every solve is residual-checked afterwards
    return spla.splu(
        a_csc, permc_spec="COLAMD", options=dict(DiagPivotThresh=pivot_thresh)
    )


def solve_spd(a: sp.spmatrix, b: np.ndarray):
    """Direct solve of a symmetric positive definite reduced system.

    Returns ``(x, report)`` with a relative residual below 1e-10; raises
    :class:`SolverError` with status ``singular`` on breakdown.
    """
    a = a.tocsc()
    n = a.shape[0]
    asym = abs(a - a.T)
    scale = max(abs(a).max(), 1.0)
    if asym.nnz and asym.max() > 1e-12 * scale:
        raise SolverError(
            SolveReport(np.inf, 0, "singular"), "matrix is not symmetric"
        )
    b = np.asarray(b, dtype=float)
    try:
        lu = _splu(a)
        x = lu.solve(b)
    except RuntimeError as exc:
        raise SolverError(
            SolveReport(np.inf, 0, "singular"), f"factorization failed: {exc}"
        ) from exc
    if not np.all(np.isfinite(x)):
        raise SolverError(SolveReport(np.inf, n, "singular"), "non-finite solution")
    res = np.linalg.norm(b - a @ x)
    rel = res / max(np.linalg.norm(b), 1e-300)
    report = SolveReport(res, n, "ok" if rel <= SPD_RTOL else "not_converged")
    if report.status != "ok":
        raise SolverError(report, f"relative residual {rel:.3e} above {SPD_RTOL}")
    return x, report


def solve_saddle(sys: SaddleSystem):
    """Monolithic solve of one Oseen/Stokes saddle system.

    Eliminates the constrained velocity dofs by lifting, appends the
    pressure-mean multiplier row, and factors the augmented matrix. Returns
    ``(u, p, report)`` where ``u`` has full length (prescribed values filled
    back in) and ``p`` satisfies |int p| <= 1e-12 * scale.
    """
    free = sys.free_u
    if sys.mean is None or not np.any(sys.mean):
        raise SolverError(
            SolveReport(np.inf, 0, "singular"), "pressure mean row missing"
        )
    a_ff = sys.A[free][:, free]
    b_f = sp.csr_matrix(sys.B[:, free])
    lift_u = sys.rhs_u[free] - sys.A[free][:, ~free] @ sys.g[~free]
    lift_p = sys.rhs_p - sys.B[:, ~free] @ sys.g[~free]

    n_u = a_ff.shape[0]
    n_p = sys.B.shape[0]
    mean_col = sp.csc_matrix(
        (sys.mean, (np.arange(n_p), np.zeros(n_p, dtype=np.int64))), shape=(n_p, 1)
    )
    zero_up = sp.csc_matrix((n_u, 1))
    k = sp.bmat(
        [
            [a_ff, -b_f.T, zero_up],
            [b_f, None, mean_col],
            [zero_up.T, mean_col.T, None],
        ],
        format="csc",
    )
    rhs = np.concatenate([lift_u, lift_p, [0.0]])
    try:
        lu = _splu(k, pivot_thresh=0.01)
        x = lu.solve(rhs)
    except RuntimeError as exc:
        raise SolverError(
            SolveReport(np.inf, 0, "singular"),
            f"saddle factorization failed (unstable pair?): {exc}",
        ) from exc
    if not np.all(np.isfinite(x)):
        raise SolverError(
            SolveReport(np.inf, k.shape[0], "singular"), "non-finite saddle solution"
        )
    res = np.linalg.norm(rhs - k @ x)
    rel = res / max(np.linalg.norm(rhs), 1e-300)
    report = SolveReport(res, k.shape[0], "ok" if rel <= SADDLE_RTOL else "not_converged")
    if report.status != "ok":
        raise SolverError(report, f"saddle residual {rel:.3e} above {SADDLE_RTOL}")

    u = sys.g.copy()
    u[free] = x[:n_u]
    p = x[n_u : n_u + n_p]
    return u, p, report


def reduce_dirichlet(a: sp.spmatrix, b: np.ndarray, free: np.ndarray, g=None):
    """Restrict ``a x = b`` to the free dofs, lifting prescribed values.

    Returns ``(a_ff, b_f, expand)`` where ``expand`` maps a free-dof solution
    back to full length with the prescribed values filled in.
    """
    a = a.tocsr()
    if g is None:
        g = np.zeros(a.shape[0])
    a_ff = a[free][:, free]
    b_f = b[free] - a[free][:, ~free] @ g[~free]

    def expand(x_f):
        x = g.copy()
        x[free] = x_f
        return x

    return a_ff, b_f, expand
