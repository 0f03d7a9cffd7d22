"""Preconditioned conjugate gradients for the elliptic-step systems.

The planning problems produce a singular pure-Neumann operator whose
nullspace is the constant vector; those solves run with constant deflation
(right-hand side projected to mean zero, iterates pinned to mean zero).
"""

from __future__ import annotations

import numpy as np


class SolverError(RuntimeError):
    """Non-convergence; carries the best iterate found."""

    def __init__(self, message, x, iterations, residual):
        super().__init__(message)
        self.x = x
        self.iterations = iterations
        self.residual = residual


def cg_solve(
    A,
    b,
    tol: float = 1e-10,
    max_iter: int | None = None,
    deflate_constants: bool = False,
    x0: np.ndarray | None = None,
):
    """Solve A x = b with Jacobi-preconditioned CG.

    A must be symmetric positive (semi-)definite and expose `.dot`/`@` and
    `.diagonal()`. Returns (x, iterations, relative residual). Convergence
    means ||b - A x|| <= tol * ||b|| (after projection when deflating);
    with deflation the returned x has zero mean.
    """
    b = np.asarray(b, dtype=float)
    n = b.size
    if max_iter is None:
        max_iter = 20 * n

    def project(v):
        return v - v.mean() if deflate_constants else v

    b = project(b)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n), 0, 0.0

    diag = np.asarray(A.diagonal(), dtype=float)
    if np.any(diag <= 0):
        raise ValueError("operator diagonal must be positive for Jacobi preconditioning")
    inv_diag = 1.0 / diag

    x = project(np.array(x0, dtype=float)) if x0 is not None else np.zeros(n)
    r = project(b - A @ x)
    z = project(inv_diag * r)
    p = z.copy()
    rz = float(r @ z)
    rnorm = float(np.linalg.norm(r))
    best_x, best_rnorm = x.copy(), rnorm
    it = 0
    while rnorm > tol * bnorm and it < max_iter:
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0.0 or not np.isfinite(pAp):
            # numerical breakdown near the floor: restart from current x
            r = project(b - A @ x)
            z = project(inv_diag * r)
            p = z.copy()
            rz = float(r @ z)
            rnorm = float(np.linalg.norm(r))
            it += 1
            if rz <= 0.0:
                break
            continue
        a = rz / pAp
        x += a * p
        r -= a * Ap
        it += 1
        if it % 50 == 0:
            r = project(b - A @ x)  # shave accumulated drift
        rnorm = float(np.linalg.norm(r))
        if rnorm < best_rnorm:
            best_rnorm, best_x = rnorm, x.copy()
        z = project(inv_diag * r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    if best_rnorm > tol * bnorm:
        raise SolverError(
            f"CG did not reach tol {tol:g} in {it} iterations "
            f"(relative residual {best_rnorm / bnorm:.3e})",
            x=project(best_x),
            iterations=it,
            residual=best_rnorm / bnorm,
        )
    return project(best_x), it, best_rnorm / bnorm
