"""Working-set QP of the one-slack structural SVM.

Solves::

    min_{w, xi}  0.5 * ||w||^2 + C * xi
    s.t.         w . a_k >= b_k - xi,   xi >= 0

through its dual, ``max b.alpha - 0.5 ||A^T alpha||^2`` over
``{alpha >= 0, sum(alpha) <= C}``. An extra zero constraint carries the
slack of the sum bound, turning the feasible set into a scaled simplex on
which pairwise (SMO-style) steps are exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NumericError


@dataclass
class QPResult:
    w: np.ndarray
    xi: float
    alpha: np.ndarray        # one weight per constraint (the slack entry is dropped)
    kkt_residual: float
    primal: float
    dual: float
    iterations: int


def solve_working_set_qp(A, b, C: float, tol: float = 1e-8, max_iter: int = 200_000,
                         alpha0: Optional[np.ndarray] = None, gram: Optional[np.ndarray] = None) -> QPResult:
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    b = np.asarray(b, dtype=np.float64).ravel()
    k = A.shape[0]
    if k == 0 or b.shape[0] != k:
        raise ValueError("need at least one constraint with matching right-hand side")
    if C <= 0:
        raise ValueError("C must be positive")

    G = np.zeros((k + 1, k + 1))
    G[1:, 1:] = A @ A.T if gram is None else gram
    bb = np.concatenate([[0.0], b])
    alpha = np.zeros(k + 1)
    if alpha0 is None:
        alpha[0] = C
    else:
        alpha0 = np.asarray(alpha0, dtype=np.float64)
        alpha[1:1 + alpha0.size] = np.maximum(alpha0, 0.0)
        excess = alpha[1:].sum() - C
        if excess > 0:
            alpha[1:] *= C / alpha[1:].sum()
        alpha[0] = C - alpha[1:].sum()

    grad = bb - G @ alpha
    it = 0
    gap = np.inf
    while True:
        i = int(np.argmax(grad))
        support = np.flatnonzero(alpha > 0)
        j = int(support[np.argmin(grad[support])])
        gap = grad[i] - grad[j]
        if gap <= tol:
            # confirm on a freshly computed gradient before stopping
            grad = bb - G @ alpha
            i = int(np.argmax(grad))
            j = int(support[np.argmin(grad[support])])
            gap = grad[i] - grad[j]
            if gap <= tol:
                break
        if it >= max_iter:
            raise NumericError(f"working-set QP did not converge in {max_iter} steps (gap {gap:.3e})")
        eta = G[i, i] + G[j, j] - 2.0 * G[i, j]
        t = alpha[j] if eta <= 1e-300 else min(alpha[j], gap / eta)
        alpha[i] += t
        alpha[j] -= t
        if alpha[j] < 1e-300:
            alpha[j] = 0.0
        grad -= t * (G[:, i] - G[:, j])
        it += 1
        if it % 1000 == 0:
            grad = bb - G @ alpha

    a = alpha[1:]
    w = A.T @ a
    margins = b - A @ w
    xi = max(0.0, float(margins.max()))
    half_norm = 0.5 * float(w @ w)
    return QPResult(w=w, xi=xi, alpha=a.copy(), kkt_residual=float(max(gap, 0.0)),
                    primal=half_norm + C * xi, dual=float(a @ b) - half_norm, iterations=it)
