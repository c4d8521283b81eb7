"""Dense two-phase tableau simplex with Bland's anti-cycling rule.

Meant for the handful of variables a static fluid model produces; there is
no attempt at sparsity or numerical refinement beyond pivot tolerances.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError, NdsLabError


class UnboundedError(NdsLabError):
    pass


@dataclass
class LPResult:
    x: np.ndarray
    fun: float
    basis: list[int]
    iterations: int


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    for r in range(T.shape[0]):
        if r != row and T[r, col] != 0.0:
            T[r] -= T[r, col] * T[row]


def _bland(T: np.ndarray, basis: list[int], allowed: int, tol: float, max_iter: int) -> int:
    """Run Bland pivots on tableau ``T`` (objective in the last row). Returns iteration count."""
    m = T.shape[0] - 1
    for it in range(max_iter):
        reduced = T[-1, :allowed]
        entering = next((j for j in range(allowed) if reduced[j] < -tol), None)
        if entering is None:
            return it
        col = T[:m, entering]
        rows = [r for r in range(m) if col[r] > tol]
        if not rows:
            raise UnboundedError("linear program is unbounded")
        ratios = {r: T[r, -1] / col[r] for r in rows}
        lo = min(ratios.values())
        # ties on the ratio go to the smallest basic variable index
        leave_row = min((r for r in rows if ratios[r] <= lo + tol), key=lambda r: basis[r])
        _pivot(T, leave_row, entering)
        basis[leave_row] = entering
    raise NdsLabError(f"simplex did not terminate in {max_iter} iterations")


def solve_lp(c, A_eq, b_eq, tol: float = 1e-11, max_iter: int = 10_000) -> LPResult:
    """Minimize ``c'x`` subject to ``A_eq x = b_eq`` and ``x >= 0``.

    Raises
    ------
    InfeasibleError
        if phase one cannot drive the artificial variables to zero.
    UnboundedError
        if the objective is unbounded below.
    """
    c = np.asarray(c, dtype=float)
    A = np.array(A_eq, dtype=float)
    b = np.array(b_eq, dtype=float)
    m, n = A.shape
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1

    # phase one: one artificial per row
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :n] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(n, n + m))
    iters = _bland(T, basis, n + m, tol, max_iter)
    if -T[-1, -1] > 1e-9 * max(1.0, np.abs(b).max(initial=0.0)):
        raise InfeasibleError(f"no feasible point (phase-one residual {-T[-1, -1]:.3g})")

    # drive zero-level artificials out of the basis; drop redundant rows
    r = 0
    while r < T.shape[0] - 1:
        if basis[r] >= n:
            cand = next((j for j in range(n) if abs(T[r, j]) > 1e-9), None)
            if cand is None:
                T = np.delete(T, r, axis=0)
                del basis[r]
                continue
            _pivot(T, r, cand)
            basis[r] = cand
        r += 1

    m2 = T.shape[0] - 1
    T = np.hstack([T[:, :n], T[:, -1:]])
    T[-1, :] = 0.0
    T[-1, :n] = c
    for row, j in enumerate(basis):
        if T[-1, j] != 0.0:
            T[-1] -= T[-1, j] * T[row]
    iters += _bland(T, basis, n, tol, max_iter)

    x = np.zeros(n)
    for row in range(m2):
        x[basis[row]] = T[row, -1]
    x[np.abs(x) < tol] = 0.0
    return LPResult(x=x, fun=float(c @ x), basis=list(basis), iterations=iters)
