"""Dense two-phase tableau simplex with Bland's rule.

Solves ``max c @ y`` subject to ``A_ub @ y <= b_ub``, ``A_eq @ y == b_eq`` and
``y >= 0``. Intended for the small LPs produced after state elimination. The
tableau is periodically rebuilt from the original data (reinversion) so that
pivot round-off does not accumulate. Bland's rule prevents cycling only in
exact arithmetic; if a basis repeats without progress the LP is re-solved
with a small deterministic right-hand-side perturbation and the final basis
is re-evaluated on the original data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

PIVOT_TOL = 1e-9
REFRESH_EVERY = 25
PERTURB = 1e-7


class _Cycling(Exception):
    pass


class LpNumericalFailure(RuntimeError):
    """The simplex lost feasibility or hit its iteration cap."""


@dataclass
class LpResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    y: np.ndarray | None
    objective: float
    basis: np.ndarray | None = None
    iterations: int = 0


def _pivot(T: np.ndarray, r: int, c: int) -> None:
    T[r] /= T[r, c]
    col = T[:, c].copy()
    col[r] = 0.0
    nz = np.flatnonzero(col)
    if nz.size:
        T[nz] -= np.outer(col[nz], T[r])


def _run(T: np.ndarray, basis: np.ndarray, n_cols: int, tol: float, max_iter: int,
         refresh: Callable | None = None) -> tuple[str, int]:
    """Maximize the objective held in the last row (stored as ``-c``).

    ``refresh(T, basis)`` rebuilds the tableau from the original data; it is
    applied every ``REFRESH_EVERY`` pivots and before optimality is accepted.
    """
    m = T.shape[0] - 1
    since = 0
    seen, best = set(), T[-1, -1]
    for it in range(max_iter):
        if T[-1, -1] > best + tol * max(1.0, abs(best)):
            seen.clear()
            best = T[-1, -1]
        key = frozenset(basis.tolist())
        if key in seen:
            raise _Cycling()
        seen.add(key)
        cand = np.flatnonzero(T[-1, :n_cols] < -tol)
        if cand.size == 0 and since and refresh is not None:
            refresh(T, basis)
            since = 0
            cand = np.flatnonzero(T[-1, :n_cols] < -tol)
        if cand.size == 0:
            return "optimal", it
        c = int(cand[0])
        col = T[:m, c]
        pos = np.flatnonzero(col > tol * max(1.0, float(np.max(np.abs(col)))))
        if pos.size == 0:
            return "unbounded", it
        ratios = np.maximum(T[pos, -1], 0.0) / col[pos]
        ties = pos[ratios <= ratios.min() * (1.0 + 1e-12)]
        r = int(ties[np.argmin(basis[ties])])
        _pivot(T, r, c)
        basis[r] = c
        since += 1
        if refresh is not None and since >= REFRESH_EVERY:
            refresh(T, basis)
            since = 0
    raise LpNumericalFailure(f"simplex iteration cap {max_iter} reached")


def _refresher(A: np.ndarray, b: np.ndarray, cost: np.ndarray) -> Callable:
    """Reinversion: recompute ``B^-1 [A | b]`` and the reduced costs for a basis."""
    Ab = np.hstack([A, b[:, None]])
    cost_ext = np.append(cost, 0.0)

    def refresh(T: np.ndarray, basis: np.ndarray) -> None:
        try:
            body = np.linalg.solve(A[:, basis], Ab)
        except np.linalg.LinAlgError:
            return
        if not np.all(np.isfinite(body)):
            return
        T[:-1] = body
        T[-1] = cost_ext[basis] @ body - cost_ext

    return refresh


def simplex(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, *, tol: float = PIVOT_TOL,
            max_iter: int = 50_000) -> LpResult:
    """Two-phase simplex; returns the optimal vertex and its basis."""
    try:
        return _simplex(c, A_ub, b_ub, A_eq, b_eq, tol, max_iter, None)
    except _Cycling:
        pass
    return _simplex(c, A_ub, b_ub, A_eq, b_eq, tol, max_iter, PERTURB)


def _dual_run(T: np.ndarray, basis: np.ndarray, n_cols: int, tol: float, max_iter: int,
              refresh: Callable) -> bool:
    """Dual simplex from a basis with optimal reduced costs; False if primal infeasible."""
    m = T.shape[0] - 1
    for _ in range(max_iter):
        scale = max(1.0, float(np.max(np.abs(T[:m, -1]), initial=0.0)))
        bad = np.flatnonzero(T[:m, -1] < -tol * scale)
        if bad.size == 0:
            return True
        r = int(bad[np.argmin(basis[bad])])
        row = T[r, :n_cols]
        cand = np.flatnonzero(row < -tol * max(1.0, float(np.max(np.abs(row)))))
        if cand.size == 0:
            return False
        ratios = np.maximum(T[-1, cand], 0.0) / -row[cand]
        ties = cand[ratios <= ratios.min() * (1.0 + 1e-12)]
        c = int(ties[0])
        _pivot(T, r, c)
        basis[r] = c
        refresh(T, basis)
    raise LpNumericalFailure(f"dual simplex iteration cap {max_iter} reached")


def _simplex(c, A_ub, b_ub, A_eq, b_eq, tol: float, max_iter: int, perturb) -> LpResult:
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).ravel()
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq

    # columns: y | slacks (one per <= row) | artificials | rhs
    A = np.vstack([A_ub, A_eq])
    b = np.concatenate([b_ub, b_eq])
    b_orig = b.copy()
    S = np.vstack([np.eye(m_ub), np.zeros((m_eq, m_ub))])
    if perturb is not None:
        # distinct per-row slack breaks ties between degenerate vertices
        b = b + perturb * max(1.0, float(np.max(np.abs(b), initial=0.0))) * (1.0 + np.arange(m) / max(m, 1))
    flip = b < 0
    A[flip] *= -1
    S[flip] *= -1
    b[flip] *= -1
    b_orig[flip] *= -1
    needs_art = np.array([flip[i] or i >= m_ub for i in range(m)], dtype=bool)
    art_rows = np.flatnonzero(needs_art)
    n_art = art_rows.size
    Art = np.zeros((m, n_art))
    Art[art_rows, np.arange(n_art)] = 1.0
    n_cols = n + m_ub + n_art
    A_full = np.hstack([A, S, Art])
    T = np.zeros((m + 1, n_cols + 1))
    T[:m, :n_cols] = A_full
    T[:m, -1] = b
    basis = np.empty(m, dtype=int)
    for i in range(m):
        basis[i] = n + i if not needs_art[i] else -1
    basis[art_rows] = n + m_ub + np.arange(n_art)

    iters = 0
    if n_art:
        # phase 1: maximize -sum(artificials)
        cost1 = np.zeros(n_cols)
        cost1[n + m_ub:] = -1.0
        T[-1, :] = 0.0
        T[-1, n + m_ub:n_cols] = 1.0
        T[-1] -= T[art_rows].sum(axis=0)
        status, it = _run(T, basis, n_cols, tol, max_iter, _refresher(A_full, b, cost1))
        iters += it
        if status != "optimal":
            raise LpNumericalFailure("phase 1 did not terminate at an optimum")
        scale = max(1.0, float(np.max(np.abs(b), initial=0.0)))
        if -T[-1, -1] > 1e-7 * scale:
            return LpResult("infeasible", None, float("nan"), iterations=iters)
        # drive remaining artificials out of the basis
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if basis[r] >= n + m_ub:
                row = T[r, :n + m_ub]
                nz = np.flatnonzero(np.abs(row) > tol)
                if nz.size:
                    j = int(nz[np.argmax(np.abs(row[nz]))])
                    _pivot(T, r, j)
                    basis[r] = j
                else:
                    keep[r] = False
        T = np.vstack([T[:m][keep], T[-1:]])
        basis = basis[keep]
        m = basis.size
        T = np.delete(T, np.s_[n + m_ub:n_cols], axis=1)
        n_cols = n + m_ub
        A_full, b, b_orig = A_full[keep, :n_cols], b[keep], b_orig[keep]

    cost2 = np.concatenate([c, np.zeros(n_cols - n)])
    refresh = _refresher(A_full, b, cost2)
    T[-1, :] = 0.0
    T[-1, :n] = -c
    for r in range(m):
        if T[-1, basis[r]] != 0:
            T[-1] -= T[-1, basis[r]] * T[r]
    refresh(T, basis)
    status, it = _run(T, basis, n_cols, tol, max_iter, refresh)
    iters += it
    if perturb is not None and status == "optimal":
        # drop the perturbation; the basis keeps optimal reduced costs, so the dual simplex restores feasibility
        refresh = _refresher(A_full, b_orig, cost2)
        refresh(T, basis)
        if not _dual_run(T, basis, n_cols, tol, max_iter, refresh):
            return LpResult("infeasible", None, float("nan"), iterations=iters)
        status, it = _run(T, basis, n_cols, tol, max_iter, refresh)
        iters += it
    if status == "unbounded":
        return LpResult("unbounded", None, float("inf"), iterations=iters)
    full = np.zeros(n_cols)
    full[basis] = T[:m, -1]
    y = full[:n]
    return LpResult("optimal", y, float(c @ y), basis=basis.copy(), iterations=iters)


def polish(c, A_ub, b_ub, A_eq, b_eq, basis: np.ndarray) -> np.ndarray | None:
    """Re-solve the final basis directly to remove accumulated pivot error."""
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub = np.asarray(A_ub, dtype=float).reshape(-1, n)
    A_eq = np.asarray(A_eq, dtype=float).reshape(-1, n)
    m_ub = A_ub.shape[0]
    full = np.hstack([np.vstack([A_ub, A_eq]),
                      np.vstack([np.eye(m_ub), np.zeros((A_eq.shape[0], m_ub))])])
    rhs = np.concatenate([np.ravel(b_ub), np.ravel(b_eq)])
    B = full[:, basis]
    try:
        if basis.size == full.shape[0]:
            xb = np.linalg.solve(B, rhs)
        else:
            xb = np.linalg.lstsq(B, rhs, rcond=None)[0]
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(xb)):
        return None
    sol = np.zeros(full.shape[1])
    sol[basis] = xb
    return sol[:n]
