"""Formalization metrics: IoU of satisfying regions, relative utility RMSE, validity rate.

An atom's satisfying region is the set of ``(x, t, u)`` with ``x`` in its
spatial range, ``t`` in its window and ``u`` on the satisfied side of its
profile, clipped to the rod, the horizon and the state bounds. Equality atoms
use a thin band of half-width ``EQ_BAND * (u_hi - u_lo)`` around the profile.
The region factorizes into a time interval times a planar ``(x, u)`` set whose
area is integrated exactly.
"""

from __future__ import annotations

import math
from typing import Iterable, Optional, Sequence

import numpy as np

from stlpde.formula import Atom, Cmp, Formula, StlError, atoms, same_structure, validate
from stlpde.parsing import parse_any
from stlpde.semantics import DomainMismatch

EQ_BAND = 0.01
RMSE_EPS = 1e-6


class EmptyInput(ValueError):
    """A metric was asked to aggregate nothing."""


class _Invalid:
    """Marker for a candidate that failed to parse or validate."""

    def __repr__(self) -> str:
        return "INVALID"


INVALID = _Invalid()


# -- planar geometry -------------------------------------------------------

def _bounds_lines(atom: Atom, u_lo: float, u_hi: float, band: float):
    """Lower and upper bounding lines ``(slope, intercept)`` of the atom's u-interval."""
    a, b = atom.pred.a, atom.pred.b
    lower, upper = [(0.0, u_lo)], [(0.0, u_hi)]
    if atom.pred.cmp is Cmp.GT:
        lower.append((a, b))
    elif atom.pred.cmp is Cmp.LT:
        upper.append((a, b))
    else:
        lower.append((a, b - band))
        upper.append((a, b + band))
    return lower, upper


def _length(x: np.ndarray, lower, upper) -> np.ndarray:
    lo = np.max([s * x + c for s, c in lower], axis=0)
    hi = np.min([s * x + c for s, c in upper], axis=0)
    return np.maximum(hi - lo, 0.0)


def region_area(atom_list: Sequence[Atom], u_lo: float, u_hi: float, band: float) -> float:
    """Exact area of ``{(x, u)}`` satisfying every atom in ``atom_list`` at once."""
    x0 = max(a.pred.x_lo for a in atom_list)
    x1 = min(a.pred.x_hi for a in atom_list)
    if x1 <= x0:
        return 0.0
    lower, upper = [], []
    for a in atom_list:
        lo, hi = _bounds_lines(a, u_lo, u_hi, band)
        lower += lo
        upper += hi
    lines = lower + upper
    # between consecutive crossings of any two lines the length is linear
    xs = {x0, x1}
    for i in range(len(lines)):
        for j in range(i + 1, len(lines)):
            (s1, c1), (s2, c2) = lines[i], lines[j]
            if s1 != s2:
                xc = (c2 - c1) / (s1 - s2)
                if x0 < xc < x1:
                    xs.add(xc)
    grid = np.array(sorted(xs))
    h = _length(grid, lower, upper)
    return float(np.sum(0.5 * (h[1:] + h[:-1]) * np.diff(grid)))


def _overlap(a0: float, a1: float, b0: float, b1: float) -> float:
    return max(0.0, min(a1, b1) - max(a0, b0))


def atom_volume(atom: Atom, u_lo: float, u_hi: float, band: float) -> float:
    return (atom.t_hi - atom.t_lo) * region_area([atom], u_lo, u_hi, band)


def atom_iou(p: Atom, q: Atom, u_lo: float, u_hi: float, band: Optional[float] = None) -> float:
    """Volume IoU of two atoms' satisfying boxes."""
    band = EQ_BAND * (u_hi - u_lo) if band is None else band
    vp = atom_volume(p, u_lo, u_hi, band)
    vq = atom_volume(q, u_lo, u_hi, band)
    inter = _overlap(p.t_lo, p.t_hi, q.t_lo, q.t_hi) * region_area([p, q], u_lo, u_hi, band)
    union = vp + vq - inter
    if union <= 0.0:
        # both regions have zero volume; only identical atoms match
        return 1.0 if p == q else 0.0
    return float(min(1.0, max(0.0, inter / union)))


def atom_contains(atom: Atom, x, t, u, band: float):
    """Vectorized membership test matching :func:`atom_volume` (for sampling oracles)."""
    mu = atom.pred.a * x + atom.pred.b
    inside = (x >= atom.pred.x_lo) & (x <= atom.pred.x_hi) & (t >= atom.t_lo) & (t <= atom.t_hi)
    if atom.pred.cmp is Cmp.GT:
        return inside & (u >= mu)
    if atom.pred.cmp is Cmp.LT:
        return inside & (u <= mu)
    return inside & (np.abs(u - mu) <= band)


# -- formula-level metrics -------------------------------------------------

def _state_bounds(sys, u_bounds):
    if u_bounds is not None:
        return tuple(map(float, u_bounds))
    return sys.state_bounds


def iou(truth: Formula, cand, sys, *, u_bounds: Optional[tuple] = None) -> float:
    """Mean per-atom IoU for structurally identical formulas; 0 otherwise.

    ``cand`` may be :data:`INVALID` (or ``None``); it then scores 0, as does a
    candidate that fails validation against ``sys``.
    """
    report = validate(truth, sys)
    if not report.valid:
        raise DomainMismatch("; ".join(report.reasons))
    if cand is None or cand is INVALID or not validate(cand, sys).valid:
        return 0.0
    if not same_structure(truth, cand):
        return 0.0
    u_lo, u_hi = _state_bounds(sys, u_bounds)
    scores = [atom_iou(p, q, u_lo, u_hi) for p, q in zip(atoms(truth), atoms(cand))]
    return float(np.mean(scores))


def utility_rmse(pairs: Iterable, eps: float = RMSE_EPS) -> float:
    """``sqrt(mean(((r_cand - r_true) / max(|r_true|, eps))**2))``."""
    arr = np.asarray(list(pairs), dtype=float)
    if arr.size == 0:
        raise EmptyInput("utility_rmse needs at least one pair")
    r_true, r_cand = arr[:, 0], arr[:, 1]
    rel = (r_cand - r_true) / np.maximum(np.abs(r_true), eps)
    return float(math.sqrt(np.mean(rel * rel)))


def _is_valid(outcome) -> bool:
    if isinstance(outcome, str):
        low = outcome.strip().lower()
        if low not in ("valid", "invalid"):
            raise ValueError(f"outcome must be 'Valid' or 'Invalid', got {outcome!r}")
        return low == "valid"
    return bool(outcome)


def validity_rate(outcomes: Iterable) -> float:
    items = [_is_valid(o) for o in outcomes]
    if not items:
        raise EmptyInput("validity_rate needs at least one outcome")
    return sum(items) / len(items)


def parse_candidate(data, sys=None):
    """Parse a candidate formula, returning :data:`INVALID` on any failure."""
    try:
        f = parse_any(data)
    except (StlError, ValueError, TypeError):
        return INVALID
    if sys is not None and not validate(f, sys).valid:
        return INVALID
    return f


def evaluate_records(records: Sequence[dict], sys) -> dict:
    """Score eval records ``{"truth_cspec", "cand_cspec" | "cand_invalid", "r_true", "r_cand"}``."""
    if not records:
        raise EmptyInput("no records to evaluate")
    per, valid, pairs = [], [], []
    for i, rec in enumerate(records):
        truth = parse_any(rec["truth_cspec"])
        cand = INVALID if rec.get("cand_invalid") else parse_candidate(rec.get("cand_cspec"), sys)
        ok = cand is not INVALID
        score = iou(truth, cand, sys)
        row = {"index": i, "valid": ok, "iou": score}
        if ok and rec.get("r_true") is not None and rec.get("r_cand") is not None:
            pair = (float(rec["r_true"]), float(rec["r_cand"]))
            pairs.append(pair)
            row["rel_error"] = (pair[1] - pair[0]) / max(abs(pair[0]), RMSE_EPS)
        per.append(row)
        valid.append(ok)
    return {
        "records": per,
        "aggregate": {
            "n": len(records),
            "iou": float(np.mean([r["iou"] for r in per])),
            "validity_rate": validity_rate(valid),
            "utility_rmse": utility_rmse(pairs) if pairs else None,
            "n_utility_pairs": len(pairs),
        },
    }


__all__ = ["EQ_BAND", "EmptyInput", "INVALID", "atom_contains", "atom_iou", "atom_volume",
           "evaluate_records", "iou", "parse_candidate", "region_area", "utility_rmse",
           "validity_rate"]
