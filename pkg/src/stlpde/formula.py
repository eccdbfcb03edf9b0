"""STL formula trees for 1D spatiotemporal constraints.

A formula is a binary tree whose leaves are temporal atoms::

    T_[t_lo, t_hi] ( forall x in [x_lo, x_hi] : u(x) <cmp> a*x + b )

with ``T`` one of ``G``/``F`` and ``cmp`` one of ``<``, ``>``, ``=``.
Inner nodes are :class:`And` / :class:`Or` with exactly two children, so
parenthesization is always explicit.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Iterator, Union


class StlError(ValueError):
    """Base class for formula errors."""


class StlSyntaxError(StlError):
    """Malformed formula text."""


class StlSemanticsError(StlError):
    """Well-formed text describing an impossible constraint (inverted ranges)."""


class Cmp(str, enum.Enum):
    LT = "<"
    GT = ">"
    EQ = "="

    def flipped(self) -> "Cmp":
        return {Cmp.LT: Cmp.GT, Cmp.GT: Cmp.LT, Cmp.EQ: Cmp.EQ}[self]


class Op(str, enum.Enum):
    G = "G"
    F = "F"


def fmt_num(value: float) -> str:
    """Canonical decimal rendering used by every printer."""
    value = float(value)
    if value == 0:
        return "0"
    return format(value, ".10g")


def normalize_num(value: float) -> float:
    """Round ``value`` to what :func:`fmt_num` can represent exactly."""
    return float(fmt_num(value))


@dataclass(frozen=True)
class LinearPredicate:
    """``u(x) <cmp> a*x + b`` for every x in ``[x_lo, x_hi]``."""

    x_lo: float
    x_hi: float
    cmp: Cmp
    a: float
    b: float

    def __post_init__(self):
        object.__setattr__(self, "cmp", Cmp(self.cmp))
        for name in ("x_lo", "x_hi", "a", "b"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise StlSemanticsError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if self.x_lo > self.x_hi:
            raise StlSemanticsError(
                f"inverted space range [{fmt_num(self.x_lo)}, {fmt_num(self.x_hi)}]"
            )

    def profile(self, x):
        return self.a * x + self.b

    def to_json(self) -> dict:
        return {"x_lo": self.x_lo, "x_hi": self.x_hi, "cmp": self.cmp.value,
                "a": self.a, "b": self.b}

    @classmethod
    def from_json(cls, data: dict) -> "LinearPredicate":
        try:
            return cls(data["x_lo"], data["x_hi"], Cmp(data["cmp"]), data["a"], data["b"])
        except KeyError as exc:
            raise StlSyntaxError(f"region predicate missing field {exc}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, StlError):
                raise
            raise StlSyntaxError(f"bad region predicate {data!r}: {exc}") from None


@dataclass(frozen=True)
class Atom:
    """A temporal operator over one spatial linear predicate."""

    op: Op
    t_lo: float
    t_hi: float
    pred: LinearPredicate

    def __post_init__(self):
        object.__setattr__(self, "op", Op(self.op))
        t_lo, t_hi = float(self.t_lo), float(self.t_hi)
        if not (math.isfinite(t_lo) and math.isfinite(t_hi)):
            raise StlSemanticsError("time window must be finite")
        if t_lo < 0:
            raise StlSemanticsError(f"negative window start {fmt_num(t_lo)}")
        if t_lo > t_hi:
            raise StlSemanticsError(f"inverted time window [{fmt_num(t_lo)}, {fmt_num(t_hi)}]")
        object.__setattr__(self, "t_lo", t_lo)
        object.__setattr__(self, "t_hi", t_hi)


TemporalAtom = Atom


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


Formula = Union[Atom, And, Or]


def atoms(f: Formula) -> list[Atom]:
    """Atoms in left-to-right order."""
    if isinstance(f, Atom):
        return [f]
    return atoms(f.left) + atoms(f.right)


def iter_nodes(f: Formula) -> Iterator[Formula]:
    """Pre-order traversal; node numbering used by the MILP encoder follows this."""
    yield f
    if not isinstance(f, Atom):
        yield from iter_nodes(f.left)
        yield from iter_nodes(f.right)


def map_atoms(f: Formula, fn) -> Formula:
    if isinstance(f, Atom):
        return fn(f)
    return type(f)(map_atoms(f.left, fn), map_atoms(f.right, fn))


def shape(f: Formula) -> str:
    """Structure string with atoms replaced by ``op+cmp``, e.g. ``((G> & F<) | G=)``."""
    if isinstance(f, Atom):
        return f"{f.op.value}{f.pred.cmp.value}"
    sym = "&" if isinstance(f, And) else "|"
    return f"({shape(f.left)} {sym} {shape(f.right)})"


def same_structure(f: Formula, g: Formula) -> bool:
    """Same connective at every inner node and same temporal operator per atom."""
    if isinstance(f, Atom) or isinstance(g, Atom):
        return isinstance(f, Atom) and isinstance(g, Atom) and f.op == g.op
    return type(f) is type(g) and same_structure(f.left, g.left) and same_structure(f.right, g.right)


def shift_windows(f: Formula, dt: float, horizon: float | None = None) -> Formula:
    """Move every window by ``-dt``, clipping at 0 (and at ``horizon`` when given)."""

    def move(a: Atom) -> Atom:
        lo = max(0.0, a.t_lo - dt)
        hi = max(lo, a.t_hi - dt)
        if horizon is not None:
            hi = min(hi, horizon)
            lo = min(lo, hi)
        return replace(a, t_lo=lo, t_hi=hi)

    return map_atoms(f, move)


# ---------------------------------------------------------------------------
# printing


def region_label(i: int) -> str:
    """0 -> A, 25 -> Z, 26 -> AA, ..."""
    letters = ""
    i += 1
    while i:
        i, rem = divmod(i - 1, 26)
        letters = chr(ord("A") + rem) + letters
    return letters


def format_predicate(pred: LinearPredicate) -> str:
    """Region predicate text accepted by :func:`stlpde.parsing.parse_predicate`."""
    return (f"[{fmt_num(pred.x_lo)}, {fmt_num(pred.x_hi)}] {pred.cmp.value} "
            f"{fmt_num(pred.a)} * x + {fmt_num(pred.b)}")


def print_cspec(f: Formula) -> tuple[dict[str, LinearPredicate], str]:
    """Render ``f`` as a region map plus cspec text.

    Labels are assigned A, B, C, ... in left-to-right atom order.
    """
    regions: dict[str, LinearPredicate] = {}

    def render(node: Formula) -> str:
        if isinstance(node, Atom):
            label = region_label(len(regions))
            regions[label] = node.pred
            return f"({node.op.value}_[{fmt_num(node.t_lo)}, {fmt_num(node.t_hi)}] ({label}))"
        sym = "&" if isinstance(node, And) else "|"
        return f"({render(node.left)} {sym} {render(node.right)})"

    text = render(f)
    return regions, text


def cspec_to_json(f: Formula) -> dict:
    regions, text = print_cspec(f)
    return {"regions": {k: v.to_json() for k, v in regions.items()}, "cspec": text}


def print_mathform(f: Formula) -> str:
    """Math-notation rendering, e.g. ``G_[0, 1] (forall x in [0, 5] (u(x) - (0.1 * x + 300) > 0))``."""
    if isinstance(f, Atom):
        p = f.pred
        return (f"{f.op.value}_[{fmt_num(f.t_lo)}, {fmt_num(f.t_hi)}] "
                f"(forall x in [{fmt_num(p.x_lo)}, {fmt_num(p.x_hi)}] "
                f"(u(x) - ({fmt_num(p.a)} * x + {fmt_num(p.b)}) {p.cmp.value} 0))")
    sym = "∧" if isinstance(f, And) else "∨"
    return f"({print_mathform(f.left)} {sym} {print_mathform(f.right)})"


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class ValidityReport:
    valid: bool
    reasons: tuple[str, ...] = field(default=())

    def __bool__(self) -> bool:
        return self.valid


def validate(f: Formula, sys=None, *, L: float | None = None, tmax: float | None = None,
             rel_tol: float = 1e-9) -> ValidityReport:
    """Check every atom lies inside the rod ``[0, L]`` and horizon ``[0, tmax]``.

    ``sys`` may be any object with ``L`` and ``tmax`` attributes; explicit
    keyword values take precedence.
    """
    if sys is not None:
        L = sys.L if L is None else L
        tmax = sys.tmax if tmax is None else tmax
    if L is None or tmax is None:
        raise TypeError("validate needs a system or explicit L and tmax")
    reasons = []
    t_slack = rel_tol * max(1.0, abs(tmax))
    x_slack = rel_tol * max(1.0, abs(L))
    for i, a in enumerate(atoms(f)):
        if a.t_lo > a.t_hi:
            reasons.append(f"atom {i}: inverted time window")
        if a.t_lo < -t_slack or a.t_hi > tmax + t_slack:
            reasons.append(f"atom {i}: time window outside horizon")
        if a.pred.x_lo > a.pred.x_hi:
            reasons.append(f"atom {i}: inverted space range")
        if a.pred.x_lo < -x_slack or a.pred.x_hi > L + x_slack:
            reasons.append(f"atom {i}: space range outside rod")
    return ValidityReport(not reasons, tuple(reasons))
