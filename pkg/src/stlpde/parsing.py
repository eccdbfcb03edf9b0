"""Parsers for the two surface syntaxes of STL formulas.

``cspec`` form (region labels bound to predicates separately)::

    (((G_[0.049, 0.053] (A)) & (F_[0.051, 0.149] (B))) | (F_[0.061, 0.169] (C)))

math form (predicates inline)::

    G_[4,5]((forall x in [30,60]: u(x) - (x/4+303) < 0) ∧ (...)) ∧ G_[0,5](...)

Chains of one connective associate to the left.  Mixing ``&`` and ``|``
without parentheses is rejected rather than resolved by precedence.
"""

from __future__ import annotations

import re
from typing import Mapping

from stlpde.formula import (
    And, Atom, Cmp, Formula, LinearPredicate, Op, Or, StlError, StlSyntaxError,
)

_MAX_DEPTH = 200

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z][A-Za-z0-9]*)
  | (?P<cmp><=|>=|==|<|>|=|≤|≥)
  | (?P<punct>[()\[\],:_+\-*/&|^∧∨∀∈])
    """,
    re.VERBOSE,
)

_LATEX = [
    (re.compile(r"\\frac\s*\{([^{}]*)\}\s*\{([^{}]*)\}"), r"((\1)/(\2))"),
    (re.compile(r"\\(?:land|wedge)\b"), " ∧ "),
    (re.compile(r"\\(?:lor|vee)\b"), " ∨ "),
    (re.compile(r"\\forall\b"), " forall "),
    (re.compile(r"\\in\b"), " in "),
    (re.compile(r"\\(?:cdot|times)\b"), " * "),
    (re.compile(r"\\(?:leq?|lt)\b"), " < "),
    (re.compile(r"\\(?:geq?|gt)\b"), " > "),
    (re.compile(r"\\(?:left|right|mathbf|mathcal|quad|qquad|,|;|!)"), " "),
]
_CHAR_MAP = str.maketrans({"−": "-", "·": "*", "×": "*", "{": " ", "}": " ", "$": " ",
                           "\u00a0": " "})


class _Tok:
    __slots__ = ("kind", "text", "pos")

    def __init__(self, kind: str, text: str, pos: int):
        self.kind, self.text, self.pos = kind, text, pos

    def __repr__(self) -> str:
        return f"{self.kind}:{self.text!r}@{self.pos}"


def _tokenize(text: str) -> list[_Tok]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise StlSyntaxError(f"unexpected character {text[pos]!r} at offset {pos}")
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(_Tok(kind, m.group(), pos))
        pos = m.end()
    tokens.append(_Tok("eof", "", len(text)))
    return tokens


def _clean_math(text: str) -> str:
    for pattern, repl in _LATEX:
        text = pattern.sub(repl, text)
    if "\\" in text:
        raise StlSyntaxError(f"unsupported LaTeX command near {text[text.index(chr(92)):][:12]!r}")
    return text.translate(_CHAR_MAP)


def _as_text(text) -> str:
    if isinstance(text, (bytes, bytearray)):
        text = bytes(text).decode("utf-8", errors="replace")
    if not isinstance(text, str):
        raise StlSyntaxError(f"expected text, got {type(text).__name__}")
    return text


_CMP_TEXT = {"<": Cmp.LT, "<=": Cmp.LT, "≤": Cmp.LT, ">": Cmp.GT, ">=": Cmp.GT, "≥": Cmp.GT,
             "=": Cmp.EQ, "==": Cmp.EQ}


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0
        self.depth = 0

    # -- token helpers -------------------------------------------------
    def peek(self, offset: int = 0) -> _Tok:
        return self.toks[min(self.i + offset, len(self.toks) - 1)]

    def next(self) -> _Tok:
        tok = self.peek()
        self.i += 1
        return tok

    def at(self, text: str) -> bool:
        return self.peek().text == text

    def accept(self, *texts: str) -> bool:
        if self.peek().text in texts and self.peek().kind != "eof":
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> _Tok:
        tok = self.next()
        if tok.text != text:
            raise StlSyntaxError(f"expected {text!r} at offset {tok.pos}, got {tok.text or 'end of input'!r}")
        return tok

    def fail(self, what: str):
        tok = self.peek()
        raise StlSyntaxError(f"expected {what} at offset {tok.pos}, got {tok.text or 'end of input'!r}")

    def enter(self):
        self.depth += 1
        if self.depth > _MAX_DEPTH:
            raise StlSyntaxError("nesting too deep")

    def leave(self):
        self.depth -= 1

    def finish(self):
        if self.peek().kind != "eof":
            self.fail("end of input")

    # -- shared pieces -------------------------------------------------
    def signed_number(self) -> float:
        sign = 1.0
        while self.peek().text in ("-", "+"):
            if self.next().text == "-":
                sign = -sign
        tok = self.next()
        if tok.kind != "num":
            raise StlSyntaxError(f"malformed number at offset {tok.pos}: {tok.text or 'end of input'!r}")
        return sign * float(tok.text)

    def interval(self) -> tuple[float, float]:
        self.expect("[")
        lo = self.signed_number()
        self.expect(",")
        hi = self.signed_number()
        self.expect("]")
        return lo, hi

    def chain(self, term) -> Formula:
        """``term (op term)*`` with a single connective kind per chain."""
        self.enter()
        node = term()
        kind = None
        while self.peek().text in ("&", "|", "∧", "∨", "^") or (
                self.peek().kind == "ident" and self.peek().text in ("v", "and", "or")):
            sym = self.next().text
            this = And if sym in ("&", "∧", "^", "and") else Or
            if kind is not None and this is not kind:
                raise StlSyntaxError("mixed & and | need parentheses")
            kind = this
            node = this(node, term())
        self.leave()
        return node

    def temporal_head(self) -> tuple[Op, float, float]:
        tok = self.next()
        if tok.kind != "ident" or tok.text not in ("G", "F"):
            raise StlSyntaxError(f"expected G or F at offset {tok.pos}, got {tok.text or 'end of input'!r}")
        self.expect("_")
        lo, hi = self.interval()
        return Op(tok.text), lo, hi

    # -- linear expressions in u and x ----------------------------------
    # Each expression is a triple (coef_u, coef_x, const).
    def lin_sum(self):
        self.enter()
        acc = self.lin_prod()
        while self.peek().text in ("+", "-"):
            sign = 1.0 if self.next().text == "+" else -1.0
            rhs = self.lin_prod()
            acc = tuple(p + sign * q for p, q in zip(acc, rhs))
        self.leave()
        return acc

    def lin_prod(self):
        acc = self.lin_unary()
        while self.peek().text in ("*", "/"):
            op = self.next().text
            rhs = self.lin_unary()
            if op == "*":
                if acc[0] == 0 and acc[1] == 0:
                    acc = tuple(acc[2] * q for q in rhs)
                elif rhs[0] == 0 and rhs[1] == 0:
                    acc = tuple(p * rhs[2] for p in acc)
                else:
                    raise StlSyntaxError("profile must be linear in x")
            else:
                if rhs[0] != 0 or rhs[1] != 0:
                    raise StlSyntaxError("division by a non-constant")
                if rhs[2] == 0:
                    raise StlSyntaxError("division by zero")
                acc = tuple(p / rhs[2] for p in acc)
        return acc

    def lin_unary(self):
        sign = 1.0
        while self.peek().text in ("-", "+"):
            if self.next().text == "-":
                sign = -sign
        return tuple(sign * p for p in self.lin_primary())

    def lin_primary(self):
        tok = self.peek()
        if tok.kind == "num":
            self.next()
            return (0.0, 0.0, float(tok.text))
        if tok.kind == "ident" and tok.text == "x":
            self.next()
            return (0.0, 1.0, 0.0)
        if tok.kind == "ident" and tok.text == "u":
            self.next()
            if self.at("(") and self.peek(1).text == "x" and self.peek(2).text == ")":
                self.i += 3
            return (1.0, 0.0, 0.0)
        if self.accept("("):
            inner = self.lin_sum()
            self.expect(")")
            return inner
        self.fail("number, x, u(x) or '('")


def _predicate_from_comparison(lhs, cmp: Cmp, rhs, x_lo: float, x_hi: float) -> LinearPredicate:
    cu, cx, c0 = (p - q for p, q in zip(lhs, rhs))
    if cu == 0:
        raise StlSyntaxError("comparison does not involve u(x)")
    if cu < 0:
        cmp = cmp.flipped()
    a = -cx / cu
    b = -c0 / cu
    # avoid signed zeros leaking into printed output
    return LinearPredicate(x_lo, x_hi, cmp, a + 0.0, b + 0.0)


# ---------------------------------------------------------------------------
# region predicates


def parse_predicate(text) -> LinearPredicate:
    """Parse region text like ``[9829, 19907] < 1.882e-05 * x + 0.187``."""
    text = _clean_math(_as_text(text)).replace('"', " ").replace("'", " ")
    p = _Parser(text)
    x_lo, x_hi = p.interval()
    p.accept(",")
    tok = p.next()
    if tok.kind != "cmp":
        raise StlSyntaxError(f"expected comparison at offset {tok.pos}")
    cmp = _CMP_TEXT[tok.text]
    p.accept(",")
    cu, cx, c0 = p.lin_sum()
    p.finish()
    if cu != 0:
        raise StlSyntaxError("region profile must not involve u")
    return LinearPredicate(x_lo, x_hi, cmp, cx + 0.0, c0 + 0.0)


def _coerce_region(value) -> LinearPredicate:
    if isinstance(value, LinearPredicate):
        return value
    if isinstance(value, Mapping):
        return LinearPredicate.from_json(value)
    return parse_predicate(value)


# ---------------------------------------------------------------------------
# cspec


def parse_cspec(regions: Mapping, cspec) -> Formula:
    """Parse cspec text whose atoms reference labels in ``regions``.

    ``regions`` values may be :class:`LinearPredicate`, region JSON objects
    (``{"x_lo", "x_hi", "cmp", "a", "b"}``) or region text.
    """
    text = _as_text(cspec)
    if not isinstance(regions, Mapping):
        raise StlSyntaxError("regions must be a mapping of label to predicate")
    preds = {str(k): _coerce_region(v) for k, v in regions.items()}
    p = _Parser(text)
    if p.peek().kind == "eof":
        raise StlSyntaxError("empty formula")

    def label() -> LinearPredicate:
        if p.accept("("):
            p.enter()
            pred = label()
            p.leave()
            p.expect(")")
            return pred
        tok = p.next()
        if tok.kind != "ident" or not tok.text[0].isupper():
            raise StlSyntaxError(f"expected region label at offset {tok.pos}, got {tok.text or 'end of input'!r}")
        if tok.text not in preds:
            raise StlSyntaxError(f"unknown region label {tok.text!r}")
        return preds[tok.text]

    def term() -> Formula:
        if p.accept("("):
            node = p.chain(term)
            p.expect(")")
            return node
        op, lo, hi = p.temporal_head()
        return Atom(op, lo, hi, label())

    node = p.chain(term)
    p.finish()
    return node


def parse_cspec_json(data: Mapping) -> Formula:
    """Parse ``{"regions": {...}, "cspec": "..."}``."""
    try:
        return parse_cspec(data["regions"], data["cspec"])
    except (KeyError, TypeError):
        raise StlSyntaxError("expected an object with 'regions' and 'cspec'") from None


# ---------------------------------------------------------------------------
# math notation


def parse_mathform(text) -> Formula:
    """Parse the math notation used in written problem statements.

    ``G`` applied to a conjunction of spatial predicates distributes into a
    conjunction of ``G`` atoms; ``F`` over a conjunction has no atom form and
    is rejected.
    """
    p = _Parser(_clean_math(_as_text(text)))
    if p.peek().kind == "eof":
        raise StlSyntaxError("empty formula")

    def comparison(x_lo: float, x_hi: float) -> LinearPredicate:
        if p.at("("):
            saved, saved_depth = p.i, p.depth
            try:
                p.next()
                p.enter()
                pred = comparison(x_lo, x_hi)
                p.leave()
                p.expect(")")
                return pred
            except StlSyntaxError:
                p.i, p.depth = saved, saved_depth
        lhs = p.lin_sum()
        tok = p.next()
        if tok.kind != "cmp":
            raise StlSyntaxError(f"expected comparison at offset {tok.pos}, got {tok.text or 'end of input'!r}")
        rhs = p.lin_sum()
        return _predicate_from_comparison(lhs, _CMP_TEXT[tok.text], rhs, x_lo, x_hi)

    def spatial() -> LinearPredicate:
        tok = p.next()
        if tok.text not in ("forall", "∀"):
            raise StlSyntaxError(f"expected 'forall' at offset {tok.pos}, got {tok.text or 'end of input'!r}")
        p.expect("x")
        if not p.accept("in", "∈"):
            p.fail("'in'")
        x_lo, x_hi = p.interval()
        p.accept(":", ",")
        return comparison(x_lo, x_hi)

    def body() -> list[LinearPredicate]:
        p.enter()
        preds = body_item()
        while p.peek().text in ("&", "∧", "^") or (p.peek().kind == "ident" and p.peek().text == "and"):
            p.next()
            preds = preds + body_item()
        if p.peek().text in ("|", "∨") or (p.peek().kind == "ident" and p.peek().text in ("v", "or")):
            raise StlSyntaxError("disjunction inside a temporal operator is not supported")
        p.leave()
        return preds

    def body_item() -> list[LinearPredicate]:
        if p.accept("("):
            preds = body()
            p.expect(")")
            return preds
        return [spatial()]

    def term() -> Formula:
        if p.at("("):
            p.next()
            node = p.chain(term)
            p.expect(")")
            return node
        op, lo, hi = p.temporal_head()
        preds = body_item()
        if len(preds) > 1 and op is Op.F:
            raise StlSyntaxError("F over a conjunction of predicates has no atom form")
        node: Formula = Atom(op, lo, hi, preds[0])
        for pred in preds[1:]:
            node = And(node, Atom(op, lo, hi, pred))
        return node

    node = p.chain(term)
    p.finish()
    return node


def parse_any(data) -> Formula:
    """Accept cspec JSON (``regions`` + ``cspec``), ``{"math": ...}`` or math text."""
    if isinstance(data, Mapping):
        if "cspec" in data:
            return parse_cspec_json(data)
        if "math" in data:
            return parse_mathform(data["math"])
        raise StlSyntaxError("formula object needs 'cspec' or 'math'")
    return parse_mathform(data)


__all__ = ["parse_cspec", "parse_cspec_json", "parse_mathform", "parse_predicate", "parse_any",
           "StlError", "StlSyntaxError"]
