"""CPLEX-LP text format writer and reader."""

from __future__ import annotations

import math
import re

from stlpde.milp.model import EQ, GE, LE, MilpModel

_WRAP = 200


class LpFormatError(ValueError):
    pass


def _num(value: float) -> str:
    value = float(value)
    if value == 0:
        return "0"
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def _bound(value: float) -> str:
    if math.isinf(value):
        return "+inf" if value > 0 else "-inf"
    return _num(value)


def _terms(names, idx, coef) -> list[str]:
    out = []
    for j, c in zip(idx, coef):
        sign = "-" if c < 0 else "+"
        out.append(f"{sign} {_num(abs(c))} {names[j]}")
    return out


def _wrap(head: str, parts: list[str]) -> list[str]:
    lines, line = [], head
    for part in parts:
        if len(line) + len(part) + 1 > _WRAP and line.strip():
            lines.append(line)
            line = "  "
        line = f"{line} {part}" if line.strip() else f"{line}{part}"
    lines.append(line)
    return lines


def write_lp(m: MilpModel) -> str:
    """Render the model in CPLEX-LP format; deterministic for a given model."""
    out = ["\\ STL-constrained PDE control model",
           "Maximize" if m.maximize else "Minimize"]
    obj = sorted(m.objective.items())
    out += _wrap(" obj:", _terms(m.names, [j for j, _ in obj], [c for _, c in obj]) or ["0"])
    out.append("Subject To")
    for row in m.rows:
        parts = _terms(m.names, row.idx, row.coef) or ["0 " + m.names[0]]
        parts.append(f"{row.sense} {_num(row.rhs)}")
        out += _wrap(f" {row.name}:", parts)
    out.append("Bounds")
    # every variable is listed, binaries included, so the reader recovers the order
    for name, lo, hi in zip(m.names, m.lb, m.ub):
        if lo == hi:
            out.append(f" {name} = {_num(lo)}")
        elif math.isinf(lo) and math.isinf(hi):
            out.append(f" {name} free")
        else:
            out.append(f" {_bound(lo)} <= {name} <= {_bound(hi)}")
    bins = m.binary_names()
    if bins:
        out.append("Binaries")
        out += [f" {name}" for name in bins]
    out.append("End")
    return "\n".join(out) + "\n"


_SECTION = {
    "maximize": "max", "maximise": "max", "maximum": "max", "max": "max",
    "minimize": "min", "minimise": "min", "minimum": "min", "min": "min",
    "subject to": "st", "such that": "st", "st": "st", "s.t.": "st",
    "bounds": "bounds", "bound": "bounds",
    "binaries": "bin", "binary": "bin", "bin": "bin",
    "generals": "gen", "general": "gen", "gen": "gen",
    "end": "end",
}
_TOKEN = re.compile(r"[A-Za-z_][A-Za-z0-9_.\[\]]*:?|[+-]?(?:inf(?:inity)?|\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|<=|>=|=<|=>|[<>=+-]",
                    re.IGNORECASE)


def _tokens(text: str) -> list[str]:
    out = []
    pos = 0
    for m in _TOKEN.finditer(text):
        if text[pos:m.start()].strip():
            raise LpFormatError(f"cannot parse {text[pos:m.start()].strip()!r}")
        out.append(m.group())
        pos = m.end()
    if text[pos:].strip():
        raise LpFormatError(f"cannot parse {text[pos:].strip()!r}")
    return out


def _is_num(tok: str) -> bool:
    try:
        float(tok)
        return True
    except ValueError:
        return False


_SENSES = ("<=", "=<", "<", ">=", "=>", ">", "=")


def _sense(tok: str) -> str:
    return {"<=": LE, "=<": LE, "<": LE, ">=": GE, "=>": GE, ">": GE, "=": EQ}[tok]


def _linear(tokens: list[str]) -> list[tuple[str, float]]:
    """Parse ``+ 2 x - y + 3.5 z`` into (name, coef) pairs."""
    terms, sign, coef, i = [], 1.0, None, 0
    while i < len(tokens):
        tok = tokens[i]
        if tok in ("+", "-"):
            sign = sign * (-1.0 if tok == "-" else 1.0)
        elif _is_num(tok):
            coef = float(tok) if coef is None else coef * float(tok)
        else:
            terms.append((tok, sign * (1.0 if coef is None else coef)))
            sign, coef = 1.0, None
        i += 1
    if coef is not None:
        terms.append(("", sign * coef))
    return terms


def read_lp(text: str) -> MilpModel:
    """Parse CPLEX-LP text produced by :func:`write_lp` (or a compatible subset)."""
    sections: dict[str, list[str]] = {}
    order = []
    current = None
    for raw in text.splitlines():
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        key = _SECTION.get(line.lower())
        if key is not None:
            current = key
            order.append(key)
            sections.setdefault(key, [])
            if key == "end":
                break
            continue
        if current is None:
            raise LpFormatError(f"content before first section: {line!r}")
        sections[current].append(line)
    if "gen" in sections and sections["gen"]:
        raise LpFormatError("general integer variables are not supported")
    sense = "max" if "max" in sections else "min"
    if sense not in sections:
        raise LpFormatError("missing objective section")

    m = MilpModel(maximize=(sense == "max"))

    def var(name: str) -> int:
        if name not in m.index:
            m.add_var(name, 0.0, math.inf)
        return m.index[name]

    # objective
    obj_tokens = _tokens(" ".join(sections[sense]))
    if obj_tokens and obj_tokens[0].endswith(":"):
        obj_tokens = obj_tokens[1:]
    objective: dict[int, float] = {}
    for name, c in _linear(obj_tokens):
        if name:
            j = var(name)
            objective[j] = objective.get(j, 0.0) + c

    # rows: a row ends after "<sense> <number>"
    toks = _tokens(" ".join(sections.get("st", [])))
    i, count = 0, 0
    while i < len(toks):
        name = None
        if toks[i].endswith(":"):
            name = toks[i][:-1]
            i += 1
        body = []
        while i < len(toks) and toks[i] not in ("<=", ">=", "=<", "=>", "<", ">", "="):
            body.append(toks[i])
            i += 1
        if i + 1 >= len(toks):
            raise LpFormatError(f"row {name or count} has no right-hand side")
        row_sense = _sense(toks[i])
        sign = 1.0
        i += 1
        while toks[i] in ("+", "-"):
            sign = -sign if toks[i] == "-" else sign
            i += 1
        rhs = sign * float(toks[i])
        i += 1
        terms = [(var(n), c) for n, c in _linear(body) if n]
        const = sum(c for n, c in _linear(body) if not n)
        m.add_row(name or f"c{count}", terms, row_sense, rhs - const)
        count += 1

    declared = []
    for line in sections.get("bounds", []):
        toks = _tokens(line)
        declared += [t for t in toks if not (_is_num(t) or t.lower() == "free" or t in _SENSES)]
        low = [t.lower() for t in toks]
        if len(toks) == 2 and low[1] == "free":
            j = var(toks[0])
            m.lb[j], m.ub[j] = -math.inf, math.inf
        elif len(toks) == 5 and toks[1] in ("<=", "=<") and toks[3] in ("<=", "=<"):
            j = var(toks[2])
            m.lb[j], m.ub[j] = float(toks[0]), float(toks[4])
        elif len(toks) == 3 and not _is_num(toks[0]):
            j = var(toks[0])
            s, v = _sense(toks[1]), float(toks[2])
            if s == LE:
                m.ub[j] = v
            elif s == GE:
                m.lb[j] = v
            else:
                m.lb[j] = m.ub[j] = v
        elif len(toks) == 3:
            j = var(toks[2])
            s, v = _sense(toks[1]), float(toks[0])
            if s == LE:
                m.lb[j] = v
            elif s == GE:
                m.ub[j] = v
            else:
                m.lb[j] = m.ub[j] = v
        else:
            raise LpFormatError(f"cannot parse bound {line!r}")

    for line in sections.get("bin", []):
        for name in line.split():
            j = var(name)
            m.binary[j] = True
            m.lb[j], m.ub[j] = 0.0, 1.0
    m.objective = objective
    return _reorder(m, declared)


def _reorder(m: MilpModel, declared: list[str]) -> MilpModel:
    """Put variables in Bounds-section order (the writer's model order)."""
    seen = set()
    names = [n for n in declared if not (n in seen or seen.add(n))]
    names += [n for n in m.names if n not in seen]
    if names == m.names:
        return m
    perm = [m.index[n] for n in names]
    new_of = {old: new for new, old in enumerate(perm)}
    out = MilpModel(maximize=m.maximize)
    for old in perm:
        out.add_var(m.names[old], m.lb[old], m.ub[old], m.binary[old])
    for row in m.rows:
        out.add_row(row.name, [(new_of[j], c) for j, c in zip(row.idx, row.coef)], row.sense, row.rhs)
    out.objective = {new_of[j]: c for j, c in m.objective.items()}
    return out
