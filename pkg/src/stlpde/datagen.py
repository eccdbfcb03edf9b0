"""Synthetic autoformalization data: syntax formats, sampled problems and NL text.

Each record links a natural-language problem to its STL formula (in math and
cspec notation) and the PDE system it constrains. Numbers are sampled
uniformly from per-kind hyperparameter ranges and rounded to the precision used
in written examples (two decimals for times, integers for positions).
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from stlpde.fem import HEAT, WAVE, Material, PdeSystem
from stlpde.formula import (Atom, Cmp, Formula, LinearPredicate, Op, atoms, fmt_num,
                            print_cspec, print_mathform, validate)
from stlpde.parsing import parse_cspec, parse_mathform
from stlpde.problem import system_to_json

ATOM_KINDS = tuple(itertools.product((Op.G, Op.F), (Cmp.LT, Cmp.GT, Cmp.EQ)))

# tree templates over atom slots 0, 1, 2
TEMPLATES = {
    1: ("A",),
    2: ("A&B", "A|B"),
    3: ("A|B|C", "A&B&C", "(A|B)&C", "A|(B&C)", "(A&B)|C", "A&(B|C)"),
}

# reference corpus sizes per constraint count (1, 2, 3 atoms)
REFERENCE_COUNTS = {
    (HEAT, "train"): (3840, 45792, 817776),
    (HEAT, "test"): (960, 11448, 204768),
    (WAVE, "train"): (3840, 45504, 795744),
    (WAVE, "test"): (960, 11304, 196992),
}

HEAT_RANGES = {
    "L": (50.0, 300.0), "temp": (250.0, 350.0), "tmax": (5.0, 15.0),
    "a": (-0.5, 0.5), "b_offset": (-20.0, 20.0),
    "kappa_a": (1.2e6, 1.8e6), "kappa_b": (0.4e6, 1.2e6),
    "rho_a": (3e-6, 6e-6), "rho_b": (3e-6, 6e-6),
    "c_a": (3e8, 4.5e8), "c_b": (4.5e8, 4.8e8),
}
WAVE_RANGES = {
    "L": (60000.0, 140000.0), "rho_steel": (7.6e-6, 8e-6), "rho_brass": (8.4e-6, 8.8e-6),
    "E_steel": (2e8, 2.4e8), "E_brass": (1e8, 1.8e8), "tmax": (0.5, 2.0),
    "a": (-5e-5, 5e-5), "b": (-3.0, 3.0),
}


class DatasetError(ValueError):
    """A generated record failed its consistency check."""


@dataclass(frozen=True)
class SyntaxFormat:
    atoms: tuple
    structure: str

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def key(self) -> str:
        text = self.structure
        for slot, (op, cmp) in zip("ABC", self.atoms):
            text = text.replace(slot, f"{op.value}{cmp.value}")
        return text

    @property
    def slug(self) -> str:
        names = {"<": "lt", ">": "gt", "=": "eq", "&": "and", "|": "or", "(": "L", ")": "R"}
        return "".join(names.get(ch, ch) for ch in self.key)

    def build(self, preds: Sequence, windows: Sequence) -> Formula:
        leaves = [Atom(op, lo, hi, p) for (op, cmp), p, (lo, hi) in zip(self.atoms, preds, windows)]
        return _build_tree(self.structure, leaves)


def _build_tree(structure: str, leaves: list) -> Formula:
    from stlpde.parsing import _Parser  # reuse the connective grammar

    slots = dict(zip("ABC", leaves))
    p = _Parser(structure.replace("A", " A ").replace("B", " B ").replace("C", " C "))

    def term():
        if p.accept("("):
            node = p.chain(term)
            p.expect(")")
            return node
        return slots[p.next().text]

    node = p.chain(term)
    p.finish()
    return node


def enumerate_formats() -> list[SyntaxFormat]:
    """All 1374 syntax formats: 6 one-atom, 72 two-atom and 1296 three-atom."""
    out = []
    for n in (1, 2, 3):
        for structure in TEMPLATES[n]:
            for combo in itertools.product(ATOM_KINDS, repeat=n):
                out.append(SyntaxFormat(tuple(combo), structure))
    return out


def formats_digest(formats: Optional[Sequence] = None) -> str:
    formats = enumerate_formats() if formats is None else formats
    return hashlib.sha256("\n".join(f.key for f in formats).encode()).hexdigest()


def reference_scale(kind: str, split: str) -> int:
    """Total records of the reference corpus for one kind and split (not materialized)."""
    return sum(REFERENCE_COUNTS[(kind, split)])


# -- sampling --------------------------------------------------------------

def _sig(value: float, digits: int) -> float:
    return float(f"{value:.{digits - 1}e}")


def _interval(rng, total: float, decimals: int, min_width: float) -> tuple[float, float]:
    lo = rng.uniform(0.0, 0.8 * total)
    width = rng.uniform(0.05, 0.4) * total
    lo = round(lo, decimals)
    hi = min(round(lo + width, decimals), total)
    if hi - lo < min_width:
        hi = min(round(lo + min_width, decimals), total)
        lo = min(lo, hi)
    return lo, hi


@dataclass(frozen=True)
class ProblemInstance:
    system: PdeSystem
    formula: Formula
    fmt: SyntaxFormat
    seed: int
    nl: str = ""

    @property
    def cspec(self):
        return print_cspec(self.formula)

    def to_record(self) -> dict:
        regions, text = print_cspec(self.formula)
        return {
            "nl": self.nl,
            "stl_math": print_mathform(self.formula),
            "regions": {k: v.to_json() for k, v in regions.items()},
            "cspec": text,
            "system": system_to_json(self.system),
            "format": self.fmt.key,
            "seed": self.seed,
        }


def _heat_system(rng) -> tuple[PdeSystem, float]:
    r = HEAT_RANGES
    L = float(round(rng.uniform(*r["L"])))
    temp = round(rng.uniform(*r["temp"]), 2)
    tmax = round(rng.uniform(*r["tmax"]), 2)
    mats = (
        Material(L / 2, _sig(rng.uniform(*r["rho_a"]), 4), c=_sig(rng.uniform(*r["c_a"]), 4),
                 kappa=_sig(rng.uniform(*r["kappa_a"]), 4)),
        Material(L, _sig(rng.uniform(*r["rho_b"]), 4), c=_sig(rng.uniform(*r["c_b"]), 4),
                 kappa=_sig(rng.uniform(*r["kappa_b"]), 4)),
    )
    return PdeSystem(HEAT, L, tmax, temp, mats, u0=temp), temp


def _wave_system(rng) -> PdeSystem:
    r = WAVE_RANGES
    L = float(round(rng.uniform(*r["L"])))
    mats = (
        Material(L / 2, _sig(rng.uniform(*r["rho_steel"]), 4), E=_sig(rng.uniform(*r["E_steel"]), 4)),
        Material(L, _sig(rng.uniform(*r["rho_brass"]), 4), E=_sig(rng.uniform(*r["E_brass"]), 4)),
    )
    tmax = round(rng.uniform(*r["tmax"]), 2)
    return PdeSystem(WAVE, L, tmax, 0.0, mats, u0=0.0)


def sample_instance(fmt: SyntaxFormat, kind: str, rng_seed) -> ProblemInstance:
    """Realize ``fmt`` as a concrete problem with uniformly sampled constants."""
    rng = np.random.default_rng(rng_seed)
    if kind == HEAT:
        sys, temp = _heat_system(rng)
    elif kind == WAVE:
        sys, temp = _wave_system(rng), 0.0
    else:
        raise ValueError(f"kind must be 'heat' or 'wave', got {kind!r}")
    preds, windows = [], []
    for _, cmp in fmt.atoms:
        windows.append(_interval(rng, sys.tmax, 2, 0.01))
        x_lo, x_hi = _interval(rng, sys.L, 0, 1.0)
        if kind == HEAT:
            a = round(rng.uniform(*HEAT_RANGES["a"]), 4)
            b = round(temp + rng.uniform(*HEAT_RANGES["b_offset"]), 4)
        else:
            a = _sig(rng.uniform(*WAVE_RANGES["a"]), 5)
            b = round(rng.uniform(*WAVE_RANGES["b"]), 4)
        preds.append(LinearPredicate(x_lo, x_hi, cmp, a, b))
    formula = fmt.build(preds, windows)
    seed = int(rng_seed) if np.ndim(rng_seed) == 0 else 0
    inst = ProblemInstance(sys, formula, fmt, seed)
    return ProblemInstance(sys, formula, fmt, seed, render_nl(inst))


def in_ranges(inst: ProblemInstance) -> list[str]:
    """Names of sampled constants lying outside the hyperparameter tables."""
    bad = []
    sys = inst.system

    def check(name, value, lo, hi):
        if not lo <= value <= hi:
            bad.append(f"{name}={value}")

    if sys.kind == HEAT:
        r = HEAT_RANGES
        check("L", sys.L, *r["L"])
        check("temp", sys.g0, *r["temp"])
        check("tmax", sys.tmax, *r["tmax"])
        for tag, m in zip("ab", sys.materials):
            check(f"kappa_{tag}", m.kappa, *r[f"kappa_{tag}"])
            check(f"rho_{tag}", m.rho, *r[f"rho_{tag}"])
            check(f"c_{tag}", m.c, *r[f"c_{tag}"])
        for a in atoms(inst.formula):
            check("a", a.pred.a, *r["a"])
            check("b_offset", round(a.pred.b - sys.g0, 6), *r["b_offset"])
    else:
        r = WAVE_RANGES
        check("L", sys.L, *r["L"])
        check("tmax", sys.tmax, *r["tmax"])
        for tag, m in zip(("steel", "brass"), sys.materials):
            check(f"rho_{tag}", m.rho, *r[f"rho_{tag}"])
            check(f"E_{tag}", m.E, *r[f"E_{tag}"])
        for a in atoms(inst.formula):
            check("a", a.pred.a, *r["a"])
            check("b", a.pred.b, *r["b"])
    for a in atoms(inst.formula):
        check("t_lo", a.t_lo, 0.0, a.t_hi)
        check("t_hi", a.t_hi, a.t_lo, sys.tmax)
        check("x_lo", a.pred.x_lo, 0.0, a.pred.x_hi)
        check("x_hi", a.pred.x_hi, a.pred.x_lo, sys.L)
    return bad


# -- natural language ------------------------------------------------------

_OP_PHRASE = {Op.F: "For one point during the time interval", Op.G: "For all time between the time interval"}
_CMP_PHRASE = {
    HEAT: {Cmp.GT: "larger than", Cmp.LT: "lower than", Cmp.EQ: "equal to"},
    WAVE: {Cmp.GT: "stretched over", Cmp.LT: "compressed below", Cmp.EQ: "equal to"},
}
_QUANTITY = {HEAT: "temperature distribution", WAVE: "displacement"}

# 3-atom structure sentences; {a}, {b}, {c} are clauses without the final period
_STRUCTURE_TEXT = {
    "A": "{A}.",
    "A&B": "{A}. Moreover, {b}.",
    "A|B": "Either {a}, or {b}.",
    "A|B|C": "Either {a}, or {b}, or {c}.",
    "A&B&C": "{A}. Moreover, {b}. In addition, {c}.",
    "(A|B)&C": "Either consider that {a} or that {b}. Afterwards, satisfy that {c}.",
    "A|(B&C)": "Either satisfy the condition that {a}; or satisfy the conditions that {b} and also {c}.",
    "(A&B)|C": "Either satisfy the conditions that {a} and also {b}; or satisfy the condition that {c}.",
    "A&(B|C)": "Satisfy that {a}. Afterwards, either consider that {b} or that {c}.",
}


def render_atom(atom: Atom, index: int, kind: str) -> str:
    """One constraint clause, capitalized, without a trailing period."""
    p = atom.pred
    return (f"{_OP_PHRASE[atom.op]} {fmt_num(atom.t_lo)} and {fmt_num(atom.t_hi)}, "
            f"the {_QUANTITY[kind]} of the rod should be {_CMP_PHRASE[kind][p.cmp]} the linear profile "
            f"mu{index}(x) = {fmt_num(p.a)} * x + {fmt_num(p.b)} between section "
            f"{fmt_num(p.x_lo)} and {fmt_num(p.x_hi)}")


def render_premise(sys: PdeSystem) -> str:
    m = sys.materials
    bounds = [0.0] + [seg.end for seg in m]
    if sys.kind == HEAT:
        parts = [f"Consider a rod of length {fmt_num(sys.L)} mm whose temperature follows the heat equation."]
        for lo, seg in zip(bounds, m):
            parts.append(
                f"The section from {fmt_num(lo)} to {fmt_num(seg.end)} mm has density {fmt_num(seg.rho)} kg/mm, "
                f"specific heat capacity {fmt_num(seg.c)} uJ/kg/K and thermal conductivity "
                f"{fmt_num(seg.kappa)} mW*mm/K.")
        u0 = fmt_num(sys.u0) if np.ndim(sys.u0) == 0 and sys.u0 is not None else fmt_num(sys.g0)
        parts.append(f"The temperature at x = 0 is fixed at {fmt_num(sys.g0)} K and the rod starts at {u0} K. "
                     f"A heat source is applied at x = {fmt_num(sys.L)} mm.")
    else:
        parts = [f"Consider a rod of length {fmt_num(sys.L)} mm whose displacement follows the wave equation."]
        for lo, seg in zip(bounds, m):
            parts.append(f"The section from {fmt_num(lo)} to {fmt_num(seg.end)} mm has density "
                         f"{fmt_num(seg.rho)} kg/mm and Young's modulus {fmt_num(seg.E)} N.")
        parts.append(f"The end at x = 0 is held at displacement {fmt_num(sys.g0)} mm and the rod starts at rest. "
                     f"A force is applied at x = {fmt_num(sys.L)} mm.")
    parts.append(f"The time horizon is {fmt_num(sys.tmax)} s.")
    return " ".join(parts)


def _lower_first(text: str) -> str:
    return text[:1].lower() + text[1:]


def render_nl(inst: ProblemInstance) -> str:
    """Premises followed by the constraint sentence for the instance's structure."""
    kind = inst.system.kind
    clauses = [render_atom(a, i, kind) for i, a in enumerate(atoms(inst.formula))]
    fill = {}
    for slot, clause in zip("abc", clauses):
        fill[slot] = _lower_first(clause)
        fill[slot.upper()] = clause
    return render_premise(inst.system) + " " + _STRUCTURE_TEXT[inst.fmt.structure].format(**fill)


# -- emission --------------------------------------------------------------

def record_seed(seed: int, kind: str, split: str, fmt_index: int, j: int) -> int:
    ss = np.random.SeedSequence([int(seed), (HEAT, WAVE).index(kind), ("train", "test").index(split),
                                 fmt_index, j])
    return int(ss.generate_state(1)[0])


def check_record(record: dict, formula: Formula, system: PdeSystem) -> None:
    """Cross-parse a record and confirm it matches ``formula`` and passes validation."""
    if parse_cspec(record["regions"], record["cspec"]) != formula:
        raise DatasetError(f"cspec does not re-parse to its formula (seed {record['seed']})")
    if parse_mathform(record["stl_math"]) != formula:
        raise DatasetError(f"math form does not re-parse to its formula (seed {record['seed']})")
    report = validate(formula, system)
    if not report.valid:
        raise DatasetError("; ".join(report.reasons))


def generate(formats: Sequence[SyntaxFormat], per_format: int, kind: str, split: str = "train",
             seed: int = 0) -> Iterable[tuple[int, dict]]:
    """Yield ``(format_index, record)`` after checking each record."""
    if per_format < 1:
        raise ValueError("per_format must be at least 1")
    all_formats = {f.key: i for i, f in enumerate(enumerate_formats())}
    for fmt in formats:
        idx = all_formats[fmt.key]
        for j in range(per_format):
            inst = sample_instance(fmt, kind, record_seed(seed, kind, split, idx, j))
            bad = in_ranges(inst)
            if bad:
                raise DatasetError(f"sampled constants out of range: {bad}")
            rec = inst.to_record()
            check_record(rec, inst.formula, inst.system)
            yield idx, rec


def _dump(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n"


def emit_dataset(formats: Optional[Sequence[SyntaxFormat]], per_format: int, kind: str, split: str,
                 out_path, seed: int = 0, merged: bool = True) -> list[Path]:
    """Write one JSONL file per format and split, plus a merged file when asked.

    Files are named ``{kind}_{split}_{format slug}.jsonl`` inside ``out_path``;
    the merged file is ``{kind}_{split}.jsonl``. Returns the written paths.
    """
    formats = enumerate_formats() if formats is None else list(formats)
    out = Path(out_path)
    out.mkdir(parents=True, exist_ok=True)
    per_file: dict[int, list[str]] = {}
    for idx, rec in generate(formats, per_format, kind, split, seed):
        per_file.setdefault(idx, []).append(_dump(rec))
    all_formats = enumerate_formats()
    paths = []
    merged_lines = []
    for idx in sorted(per_file):
        path = out / f"{kind}_{split}_{all_formats[idx].slug}.jsonl"
        path.write_text("".join(per_file[idx]), encoding="utf-8")
        merged_lines += per_file[idx]
        paths.append(path)
    if merged:
        path = out / f"{kind}_{split}.jsonl"
        path.write_text("".join(merged_lines), encoding="utf-8")
        paths.append(path)
    return paths


def attach_paraphrases(records: list[dict], paraphrase_path) -> list[dict]:
    """Attach externally produced paraphrases to records, matched by ``seed``.

    The paraphrase file is JSONL with ``{"seed": int, "paraphrases": [text, ...]}``.
    """
    table = {}
    for line in Path(paraphrase_path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            item = json.loads(line)
            table.setdefault(int(item["seed"]), []).extend(item["paraphrases"])
    out = []
    for rec in records:
        rec = dict(rec)
        if rec["seed"] in table:
            rec["nl_paraphrases"] = list(table[rec["seed"]])
        out.append(rec)
    return out


__all__ = [
    "ATOM_KINDS", "DatasetError", "REFERENCE_COUNTS", "ProblemInstance", "SyntaxFormat", "TEMPLATES",
    "attach_paraphrases", "check_record", "emit_dataset", "enumerate_formats", "formats_digest",
    "generate", "in_ranges", "reference_scale", "record_seed", "render_atom", "render_nl",
    "render_premise", "sample_instance",
]
