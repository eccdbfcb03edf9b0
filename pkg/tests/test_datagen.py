"""Syntax format enumeration, sampling ranges, NL rendering and record emission."""

import json
import time

import numpy as np
import pytest

from stlpde.datagen import (ATOM_KINDS, TEMPLATES, DatasetError, check_record, emit_dataset,
                            enumerate_formats, formats_digest, generate, in_ranges, reference_scale,
                            record_seed, render_nl, sample_instance)
from stlpde.formula import atoms, shape
from stlpde.parsing import parse_cspec, parse_mathform
from stlpde.problem import system_from_json, system_to_json

DIGEST = "565db7a1471556d9cf02956d83676b71d4768e20fc10c6600e09fc2dd7cebe15"


def test_format_counts():
    t0 = time.perf_counter()
    formats = enumerate_formats()
    assert time.perf_counter() - t0 < 1.0
    counts = [sum(f.n_atoms == n for f in formats) for n in (1, 2, 3)]
    assert counts == [6, 72, 1296] and len(formats) == 1374


def test_format_counts_from_first_principles():
    # 6 atom kinds; 1 tree with 1 slot, 2 trees with 2 slots, 6 trees with 3 slots
    assert len(ATOM_KINDS) == 6
    assert [len(TEMPLATES[n]) * 6 ** n for n in (1, 2, 3)] == [6, 72, 1296]


def test_format_digest_pinned():
    assert formats_digest() == DIGEST


def test_format_keys_unique():
    formats = enumerate_formats()
    assert len({f.key for f in formats}) == len(formats)
    assert len({f.slug for f in formats}) == len(formats)


def test_formats_are_distinct_trees():
    formats = enumerate_formats()
    shapes = set()
    for i, fmt in enumerate(formats):
        inst = sample_instance(fmt, "heat", i)
        shapes.add((fmt.structure, shape(inst.formula)))
    assert len(shapes) == len(formats)


def test_reference_scale_sums():
    assert reference_scale("heat", "train") == 3840 + 45792 + 817776


@pytest.mark.parametrize("kind", ["heat", "wave"])
def test_ten_thousand_samples_in_range(kind):
    formats = enumerate_formats()
    rng = np.random.default_rng(0)
    for seed in range(10_000):
        fmt = formats[int(rng.integers(len(formats)))]
        inst = sample_instance(fmt, kind, seed)
        assert in_ranges(inst) == []


def test_sampling_is_deterministic():
    fmt = enumerate_formats()[500]
    a, b = sample_instance(fmt, "wave", 42), sample_instance(fmt, "wave", 42)
    assert a.to_record() == b.to_record()
    assert a.to_record() != sample_instance(fmt, "wave", 43).to_record()


def test_record_seeds_differ_across_axes():
    seeds = {record_seed(0, k, s, i, j) for k in ("heat", "wave") for s in ("train", "test")
             for i in range(5) for j in range(3)}
    assert len(seeds) == 60


def test_record_round_trip():
    fmt = enumerate_formats()[1000]
    inst = sample_instance(fmt, "heat", 7)
    rec = json.loads(json.dumps(inst.to_record()))
    assert parse_cspec(rec["regions"], rec["cspec"]) == inst.formula
    assert parse_mathform(rec["stl_math"]) == inst.formula
    assert system_to_json(system_from_json(rec["system"])) == system_to_json(inst.system)
    check_record(rec, inst.formula, inst.system)


def test_check_record_detects_tampering():
    inst = sample_instance(enumerate_formats()[10], "heat", 1)
    rec = inst.to_record()
    rec["stl_math"] = rec["stl_math"].replace("G_", "F_", 1) if "G_" in rec["stl_math"] else \
        rec["stl_math"].replace("F_", "G_", 1)
    with pytest.raises(DatasetError):
        check_record(rec, inst.formula, inst.system)


def test_nl_templates():
    formats = enumerate_formats()
    by_structure = {f.structure: f for f in formats}
    inst = sample_instance(by_structure["A|(B&C)"], "heat", 3)
    text = inst.nl
    assert text.startswith("Consider a rod of length")
    assert "Either satisfy the condition that" in text and "; or satisfy the conditions that" in text
    assert text.count("mu0(x)") == 1 and text.count("mu2(x)") == 1
    wave = sample_instance(by_structure["A&B"], "wave", 3)
    assert "Moreover," in wave.nl and "displacement" in wave.nl
    assert render_nl(inst) == inst.nl


def test_nl_mentions_every_constant():
    inst = sample_instance(enumerate_formats()[0], "heat", 11)
    a = atoms(inst.formula)[0]
    for value in (a.t_lo, a.t_hi, a.pred.x_lo, a.pred.x_hi):
        assert f"{value:g}" in inst.nl or str(int(value)) in inst.nl


def test_emit_writes_per_format_and_merged(tmp_path):
    formats = enumerate_formats()[:3]
    paths = emit_dataset(formats, 2, "heat", "test", tmp_path, seed=5)
    assert len(paths) == 4
    merged = paths[-1].read_text().splitlines()
    assert len(merged) == 6
    assert sum(len(p.read_text().splitlines()) for p in paths[:-1]) == 6


def test_emit_is_byte_identical(tmp_path):
    formats = enumerate_formats()[100:110]
    a = emit_dataset(formats, 1, "wave", "train", tmp_path / "a", seed=3)
    b = emit_dataset(formats, 1, "wave", "train", tmp_path / "b", seed=3)
    assert [p.read_bytes() for p in a] == [p.read_bytes() for p in b]


def test_full_per_format_one_run():
    for kind in ("heat", "wave"):
        t0 = time.perf_counter()
        n = sum(1 for _ in generate(enumerate_formats(), 1, kind))
        assert n == 1374
        assert time.perf_counter() - t0 < 60


def test_per_format_must_be_positive():
    with pytest.raises(ValueError):
        list(generate(enumerate_formats()[:1], 0, "heat"))
