import math

import numpy as np
import pytest

from codetree_fractals.config import config_from_dict
from codetree_fractals.errors import UnknownExample
from codetree_fractals.examples import (NAMES, evaluate, example_catalog, harmonic_distance,
                                        markov_pressure, to_config)


def test_all_fixtures_load():
    for name in ("pressure1", "pressure2", "pressure3", "eqrelation", "sierpinski", "cantor3",
                 "markov_ab", "vvariable_demo"):
        assert name in NAMES
        ex = example_catalog(name)
        assert ex.expected
        assert all(e.provenance in {"PAPER", "DERIVED", "TRIVIAL"} for e in ex.expected.values())


def test_unknown_example():
    with pytest.raises(UnknownExample):
        example_catalog("nope")


@pytest.mark.parametrize("name", NAMES)
def test_fixture_exports_to_equivalent_config(name):
    ex = example_catalog(name)
    cfg = config_from_dict(to_config(ex))
    a, b = ex.tree(seed=3), cfg.generator.build(seed=3)
    for n in range(12):
        assert np.array_equal(a.level(n)[0], b.level(n)[0])
        assert np.array_equal(a.level(n)[1], b.level(n)[1])
    np.testing.assert_array_equal(cfg.assignment().vectors, ex.assignment().vectors)


def test_markov_pressure_values():
    # frozen from a 40-digit evaluation of the Birkhoff formula
    assert markov_pressure(0.25) == pytest.approx(0.58526640339052746163, abs=1e-14)
    assert markov_pressure(0.5) == pytest.approx(0.27465307216702742285, abs=1e-14)
    assert markov_pressure(0.75) == pytest.approx(-0.035960259056472615930, abs=1e-14)


def test_pressure2_bound_and_zero_formulas():
    ex = example_catalog("pressure2")
    assert ex.expected["pressure_zero"].value == pytest.approx(1.0)
    assert ex.expected["affinity_dimension_upper_bound"].value == pytest.approx(
        math.log(3) / math.log(4), abs=1e-15)


def test_pressure2_tree_rotates_branches():
    t = example_catalog("pressure2").tree()
    # every level of the tree uses both families somewhere from level 4 on
    for n in (4, 20, 100):
        labels, _ = t.level(n)
        used = {t.catalog.labels[labels[s]] for s in t.active_slots(n)}
        assert used == {"F", "G"}


def test_harmonic_distance():
    pts = np.concatenate([[0.0], 1 / np.arange(1, 2 ** 12)])[:, None]
    assert harmonic_distance(pts) < 1e-6
    assert harmonic_distance(np.array([[0.0], [1.0], [0.75]])) >= 0.25


@pytest.mark.parametrize("name", ["sierpinski", "cantor3", "eqrelation", "pressure3"])
def test_cheap_fixtures_pass(name):
    rows = evaluate(example_catalog(name))
    assert rows
    assert all(r.passed for r in rows), [r for r in rows if not r.passed]


def test_pressure1_closed_form_row():
    rows = {r.quantity: r for r in evaluate(example_catalog("pressure1"), "pressure")}
    assert rows["closed_form_max_error"].passed
    assert rows["closed_form_max_error"].got < 1e-12
