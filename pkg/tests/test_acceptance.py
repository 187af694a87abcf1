"""Acceptance criteria, each checked at its stated tolerance.

Every test records one PASS/FAIL line, printed in the terminal summary.
"""
import math
import time

import numpy as np
import pytest

from codetree_fractals import cli
from codetree_fractals.attractor import dimension_experiment, natural_measure, sample_translation
from codetree_fractals.codetree import (block_tree, homogeneous_tree, markov_tree, shift_xi,
                                        slot_block_sampler, subtree_equal, truncated_geometric,
                                        valid_words, vvariable_tree)
from codetree_fractals.examples import evaluate, example_catalog, markov_pressure
from codetree_fractals.linalg_svf import (batch_singular_values, log_phi_from_sigma,
                                          log_phi_lower_from_sigma, singular_values)
from codetree_fractals.pressure import (kingman_run, log_partition_curve,
                                        pressure_bracket, vvariable_similarity_pressure)

from conftest import ACCEPTANCE, random_affine_catalog, random_contraction

CASES = 10_000


def verdict(n, title, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}  ({detail})"
    ACCEPTANCE.append(line)
    print(line)
    assert ok, line


def rows_by_name(rows):
    return {r.quantity: r for r in rows}


# -- 1 ----------------------------------------------------------------------

def test_moran_baseline(capsys):
    t0 = time.perf_counter()
    code = cli.main(["dimzero", "example:sierpinski"])
    dt = time.perf_counter() - t0
    out = capsys.readouterr().out
    got = float(out.split("alpha0 = ")[1].split()[0])
    err = abs(got - math.log(3) / math.log(2))
    verdict(1, "Moran baseline", code == 0 and err <= 1e-9 and dt < 1.0,
            f"alpha0={got:.12f} err={err:.1e} time={dt:.2f}s")


# -- 2 ----------------------------------------------------------------------

def test_pressure1():
    t0 = time.perf_counter()
    rows = rows_by_name(evaluate(example_catalog("pressure1"), "pressure"))
    dt = time.perf_counter() - t0
    ok = all(r.passed for r in rows.values()) and dt < 5.0
    detail = ", ".join(f"{q}={r.got:.4g}[{'ok' if r.passed else 'x'}]" for q, r in rows.items())
    verdict(2, "pressure1 closed form and proxies", ok, f"{detail}, time={dt:.2f}s")


# -- 3 ----------------------------------------------------------------------

def test_pressure2():
    rows = rows_by_name(evaluate(example_catalog("pressure2"), "pressure"))
    dev, zero = rows["max_pressure_deviation"], rows["pressure_zero"]
    verdict(3, "pressure2 samples and zero", dev.passed and zero.passed,
            f"max deviation={dev.got:.4f} (tol 0.02), zero={zero.got:.5f} (tol 1e-3 of 1)")


# -- 4 ----------------------------------------------------------------------

def test_pressure3_attractor():
    rows = rows_by_name(evaluate(example_catalog("pressure3"), "render"))
    d, s = rows["max_distance_to_set"], rows["box_slope"]
    verdict(4, "pressure3 harmonic set", d.passed and s.passed,
            f"distance={d.got:.2e}, box slope={s.got:.4f}")


# -- 5 ----------------------------------------------------------------------

def test_markov_pressure():
    ex = example_catalog("markov_ab")
    t0 = time.perf_counter()
    run = kingman_run(ex.generator, 10_000, 50, seed=0)
    parts, ok = [], True
    for a in (0.25, 0.5, 0.75):
        e = run.estimate(a)
        z = abs(e.mean - markov_pressure(a)) / e.std_error
        ok &= z <= 3
        parts.append(f"p({a})={e.mean:.5f} z={z:.2f}")
    zero, stat, syst = run.zero()
    sigma = math.hypot(stat, syst)
    zz = abs(zero.alpha - math.log(6) / math.log(12)) / sigma
    dt = time.perf_counter() - t0
    ok &= zz <= 3 and dt < 10.0
    parts.append(f"alpha0={zero.alpha:.5f} z={zz:.2f} time={dt:.2f}s")
    verdict(5, "Markov Monte Carlo pressure", ok, ", ".join(parts))


# -- 6 ----------------------------------------------------------------------

def test_vvariable_consistency():
    alphas = np.linspace(0.0, 2.0, 9)
    same = True
    for cat, K in ((example_catalog("markov_ab").catalog, 200),
                   (random_affine_catalog(np.random.default_rng(6), 2, 3), 9)):
        for seed in range(10):
            t = vvariable_tree(cat, 1, seed=seed)
            labels = t.level_labels(K)
            h = homogeneous_tree(cat, [cat.labels[i] for i in labels])
            same &= np.array_equal(log_partition_curve(t, alphas, K),
                                   log_partition_curve(h, alphas, K))
    ex = example_catalog("vvariable_demo")
    parts = [f"V=1 bit-identical={same}"]
    ok = same
    run = kingman_run(ex.generator, 2000, 20, seed=2)
    for a in (0.5, 1.0):
        v = vvariable_similarity_pressure(ex.catalog, 2, None, a, 2000, seed=1)
        k = run.estimate(a)
        z = abs(v.mean - k.mean) / math.hypot(v.std_error, k.std_error)
        ok &= z <= 3
        parts.append(f"V=2 alpha={a}: {v.mean:.5f} vs {k.mean:.5f} z={z:.2f}")
    verdict(6, "V-variable consistency", ok, ", ".join(parts))


# -- 7 ----------------------------------------------------------------------

def _random_matrices(rng, n, D):
    return np.array([random_contraction(rng, D, smax=0.99, smin=0.01) for _ in range(n)])


def _log_sv(T):
    return np.log(batch_singular_values(T))


def suite_submultiplicative(rng):
    bad = 0
    for D in (2, 3):
        T, U = _random_matrices(rng, CASES // 2, D), _random_matrices(rng, CASES // 2, D)
        lt, lu, ltu = _log_sv(T), _log_sv(U), _log_sv(T @ U)
        for i, a in enumerate(rng.uniform(0, D, CASES // 2)):
            bad += log_phi_from_sigma(ltu[i], a) > (log_phi_from_sigma(lt[i], a)
                                                    + log_phi_from_sigma(lu[i], a) + 1e-12)
    return bad


def suite_lower_function(rng):
    T, U = _random_matrices(rng, CASES, 2), _random_matrices(rng, CASES, 2)
    lt, lu, ltu = _log_sv(T), _log_sv(U), _log_sv(T @ U)
    bad = 0
    for i, a in enumerate(rng.uniform(0, 2, CASES)):
        lo_t = log_phi_lower_from_sigma(lt[i], a)
        # supermultiplicative lower function, and the mixed lower bound
        bad += log_phi_lower_from_sigma(ltu[i], a) < (lo_t + log_phi_lower_from_sigma(lu[i], a)
                                                      - 1e-12)
        bad += log_phi_from_sigma(ltu[i], a) < lo_t + log_phi_from_sigma(lu[i], a) - 1e-12
    return bad


def suite_singular_data(rng):
    bad = 0
    for T in _random_matrices(rng, CASES, 2):
        sd = singular_values(T)
        ref = np.linalg.svd(T, compute_uv=False)
        bad += not (sd.sigma[0] >= sd.sigma[1] > 0)
        bad += not np.allclose(sd.sigma, ref, rtol=1e-12)
        bad += not np.allclose(np.linalg.norm(sd.w, axis=1), sd.sigma, rtol=1e-10)
        bad += not np.allclose(sd.v @ sd.v.T, np.eye(2), atol=1e-12)
    return bad


def suite_increment_band(rng):
    bad = 0
    for j in range(100):
        cat = random_affine_catalog(rng, 2, 3)
        t = vvariable_tree(cat, 2, seed=j)
        k = int(rng.integers(1, 7))
        a = rng.uniform(0, 2.5, 100)
        d = rng.uniform(0.01, 1.0, 100)
        ls = log_partition_curve(t, np.concatenate([a, a + d]), k)[:, k]
        inc = (ls[100:] - ls[:100]) / k
        bad += np.count_nonzero(inc < d * math.log(cat.sigma_lower) - 1e-12)
        bad += np.count_nonzero(inc > d * math.log(cat.sigma_upper) + 1e-12)
    return bad


def suite_neck_subtrees(rng):
    bad = checked = 0
    for j in range(100):
        cat = random_affine_catalog(rng, 2, 2)
        t = vvariable_tree(cat, 2, seed=j)
        for N in t.necks_upto(6):
            words = valid_words(t, N)
            for w in words[1:]:
                checked += 1
                bad += not subtree_equal(t, words[0], w, 6)
    return bad, checked


def _sampled_tree(rng, j, cat):
    kind = j % 3
    if kind == 0:
        return vvariable_tree(cat, int(rng.integers(1, 4)), seed=j)
    if kind == 1:
        p = rng.uniform(0.2, 0.8)
        return markov_tree(cat, [[p, 1 - p], [1 - p, p]], [0.5, 0.5], seed=j)
    return block_tree(cat, truncated_geometric(0.5, 4), slot_block_sampler(cat), seed=j)


def suite_shift(rng):
    cat = random_affine_catalog(rng, 2, 2)
    bad = 0
    for j in range(CASES):
        t = _sampled_tree(rng, j, cat)
        N = t.necks(5)
        s = shift_xi(t)
        bad += s.necks(4) != [n - N[0] for n in N[1:]]
        bad += not np.array_equal(s.level_labels(3), t.level_labels(N[0] + 3)[N[0]:])
    return bad


def suite_measure_normalization(rng):
    bad = 0
    trees = 0
    for j in range(100 * CASES):
        cat = random_affine_catalog(rng, 2, 2)
        t = vvariable_tree(cat, 2, seed=j)
        m = len(t.necks_upto(6))
        if m == 0:
            continue
        a = sample_translation(cat.scheme, 1.0, j)
        trees += 1
        if trees > CASES // 20:
            break
        for alpha in rng.uniform(0, 2, 20):
            w = natural_measure(t, a, alpha, m).weights
            bad += not (abs(w.sum() - 1.0) <= 1e-12 and np.all(w >= 0))
    return bad


def suite_bracket_sandwich(rng):
    bad = cases = 0
    for j in range(10 * CASES):
        cat = random_affine_catalog(rng, 2, 2)
        t = block_tree(cat, truncated_geometric(0.6, 3), slot_block_sampler(cat), seed=j)
        n = int(rng.integers(1, 5))
        N = t.necks(n)[-1]
        if N > 12:
            continue
        alphas = rng.uniform(0, 2, 50)
        exact = log_partition_curve(t, alphas, N)[:, N] / N
        for a, e in zip(alphas, exact):
            br = pressure_bracket(t, a, n)
            bad += not (br.lower - 1e-12 <= e <= br.upper + 1e-12)
        cases += len(alphas)
        if cases >= CASES:
            break
    return bad, cases


def test_property_suites():
    rng = np.random.default_rng(7)
    counts = {
        "submultiplicativity": (suite_submultiplicative(rng), CASES),
        "lower function": (suite_lower_function(rng), CASES),
        "singular data": (suite_singular_data(rng), CASES),
        "increment band": (suite_increment_band(rng), CASES),
        "neck subtrees": suite_neck_subtrees(rng),
        "shift": (suite_shift(rng), CASES),
        "measure normalization": (suite_measure_normalization(rng), CASES),
        "bracket sandwich": suite_bracket_sandwich(rng),
    }
    ok = all(bad == 0 for bad, _ in counts.values()) and counts["bracket sandwich"][1] >= CASES
    detail = ", ".join(f"{k} {bad}/{n} failures" for k, (bad, n) in counts.items())
    verdict(7, "property suites", ok, detail)


# -- 8 ----------------------------------------------------------------------

def test_dimension_experiment():
    ex = example_catalog("markov_ab")
    t0 = time.perf_counter()
    rep = dimension_experiment(ex.generator, 1.0, 9, 20, seed=0)
    dt = time.perf_counter() - t0
    gap = abs(rep.mean_slope - rep.alpha0)
    verdict(8, "box slopes against the pressure zero",
            gap <= 0.15 and not rep.outside_hypotheses and dt < 300,
            f"mean slope={rep.mean_slope:.4f} sd={rep.std_slope:.4f} alpha0={rep.alpha0:.4f} "
            f"gap={gap:.4f} time={dt:.1f}s")
