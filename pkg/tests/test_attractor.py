import math

import numpy as np
import pytest

from codetree_fractals.attractor import (
    PointCloud, box_counting_dimension, box_counts, cylinder_mass_ratio, default_scales,
    diameter_bound, dimension_experiment, natural_measure, occupancy_raster, point_cloud,
    read_cloud_csv, read_pgm, sample_translation, write_cloud_csv, write_pgm)
from codetree_fractals.codetree import (GeneratorSpec, TranslationScheme, composed_map,
                                        homogeneous_tree, valid_words, vvariable_tree)
from codetree_fractals.errors import ConfigError, EnumerationTooLarge, ScaleTooFine
from codetree_fractals.examples import example_catalog, harmonic_distance

from conftest import random_affine_catalog

LOG2_LOG3 = 0.63092975357145743710


def sierpinski(depth):
    ex = example_catalog("sierpinski")
    return point_cloud(ex.tree(), ex.assignment(), depth)


# -- clouds -----------------------------------------------------------------

@pytest.mark.parametrize("k", [0, 1, 4, 7])
def test_sierpinski_point_count(k):
    assert len(sierpinski(k)) == 3 ** k


def _descendant_gap(tree, a, k, extra, rng, pairs):
    words = valid_words(tree, k)
    worst = 0.0
    for _ in range(pairs):
        w = list(words[int(rng.integers(len(words)))])
        _, anc = composed_map(tree, a, w)
        for _ in range(extra):
            w.append(int(rng.integers(tree.num_children(tuple(w)))))
        _, desc = composed_map(tree, a, w)
        worst = max(worst, float(np.linalg.norm(desc - anc)))
    return worst


@pytest.mark.parametrize("extra", [6, 8])
def test_tail_bound(rng, extra):
    cat = random_affine_catalog(rng, 2, 3)
    t = vvariable_tree(cat, 2, seed=2)
    a = sample_translation(cat.scheme, 1.0, 3)
    k = 3
    gap = _descendant_gap(t, a, k, extra, rng, 1000)
    assert gap <= diameter_bound(cat, a, k)


def test_diameter_bound_decreases():
    ex = example_catalog("sierpinski")
    d = [diameter_bound(ex.catalog, ex.assignment(), k) for k in range(10)]
    assert all(x > y > 0 for x, y in zip(d, d[1:]))


def test_pressure3_cloud_matches_harmonic_set():
    ex = example_catalog("pressure3")
    cloud = point_cloud(ex.tree(), ex.assignment(), 20)
    pts = cloud.points[:, 0]
    ref = np.concatenate([[0.0], 1.0 / np.arange(1, 2 ** 20 + 1)])
    ref.sort()
    j = np.clip(np.searchsorted(ref, pts), 1, len(ref) - 1)
    one_sided = np.minimum(np.abs(pts - ref[j - 1]), np.abs(pts - ref[j])).max()
    assert one_sided < 1e-4
    for n in range(1, 2 ** 6 + 1):
        assert np.abs(pts - 1.0 / n).min() < 1e-4
    assert harmonic_distance(cloud.points) < 1e-4


def test_sampling_mode(rng):
    ex = example_catalog("sierpinski")
    with pytest.raises(EnumerationTooLarge):
        point_cloud(ex.tree(), ex.assignment(), 16)
    c1 = point_cloud(ex.tree(), ex.assignment(), 16, sample_budget=5000, seed=1)
    c2 = point_cloud(ex.tree(), ex.assignment(), 16, sample_budget=5000, seed=1)
    assert len(c1) == 5000
    assert np.array_equal(c1.points, c2.points)
    # sampled points are genuine depth-16 points: they lie on the depth-8 grid of the set
    coarse = sierpinski(8)
    d = np.min(np.linalg.norm(c1.points[:200, None] - coarse.points[None], axis=2), axis=1)
    assert d.max() <= coarse.diameter


# -- translations -----------------------------------------------------------

def test_sample_translation_support_and_reproducibility():
    scheme = TranslationScheme({}, [f"s{i}" for i in range(10_000)], 2)
    a = sample_translation(scheme, 0.7, 5)
    assert np.linalg.norm(a.vectors, axis=1).max() <= 0.7
    assert np.array_equal(a.vectors, sample_translation(scheme, 0.7, 5).vectors)


def test_sample_translation_mean_is_zero():
    # coordinates of a uniform point in the disk of radius rho have sd rho / 2
    scheme = TranslationScheme({}, [f"s{i}" for i in range(100_000)], 2)
    a = sample_translation(scheme, 1.0, 11)
    se = 0.5 / math.sqrt(100_000)
    assert np.all(np.abs(a.vectors.mean(axis=0)) < 3 * se)


def test_sample_translation_rejects_bad_radius():
    with pytest.raises(ConfigError):
        sample_translation(TranslationScheme({}, ["s"], 2), 0.0)


# -- natural measure --------------------------------------------------------

def _log_phi_svd(lin, alpha):
    s = np.linalg.svd(lin, compute_uv=False)
    k = min(int(alpha), len(s) - 1)
    return float(np.sum(np.log(s[:k])) + (alpha - k) * np.log(s[k]))


def test_natural_measure_oracle(rng):
    cat = random_affine_catalog(rng, 2, 3)
    t = vvariable_tree(cat, 2, seed=6)
    m = max(m for m in range(1, 6) if t.necks(m)[-1] <= 6)
    a = sample_translation(cat.scheme, 1.0, 1)
    wc = natural_measure(t, a, 1.3, m)
    assert wc.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(wc.weights >= 0)
    words = valid_words(t, wc.depth)
    raw = np.exp([_log_phi_svd(composed_map(t, a, w)[0], 1.3) for w in words])
    np.testing.assert_allclose(wc.weights, raw / raw.sum(), rtol=1e-10)
    pts = np.array([composed_map(t, a, w)[1] for w in words])
    np.testing.assert_allclose(wc.cloud.points, pts, atol=1e-12)


def test_natural_measure_uniform_for_homogeneous_similarity():
    ex = example_catalog("sierpinski")
    wc = natural_measure(ex.tree(), ex.assignment(), 1.0, 5)
    np.testing.assert_allclose(wc.weights, 1 / 3 ** 5, rtol=1e-12)


def test_cylinder_mass_ratio_bounded(rng):
    cat = random_affine_catalog(rng, 2, 2)
    t = vvariable_tree(cat, 2, seed=1)
    m = next(m for m in range(1, 10) if t.necks(m)[-1] >= 6)
    if t.necks(m)[-1] > 10:
        pytest.skip("necks too far apart for exhaustive scan")
    ratios = cylinder_mass_ratio(t, 1.2, m)
    assert ratios[0] == pytest.approx(1.0, rel=1e-12)
    assert np.all(np.isfinite(ratios)) and np.all(ratios > 0)


# -- box counting -----------------------------------------------------------

def test_uniform_square_slope():
    pts = np.random.default_rng(0).random((10 ** 6, 2))
    est = box_counting_dimension(pts, 2.0 ** -np.arange(2, 9))
    assert est.slope == pytest.approx(2.0, abs=0.05)


def test_cantor_counts_against_interval_oracle():
    # the depth-12 points are left endpoints of the 2**12 surviving intervals;
    # at scale 3**-k exactly the 2**k level-k intervals are occupied
    ex = example_catalog("cantor3")
    cloud = point_cloud(ex.tree(), ex.assignment(), 12)
    scales = 3.0 ** -np.arange(1, 9)
    counts = box_counts(cloud.points, scales)
    assert np.array_equal(counts, 2 ** np.arange(1, 9))
    est = box_counting_dimension(cloud, scales)
    assert est.slope == pytest.approx(LOG2_LOG3, abs=0.05)


def test_translation_invariance():
    cloud = sierpinski(7)
    moved = PointCloud(cloud.points + np.array([12.345, -6.5]), cloud.depth, cloud.diameter)
    s = 2.0 ** -np.arange(2, 5)
    assert abs(box_counting_dimension(cloud, s).slope
               - box_counting_dimension(moved, s).slope) < 1e-9


def test_counts_sanity():
    cloud = sierpinski(8)
    scales = default_scales(cloud)
    counts = box_counts(cloud.points, scales)
    assert np.all(np.diff(scales) < 0)
    assert np.all(np.diff(counts) >= 0)
    assert np.all(counts <= len(cloud))
    est = box_counting_dimension(cloud)
    assert 0 <= est.slope <= 2.1


def test_default_scales_stop_at_resolution():
    cloud = sierpinski(8)
    s = default_scales(cloud)
    assert s[-1] >= cloud.diameter
    assert s[-1] * 0.5 < cloud.diameter
    exact = PointCloud(cloud.points, 0, 0.0)
    assert len(default_scales(exact)) == 16


def test_box_counting_errors():
    cloud = sierpinski(6)
    with pytest.raises(ConfigError):
        box_counting_dimension(cloud, [0.3])
    with pytest.raises(ConfigError):
        box_counting_dimension(cloud, [0.3, 0.3])
    with pytest.raises(ScaleTooFine):
        box_counting_dimension(cloud, [0.3, cloud.diameter / 2])


# -- experiment -------------------------------------------------------------

def test_experiment_flags_hypotheses():
    ex = example_catalog("sierpinski")
    with pytest.warns(UserWarning):
        rep = dimension_experiment(ex.generator, 1.0, 6, 2, seed=0)
    assert rep.outside_hypotheses
    assert rep.alpha0 == pytest.approx(math.log(3) / math.log(2), abs=1e-9)
    assert len(rep.slopes) == 2


def test_experiment_reproducible():
    spec = GeneratorSpec(example_catalog("markov_ab").catalog, "markov",
                         {"Q": [[0.5, 0.5], [0.5, 0.5]], "P0": [0.5, 0.5]})
    r1 = dimension_experiment(spec, 1.0, 6, 3, seed=4, mc_trials=50, mc_necks=10)
    r2 = dimension_experiment(spec, 1.0, 6, 3, seed=4, mc_trials=50, mc_necks=10)
    assert not r1.outside_hypotheses
    assert np.array_equal(r1.slopes, r2.slopes)
    assert r1.alpha0 == r2.alpha0


# -- file formats -----------------------------------------------------------

def test_csv_round_trip(tmp_path):
    cloud = sierpinski(5)
    p = tmp_path / "c.csv"
    write_cloud_csv(p, cloud, {"seed": 3})
    text = p.read_text()
    assert text.startswith("# seed=3\nx1,x2,depth,diameter\n")
    back = read_cloud_csv(p)
    assert np.array_equal(back.points, cloud.points)
    assert back.depth == 5 and back.diameter == cloud.diameter


def test_csv_parse_failure(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("x1,x2\n0.1,abc\n")
    with pytest.raises(ConfigError):
        read_cloud_csv(p)


def test_pgm_round_trip(tmp_path):
    cloud = sierpinski(8)
    p = tmp_path / "s.pgm"
    write_pgm(p, cloud, 512, {"seed": 0})
    assert p.read_bytes().startswith(b"P5\n# seed=0\n512 512\n255\n")
    img = read_pgm(p)
    assert img.shape == (512, 512)
    assert np.array_equal(img, occupancy_raster(cloud, 512))
    assert 0 < np.count_nonzero(img) <= 3 ** 8


def test_raster_needs_plane():
    ex = example_catalog("cantor3")
    with pytest.raises(ConfigError):
        occupancy_raster(point_cloud(ex.tree(), ex.assignment(), 4), 64)


def test_homogeneous_affine_cloud_inside_bound(rng):
    cat = random_affine_catalog(rng, 1, 3)
    t = homogeneous_tree(cat, "L0")
    a = sample_translation(cat.scheme, 0.5, 2)
    c6 = point_cloud(t, a, 6)
    c9 = point_cloud(t, a, 9)
    # each depth-9 point is within the depth-6 bound of some depth-6 point
    d = np.min(np.linalg.norm(c9.points[:, None] - c6.points[None], axis=2), axis=1)
    assert d.max() <= c6.diameter
