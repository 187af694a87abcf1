import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from codetree_fractals.codetree import AffineMap, Catalog, IFSFamily

settings.register_profile("default", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def random_contraction(rng, D=2, smax=0.9, smin=0.05):
    """Random D x D matrix with singular values in [smin, smax]."""
    q1, _ = np.linalg.qr(rng.standard_normal((D, D)))
    q2, _ = np.linalg.qr(rng.standard_normal((D, D)))
    s = np.sort(rng.uniform(smin, smax, D))[::-1]
    return q1 @ np.diag(s) @ q2


@st.composite
def contractions(draw, D=2):
    seed = draw(st.integers(0, 2**32 - 1))
    return random_contraction(np.random.default_rng(seed), D)


def similitude(r, D=2, theta=0.0):
    return r * (rotation(theta) if D == 2 else np.eye(D))


def catalog_from(families: dict, D=2, slots=None):
    """``families`` maps label -> list of (matrix, slot)."""
    fams = [IFSFamily(lab, tuple(AffineMap(np.asarray(m, float), s) for m, s in maps))
            for lab, maps in families.items()]
    return Catalog(fams, D, slots=slots)


def similarity_catalog(spec: dict, D=2):
    """``spec`` maps label -> list of ratios; slots are per-map and unshared."""
    return catalog_from({lab: [(similitude(r, D), f"{lab}{i}") for i, r in enumerate(rs)]
                         for lab, rs in spec.items()}, D)


def random_affine_catalog(rng, n_families=2, max_maps=3, shared_slots=True):
    fams = {}
    for f in range(n_families):
        m = int(rng.integers(1, max_maps + 1))
        fams[f"L{f}"] = [(random_contraction(rng, 2, 0.8, 0.1),
                          f"s{i}" if shared_slots else f"L{f}s{i}") for i in range(m)]
    return catalog_from(fams)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
