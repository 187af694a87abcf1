"""Built-in fixtures with pinned expected quantities.

Each fixture bundles a catalog, a generator recipe, default translations
and a table of expected values. ``evaluate`` recomputes every expected
quantity through the library pipeline.
"""
from dataclasses import dataclass, field
from functools import lru_cache
import math
import time

import numpy as np

from .codetree import (
    ORACLES,
    AffineMap,
    Catalog,
    GeneratorSpec,
    IFSFamily,
    SlotTree,
)
from .errors import UnknownExample


@dataclass(frozen=True)
class Expected:
    """An expected value with its tolerance.

    ``tol_kind`` is ``"abs"`` for an absolute tolerance or ``"se"`` when
    ``tol`` multiplies the standard error reported by the computation.
    """

    value: float
    tol: float
    provenance: str
    group: str
    tol_kind: str = "abs"


@dataclass(frozen=True)
class NamedExample:
    name: str
    description: str
    catalog: Catalog = field(repr=False)
    generator: GeneratorSpec = field(repr=False)
    translations: dict = field(repr=False)
    expected: dict = field(repr=False)
    settings: dict = field(default_factory=dict, repr=False)

    def tree(self, seed=None):
        return self.generator.build(seed=seed)

    def assignment(self):
        return self.catalog.scheme.assignment(self.translations)


@dataclass
class CheckRow:
    quantity: str
    expected: float
    got: float
    tol: float
    provenance: str
    passed: bool
    detail: str = ""
    seconds: float = 0.0


# ---------------------------------------------------------------------------
# catalog helpers


def _similitude(ratio, D):
    return np.eye(D) * ratio


def _family(label, ratios, slots, D):
    return IFSFamily(label, tuple(AffineMap(_similitude(r, D), s) for r, s in zip(ratios, slots)))


# ---------------------------------------------------------------------------
# explicit oracle trees


def phased_branch_tree(catalog: Catalog, params: dict) -> SlotTree:
    """Three-branch tree whose F-levels rotate between the root's branches.

    Levels in ``[N_j, N_{j+1})`` with ``N_j = base**j`` use family ``F``
    below first digit ``j mod 3`` and ``G`` elsewhere; the root uses ``G``.
    With ``variant`` set, the F-window instead visits every digit prefix of
    length 1..``max_prefix`` in turn, so each path meets infinitely many
    F-windows while a vanishing share of nodes does at any one time.
    """
    base = int(params.get("base", 4))
    f = catalog.label_of(params.get("F", "F"))
    g = catalog.label_of(params.get("G", "G"))
    P = int(params.get("max_prefix", 3)) if params.get("variant", False) else 1
    targets = [(q, w) for q in range(1, P + 1) for w in range(3 ** q)]

    def level_fn(n):
        # slots at level n spell the first min(n, P) digits in base 3
        known = min(n, P)
        width = 3 ** known
        slots = np.arange(width)
        labels = np.full(width, g)
        if n > 0:
            j = 0
            while base ** (j + 1) <= n:
                j += 1
            q, w = targets[j % len(targets)]
            if q <= known:
                labels[slots // 3 ** (known - q) == w] = f
        if n < P:
            ptr = 3 * slots[:, None] + np.arange(3)[None, :]
        else:
            ptr = np.repeat(slots[:, None], 3, axis=1)
        return labels, ptr

    return SlotTree(catalog, level_fn, neck_rule="none")


def _meets_harmonic(m: int, k: int) -> bool:
    """Does [m / 2**k, (m + 1) / 2**k] meet {0} U {1/n}?"""
    if m == 0:
        return True
    N = 1 << k
    if m + 1 > N:
        return False
    lo_n = -(-N // (m + 1))
    hi_n = N // m
    return lo_n <= hi_n


def harmonic_tree(catalog: Catalog, params: dict | None = None) -> SlotTree:
    """Subtree of the binary tree whose attractor is {0} U {1/n}.

    A node stands for a closed dyadic interval; its family keeps the halves
    that meet the target set: both (``F1``), the left one (``F2``) or the
    right one (``F3``). Each slot carries the integer index of its interval.
    """
    params = params or {}
    both, left, right = params.get("labels", ("F1", "F2", "F3"))
    ids = {lab: catalog.label_of(lab) for lab in (both, left, right)}
    frontier = [0]

    def level_fn(n):
        nonlocal frontier
        labels, ptr, nxt = [], [], []
        for m in frontier:
            lo = _meets_harmonic(2 * m, n + 1)
            hi = _meets_harmonic(2 * m + 1, n + 1)
            kept = [2 * m + b for b, ok in ((0, lo), (1, hi)) if ok]
            labels.append(ids[both if lo and hi else (left if lo else right)])
            ptr.append(list(range(len(nxt), len(nxt) + len(kept))))
            nxt.extend(kept)
        frontier = nxt
        return labels, ptr

    return SlotTree(catalog, level_fn, neck_rule="none")


ORACLES["pressure2"] = phased_branch_tree
ORACLES["pressure3"] = harmonic_tree


# ---------------------------------------------------------------------------
# fixtures


def _pressure1():
    cat = Catalog([_family("1", [1 / 8, 1 / 8], ["f0", "f1"], 1),
                   _family("2", [1 / 4, 1 / 4], ["g0", "g1"], 1)], 1)
    gen = GeneratorSpec(cat, "homogeneous",
                        {"schedule": {"root": "2", "cycle": ["1", "2"], "base": 4}})
    tr = {"f0": [0.0], "f1": [7 / 8], "g0": [0.0], "g1": [3 / 4]}
    lg2 = math.log(2)
    exp = {
        "p_inf_zero": Expected(1 / 3, 0.01, "PAPER", "pressure"),
        "p_sup_zero": Expected(1 / 2, 0.01, "PAPER", "pressure"),
        "p_inf_at_0.4": Expected((1 - 3 * 0.4) * lg2, 0.02, "PAPER", "pressure"),
        "p_sup_at_0.4": Expected((1 - 2 * 0.4) * lg2, 0.02, "PAPER", "pressure"),
        "closed_form_max_error": Expected(0.0, 1e-12, "DERIVED", "pressure"),
    }
    return NamedExample("pressure1", "two interval IFS alternating on windows [4^l, 4^(l+1))",
                        cat, gen, tr, exp, {"max_depth": 4096})


def pressure2_catalog(r=0.25, R=1 / 3):
    return Catalog([_family("F", [r] * 3, ["aF1", "aF2", "aF3"], 1),
                    _family("G", [R] * 3, ["aG1", "aG2", "aG3"], 1)], 1)


def _pressure2(r=0.25, R=1 / 3, variant=False):
    cat = pressure2_catalog(r, R)
    gen = GeneratorSpec(cat, "explicit", {"oracle": "pressure2",
                                          "parameters": {"base": 4, "variant": variant}})
    tr = {f"a{lab}{i}": [(i - 1) / 3] for lab in "FG" for i in (1, 2, 3)}
    exp = {
        "pressure_zero": Expected(-math.log(3) / math.log(R), 1e-3, "PAPER", "pressure"),
        "max_pressure_deviation": Expected(0.0, 0.02, "PAPER", "pressure"),
    }
    if not variant:
        exp["affinity_dimension_upper_bound"] = Expected(
            -math.log(3) / math.log(r), 1e-12, "PAPER", "pressure")
    name = "pressure2_variant" if variant else "pressure2"
    return NamedExample(name, "branch-rotating F/G similarity tree on windows [4^k, 4^(k+1))",
                        cat, gen, tr, exp, {"max_depth": 4096, "r": r, "R": R,
                                            "alpha_grid": [0.25 * j for j in range(7)]})


def pressure3_catalog():
    return Catalog([_family("F1", [0.5, 0.5], ["a0", "a1"], 1),
                    _family("F2", [0.5], ["a0"], 1),
                    _family("F3", [0.5], ["a1"], 1)], 1)


def _pressure3():
    cat = pressure3_catalog()
    gen = GeneratorSpec(cat, "explicit", {"oracle": "pressure3"})
    exp = {
        "max_distance_to_set": Expected(0.0, 1e-4, "PAPER", "render"),
        "box_slope": Expected(0.5, 0.05, "PAPER", "render"),
        "pressure_zero": Expected(0.5, 0.06, "PAPER", "pressure"),
    }
    return NamedExample("pressure3", "binary subtree with attractor {0} U {1/n}",
                        cat, gen, {"a0": [0.0], "a1": [0.5]}, exp,
                        {"depth": 20, "pressure_depth": 30,
                         "scales": [2.0 ** -k for k in range(4, 16)]})


def _eqrelation():
    h = math.sqrt(3) / 4
    cat = Catalog([_family("12", [0.5, 0.5], ["a1", "a2"], 2),
                   _family("23", [0.5, 0.5], ["a2", "a3"], 2)], 2)
    gen = GeneratorSpec(cat, "homogeneous", {"labels": ["12", "23"], "cycle": True})
    exp = {
        "translation_classes": Expected(3, 0, "PAPER", "pressure"),
        "pressure_zero": Expected(1.0, 1e-9, "TRIVIAL", "pressure"),
    }
    return NamedExample("eqrelation", "two sub-IFS of a triangle IFS sharing one translation",
                        cat, gen, {"a1": [0, 0], "a2": [0.5, 0], "a3": [0.25, h]}, exp)


def _sierpinski():
    h = math.sqrt(3) / 4
    cat = Catalog([_family("S", [0.5] * 3, ["a1", "a2", "a3"], 2)], 2)
    gen = GeneratorSpec(cat, "homogeneous", {"label": "S"})
    a0 = math.log(3) / math.log(2)
    exp = {
        "pressure_zero": Expected(a0, 1e-9, "TRIVIAL", "pressure"),
        "moran_dimension": Expected(a0, 1e-9, "TRIVIAL", "pressure"),
        "box_slope": Expected(a0, 0.08, "DERIVED", "dim"),
    }
    return NamedExample("sierpinski", "Sierpinski triangle, three maps of ratio 1/2", cat, gen,
                        {"a1": [0, 0], "a2": [0.5, 0], "a3": [0.25, h]}, exp,
                        {"depth": 9})


def _cantor3():
    cat = Catalog([_family("C", [1 / 3, 1 / 3], ["a0", "a1"], 1)], 1)
    gen = GeneratorSpec(cat, "homogeneous", {"label": "C"})
    d = math.log(2) / math.log(3)
    exp = {
        "moran_dimension": Expected(d, 1e-9, "TRIVIAL", "pressure"),
        "box_slope": Expected(d, 0.05, "DERIVED", "render"),
    }
    return NamedExample("cantor3", "middle-thirds Cantor set", cat, gen,
                        {"a0": [0.0], "a1": [2 / 3]}, exp, {"depth": 12})


def markov_ab_catalog():
    return Catalog([_family("A", [1 / 3] * 2, ["A1", "A2"], 2),
                    _family("B", [1 / 4] * 3, ["B1", "B2", "B3"], 2)], 2)


def markov_pressure(alpha):
    """Birkhoff average of the per-level factors under the uniform stationary law."""
    return 0.5 * math.log(2 * 3 ** -alpha) + 0.5 * math.log(3 * 4 ** -alpha)


def _markov_ab():
    cat = markov_ab_catalog()
    gen = GeneratorSpec(cat, "markov", {"Q": [[0.5, 0.5], [0.5, 0.5]], "P0": [0.5, 0.5]}, seed=0)
    tr = {"A1": [0, 0], "A2": [2 / 3, 0], "B1": [0, 0], "B2": [0.75, 0], "B3": [0, 0.75]}
    exp = {f"pressure_at_{a}": Expected(markov_pressure(a), 3.0, "DERIVED", "pressure", "se")
           for a in (0.25, 0.5, 0.75)}
    exp["montecarlo_zero"] = Expected(math.log(6) / math.log(12), 3.0, "DERIVED", "pressure", "se")
    exp["mean_box_slope"] = Expected(math.log(6) / math.log(12), 0.15, "DERIVED", "dim")
    return NamedExample("markov_ab", "Markov-driven homogeneous tree over A (2 maps, 1/3) "
                        "and B (3 maps, 1/4)", cat, gen, tr, exp,
                        {"trials": 10_000, "necks": 50, "depth": 9, "rho": 1.0,
                         "translations": 20})


def _vvariable_demo():
    cat = markov_ab_catalog()
    gen = GeneratorSpec(cat, "vvariable", {"V": 2}, seed=0)
    tr = {"A1": [0, 0], "A2": [2 / 3, 0], "B1": [0, 0], "B2": [0.75, 0], "B3": [0, 0.75]}
    exp = {f"estimator_gap_at_{a}": Expected(0.0, 3.0, "DERIVED", "pressure", "se")
           for a in (0.5, 1.0)}
    return NamedExample("vvariable_demo", "2-variable random tree over the A/B similitudes",
                        cat, gen, tr, exp, {"trials": 2000, "necks": 20})


_BUILDERS = {
    "pressure1": _pressure1,
    "pressure2": _pressure2,
    "pressure2_variant": lambda: _pressure2(variant=True),
    "pressure3": _pressure3,
    "eqrelation": _eqrelation,
    "sierpinski": _sierpinski,
    "cantor3": _cantor3,
    "markov_ab": _markov_ab,
    "vvariable_demo": _vvariable_demo,
}

NAMES = tuple(_BUILDERS)


@lru_cache(maxsize=None)
def example_catalog(name: str) -> NamedExample:
    try:
        return _BUILDERS[name]()
    except KeyError:
        raise UnknownExample(f"unknown example {name!r}; choose from {', '.join(NAMES)}") from None


# ---------------------------------------------------------------------------
# evaluation


def harmonic_distance(points, max_n: int = 2 ** 10) -> float:
    """Hausdorff distance between the points and {0} U {1/n}.

    Points are compared with the whole set; the set side only uses
    ``n <= max_n``, the part resolved at the rendering depth.
    """
    x = np.asarray(points, dtype=float).ravel()
    with np.errstate(divide="ignore"):
        n1 = np.floor(1.0 / np.maximum(x, 1e-300))
    cand = np.stack([np.abs(x), np.abs(x - 1.0 / np.maximum(n1, 1)),
                     np.abs(x - 1.0 / (n1 + 1))])
    to_set = float(cand.min(axis=0).max())
    ref = np.concatenate([[0.0], 1.0 / np.arange(1, max_n + 1)])
    xs = np.sort(x)
    i = np.clip(np.searchsorted(xs, ref), 1, len(xs) - 1)
    to_points = float(np.max(np.minimum(np.abs(ref - xs[i - 1]), np.abs(ref - xs[i]))))
    return max(to_set, to_points)


def _cached(cache, key, fn):
    if key not in cache:
        cache[key] = fn()
    return cache[key]


def _measure(ex: NamedExample, quantity: str, cache: dict):
    """Compute one quantity; returns (value, standard error or None, detail)."""
    from . import attractor as at
    from . import pressure as pr

    s = ex.settings
    if ex.name == "pressure1":
        K = s["max_depth"]
        depths = np.arange(1, K + 1)
        if quantity == "closed_form_max_error":
            tree = ex.tree()
            labs = tree.level_labels(K)
            nF = np.cumsum(labs == ex.catalog.label_of("1"))
            nG = np.arange(1, K + 1) - nF
            worst = 0.0
            for a in (0.0, 0.4, 1.0):
                got = pr.log_partition_curve(tree, [a], K)[0, 1:] / depths
                oracle = math.log(2) - a * (3 * nF + 2 * nG) * math.log(2) / depths
                worst = max(worst, float(np.max(np.abs(got - oracle))))
            return worst, None, f"log S/k for k <= {K}"
        lo, hi = _cached(cache, "proxies", lambda: pr.proxy_functions(ex.tree(), depths))
        if quantity == "p_inf_at_0.4":
            return lo(0.4), None, "deepest half of depths 1..4096"
        if quantity == "p_sup_at_0.4":
            return hi(0.4), None, "deepest half of depths 1..4096"
        hint = pr.alpha_max_hint(ex.catalog)
        fn = lo if quantity == "p_inf_zero" else hi
        return pr.zero_of_pressure(fn, hint).alpha, None, ""

    if ex.name.startswith("pressure2"):
        tree = _cached(cache, "tree", lambda: ex.tree())
        K = s["max_depth"]
        if quantity == "pressure_zero":
            z = pr.zero_of_pressure(lambda a: pr.log_partition_sum(tree, a, K) / K,
                                    pr.alpha_max_hint(ex.catalog))
            return z.alpha, None, f"depth {K}"
        if quantity == "max_pressure_deviation":
            grid = np.array(s["alpha_grid"])
            vals = pr.log_partition_curve(tree, grid, K)[:, K] / K
            dev = vals - (math.log(3) + grid * math.log(s["R"]))
            j = int(np.argmax(np.abs(dev)))
            return float(np.abs(dev).max()), None, f"worst at alpha={grid[j]}"
        if quantity == "affinity_dimension_upper_bound":
            r = float(np.exp(ex.catalog.log_ratios[ex.catalog.label_of("F"), 0]))
            return -math.log(3) / math.log(r), None, "from the smaller ratio"

    if ex.name == "pressure3":
        tree = _cached(cache, "tree", lambda: ex.tree())
        if quantity == "pressure_zero":
            K = s["pressure_depth"]
            z = pr.zero_of_pressure(lambda a: pr.log_partition_sum(tree, a, K) / K, 2.0)
            return z.alpha, None, f"depth {K}"
        cloud = _cached(cache, "cloud", lambda: at.point_cloud(tree, ex.assignment(), s["depth"]))
        if quantity == "max_distance_to_set":
            return harmonic_distance(cloud.points), None, f"{len(cloud)} points"
        est = at.box_counting_dimension(cloud, s["scales"])
        return est.slope, None, f"r2={est.r2:.4f}"

    if quantity in ("pressure_zero", "moran_dimension") and ex.generator.kind == "homogeneous":
        tree = ex.tree()
        if quantity == "moran_dimension":
            r = np.exp(ex.catalog.log_ratios[0, : ex.catalog.map_counts[0]])
            return pr.moran_dimension(r), None, ""
        return pr.tree_pressure_zero(tree).alpha, None, ""

    if quantity == "translation_classes":
        return ex.catalog.scheme.class_count, None, ""

    if quantity == "box_slope":
        tree = ex.tree()
        if ex.name == "cantor3":
            cloud = at.point_cloud(tree, ex.assignment(), s["depth"])
            scales = 3.0 ** -np.arange(1, s["depth"] + 1)
            est = at.box_counting_dimension(cloud, scales[scales >= cloud.diameter])
            return est.slope, None, f"r2={est.r2:.4f}"
        cloud = at.point_cloud(tree, ex.assignment(), s["depth"])
        est = at.box_counting_dimension(cloud)
        return est.slope, None, f"r2={est.r2:.4f}, {len(est.scales)} scales"

    if ex.name == "markov_ab":
        if quantity == "mean_box_slope":
            rep = at.dimension_experiment(ex.generator, s["rho"], s["depth"],
                                          s["translations"], seed=0)
            return rep.mean_slope, None, f"alpha0={rep.alpha0:.4f} std={rep.std_slope:.3f}"
        run = _cached(cache, "run", lambda: pr.kingman_run(ex.generator, s["trials"], s["necks"], seed=0))
        if quantity == "montecarlo_zero":
            z, stat, syst = run.zero()
            return z.alpha, math.hypot(stat, syst), ""
        a = float(quantity.rsplit("_", 1)[1])
        e = run.estimate(a)
        return e.mean, e.std_error, f"{e.trials} trials"

    if ex.name == "vvariable_demo":
        a = float(quantity.rsplit("_", 1)[1])
        V = int(ex.generator.params["V"])
        v1 = pr.vvariable_similarity_pressure(ex.catalog, V, None, a, s["trials"], seed=1)
        run = _cached(cache, "run", lambda: pr.kingman_run(ex.generator, s["trials"], s["necks"],
                                                           seed=2))
        v2 = run.estimate(a)
        se = math.hypot(v1.std_error, v2.std_error)
        return v1.mean - v2.mean, se, f"blocks {v1.mean:.5f} vs necked {v2.mean:.5f}"

    raise KeyError(f"no measurement for {ex.name}:{quantity}")


def evaluate(ex: NamedExample, run: str = "all") -> list[CheckRow]:
    """Recompute each expected quantity in the requested group."""
    groups = {"all": None, "pressure": {"pressure"}, "dim": {"dim"},
              "render": {"render"}}[run]
    rows, cache = [], {}
    for q, e in ex.expected.items():
        if groups is not None and e.group not in groups:
            continue
        t0 = time.perf_counter()
        got, se, detail = _measure(ex, q, cache)
        tol = e.tol * se if e.tol_kind == "se" else e.tol
        passed = bool(abs(got - e.value) <= tol)
        if e.tol_kind == "se":
            detail = (detail + " " if detail else "") + f"se={se:.3g}"
        rows.append(CheckRow(q, float(e.value), float(got), float(tol), e.provenance, passed,
                             detail, time.perf_counter() - t0))
    return rows


def to_config(ex: NamedExample) -> dict:
    """The fixture in the JSON config layout read by the CLI."""
    cat = ex.catalog
    fams = []
    for f in cat.families:
        fams.append({"label": f.label,
                     "maps": [{"matrix": np.asarray(m.linear, dtype=float).ravel().tolist(),
                               "slot": m.slot} for m in f.maps]})
    gen = {"kind": ex.generator.kind, **ex.generator.params}
    if ex.generator.seed is not None:
        gen["seed"] = ex.generator.seed
    return {
        "dimension": cat.dimension,
        "families": fams,
        "slots": list(cat.scheme.slot_names),
        "generator": gen,
        "sigma_bounds": {"lower": cat.sigma_lower, "upper": cat.sigma_upper},
        "translations": {k: list(map(float, v)) for k, v in ex.translations.items()},
    }
