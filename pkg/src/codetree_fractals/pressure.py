"""Partition sums, pressure estimates and the zero of the pressure.

All sums of singular value function values are carried in log space.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import math
import os

import numpy as np

from .codetree import (
    CodeTree,
    GeneratorSpec,
    LevelTree,
    VVariableTree,
    _logsumexp,
    enumerate_words,
    log_word_count,
    MAX_WORDS,
)
from .errors import (
    BadRatio,
    DimensionUnsupported,
    EnumerationTooLarge,
    NoSignChange,
    NotDecreasing,
    NotSimilarity,
)
from .linalg_svf import log_phi_from_sigma, log_phi_lower_from_sigma

ROOT_TOL = 1e-9
MORAN_TOL = 1e-12


@dataclass
class PressureCurve:
    """log S(k, alpha) / k sampled on a grid, shape (len(alpha_grid), len(depths))."""

    alpha_grid: np.ndarray
    depths: np.ndarray
    values: np.ndarray

    def rows(self):
        for i, a in enumerate(self.alpha_grid):
            for j, k in enumerate(self.depths):
                v = self.values[i, j]
                yield float(a), int(k), float(v)


@dataclass
class PressureEstimate:
    alpha: float
    depths: np.ndarray
    values: np.ndarray
    p_inf_hat: float
    p_sup_hat: float


@dataclass
class PressureBracket:
    alpha: float
    lower: float
    upper: float
    n_blocks: int
    depth: int

    @property
    def mid(self) -> float:
        return 0.5 * (self.lower + self.upper)

    @property
    def half_width(self) -> float:
        return 0.5 * (self.upper - self.lower)


@dataclass
class PressureZero:
    alpha: float
    residual: float
    interval: tuple


@dataclass
class MonteCarloEstimate:
    """Mean over independent trials with its standard error.

    ``systematic`` carries the mean bracket half-width for affine catalogs.
    """

    mean: float
    std_error: float
    trials: int
    values: np.ndarray
    systematic: float = 0.0
    lengths: np.ndarray | None = None


def seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("CODETREE_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# partition sums


def _digit_terms(cat, alphas):
    """alpha * log r for every (family, digit), shape (fam, M, n_alpha); -inf past M_lam."""
    valid = np.isfinite(cat.log_ratios)[:, :, None]
    lr = np.where(valid, cat.log_ratios[:, :, None], 0.0)
    return np.where(valid, alphas[None, None, :] * lr, -np.inf)


def _similarity_log_sums(tree: CodeTree, alphas: np.ndarray, depth: int,
                         start_level: int = 0, start_slot=None) -> np.ndarray:
    """log S for every depth 0..depth when all maps are similitudes."""
    cat = tree.catalog
    out = np.zeros((len(alphas), depth + 1))
    if start_level == 0 and start_slot is None and tree.is_level_homogeneous(depth):
        # integer label counts times per-family factors: no accumulated rounding
        labels = tree.level_labels(depth)
        counts = np.zeros((depth + 1, len(cat.labels)))
        counts[np.arange(1, depth + 1), labels] = 1.0
        np.cumsum(counts, axis=0, out=counts)
        out[:] = cat.level_factors(alphas) @ counts.T
        return out
    slot0 = tree.root_slot if start_slot is None else start_slot
    lw = np.full((len(tree.level(start_level)[0]), len(alphas)), -np.inf)
    lw[slot0] = 0.0
    terms_all = _digit_terms(cat, alphas)
    for j, n in enumerate(range(start_level, start_level + depth)):
        lw = _step(tree, n, lw, terms_all)
        out[:, j + 1] = _logsumexp(lw.T, axis=-1)
    return out


def _step(tree, n, lw, terms_all):
    """Push slot weights (slots, n_alpha) through level ``n``."""
    labels, ptr = tree.level(n)
    nxt = np.full((len(tree.level(n + 1)[0]), lw.shape[1]), -np.inf)
    live = np.flatnonzero(np.isfinite(lw[:, 0]))
    sub = ptr[live]
    r, d = np.nonzero(sub >= 0)
    rows = live[r]
    np.logaddexp.at(nxt, sub[r, d], lw[rows] + terms_all[labels[rows], d])
    return nxt


def _log_matmul(A, B):
    """log(exp(A) @ exp(B)) over the last two axes."""
    return _logsumexp(A[..., :, :, None] + B[..., None, :, :], axis=-2)


def _transfer(tree, n, size, terms_all):
    """Log transfer matrix of level ``n``, shape (n_alpha, size, size)."""
    labels, ptr = tree.level(n)
    W = np.full((terms_all.shape[2], size, size), -np.inf)
    for s in range(len(labels)):
        for d in np.flatnonzero(ptr[s] >= 0):
            t = ptr[s, d]
            W[:, s, t] = np.logaddexp(W[:, s, t], terms_all[labels[s], d])
    return W


def _similarity_log_sum_at(tree: CodeTree, alphas: np.ndarray, depth: int,
                           max_run_width: int = 64) -> np.ndarray:
    """log S(depth) only, collapsing runs of identical levels.

    A run of L identical narrow levels is applied as the L-th power of its
    log transfer matrix, computed by repeated squaring.
    """
    cat = tree.catalog
    terms_all = _digit_terms(cat, alphas)
    lw = np.full((len(tree.level(0)[0]), len(alphas)), -np.inf)
    lw[tree.root_slot] = 0.0
    for start, length in tree.level_runs(depth):
        width = len(tree.level(start)[0])
        if length < 4 or width > max_run_width:
            for n in range(start, start + length):
                lw = _step(tree, n, lw, terms_all)
            continue
        # all but the last level of the run map the run's slots to themselves
        W = _transfer(tree, start, width, terms_all)
        acc, p, e = None, W, length - 1
        while e:
            if e & 1:
                acc = p if acc is None else _log_matmul(acc, p)
            e >>= 1
            if e:
                p = _log_matmul(p, p)
        v = lw.T[:, None, :]  # (n_alpha, 1, width)
        lw = _log_matmul(v, acc)[:, 0, :].T
        lw = _step(tree, start + length - 1, lw, terms_all)
    return _logsumexp(lw.T, axis=-1)


def _enumerated_log_sums(tree, alphas, depth, limit=MAX_WORDS, lower=False,
                         start_level=0, start_slot=None):
    words = enumerate_words(tree, depth, start_level=start_level, start_slot=start_slot,
                            limit=limit, keep_history=True)
    fn = log_phi_lower_from_sigma if lower else log_phi_from_sigma
    out = np.zeros((len(alphas), depth + 1))
    for j, h in enumerate(words.history):
        for i, a in enumerate(alphas):
            out[i, j] = _logsumexp(fn(h["log_sigma"], a))
    return out


def log_partition_curve(tree: CodeTree, alphas, depth: int, limit: float = MAX_WORDS) -> np.ndarray:
    """log S(k, alpha) for k = 0..depth; shape (len(alphas), depth + 1).

    Similarity catalogs use exact per-level recursions in O(depth) work;
    otherwise every word is enumerated, bounded by ``limit`` words.
    """
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    if tree.catalog.is_similarity:
        return _similarity_log_sums(tree, alphas, depth)
    return _enumerated_log_sums(tree, alphas, depth, limit)


def log_partition_sum(tree: CodeTree, alpha: float, k: int, limit: float = MAX_WORDS) -> float:
    if k == 0:
        return 0.0
    if tree.catalog.is_similarity and not tree.is_level_homogeneous(k):
        return float(_similarity_log_sum_at(tree, np.array([float(alpha)]), k)[0])
    return float(log_partition_curve(tree, [alpha], k, limit)[0, k])


def pressure_curve(tree: CodeTree, alphas, depths, limit: float = MAX_WORDS) -> PressureCurve:
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    depths = np.asarray(sorted(set(int(k) for k in depths)))
    if depths.min() < 1:
        raise ValueError("depths must be >= 1")
    full = log_partition_curve(tree, alphas, int(depths.max()), limit)
    return PressureCurve(alphas, depths, full[:, depths] / depths[None, :])


def _proxy_window(depths):
    depths = np.asarray(depths)
    return depths[len(depths) // 2:]


def pressure_estimates(tree: CodeTree, alpha: float, depths, limit: float = MAX_WORDS) -> PressureEstimate:
    """log S(k)/k at the given depths, with liminf/limsup proxies.

    The proxies are the min and max over the deepest half of the depths.
    """
    curve = pressure_curve(tree, [alpha], depths, limit)
    vals = curve.values[0]
    window = vals[len(vals) // 2:]
    return PressureEstimate(alpha, curve.depths, vals, float(window.min()), float(window.max()))


def proxy_functions(tree: CodeTree, depths, limit: float = MAX_WORDS):
    """Callables alpha -> liminf proxy and alpha -> limsup proxy."""
    depths = np.asarray(sorted(set(int(k) for k in depths)))
    window = _proxy_window(depths)

    def values(alpha):
        full = log_partition_curve(tree, [alpha], int(depths.max()), limit)[0]
        return full[window] / window

    return (lambda a: float(values(a).min())), (lambda a: float(values(a).max()))


# ---------------------------------------------------------------------------
# brackets


def pressure_bracket(tree: CodeTree, alpha: float, n_blocks: int,
                     limit: float = MAX_WORDS) -> PressureBracket:
    """Bounds on log S(N_n, alpha)/N_n from per-block sums.

    The upper bound uses submultiplicativity of the singular value
    function, the lower bound supermultiplicativity of its lower
    companion (D = 2 only).
    """
    cat = tree.catalog
    necks = tree.necks(n_blocks)
    Nn = necks[-1]
    if cat.is_similarity:
        exact = log_partition_sum(tree, alpha, Nn, limit) / Nn
        return PressureBracket(alpha, exact, exact, n_blocks, Nn)
    if cat.dimension != 2:
        raise DimensionUnsupported("affine brackets need D = 2")
    bounds = [0] + list(necks)
    up = lo = 0.0
    for start, stop in zip(bounds[:-1], bounds[1:]):
        act = tree.active_slots(start)
        slot = int(act[0])
        words = enumerate_words(tree, stop - start, start_level=start, start_slot=slot, limit=limit)
        ls = words.log_sigma()
        up += float(_logsumexp(log_phi_from_sigma(ls, alpha)))
        lo += float(_logsumexp(log_phi_lower_from_sigma(ls, alpha)))
    return PressureBracket(alpha, lo / Nn, up / Nn, n_blocks, Nn)


# ---------------------------------------------------------------------------
# root finding


def alpha_max_hint(catalog) -> float:
    return catalog.dimension + math.log(catalog.max_maps) / math.log(1.0 / catalog.sigma_upper)


def zero_of_pressure(p_hat, alpha_max_hint: float, samples: int = 65) -> PressureZero:
    """Bisection for the unique zero of a decreasing pressure estimate.

    The search interval starts at ``[0, alpha_max_hint]`` and doubles while
    ``p_hat`` stays nonnegative, up to ``4 * alpha_max_hint``.
    """
    if alpha_max_hint <= 0:
        raise ValueError("alpha_max_hint must be positive")
    cap = 4.0 * alpha_max_hint

    def check_decreasing(hi):
        grid = np.linspace(0.0, hi, samples)
        vals = np.array([p_hat(a) for a in grid])
        if not np.all(np.diff(vals) < 0):
            bad = int(np.flatnonzero(np.diff(vals) >= 0)[0])
            raise NotDecreasing(f"p_hat does not decrease between alpha={grid[bad]:.6g} "
                                f"and {grid[bad + 1]:.6g}")
        return vals

    vals = check_decreasing(alpha_max_hint)
    if vals[0] < 0:
        raise NoSignChange(f"p_hat(0) = {vals[0]:.6g} < 0")
    hi = alpha_max_hint
    while p_hat(hi) >= 0:
        if hi >= cap:
            raise NoSignChange(f"p_hat stays nonnegative up to alpha = {cap:.6g}")
        hi = min(2.0 * hi, cap)
    if hi > alpha_max_hint:
        check_decreasing(hi)
    lo = 0.0
    while hi - lo >= ROOT_TOL:
        mid = 0.5 * (lo + hi)
        if p_hat(mid) >= 0:
            lo = mid
        else:
            hi = mid
    alpha = 0.5 * (lo + hi)
    return PressureZero(alpha, float(p_hat(alpha)), (lo, hi))


def moran_dimension(ratios) -> float:
    """Unique alpha with sum_i r_i**alpha == 1."""
    r = np.asarray(ratios, dtype=float).ravel()
    if r.size == 0 or np.any(~np.isfinite(r)) or np.any(r <= 0) or np.any(r >= 1):
        raise BadRatio(f"ratios must lie in (0, 1): {r.tolist()}")
    if r.size == 1:
        return 0.0
    lr = np.log(r)
    lo = math.log(r.size) / -lr.min()
    hi = math.log(r.size) / -lr.max()
    while hi - lo > MORAN_TOL:
        mid = 0.5 * (lo + hi)
        if _logsumexp(mid * lr) >= 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass
class _Trial:
    tree: CodeTree
    depth: int
    n_blocks: int
    counts: np.ndarray | None = None

    def values(self, alphas, limit=MAX_WORDS):
        """Per-alpha (estimate, half width) of log S(N_n, alpha)/N_n."""
        alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
        cat = self.tree.catalog
        if self.counts is not None:
            v = cat.level_factors(alphas) @ self.counts / self.depth
            return v, np.zeros_like(v)
        if cat.is_similarity:
            v = _similarity_log_sum_at(self.tree, alphas, self.depth) / self.depth
            return v, np.zeros_like(v)
        br = [pressure_bracket(self.tree, a, self.n_blocks, limit) for a in alphas]
        return np.array([b.mid for b in br]), np.array([b.half_width for b in br])


def _run_trial(spec: GeneratorSpec, n_blocks: int, seed) -> _Trial:
    tree = spec.build(seed=seed)
    necks = tree.necks(n_blocks)
    depth = necks[-1]
    counts = None
    if spec.catalog.is_similarity and isinstance(tree, LevelTree):
        counts = np.bincount(tree.level_labels(depth), minlength=len(spec.catalog.labels))
    return _Trial(tree, depth, n_blocks, counts)


def _map(fn, items, threads):
    threads = default_threads() if threads is None else threads
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


@dataclass
class KingmanRun:
    """Sampled necked trees with log S(N_n, .)/N_n available at any alpha.

    Trees are kept so the averaged curve can be re-evaluated by the root
    finder; the same trials back every alpha (common random numbers).
    """

    trials: list = field(repr=False)
    limit: float = MAX_WORDS

    def __post_init__(self):
        self._counts = None
        if all(t.counts is not None for t in self.trials):
            # level-homogeneous similarity trials: one matrix product per alpha grid
            self._counts = np.array([t.counts for t in self.trials], dtype=float)
            self._depths = np.array([t.depth for t in self.trials], dtype=float)

    def per_trial(self, alphas):
        """Arrays (trials, len(alphas)) of estimates and bracket half widths."""
        alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
        if self._counts is not None:
            cat = self.trials[0].tree.catalog
            v = self._counts @ cat.level_factors(alphas).T / self._depths[:, None]
            return v, np.zeros_like(v)
        vals, half = zip(*(t.values(alphas, self.limit) for t in self.trials))
        return np.array(vals), np.array(half)

    def estimate(self, alpha: float) -> MonteCarloEstimate:
        vals, half = self.per_trial([alpha])
        v = vals[:, 0]
        return MonteCarloEstimate(float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v))),
                                  len(v), v, float(half[:, 0].mean()),
                                  np.array([t.depth for t in self.trials]))

    def mean_curve(self, alpha: float) -> float:
        return float(self.per_trial([alpha])[0].mean())

    def zero(self, hint: float | None = None):
        """Zero of the averaged curve with statistical and systematic errors.

        Errors are propagated through the local slope of the averaged curve.
        """
        cat = self.trials[0].tree.catalog
        hint = alpha_max_hint(cat) if hint is None else hint
        z = zero_of_pressure(self.mean_curve, hint)
        h = 1e-4
        slope = (self.mean_curve(z.alpha + h) - self.mean_curve(max(z.alpha - h, 0.0))) / (
            z.alpha + h - max(z.alpha - h, 0.0))
        est = self.estimate(z.alpha)
        return z, est.std_error / abs(slope), est.systematic / abs(slope)


def kingman_run(spec: GeneratorSpec, trials: int, necks_per_trial: int, seed=None,
                threads: int | None = None, limit: float = MAX_WORDS) -> KingmanRun:
    if trials < 2:
        raise ValueError("need at least two trials")
    seeds = seed_sequence(seed).spawn(trials)
    recs = _map(lambda s: _run_trial(spec, necks_per_trial, s), seeds, threads)
    return KingmanRun(recs, limit)


def kingman_pressure(spec: GeneratorSpec, alpha: float, trials: int, necks_per_trial: int,
                     seed=None, threads: int | None = None) -> MonteCarloEstimate:
    """Mean of log S(N_n, alpha)/N_n over independently sampled trees."""
    return kingman_run(spec, trials, necks_per_trial, seed, threads).estimate(alpha)


def vvariable_similarity_pressure(catalog, V: int, label_probs, alpha: float, trials: int,
                                  seed=None, pointer_probs=None,
                                  threads: int | None = None) -> MonteCarloEstimate:
    """Pressure of random V-variable similarity trees from first-neck blocks.

    Averages log of the block partition sum over i.i.d. first blocks and
    divides by the mean block length.
    """
    if not catalog.is_similarity:
        raise NotSimilarity("all maps must be similitudes")
    if trials < 2:
        raise ValueError("need at least two trials")
    seeds = seed_sequence(seed).spawn(trials)

    def one(s):
        tree = VVariableTree(catalog, V, label_probs, pointer_probs, seed=s)
        (N1,) = tree.necks(1)
        return log_partition_sum(tree, alpha, N1), N1

    X, N = map(np.array, zip(*_map(one, seeds, threads)))
    Nbar = N.mean()
    p = X.mean() / Nbar
    Z = (X - p * N) / Nbar
    return MonteCarloEstimate(float(p), float(Z.std(ddof=1) / math.sqrt(trials)), trials, X,
                              lengths=N)


def tree_pressure_zero(tree: CodeTree, depth: int = 2048, affine_depth: int = 24):
    """Zero of the finite-depth pressure of one tree.

    Similarity catalogs use log S(K)/K at the deepest neck K <= depth (or
    K = depth for trees without necks); affine catalogs use bracket
    midpoints over the necks that keep every block enumerable.
    """
    cat = tree.catalog
    hint = alpha_max_hint(cat)
    if cat.is_similarity:
        K = depth
        if tree.is_necked:
            necks = tree.necks_upto(depth)
            K = necks[-1] if necks else depth

        def p(a):
            return log_partition_sum(tree, a, K) / K

        return zero_of_pressure(p, hint)
    necks = tree.necks_upto(affine_depth)
    n = len(necks)
    while n > 0:
        try:
            pressure_bracket(tree, 1.0, n)
            break
        except EnumerationTooLarge:
            n -= 1
    if n == 0:
        raise EnumerationTooLarge(math.exp(min(log_word_count(tree, necks[0] if necks else 1), 700)),
                                  MAX_WORDS)
    return zero_of_pressure(lambda a: pressure_bracket(tree, a, n).mid, min(hint, 2.0))
