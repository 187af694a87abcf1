"""Family catalogs, translation schemes and code trees.

Addresses are tuples of 0-based digits; digit ``d`` at a node labelled
``lam`` selects the ``d``-th map of family ``lam``.

Every tree is exposed in *layered* form: level ``n`` holds a small set of
slots, each slot carrying a family label and one pointer per child into
the slots of level ``n + 1``. Nodes of the tree map onto slots, and two
nodes sharing a slot have identical subtrees. A homogeneous tree has one
slot per level, a V-variable tree at most V, and an arbitrary oracle tree
one slot per node.
"""
import bisect
from dataclasses import dataclass, field
import math
from typing import Callable, Sequence

import numpy as np

from .errors import (
    BadDistribution,
    ConfigError,
    EnumerationTooLarge,
    InvalidAddress,
    NotErgodic,
    NotNecked,
    NotStochastic,
    UnknownLabel,
    UnknownSlot,
)
from .linalg_svf import as_matrix, batch_singular_values

MAX_WORDS = 10**7
MAX_NECK_SCAN = 10**6
PROB_TOL = 1e-12
SIMILARITY_TOL = 1e-12


@dataclass(frozen=True)
class AffineMap:
    """Linear part plus the name of the translation slot it reads."""

    linear: np.ndarray
    slot: str


@dataclass(frozen=True)
class IFSFamily:
    label: str
    maps: tuple

    @property
    def map_count(self) -> int:
        return len(self.maps)


class TranslationScheme:
    """Equivalence classes of (family, map index) pairs.

    Pairs mapped to the same class id share one translation vector.
    """

    def __init__(self, classes: dict, slot_names: Sequence[str], dimension: int):
        self.classes = dict(classes)
        self.slot_names = list(slot_names)
        self.dimension = dimension
        by_family = {}
        for (lam, i), cid in self.classes.items():
            if not 0 <= cid < len(self.slot_names):
                raise UnknownSlot(f"class id {cid} out of range")
            by_family.setdefault(lam, []).append(cid)
        for lam, ids in by_family.items():
            if len(set(ids)) != len(ids):
                raise ConfigError(f"family {lam!r} identifies two of its own translations")

    @property
    def class_count(self) -> int:
        return len(self.slot_names)

    def assignment(self, vectors) -> "TranslationAssignment":
        """Build an assignment from a mapping slot name -> vector or an array."""
        D = self.dimension
        if isinstance(vectors, dict):
            arr = np.zeros((self.class_count, D))
            for name, vec in vectors.items():
                if name not in self.slot_names:
                    raise UnknownSlot(f"unknown slot {name!r}")
                arr[self.slot_names.index(name)] = np.asarray(vec, dtype=float).reshape(D)
            missing = set(self.slot_names) - set(vectors)
            if missing:
                raise UnknownSlot(f"no vector for slots {sorted(missing)}")
        else:
            arr = np.asarray(vectors, dtype=float).reshape(self.class_count, D)
        if not np.all(np.isfinite(arr)):
            raise ConfigError("translation vectors must be finite")
        return TranslationAssignment(self, arr)


@dataclass(frozen=True)
class TranslationAssignment:
    scheme: TranslationScheme
    vectors: np.ndarray

    def flat(self) -> np.ndarray:
        return self.vectors.reshape(-1)

    def max_norm(self) -> float:
        return float(np.linalg.norm(self.vectors, axis=1).max(initial=0.0))


class Catalog:
    """A finite list of IFS families sharing one ambient dimension.

    ``sigma_bounds`` are the uniform bounds on singular values of every
    linear part; they are computed from the maps when not supplied and
    validated when they are.
    """

    def __init__(self, families: Sequence[IFSFamily], dimension: int, sigma_bounds=None,
                 slots: Sequence[str] | None = None):
        if not families:
            raise ConfigError("catalog needs at least one family")
        self.families = list(families)
        self.dimension = int(dimension)
        self.labels = [f.label for f in self.families]
        if len(set(self.labels)) != len(self.labels):
            raise ConfigError("duplicate family labels")
        self.index = {lab: k for k, lab in enumerate(self.labels)}
        self.map_counts = np.array([f.map_count for f in self.families])
        if np.any(self.map_counts < 1):
            raise ConfigError("every family needs at least one map")
        self.max_maps = int(self.map_counts.max())

        used = []
        for f in self.families:
            for m in f.maps:
                if m.slot not in used:
                    used.append(m.slot)
        if slots is None:
            slots = used
        slots = list(slots)
        unknown = set(used) - set(slots)
        if unknown:
            raise UnknownSlot(f"maps reference undeclared slots {sorted(unknown)}")
        classes = {}
        for f in self.families:
            for i, m in enumerate(f.maps):
                classes[(f.label, i)] = slots.index(m.slot)
        self.scheme = TranslationScheme(classes, slots, self.dimension)

        D = self.dimension
        self.linear = []
        self.slot_ids = []
        for f in self.families:
            mats = np.array([as_matrix(m.linear) for m in f.maps])
            if mats.shape[1:] != (D, D):
                raise ConfigError(f"family {f.label!r}: matrices must be {D}x{D}")
            if np.any(np.abs(np.linalg.det(mats)) <= 1e-14):
                raise ConfigError(f"family {f.label!r} contains a singular linear part")
            self.linear.append(mats)
            self.slot_ids.append(np.array([classes[(f.label, i)] for i in range(f.map_count)]))

        sig = [batch_singular_values(m) for m in self.linear]
        self.map_sigma = sig
        lo = min(float(s[:, -1].min()) for s in sig)
        hi = max(float(s[:, 0].max()) for s in sig)
        if sigma_bounds is not None:
            slo, shi = float(sigma_bounds[0]), float(sigma_bounds[1])
            if not 0.0 < slo <= shi < 1.0:
                raise ConfigError(f"sigma bounds must satisfy 0 < lower <= upper < 1, got {sigma_bounds}")
            if lo < slo * (1 - 1e-12) or hi > shi * (1 + 1e-12):
                raise ConfigError(
                    f"singular values span [{lo:.6g}, {hi:.6g}], outside bounds [{slo}, {shi}]")
            self.sigma_lower, self.sigma_upper = slo, shi
        else:
            if hi >= 1.0:
                raise ConfigError(f"maps are not uniformly contracting (max sigma {hi})")
            self.sigma_lower, self.sigma_upper = lo, hi

        self.is_similarity = all(
            np.all(s[:, 0] - s[:, -1] <= SIMILARITY_TOL) for s in sig)
        log_r = np.full((len(self.families), self.max_maps), -np.inf)
        for k, s in enumerate(sig):
            log_r[k, : len(s)] = np.log(s[:, 0])
        # only meaningful for similarity catalogs
        self.log_ratios = log_r

    def label_of(self, lab) -> int:
        try:
            return self.index[lab]
        except KeyError:
            raise UnknownLabel(f"unknown family label {lab!r}") from None

    def level_factors(self, alphas) -> np.ndarray:
        """log sum_i r_i^alpha per family, shape (n_alpha, n_families).

        Exact one-level partition factors for similarity catalogs.
        """
        alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
        with np.errstate(invalid="ignore"):
            terms = alphas[:, None, None] * self.log_ratios[None]
        terms = np.where(np.isfinite(self.log_ratios)[None], terms, -np.inf)
        return _logsumexp(terms, axis=-1)

    def max_log_branching(self) -> float:
        return math.log(self.max_maps)


def _logsumexp(x, axis=-1):
    x = np.asarray(x, dtype=float)
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)


def _check_distribution(p, name="distribution"):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0 or np.any(p < 0) or not np.all(np.isfinite(p)):
        raise BadDistribution(f"{name} must be a nonnegative vector")
    if abs(p.sum() - 1.0) > PROB_TOL * max(1, p.size):
        raise BadDistribution(f"{name} sums to {p.sum()!r}, not 1")
    return p


# ---------------------------------------------------------------------------
# trees


class CodeTree:
    """Base class: a code tree over a catalog, exposed level by level.

    Subclasses implement :meth:`level` and optionally :meth:`_is_neck`.
    """

    neck_rule = "none"

    def __init__(self, catalog: Catalog):
        self.catalog = catalog
        self._necks: list[int] = []
        self._neck_scan = 0
        self._active: list[np.ndarray] = []

    # -- layered structure -------------------------------------------------
    root_slot = 0

    def level(self, n: int):
        """Return ``(labels, pointers)`` for level ``n``.

        ``labels`` holds a family index per slot; ``pointers`` has shape
        (slots, max_maps) with -1 past each family's map count.
        """
        raise NotImplementedError

    def active_slots(self, n: int) -> np.ndarray:
        """Slots at level ``n`` reachable from the root."""
        while len(self._active) <= n:
            m = len(self._active)
            if m == 0:
                self._active.append(np.array([self.root_slot]))
                continue
            _, ptr = self.level(m - 1)
            nxt = ptr[self._active[m - 1]].ravel()
            mask = np.zeros(len(self.level(m)[0]), dtype=bool)
            mask[nxt[nxt >= 0]] = True
            self._active.append(np.flatnonzero(mask))
        return self._active[n]

    def width(self, n: int) -> int:
        return len(self.active_slots(n))

    def is_level_homogeneous(self, k: int) -> bool:
        return all(self.width(n) == 1 for n in range(k))

    def level_labels(self, k: int) -> np.ndarray:
        """Family index of every level below ``k`` for width-one trees."""
        out = np.empty(k, dtype=int)
        for n in range(k):
            act = self.active_slots(n)
            if len(act) != 1:
                raise ValueError(f"level {n} is not homogeneous")
            out[n] = self.level(n)[0][act[0]]
        return out

    # -- address queries ---------------------------------------------------
    def slot_of(self, addr) -> int:
        slot = self.root_slot
        counts = self.catalog.map_counts
        for j, d in enumerate(addr):
            labels, ptr = self.level(j)
            lab = labels[slot]
            if not 0 <= d < counts[lab]:
                raise InvalidAddress(
                    f"digit {d} at position {j} exceeds the {counts[lab]} maps of "
                    f"family {self.catalog.labels[lab]!r}")
            slot = int(ptr[slot, d])
        return slot

    def label_index(self, addr) -> int:
        addr = tuple(addr)
        slot = self.slot_of(addr)
        return int(self.level(len(addr))[0][slot])

    def label(self, addr):
        return self.catalog.labels[self.label_index(addr)]

    def num_children(self, addr) -> int:
        return int(self.catalog.map_counts[self.label_index(addr)])

    # -- necks -------------------------------------------------------------
    @property
    def is_necked(self) -> bool:
        return self.neck_rule != "none"

    def _is_neck(self, n: int) -> bool:
        return self.width(n) == 1

    def necks(self, count: int) -> list[int]:
        """The first ``count`` neck levels N_1 < N_2 < ... (N_0 = 0 omitted)."""
        if self.neck_rule == "none":
            raise NotNecked(f"{type(self).__name__} carries no neck levels")
        while len(self._necks) < count:
            self._neck_scan += 1
            if self._neck_scan > MAX_NECK_SCAN:
                raise NotNecked(f"no neck found within {MAX_NECK_SCAN} levels")
            if self._is_neck(self._neck_scan):
                self._necks.append(self._neck_scan)
        return self._necks[:count]

    def necks_upto(self, depth: int) -> list[int]:
        if self.neck_rule == "none":
            raise NotNecked(f"{type(self).__name__} carries no neck levels")
        while self._neck_scan < depth:
            self.necks(len(self._necks) + 1)
        return [n for n in self._necks if n <= depth]

    def shifted(self, offset: int) -> "CodeTree":
        return ShiftedTree(self, offset)

    def level_runs(self, depth: int) -> list[tuple[int, int]]:
        """Maximal runs ``(start, length)`` of identical levels below ``depth``."""
        runs = []
        n = 0
        while n < depth:
            lab, ptr = self.level(n)
            m = n + 1
            while m < depth:
                lab2, ptr2 = self.level(m)
                if not (np.array_equal(lab, lab2) and np.array_equal(ptr, ptr2)):
                    break
                m += 1
            runs.append((n, m - n))
            n = m
        return runs


class LevelTree(CodeTree):
    """Tree whose label depends only on the address length."""

    def __init__(self, catalog: Catalog):
        super().__init__(catalog)
        self._labels = np.empty(0, dtype=int)
        self._ptr_cache = {}

    def _extend(self, k: int):
        raise NotImplementedError

    def level_labels(self, k: int) -> np.ndarray:
        if len(self._labels) < k:
            self._extend(k)
        return self._labels[:k]

    def _family_pointers(self, lab):
        ptr = self._ptr_cache.get(lab)
        if ptr is None:
            ptr = np.full((1, self.catalog.max_maps), -1)
            ptr[0, : self.catalog.map_counts[lab]] = 0
            self._ptr_cache[lab] = ptr
        return ptr

    def level(self, n: int):
        lab = int(self.level_labels(n + 1)[n])
        return np.array([lab]), self._family_pointers(lab)

    def active_slots(self, n: int) -> np.ndarray:
        return np.array([0])

    def is_level_homogeneous(self, k: int) -> bool:
        return True

    def label_index(self, addr) -> int:
        addr = tuple(addr)
        labs = self.level_labels(len(addr) + 1)
        counts = self.catalog.map_counts
        for j, d in enumerate(addr):
            if not 0 <= d < counts[labs[j]]:
                raise InvalidAddress(
                    f"digit {d} at position {j} exceeds the {counts[labs[j]]} maps of "
                    f"family {self.catalog.labels[labs[j]]!r}")
        return int(labs[len(addr)])

    def slot_of(self, addr) -> int:
        self.label_index(addr)
        return 0


class HomogeneousTree(LevelTree):
    """Level-homogeneous tree from a deterministic label schedule.

    Every level is a neck.
    """

    neck_rule = "all"

    def __init__(self, catalog: Catalog, label_sequence):
        super().__init__(catalog)
        self._length = None
        if callable(label_sequence):
            self._fn = label_sequence
        elif isinstance(label_sequence, (str, int)):
            catalog.label_of(label_sequence)
            self._fn = lambda n: label_sequence
        else:
            seq = list(label_sequence)
            self._length = len(seq)
            self._fn = seq.__getitem__

    def _extend(self, k):
        if self._length is not None and k > self._length:
            raise ValueError(f"label sequence defined only for {self._length} levels")
        start = len(self._labels)
        size = max(k, 2 * start, 64)
        if self._length is not None:
            size = min(size, self._length)
        new = np.array([self.catalog.label_of(self._fn(n)) for n in range(start, size)], dtype=int)
        self._labels = np.concatenate([self._labels, new])

    def _is_neck(self, n):
        return True

    def necks(self, count):
        return list(range(1, count + 1))

    def necks_upto(self, depth):
        return list(range(1, depth + 1))


class MarkovTree(LevelTree):
    """Level-homogeneous tree driven by a Markov chain on family labels.

    Necks are the successive return times to the root label.
    """

    neck_rule = "markov"
    CHUNK = 64

    def __init__(self, catalog: Catalog, Q, P0, states=None, seed=None):
        super().__init__(catalog)
        states = list(states) if states is not None else list(catalog.labels)
        self.states = states
        self.state_family = np.array([catalog.label_of(s) for s in states])
        Q = np.asarray(Q, dtype=float)
        P0 = np.asarray(P0, dtype=float)
        validate_markov(Q, P0)
        self.Q, self.P0 = Q, P0
        self._cumQ = np.cumsum(Q, axis=1)
        self._cumQ[:, -1] = 1.0
        self.rng = np.random.default_rng(seed)
        cum0 = np.cumsum(P0)
        cum0[-1] = 1.0
        self._state = int(np.searchsorted(cum0, self.rng.random(), side="right"))
        self.root_state = self._state
        self._states = [self._state]

    def _extend(self, k):
        cum = [row.tolist() for row in self._cumQ]
        states = self._states
        s = states[-1]
        while len(states) < k:
            for u in self.rng.random(self.CHUNK).tolist():
                s = bisect.bisect_right(cum[s], u)
                states.append(s)
        self._labels = self.state_family[np.asarray(states, dtype=int)]

    def state_sequence(self, k) -> np.ndarray:
        self.level_labels(k)
        return np.asarray(self._states[:k])

    def necks(self, count):
        k = max(len(self._labels), 2 * count + 64)
        while True:
            seq = self.state_sequence(k)
            hits = np.flatnonzero(seq[1:] == self.root_state) + 1
            if len(hits) >= count:
                return hits[:count].tolist()
            if k > MAX_NECK_SCAN:
                raise NotNecked(f"fewer than {count} returns within {k} levels")
            k *= 2

    def necks_upto(self, depth):
        seq = self.state_sequence(depth + 1)
        return (np.flatnonzero(seq[1:] == self.root_state) + 1).tolist()


def validate_markov(Q, P0):
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or np.any(Q < 0):
        raise NotStochastic("Q must be a square nonnegative matrix")
    if np.any(np.abs(Q.sum(axis=1) - 1.0) > PROB_TOL):
        raise NotStochastic(f"rows of Q sum to {Q.sum(axis=1).tolist()}")
    P0 = _check_distribution(P0, "P0")
    if len(P0) != len(Q):
        raise BadDistribution("P0 and Q sizes differ")
    n = len(Q)
    reach = (Q > 0) | np.eye(n, dtype=bool)
    for _ in range(max(1, int(math.ceil(math.log2(max(n, 2)))) + 1)):
        reach = (reach.astype(int) @ reach.astype(int)) > 0
    mutual = reach & reach.T
    closed = [i for i in range(n) if np.all(mutual[i] == reach[i])]
    classes = {tuple(np.flatnonzero(mutual[i])) for i in closed}
    if len(classes) != 1:
        raise NotErgodic(f"Q has {len(classes)} recurrent classes")
    recurrent = set(next(iter(classes)))
    if any(P0[i] > 0 and i not in recurrent for i in range(n)):
        raise NotErgodic("P0 charges transient states, which may never recur")


class SlotTree(CodeTree):
    """Layered tree built level by level from a generator callable.

    ``level_fn(n)`` returns ``(labels, pointers)`` for level ``n``; it is
    called exactly once per level, in increasing order, so random
    generators consume their streams in a fixed order. Laying out more than
    ``max_nodes`` slots in total raises EnumerationTooLarge.
    """

    max_nodes = 5e6

    def __init__(self, catalog: Catalog, level_fn: Callable | None = None, neck_rule="width"):
        super().__init__(catalog)
        self._levels: list = []
        self._stored = 0
        self._level_fn = level_fn
        self.neck_rule = neck_rule

    def _make_level(self, n):
        return self._level_fn(n)

    def _pad(self, labels, pointers):
        labels = np.asarray(labels, dtype=int)
        M = self.catalog.max_maps
        ptr = np.full((len(labels), M), -1, dtype=int)
        counts = self.catalog.map_counts
        for s, lab in enumerate(labels):
            row = np.asarray(pointers[s], dtype=int)[: counts[lab]]
            if len(row) < counts[lab]:
                raise ConfigError(f"slot {s} has {len(row)} pointers but family needs {counts[lab]}")
            ptr[s, : counts[lab]] = row
        return labels, ptr

    def level(self, n: int):
        while len(self._levels) <= n:
            labels, ptr = self._make_level(len(self._levels))
            self._stored += len(labels)
            if self._stored > self.max_nodes:
                raise EnumerationTooLarge(self._stored, self.max_nodes)
            self._levels.append(self._pad(labels, ptr))
        return self._levels[n]

    def _is_neck(self, n):
        if self.neck_rule == "none":
            return False
        return self.width(n) == 1


class VVariableTree(SlotTree):
    """Random V-variable tree.

    Each level has V slots; each slot draws a family label and sends every
    child to one of the V slots of the next level. A level is a neck when a
    single slot is reachable from the root.
    """

    def __init__(self, catalog: Catalog, V: int, label_probs=None, pointer_probs=None, seed=None):
        super().__init__(catalog, neck_rule="width")
        if V < 1:
            raise BadDistribution("V must be >= 1")
        self.V = int(V)
        self.label_probs = _label_probs(catalog, label_probs)
        self.pointer_probs = (None if pointer_probs is None
                              else _check_distribution(pointer_probs, "pointer_probs"))
        if self.pointer_probs is not None and len(self.pointer_probs) != self.V:
            raise BadDistribution("pointer_probs must have V entries")
        self.rng = np.random.default_rng(seed)
        self._chunk = []

    CHUNK = 32

    def _make_level(self, n):
        # levels are drawn in chunks; the stream order is fixed, so trees
        # depend on the seed only
        if not self._chunk:
            V, M, C = self.V, self.catalog.max_maps, self.CHUNK
            labels = self.rng.choice(len(self.label_probs), size=(C, V), p=self.label_probs)
            ptr = self.rng.choice(V, size=(C, V, M), p=self.pointer_probs)
            self._chunk = list(zip(labels, ptr))[::-1]
        return self._chunk.pop()


def _label_probs(catalog, label_probs):
    if label_probs is None:
        return np.full(len(catalog.labels), 1.0 / len(catalog.labels))
    if isinstance(label_probs, dict):
        p = np.zeros(len(catalog.labels))
        for lab, w in label_probs.items():
            p[catalog.label_of(lab)] = w
    else:
        p = np.asarray(label_probs, dtype=float)
        if len(p) != len(catalog.labels):
            raise BadDistribution("label_probs must cover every family")
    return _check_distribution(p, "label_probs")


def truncated_geometric(p: float, max_length: int) -> np.ndarray:
    """Geometric law on {1, ..., max_length}, renormalized."""
    if not 0 < p <= 1 or max_length < 1:
        raise BadDistribution("need 0 < p <= 1 and max_length >= 1")
    k = np.arange(1, max_length + 1)
    w = p * (1 - p) ** (k - 1)
    return w / w.sum()


def slot_block_sampler(catalog: Catalog, label_probs=None, V: int = 2):
    """Random finite block with at most V distinct subtrees per level."""
    probs = _label_probs(catalog, label_probs)

    def sample(rng, depth):
        M = catalog.max_maps
        out = []
        for j in range(depth):
            labels = rng.choice(len(probs), size=V, p=probs)
            if j == depth - 1:
                ptr = np.zeros((V, M), dtype=int)
            else:
                ptr = rng.choice(V, size=(V, M))
            out.append((labels, ptr))
        return out

    return sample


class BlockTree(SlotTree):
    """Concatenation of i.i.d. finite blocks with necks at block boundaries.

    ``nu`` is the law of block lengths on {1, 2, ...}; ``mu(rng, depth)``
    returns a block as a list of ``(labels, pointers)`` levels whose root is
    slot 0 and whose last level points at slot 0 of the next block.
    """

    def __init__(self, catalog: Catalog, nu, mu=None, seed=None):
        super().__init__(catalog, neck_rule="blocks")
        self.nu = _check_distribution(nu, "nu")
        self.mu = mu if mu is not None else slot_block_sampler(catalog)
        self.rng = np.random.default_rng(seed)
        self._pending = []
        self.boundaries = []
        self._depth = 0

    def _make_level(self, n):
        if not self._pending:
            L = int(self.rng.choice(len(self.nu), p=self.nu)) + 1
            block = self.mu(self.rng, L)
            if len(block) != L:
                raise BadDistribution(f"block sampler returned {len(block)} levels, expected {L}")
            self._pending = list(block)
            self._depth += L
            self.boundaries.append(self._depth)
        return self._pending.pop(0)

    def _is_neck(self, n):
        while self._depth < n:
            self.level(len(self._levels))
        return n in self.boundaries


class OracleTree(SlotTree):
    """Tree given by an arbitrary label function on addresses.

    The layered view uses one slot per node, built breadth first on demand.
    """

    def __init__(self, catalog: Catalog, oracle: Callable, neck_rule="none"):
        super().__init__(catalog, neck_rule=neck_rule)
        self.oracle = oracle
        self._frontier = [()]

    def label_index(self, addr) -> int:
        addr = tuple(addr)
        counts = self.catalog.map_counts
        for j in range(len(addr)):
            lab = self.catalog.label_of(self.oracle(addr[:j]))
            if not 0 <= addr[j] < counts[lab]:
                raise InvalidAddress(
                    f"digit {addr[j]} at position {j} exceeds the {counts[lab]} maps of "
                    f"family {self.catalog.labels[lab]!r}")
        return self.catalog.label_of(self.oracle(addr))

    def _make_level(self, n):
        addrs = self._frontier
        labels = [self.catalog.label_of(self.oracle(a)) for a in addrs]
        nxt, ptr = [], []
        for a, lab in zip(addrs, labels):
            row = []
            for d in range(self.catalog.map_counts[lab]):
                row.append(len(nxt))
                nxt.append(a + (d,))
            ptr.append(row)
        self._frontier = nxt
        return labels, ptr

    def shifted(self, offset):
        u = (0,) * offset
        self.label_index(u)
        base = self.oracle
        return OracleTree(self.catalog, lambda a: base(u + tuple(a)), neck_rule=self.neck_rule)


class ShiftedTree(CodeTree):
    """The subtree below level ``offset``; ``offset`` must be a neck."""

    def __init__(self, base: CodeTree, offset: int):
        super().__init__(base.catalog)
        act = base.active_slots(offset)
        if len(act) != 1:
            raise NotNecked(f"level {offset} has {len(act)} distinct subtrees")
        self.base = base
        self.offset = offset
        self.root_slot = int(act[0])
        self.neck_rule = base.neck_rule

    def level(self, n):
        return self.base.level(n + self.offset)

    def level_labels(self, k):
        return self.base.level_labels(self.offset + k)[self.offset:]

    def is_level_homogeneous(self, k):
        return all(self.base.width(n + self.offset) == 1 for n in range(k))

    def label_index(self, addr):
        return self.base.label_index((0,) * self.offset + tuple(addr))

    def necks(self, count):
        base = self.base.necks(count + 1)
        i = base.index(self.offset) if self.offset in base else None
        if i is None:
            raise NotNecked(f"level {self.offset} is not a neck of the base tree")
        more = self.base.necks(i + 1 + count)
        return [N - self.offset for N in more[i + 1:]]

    def necks_upto(self, depth):
        return [N - self.offset for N in self.base.necks_upto(depth + self.offset)
                if N > self.offset]


# ---------------------------------------------------------------------------
# generators


def homogeneous_tree(catalog: Catalog, label_sequence) -> HomogeneousTree:
    return HomogeneousTree(catalog, label_sequence)


def markov_tree(catalog: Catalog, Q, P0, seed=None, states=None) -> MarkovTree:
    return MarkovTree(catalog, Q, P0, states=states, seed=seed)


def vvariable_tree(catalog: Catalog, V: int, label_probs=None, pointer_probs=None,
                   seed=None) -> VVariableTree:
    return VVariableTree(catalog, V, label_probs, pointer_probs, seed)


def block_tree(catalog: Catalog, nu, mu=None, seed=None) -> BlockTree:
    return BlockTree(catalog, nu, mu, seed)


def power_schedule(root, cycle: Sequence, base: int = 4) -> Callable[[int], object]:
    """Label ``root`` at level 0, then ``cycle[l % len(cycle)]`` on
    levels ``base**l <= n < base**(l+1)``."""
    cycle = list(cycle)

    def fn(n):
        if n == 0:
            return root
        l, N = 0, base
        while N <= n:
            l += 1
            N *= base
        return cycle[l % len(cycle)]

    return fn


def shift_xi(tree: CodeTree) -> CodeTree:
    """Drop the first block: re-root at the first neck level N_1."""
    (N1,) = tree.necks(1)
    return tree.shifted(N1)


# ---------------------------------------------------------------------------
# address-level operations


def subtree_equal(tree: CodeTree, addr1, addr2, depth: int) -> bool:
    """True iff the label trees below the two addresses agree to ``depth``.

    Compares labels address by address through :meth:`CodeTree.label`, so
    it does not rely on slot identities.
    """
    addr1, addr2 = tuple(addr1), tuple(addr2)
    if len(addr1) != len(addr2):
        raise InvalidAddress("addresses must have equal length")
    frontier = [()]
    for _ in range(depth + 1):
        nxt = []
        for w in frontier:
            l1 = tree.label_index(addr1 + w)
            l2 = tree.label_index(addr2 + w)
            if l1 != l2:
                return False
            nxt.extend(w + (d,) for d in range(tree.catalog.map_counts[l1]))
        frontier = nxt
    return True


def valid_words(tree: CodeTree, k: int) -> list:
    """All valid addresses of length ``k`` in lexicographic order."""
    words = [()]
    for _ in range(k):
        words = [w + (d,) for w in words for d in range(tree.num_children(w))]
    return words


def composed_map(tree: CodeTree, assignment: TranslationAssignment, addr):
    """Linear part and translation of f_{i_1} o ... o f_{i_k}."""
    cat = tree.catalog
    D = cat.dimension
    lin = np.eye(D)
    trans = np.zeros(D)
    addr = tuple(addr)
    tree.label_index(addr)
    for j, d in enumerate(addr):
        lab = tree.label_index(addr[:j])
        slot = cat.slot_ids[lab][d]
        if slot >= len(assignment.vectors):
            raise UnknownSlot(f"class id {slot} missing from assignment")
        trans = trans + lin @ assignment.vectors[slot]
        lin = lin @ cat.linear[lab][d]
    return lin, trans


# ---------------------------------------------------------------------------
# enumeration


def log_word_count(tree: CodeTree, depth: int, start_level: int = 0, start_slot=None) -> float:
    """log of the number of valid words of length ``depth``."""
    slot = tree.root_slot if start_slot is None else start_slot
    counts = {int(slot): 0.0}
    mc = tree.catalog.map_counts
    for n in range(start_level, start_level + depth):
        labels, ptr = tree.level(n)
        nxt = {}
        for s, lc in counts.items():
            for d in range(mc[labels[s]]):
                t = int(ptr[s, d])
                nxt[t] = np.logaddexp(nxt[t], lc) if t in nxt else lc
        counts = nxt
    return float(_logsumexp(np.array(list(counts.values()))))


@dataclass
class WordLevel:
    """All valid words of one length, in lexicographic order.

    ``linear`` is stored normalized; the true product is
    ``exp(log_scale) * linear``.
    """

    depth: int
    slots: np.ndarray
    log_scale: np.ndarray
    linear: np.ndarray
    translation: np.ndarray | None
    history: list = field(default_factory=list)

    def __len__(self):
        return len(self.slots)

    def log_sigma(self) -> np.ndarray:
        sig = batch_singular_values(self.linear)
        with np.errstate(divide="ignore"):
            return np.log(sig) + self.log_scale[:, None]


def enumerate_words(tree: CodeTree, depth: int, assignment: TranslationAssignment | None = None,
                    start_level: int = 0, start_slot=None, limit: float = MAX_WORDS,
                    keep_history: bool = False) -> WordLevel:
    """Breadth-first expansion of every valid word of length ``depth``.

    Starting at ``start_level``/``start_slot`` enumerates the words of a
    subtree (used for blocks between necks). With ``keep_history`` each
    level's parent indices and log singular values are kept.
    """
    cat = tree.catalog
    D = cat.dimension
    lwc = log_word_count(tree, depth, start_level, start_slot)
    if lwc > math.log(limit) + 1e-9:
        raise EnumerationTooLarge(math.exp(min(lwc, 700)), limit)
    slot0 = tree.root_slot if start_slot is None else start_slot
    slots = np.array([slot0])
    log_scale = np.zeros(1)
    lin = np.eye(D)[None]
    trans = np.zeros((1, D)) if assignment is not None else None
    hist = []
    if keep_history:
        hist.append({"parents": np.zeros(0, dtype=int), "log_sigma": np.zeros((1, D))})
    for n in range(start_level, start_level + depth):
        labels, ptr = tree.level(n)
        node_lab = labels[slots]
        parts = []
        for f in np.unique(node_lab):
            idx = np.flatnonzero(node_lab == f)
            for d in range(cat.map_counts[f]):
                parts.append((idx, f, d))
        par = np.concatenate([p[0] for p in parts])
        dig = np.concatenate([np.full(len(p[0]), p[2]) for p in parts])
        order = np.lexsort((dig, par))
        new_lin = np.empty((len(par), D, D))
        new_ls = np.empty(len(par))
        new_slots = np.empty(len(par), dtype=int)
        new_trans = np.empty((len(par), D)) if trans is not None else None
        pos = 0
        for idx, f, d in parts:
            sl = slice(pos, pos + len(idx))
            T = cat.linear[f][d]
            prod = lin[idx] @ T
            new_lin[sl] = prod
            new_ls[sl] = log_scale[idx]
            new_slots[sl] = ptr[slots[idx], d]
            if trans is not None:
                a = assignment.vectors[cat.slot_ids[f][d]]
                new_trans[sl] = trans[idx] + np.exp(log_scale[idx])[:, None] * (lin[idx] @ a)
            pos += len(idx)
        new_lin, new_ls, new_slots, par = new_lin[order], new_ls[order], new_slots[order], par[order]
        if new_trans is not None:
            new_trans = new_trans[order]
        scale = np.abs(new_lin).reshape(len(new_lin), -1).max(axis=1)
        new_lin /= scale[:, None, None]
        new_ls += np.log(scale)
        slots, log_scale, lin, trans = new_slots, new_ls, new_lin, new_trans
        if keep_history:
            sig = batch_singular_values(lin)
            hist.append({"parents": par, "log_sigma": np.log(sig) + log_scale[:, None]})
    return WordLevel(depth, slots, log_scale, lin, trans, hist)


# ---------------------------------------------------------------------------
# generator specs

ORACLES: dict = {}


def explicit_levels_tree(catalog: Catalog, levels, repeat="last") -> SlotTree:
    """Tree from a finite list of levels, extended by repeating the last
    level (``repeat="last"``) or the whole list (``repeat="cycle"``)."""
    if not levels:
        raise ConfigError("explicit tree needs at least one level")
    parsed = [([catalog.label_of(lab) for lab in lev["labels"]], lev["pointers"]) for lev in levels]
    if repeat not in ("last", "cycle"):
        raise ConfigError(f"repeat must be 'last' or 'cycle', got {repeat!r}")

    def fn(n):
        if n < len(parsed):
            return parsed[n]
        return parsed[-1] if repeat == "last" else parsed[n % len(parsed)]

    return SlotTree(catalog, fn, neck_rule="width")


@dataclass(frozen=True)
class GeneratorSpec:
    """A recipe for (possibly random) code trees over one catalog."""

    catalog: Catalog
    kind: str
    params: dict = field(default_factory=dict)
    seed: int | None = None

    KINDS = ("homogeneous", "markov", "vvariable", "blocks", "explicit")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ConfigError(f"unknown generator kind {self.kind!r}")

    @property
    def is_random(self) -> bool:
        return self.kind in ("markov", "vvariable", "blocks")

    def build(self, seed=None) -> CodeTree:
        seed = self.seed if seed is None else seed
        p = self.params
        cat = self.catalog
        if self.kind == "homogeneous":
            if "schedule" in p:
                s = p["schedule"]
                return homogeneous_tree(cat, power_schedule(s["root"], s["cycle"], s.get("base", 4)))
            if "label" in p:
                return homogeneous_tree(cat, p["label"])
            labels = list(p["labels"])
            if p.get("cycle", False):
                return homogeneous_tree(cat, lambda n: labels[n % len(labels)])
            return homogeneous_tree(cat, labels)
        if self.kind == "markov":
            return markov_tree(cat, p["Q"], p["P0"], seed=seed, states=p.get("states"))
        if self.kind == "vvariable":
            return vvariable_tree(cat, int(p["V"]), p.get("label_probs"), p.get("pointer_probs"), seed)
        if self.kind == "blocks":
            nu = block_length_law(p["lengths"])
            mu = slot_block_sampler(cat, p.get("label_probs"), int(p.get("V", 2)))
            return block_tree(cat, nu, mu, seed)
        if "oracle" in p:
            if not ORACLES:
                from . import examples  # noqa: F401  (registers the named oracles)
            try:
                builder = ORACLES[p["oracle"]]
            except KeyError:
                raise ConfigError(f"unknown explicit oracle {p['oracle']!r}") from None
            return builder(cat, p.get("parameters", {}))
        return explicit_levels_tree(cat, p["levels"], p.get("repeat", "last"))


def block_length_law(spec) -> np.ndarray:
    if "geometric" in spec:
        g = spec["geometric"]
        return truncated_geometric(float(g["p"]), int(g["max"]))
    if "probs" in spec:
        return _check_distribution(spec["probs"], "block length probabilities")
    raise BadDistribution("block lengths need 'geometric' or 'probs'")
