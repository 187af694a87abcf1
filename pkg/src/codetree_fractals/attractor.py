"""Attractor point clouds, natural measures and box-counting estimates."""
from dataclasses import dataclass, field
import math
import warnings

import numpy as np

from .codetree import (
    MAX_WORDS,
    CodeTree,
    GeneratorSpec,
    TranslationAssignment,
    TranslationScheme,
    _logsumexp,
    enumerate_words,
    log_word_count,
)
from .errors import ConfigError, EnumerationTooLarge, ScaleTooFine
from .linalg_svf import log_phi_from_sigma


@dataclass
class PointCloud:
    """Depth-``depth`` truncations of attractor points.

    Every point lies within ``diameter / 2`` of the attractor point it
    approximates, so boxes of side >= ``diameter`` resolve the set.
    """

    points: np.ndarray
    depth: int
    diameter: float

    def __len__(self):
        return len(self.points)

    @property
    def dimension(self) -> int:
        return self.points.shape[1]


@dataclass
class WeightedCloud:
    cloud: PointCloud
    weights: np.ndarray
    depth: int
    log_phi: np.ndarray = field(repr=False)


@dataclass
class BoxDimEstimate:
    slope: float
    r2: float
    scales: np.ndarray
    counts: np.ndarray
    intercept: float = 0.0


def diameter_bound(catalog, assignment: TranslationAssignment, depth: int) -> float:
    """2 * sigma_max**depth * max|a| * (number of slots) / (1 - sigma_max)."""
    s = catalog.sigma_upper
    return 2.0 * s ** depth * assignment.max_norm() * assignment.scheme.class_count / (1.0 - s)


def sample_translation(scheme: TranslationScheme, rho: float, seed=None) -> TranslationAssignment:
    """One vector per translation slot, uniform in the ball of radius ``rho``."""
    if rho <= 0:
        raise ConfigError("rho must be positive")
    rng = np.random.default_rng(seed)
    A, D = scheme.class_count, scheme.dimension
    g = rng.standard_normal((A, D))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    radius = rho * rng.random(A) ** (1.0 / D)
    return scheme.assignment(g * radius[:, None])


def _sampled_points(tree: CodeTree, assignment, depth: int, n: int, seed) -> np.ndarray:
    """Endpoints of ``n`` random paths, each child chosen uniformly."""
    cat = tree.catalog
    D = cat.dimension
    rng = np.random.default_rng(seed)
    slots = np.full(n, tree.root_slot)
    lin = np.broadcast_to(np.eye(D), (n, D, D)).copy()
    trans = np.zeros((n, D))
    for lev in range(depth):
        labels, ptr = tree.level(lev)
        lab = labels[slots]
        dig = np.floor(rng.random(n) * cat.map_counts[lab]).astype(int)
        new_slots = np.empty_like(slots)
        for f in np.unique(lab):
            for d in range(cat.map_counts[f]):
                idx = np.flatnonzero((lab == f) & (dig == d))
                if len(idx) == 0:
                    continue
                a = assignment.vectors[cat.slot_ids[f][d]]
                trans[idx] += lin[idx] @ a
                lin[idx] = lin[idx] @ cat.linear[f][d]
                new_slots[idx] = ptr[slots[idx], d]
        slots = new_slots
    return trans


def point_cloud(tree: CodeTree, assignment: TranslationAssignment, depth: int,
                sample_budget: int | None = None, seed=None,
                limit: float = MAX_WORDS) -> PointCloud:
    """Truncated attractor points, one per valid word or per sampled path.

    Full enumeration is used when the word count is within ``limit``;
    otherwise ``sample_budget`` uniform random paths are drawn.
    """
    lwc = log_word_count(tree, depth)
    diam = diameter_bound(tree.catalog, assignment, depth)
    if lwc <= math.log(limit) + 1e-9:
        words = enumerate_words(tree, depth, assignment, limit=limit)
        return PointCloud(words.translation, depth, diam)
    if sample_budget is None:
        raise EnumerationTooLarge(math.exp(min(lwc, 700)), limit)
    pts = _sampled_points(tree, assignment, depth, int(sample_budget), seed)
    return PointCloud(pts, depth, diam)


def natural_measure(tree: CodeTree, assignment: TranslationAssignment, alpha: float,
                    m: int, limit: float = MAX_WORDS) -> WeightedCloud:
    """Weights proportional to the singular value function on depth-N_m words."""
    depth = tree.necks(m)[-1]
    words = enumerate_words(tree, depth, assignment, limit=limit)
    lp = log_phi_from_sigma(words.log_sigma(), alpha)
    w = np.exp(lp - _logsumexp(lp))
    w /= w.sum()
    cloud = PointCloud(words.translation, depth, diameter_bound(tree.catalog, assignment, depth))
    return WeightedCloud(cloud, w, depth, lp)


def cylinder_mass_ratio(tree: CodeTree, alpha: float, m: int,
                        limit: float = MAX_WORDS) -> np.ndarray:
    """max over length-l cylinders of mu_m([i_l]) / Phi(T_{i_l}), for l = 0..N_m."""
    depth = tree.necks(m)[-1]
    words = enumerate_words(tree, depth, limit=limit, keep_history=True)
    hist = words.history
    lp = log_phi_from_sigma(hist[-1]["log_sigma"], alpha)
    log_mass = lp - _logsumexp(lp)
    out = np.empty(depth + 1)
    for lev in range(depth, -1, -1):
        lphi = log_phi_from_sigma(hist[lev]["log_sigma"], alpha)
        out[lev] = float(np.exp(np.max(log_mass - lphi)))
        if lev > 0:
            parents = hist[lev]["parents"]
            n_par = len(hist[lev - 1]["log_sigma"])
            acc = np.full(n_par, -np.inf)
            np.logaddexp.at(acc, parents, log_mass)
            log_mass = acc
    return out


# ---------------------------------------------------------------------------
# box counting


def box_counts(points, scales) -> np.ndarray:
    """Occupied boxes per scale on grids anchored at the bounding-box corner."""
    pts = np.asarray(points, dtype=float)
    origin = pts.min(axis=0)
    rel = pts - origin
    out = np.empty(len(scales), dtype=int)
    for j, eps in enumerate(scales):
        # boxes are half-open; a point within rounding of a grid line belongs
        # to the box on its right
        idx = np.floor(rel / eps + 1e-9).astype(np.int64)
        out[j] = len(np.unique(idx, axis=0))
    return out


def default_scales(cloud: PointCloud, ratio: float = 0.5) -> np.ndarray:
    """Geometric scales from a quarter of the cloud's extent down to its
    resolution bound."""
    extent = float(np.ptp(cloud.points, axis=0).max()) if len(cloud) else 0.0
    top = extent / 4.0
    # exact points carry no resolution bound; stop after 16 halvings
    floor = cloud.diameter if cloud.diameter > 0 else top * ratio ** 15
    if top <= floor:
        return np.array([top]) if top > 0 else np.array([])
    n = int(math.floor(math.log(floor / top) / math.log(ratio))) + 1
    return top * ratio ** np.arange(n)


def box_counting_dimension(cloud, scales=None) -> BoxDimEstimate:
    """Least-squares slope of log N(eps) against log(1/eps).

    ``cloud`` is a :class:`PointCloud` or a bare point array (treated as
    exact points).
    """
    if not isinstance(cloud, PointCloud):
        cloud = PointCloud(np.asarray(cloud, dtype=float), 0, 0.0)
    scales = default_scales(cloud) if scales is None else np.asarray(scales, dtype=float)
    scales = np.sort(scales)[::-1]
    if len(scales) < 2:
        raise ConfigError("box counting needs at least two scales")
    if np.any(np.diff(scales) >= 0):
        raise ConfigError("scales must be distinct")
    if np.any(scales <= 0):
        raise ConfigError("scales must be positive")
    if scales[-1] < cloud.diameter:
        raise ScaleTooFine(f"scale {scales[-1]:.4g} is below the resolution bound "
                           f"{cloud.diameter:.4g} of the depth-{cloud.depth} cloud")
    counts = box_counts(cloud.points, scales)
    x = np.log(1.0 / scales)
    y = np.log(counts)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss if ss > 0 else 1.0
    return BoxDimEstimate(float(slope), float(r2), scales, counts, float(intercept))


# ---------------------------------------------------------------------------
# experiment


@dataclass
class DimensionReport:
    """Box-counting slopes for sampled translations next to the pressure zero.

    The slopes are box-counting estimates; they are not Hausdorff dimensions.
    """

    alpha0: float
    alpha0_error: float
    target: float
    slopes: np.ndarray
    r2: np.ndarray
    depth: int
    rho: float
    seed: int | None
    outside_hypotheses: bool
    scales: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def mean_slope(self) -> float:
        return float(np.mean(self.slopes))

    @property
    def std_slope(self) -> float:
        return float(np.std(self.slopes, ddof=1)) if len(self.slopes) > 1 else 0.0

    def rows(self):
        for j, (s, r) in enumerate(zip(self.slopes, self.r2)):
            yield j, float(s), float(r)


def dimension_experiment(spec: GeneratorSpec, rho: float, depth: int, translations: int,
                         seed=None, scales=None, sample_budget: int | None = 200_000,
                         mc_trials: int = 400, mc_necks: int = 64,
                         threads: int | None = None) -> DimensionReport:
    """Sample one tree and several translations; compare box slopes with alpha0.

    For random generators alpha0 comes from the Monte Carlo pressure of the
    model; for deterministic ones from the finite-depth pressure of the tree.
    """
    from .pressure import kingman_run, tree_pressure_zero

    cat = spec.catalog
    notes = []
    outside = cat.sigma_upper >= 0.5
    if outside:
        msg = (f"max singular value {cat.sigma_upper:.4g} >= 1/2: outside the hypotheses "
               "of the dimension formula, "
               "no equality is expected")
        warnings.warn(msg, stacklevel=2)
        notes.append(msg)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    tree_seed, mc_seed, *tr_seeds = ss.spawn(2 + translations)
    tree = spec.build(seed=tree_seed)
    if spec.is_random:
        z, stat, syst = kingman_run(spec, mc_trials, mc_necks, seed=mc_seed, threads=threads).zero()
        alpha0, err = z.alpha, math.hypot(stat, syst)
    else:
        alpha0, err = tree_pressure_zero(tree).alpha, 0.0
    target = min(alpha0, float(cat.dimension))
    slopes, r2, used = [], [], []
    for s in tr_seeds:
        a = sample_translation(cat.scheme, rho, s)
        cloud = point_cloud(tree, a, depth, sample_budget=sample_budget, seed=s)
        est = box_counting_dimension(cloud, scales)
        slopes.append(est.slope)
        r2.append(est.r2)
        used.append(est.scales.tolist())
    return DimensionReport(alpha0, err, target, np.array(slopes), np.array(r2), depth, rho,
                           seed, outside, used, notes)


# ---------------------------------------------------------------------------
# file formats


def format_header(fields: dict) -> str:
    return "".join(f"# {k}={v}\n" for k, v in fields.items())


def cloud_csv_text(cloud: PointCloud, header: dict | None = None) -> str:
    D = cloud.dimension
    cols = [f"x{j + 1}" for j in range(D)] + ["depth", "diameter"]
    tail = f",{cloud.depth},{cloud.diameter!r}\n"
    body = "".join(",".join(repr(float(v)) for v in p) + tail for p in cloud.points)
    return format_header(header or {}) + ",".join(cols) + "\n" + body


def write_cloud_csv(path, cloud: PointCloud, header: dict | None = None):
    with open(path, "w", newline="") as fh:
        fh.write(cloud_csv_text(cloud, header))


def read_cloud_csv(path) -> PointCloud:
    """Read a cloud written by :func:`write_cloud_csv` (or bare x1..xD columns)."""
    try:
        with open(path) as fh:
            lines = [ln for ln in fh if ln.strip() and not ln.startswith("#")]
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    if not lines:
        raise ConfigError(f"{path}: no data rows")
    head = [c.strip() for c in lines[0].split(",")]
    has_header = not _is_number(head[0])
    rows = lines[1:] if has_header else lines
    try:
        data = np.array([[float(c) for c in ln.split(",")] for ln in rows], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if data.ndim != 2 or data.size == 0:
        raise ConfigError(f"{path}: ragged or empty table")
    if has_header and "depth" in head and "diameter" in head:
        xs = [j for j, c in enumerate(head) if c.startswith("x")]
        depth = int(data[0, head.index("depth")])
        diam = float(data[:, head.index("diameter")].max())
        return PointCloud(data[:, xs], depth, diam)
    return PointCloud(data, 0, 0.0)


def _is_number(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def occupancy_raster(cloud: PointCloud, size: int) -> np.ndarray:
    """``size x size`` uint8 image, 255 where a point falls; y grows upward."""
    if cloud.dimension != 2:
        raise ConfigError("rasters need D = 2")
    pts = cloud.points
    lo = pts.min(axis=0)
    ext = float(np.ptp(pts, axis=0).max()) or 1.0
    ij = np.minimum(((pts - lo) / ext * size).astype(int), size - 1)
    img = np.zeros((size, size), dtype=np.uint8)
    img[size - 1 - ij[:, 1], ij[:, 0]] = 255
    return img


def write_pgm(path, cloud: PointCloud, size: int = 512, header: dict | None = None):
    img = occupancy_raster(cloud, size)
    comment = "".join(f"# {k}={v}\n" for k, v in (header or {}).items())
    with open(path, "wb") as fh:
        fh.write(f"P5\n{comment}{size} {size}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end].decode("ascii"))
        pos = end
    if tokens[0] != "P5":
        raise ConfigError(f"{path}: not a binary PGM")
    w, h = int(tokens[1]), int(tokens[2])
    pos += 1
    return np.frombuffer(data[pos:pos + w * h], dtype=np.uint8).reshape(h, w)
