"""Evaluation harness: corpora, retrieval metrics, leakage and benchmarks.

The synthetic corpus is a desk-scale stand-in for a labeled photo
collection: ten texture categories, each combining one of five edge
orientations with one of two edge densities.  Most images of a category are
heavily "scrambled" (cells repainted with random orientations), a minority
are clean exemplars.  Scrambling moves edge mass between orientation bins
without changing the per-image bin totals, so the plaintext Euclidean
ranking can see it while the sum-based encrypted ranking cannot; that is
what produces the concentrated-versus-uniform leakage profiles measured
here.

The benchmark compares plain retrieval, encrypted retrieval that
re-aggregates every ciphertext per query, encrypted retrieval over the
precomputed index, and index construction itself, plus a storage report for
the serialized features and index.
"""

from __future__ import annotations

import logging
import statistics
import time
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import feature_crypto, group_crypto
from .cloud_node import INDEX_HEADER
from .ehd_features import extract_ehd
from .group_crypto import GroupParams
from .image_cipher import read_pgm, write_pgm
from .protocol_sim import World
from .rng import derive_seed
from .similarity import SumPair, rank_key

log = logging.getLogger(__name__)

EVAL_USER = "query-user"

#: q size used by the desk-scale experiments; large enough that the sum of
#: squared feature bins (at most 80 * 255^2, under 2^23) never wraps.
DESK_SECURITY_BITS = 32


class IngestError(Exception):
    """One or more corpus files could not be ingested."""

    def __init__(self, errors: list[str]):
        super().__init__(f"{len(errors)} corpus file(s) rejected")
        self.errors = errors


class StatisticalPowerWarning(UserWarning):
    """Too few queries for a stable leakage histogram."""


# -- corpora -------------------------------------------------------------------


@dataclass(frozen=True)
class CorpusItem:
    item_id: str
    image: np.ndarray
    label: str
    owner_id: str


@dataclass(frozen=True)
class LabeledCorpus:
    items: tuple[CorpusItem, ...]
    categories: tuple[str, ...]

    def labels(self) -> dict[str, str]:
        return {item.item_id: item.label for item in self.items}

    def by_owner(self) -> dict[str, list[CorpusItem]]:
        owners: dict[str, list[CorpusItem]] = {}
        for item in self.items:
            owners.setdefault(item.owner_id, []).append(item)
        return owners


def _owner_ids(count: int) -> list[str]:
    return [f"owner-{i + 1}" for i in range(count)]


def load_corpus(root: str | Path, owners: int = 3) -> LabeledCorpus:
    """Load PGM files grouped in one subdirectory per category.

    Ordering is deterministic (sorted directories, sorted files) and items
    are dealt round-robin over ``owners`` owner ids.  Unreadable or non-PGM
    files are collected and reported together.
    """
    root = Path(root)
    if owners < 1:
        raise ValueError("owner count must be >= 1")
    category_dirs = sorted(d for d in root.iterdir() if d.is_dir())
    if not category_dirs:
        log.warning("corpus root %s has no category directories", root)
        return LabeledCorpus(items=(), categories=())

    errors: list[str] = []
    ids = _owner_ids(owners)
    items: list[CorpusItem] = []
    position = 0
    for cat_dir in category_dirs:
        label = cat_dir.name
        for path in sorted(cat_dir.iterdir()):
            if not path.is_file():
                continue
            try:
                image, _ = read_pgm(path)
            except (ValueError, OSError) as exc:
                errors.append(f"{path}: {exc}")
                continue
            items.append(
                CorpusItem(
                    item_id=f"{label}_{path.stem}",
                    image=image,
                    label=label,
                    owner_id=ids[position % owners],
                )
            )
            position += 1
    if errors:
        raise IngestError(errors)
    if not items:
        log.warning("corpus root %s contained no images", root)
    return LabeledCorpus(items=tuple(items), categories=tuple(d.name for d in category_dirs))


def write_corpus(corpus: LabeledCorpus, root: str | Path) -> None:
    """Materialize a corpus as PGM files in per-category directories."""
    root = Path(root)
    for item in corpus.items:
        cat_dir = root / item.label
        cat_dir.mkdir(parents=True, exist_ok=True)
        stem = item.item_id.removeprefix(item.label + "_")
        write_pgm(cat_dir / f"{stem}.pgm", item.image)


# -- synthetic textures ----------------------------------------------------------

# 2x2 block paints, one per edge orientation (vertical, horizontal, 45, 135,
# non-directional).  Each is built so its own filter wins by a clear margin.
_BLOCKS = np.array(
    [
        [[0, 255], [0, 255]],
        [[0, 0], [255, 255]],
        [[255, 128], [128, 0]],
        [[128, 255], [0, 128]],
        [[0, 255], [255, 0]],
    ],
    dtype=np.uint8,
)
_N_ORIENTS = len(_BLOCKS)


@dataclass(frozen=True)
class SynthSpec:
    """Knobs of the synthetic texture generator.

    Each density level pairs an edge density with a dominance share (the
    probability that an edge block takes the cell's dominant orientation
    rather than a random other one).  The defaults (0.35, 1.0) and
    (0.7, 0.6) equalize the feature-bin variance of the two levels, which
    keeps the sum-based distance an honest nearest-neighbour rule on the
    per-image edge total instead of a bias toward low-energy images.
    """

    categories: int = 10
    per_category: int = 100
    image_size: int = 64
    density_levels: tuple[float, ...] = (0.35, 0.7)
    dominance_levels: tuple[float, ...] = (1.0, 0.6)
    density_jitter: float = 0.02
    clean_fraction: float = 0.1
    clean_scramble: tuple[float, float] = (0.0, 0.1)
    dirty_scramble: tuple[float, float] = (0.95, 1.0)

    def __post_init__(self):
        if self.categories > _N_ORIENTS * len(self.density_levels):
            raise ValueError("not enough orientation/density combinations")
        if len(self.dominance_levels) != len(self.density_levels):
            raise ValueError("one dominance share per density level")
        if self.image_size % 8 != 0:
            raise ValueError("image size must be a multiple of 8")

    def category_names(self) -> tuple[str, ...]:
        return tuple(f"cat{k:02d}" for k in range(self.categories))

    def recipe(self, k: int) -> tuple[int, float, float]:
        """(dominant orientation, edge density, dominance) of category k."""
        level = k // _N_ORIENTS
        return k % _N_ORIENTS, self.density_levels[level], self.dominance_levels[level]


def _render(spec: SynthSpec, dominant_per_cell: np.ndarray, density: float,
            dominance: float, rng: np.random.Generator) -> np.ndarray:
    """Paint an image from a 4x4 map of dominant cell orientations."""
    size = spec.image_size
    blocks_per_cell = size // 8  # cell side in blocks
    n_blocks = size // 2
    dom = np.repeat(
        np.repeat(dominant_per_cell, blocks_per_cell, axis=0),
        blocks_per_cell, axis=1,
    )
    is_edge = rng.random((n_blocks, n_blocks)) < density
    takes_dom = rng.random((n_blocks, n_blocks)) < dominance
    alt = rng.integers(1, _N_ORIENTS, size=(n_blocks, n_blocks))
    orient = np.where(takes_dom, dom, (dom + alt) % _N_ORIENTS)
    flat_levels = rng.integers(90, 166, size=(n_blocks, n_blocks), dtype=np.int64)

    tiles = _BLOCKS[orient]  # (n_blocks, n_blocks, 2, 2)
    flat = np.repeat(flat_levels[:, :, None, None], 2, axis=2).repeat(2, axis=3)
    chosen = np.where(is_edge[:, :, None, None], tiles, flat).astype(np.uint8)
    return chosen.transpose(0, 2, 1, 3).reshape(size, size)


def synth_image(spec: SynthSpec, category: int, rng: np.random.Generator,
                clean: bool | None = None) -> np.ndarray:
    """Draw one image of ``category``; scrambling is decided per image.

    Scrambling repoints a cell's dominant orientation at random.  It moves
    edge mass between orientation bins without touching the per-image bin
    totals, so the plaintext Euclidean view changes while the sums the
    cloud sees do not.
    """
    orient, density, dominance = spec.recipe(category)
    if clean is None:
        clean = rng.random() < spec.clean_fraction
    lo, hi = spec.clean_scramble if clean else spec.dirty_scramble
    scramble = rng.uniform(lo, hi)
    density = density * (1.0 + rng.uniform(-spec.density_jitter, spec.density_jitter))

    cells = np.full((4, 4), orient, dtype=np.int64)
    mask = rng.random((4, 4)) < scramble
    cells[mask] = rng.integers(0, _N_ORIENTS, size=int(mask.sum()))
    return _render(spec, cells, density, dominance, rng)


def synth_query_image(spec: SynthSpec, category: int,
                      rng: np.random.Generator) -> np.ndarray:
    """Draw a clean, unscrambled exemplar used as a query."""
    orient, density, dominance = spec.recipe(category)
    cells = np.full((4, 4), orient, dtype=np.int64)
    return _render(spec, cells, density, dominance, rng)


def synth_corpus(spec: SynthSpec = SynthSpec(), owners: int = 3,
                 seed: bytes | str = b"synth") -> LabeledCorpus:
    """Generate the default labeled corpus deterministically from ``seed``."""
    ids = _owner_ids(owners)
    items: list[CorpusItem] = []
    names = spec.category_names()
    position = 0
    for k, label in enumerate(names):
        rng = np.random.default_rng(
            int.from_bytes(derive_seed(seed, f"category:{k}")[:8], "big")
        )
        for i in range(spec.per_category):
            clean = i < round(spec.clean_fraction * spec.per_category)
            items.append(
                CorpusItem(
                    item_id=f"{label}_{i:03d}",
                    image=synth_image(spec, k, rng, clean=clean),
                    label=label,
                    owner_id=ids[position % owners],
                )
            )
            position += 1
    return LabeledCorpus(items=tuple(items), categories=names)


def split_queries(
    corpus: LabeledCorpus, per_category: int
) -> tuple[LabeledCorpus, list[tuple[str, np.ndarray]]]:
    """Hold out the first ``per_category`` items of each label as queries.

    Used for disk corpora, where no generator exists to draw fresh query
    images.  Items are taken in sorted id order, so the split is stable.
    """
    held: dict[str, int] = {}
    queries: list[tuple[str, np.ndarray]] = []
    kept: list[CorpusItem] = []
    for item in sorted(corpus.items, key=lambda it: (it.label, it.item_id)):
        if held.get(item.label, 0) < per_category:
            held[item.label] = held.get(item.label, 0) + 1
            queries.append((item.label, item.image))
        else:
            kept.append(item)
    if not kept:
        raise ValueError("query split would leave the corpus empty")
    return LabeledCorpus(items=tuple(kept), categories=corpus.categories), queries


def synth_queries(spec: SynthSpec, per_category: int = 5,
                  seed: bytes | str = b"queries") -> list[tuple[str, np.ndarray]]:
    """Fresh query exemplars, ``per_category`` for each category."""
    queries = []
    for k, label in enumerate(spec.category_names()):
        rng = np.random.default_rng(
            int.from_bytes(derive_seed(seed, f"query:{k}")[:8], "big")
        )
        for _ in range(per_category):
            queries.append((label, synth_query_image(spec, k, rng)))
    return queries


# -- retrieval metrics -----------------------------------------------------------


@dataclass(frozen=True)
class QueryMetrics:
    query_label: str
    cutoff: int
    tp: int
    relevant: int
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class MetricsReport:
    precision: float
    recall: float
    f1: float
    per_query: tuple[QueryMetrics, ...]


def compute_metrics(ranked_ids: Sequence[str], labels: Mapping[str, str],
                    query_label: str, cutoff: int) -> QueryMetrics:
    """Precision / recall / F1 of one ranked result list at ``cutoff``."""
    if cutoff > len(ranked_ids):
        raise ValueError(f"cutoff {cutoff} exceeds result length {len(ranked_ids)}")
    for item_id in ranked_ids:
        if item_id not in labels:
            raise ValueError(f"result id {item_id!r} missing from ground truth")
    relevant = sum(1 for lbl in labels.values() if lbl == query_label)
    tp = sum(1 for item_id in ranked_ids[:cutoff] if labels[item_id] == query_label)
    precision = tp / cutoff if cutoff else 0.0
    recall = tp / relevant if relevant else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return QueryMetrics(
        query_label=query_label,
        cutoff=cutoff,
        tp=tp,
        relevant=relevant,
        precision=precision,
        recall=recall,
        f1=f1,
    )


def aggregate_metrics(per_query: Sequence[QueryMetrics]) -> MetricsReport:
    """Macro-average over queries."""
    if not per_query:
        raise ValueError("no per-query metrics to aggregate")
    return MetricsReport(
        precision=statistics.fmean(m.precision for m in per_query),
        recall=statistics.fmean(m.recall for m in per_query),
        f1=statistics.fmean(m.f1 for m in per_query),
        per_query=tuple(per_query),
    )


# -- the retrieval experiment ------------------------------------------------------


@dataclass(frozen=True)
class QueryOutcome:
    """Result lists of one query under every ranking being compared."""

    query_label: str
    rankings: dict[str, tuple[str, ...]]
    relevant: frozenset[str]


def run_retrieval_experiment(
    corpus: LabeledCorpus,
    queries: Sequence[tuple[str, np.ndarray]],
    params: GroupParams,
    seed: bytes | str = b"experiment",
    h: int = 100,
    parallel: bool = False,
) -> list[QueryOutcome]:
    """Run full protocol sessions and collect cloud vs. baseline rankings.

    Each outcome carries three rankings over global item ids: ``new_dis``
    (what the cloud returns), ``euc_dis`` (the plaintext Euclidean baseline
    the harness computes for comparison) and ``user`` (the user's local
    re-rank of the returned set).  Each query runs as its own authorized
    user, so sessions are independent and ``parallel`` may fan them out
    over a thread pool without changing any result.
    """
    if not corpus.items:
        raise ValueError("corpus is empty")
    max_pixels = max(item.image.size for item in corpus.items)
    world = World(params, seed, top_h=h, max_image_pixels=max_pixels)
    uids = [f"{EVAL_USER}-{i:03d}" for i in range(len(queries))]
    for uid in uids:
        world.add_user(uid)
    for owner_id, items in sorted(corpus.by_owner().items()):
        world.add_owner(
            owner_id,
            images=[(item.item_id, item.image) for item in items],
            authorize=uids,
        )

    # plaintext features, reused for the Euclidean baseline
    plain = {
        item_id: world.owners[oid].plain_features[item_id]
        for oid, actor in world.owners.items()
        for item_id in actor.plain_features
    }
    owner_of = {item.item_id: item.owner_id for item in corpus.items}
    labels = corpus.labels()

    def run_one(arg: tuple[str, tuple[str, np.ndarray]]) -> QueryOutcome:
        uid, (label, image) = arg
        session = world.run_session(uid, image)
        qf = extract_ehd(image, world.ehd_cfg)
        scored = sorted(
            (int(((f - qf) ** 2).sum()), owner_of[item_id], item_id)
            for item_id, f in plain.items()
        )
        return QueryOutcome(
            query_label=label,
            rankings={
                "new_dis": tuple(item_id for _, item_id in session.returned),
                "euc_dis": tuple(item_id for _, _, item_id in scored[:h]),
                "user": tuple(item_id for _, item_id in session.user_ranking),
            },
            relevant=frozenset(
                item_id for item_id, lbl in labels.items() if lbl == label
            ),
        )

    jobs = list(zip(uids, queries))
    if parallel:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor() as pool:
            return list(pool.map(run_one, jobs))
    return [run_one(job) for job in jobs]


def experiment_metrics(
    outcomes: Sequence[QueryOutcome],
    labels: Mapping[str, str],
    cutoffs: Sequence[int] = (10, 20, 50, 100),
) -> dict[str, dict[int, MetricsReport]]:
    """Aggregate metrics per ranking method per cutoff."""
    methods = sorted(outcomes[0].rankings)
    out: dict[str, dict[int, MetricsReport]] = {}
    for method in methods:
        out[method] = {}
        for cutoff in cutoffs:
            per_query = [
                compute_metrics(o.rankings[method], labels, o.query_label, cutoff)
                for o in outcomes
                if cutoff <= len(o.rankings[method])
            ]
            if per_query:
                out[method][cutoff] = aggregate_metrics(per_query)
    return out


def leakage_histogram(
    outcomes: Sequence[QueryOutcome], deciles: int = 10
) -> dict[str, list[float]]:
    """Fraction of true matches landing in each rank decile, per method.

    Positions are pooled over all queries inside each method's returned
    list; the fractions of one method sum to 1.
    """
    if len(outcomes) < 30:
        warnings.warn(
            f"only {len(outcomes)} queries; decile fractions will be noisy",
            StatisticalPowerWarning,
            stacklevel=2,
        )
    methods = sorted(outcomes[0].rankings)
    histogram: dict[str, list[float]] = {}
    for method in methods:
        counts = [0] * deciles
        total = 0
        for outcome in outcomes:
            ranking = outcome.rankings[method]
            width = len(ranking) / deciles
            for position, item_id in enumerate(ranking):
                if item_id in outcome.relevant:
                    counts[min(int(position / width), deciles - 1)] += 1
                    total += 1
        histogram[method] = [c / total if total else 0.0 for c in counts]
    return histogram


# -- benchmarks --------------------------------------------------------------------


@dataclass(frozen=True)
class BenchRow:
    size: int
    mode: str
    median_seconds: float
    reps: int


@dataclass(frozen=True)
class StorageReport:
    n_features: int
    feature_bytes: int
    index_bytes: int

    @property
    def ratio(self) -> float:
        return self.index_bytes / self.feature_bytes


@dataclass(frozen=True)
class BenchReport:
    rows: tuple[BenchRow, ...]
    storage: StorageReport | None
    rankings_match: bool


BENCH_MODES = ("plain", "enc_no_index", "enc_with_index", "index_build")


def bench(
    sizes: Sequence[int],
    modes: Sequence[str] = BENCH_MODES,
    params: GroupParams | None = None,
    seed: bytes | str = b"bench",
    reps: int = 5,
    dims: int = 80,
    top_h: int = 100,
    with_storage: bool = True,
) -> BenchReport:
    """Time the retrieval paths over synthetic features of each size.

    Rankings of the two encrypted paths are checked for equality; wall
    clock medians are taken over ``reps`` runs per size and mode.
    """
    sizes = list(sizes)
    if sizes != sorted(sizes) or not sizes:
        raise ValueError("sizes must be non-empty and ascending")
    unknown = set(modes) - set(BENCH_MODES)
    if unknown:
        raise ValueError(f"unknown bench modes: {sorted(unknown)}")
    if params is None:
        params = group_crypto.gen_group_params(DESK_SECURITY_BITS, seed)
    if reps < 1:
        raise ValueError("reps must be >= 1")

    rng = np.random.default_rng(int.from_bytes(derive_seed(seed, b"vectors")[:8], "big"))
    largest = sizes[-1]
    vectors = rng.integers(0, 256, size=(largest, dims))
    features = [
        feature_crypto.encrypt_feature_pair(params, vectors[i], derive_seed(seed, f"v{i}"))
        for i in range(largest)
    ]
    sums = [
        SumPair(s1=int(vectors[i].sum()), s2=int((vectors[i].astype(object) ** 2).sum()),
                l=dims)
        for i in range(largest)
    ]
    query_vec = rng.integers(0, 256, size=dims)
    query_enc = feature_crypto.encrypt_feature_pair(params, query_vec, derive_seed(seed, b"q"))
    qs1, qs2 = feature_crypto.recover_sums(params, query_enc)
    query = SumPair(s1=qs1, s2=qs2, l=dims)
    query_plain = [int(v) for v in query_vec]

    def rank_plain(n):
        scored = sorted(
            (sum((int(a) - b) ** 2 for a, b in zip(vectors[i], query_plain)), i)
            for i in range(n)
        )
        return [i for _, i in scored[:top_h]]

    def rank_with_index(n):
        scored = sorted((rank_key(query, sums[i]), i) for i in range(n))
        return [i for _, i in scored[:top_h]]

    def rank_no_index(n):
        scored = []
        for i in range(n):
            s1 = group_crypto.aggregate_and_recover(params, features[i].ef)
            s2 = group_crypto.aggregate_and_recover(params, features[i].eff)
            scored.append((rank_key(query, SumPair(s1=s1, s2=s2, l=dims)), i))
        scored.sort()
        return [i for _, i in scored[:top_h]]

    def build_index(n):
        return [
            (
                group_crypto.aggregate_and_recover(params, features[i].ef),
                group_crypto.aggregate_and_recover(params, features[i].eff),
            )
            for i in range(n)
        ]

    runners = {
        "plain": rank_plain,
        "enc_no_index": rank_no_index,
        "enc_with_index": rank_with_index,
        "index_build": build_index,
    }

    rows = []
    rankings_match = True
    try:
        for size in sizes:
            for mode in modes:
                runner = runners[mode]
                timings = []
                result = None
                for _ in range(reps):
                    start = time.perf_counter()
                    result = runner(size)
                    timings.append(time.perf_counter() - start)
                rows.append(
                    BenchRow(size=size, mode=mode,
                             median_seconds=statistics.median(timings), reps=reps)
                )
                if mode == "enc_no_index" and "enc_with_index" in modes:
                    rankings_match = rankings_match and result == rank_with_index(size)
    except KeyboardInterrupt:
        log.warning("benchmark interrupted; reporting %d completed rows", len(rows))

    storage = None
    if with_storage:
        feature_bytes = sum(
            len(feature_crypto.feature_to_text(f).encode()) for f in features
        )
        index_lines = [INDEX_HEADER]
        index_lines += [
            f"owner-1\timg-{i:05d}\t{sums[i].s1}\t{sums[i].s2}"
            for i in range(largest)
        ]
        storage = StorageReport(
            n_features=largest,
            feature_bytes=feature_bytes,
            index_bytes=len(("\n".join(index_lines) + "\n").encode()),
        )
    return BenchReport(rows=tuple(rows), storage=storage, rankings_match=rankings_match)


# -- plain-text report formatting ---------------------------------------------------


def metrics_tsv(reports: Mapping[str, Mapping[int, MetricsReport]]) -> str:
    lines = ["method\tcutoff\tprecision\trecall\tf1"]
    for method in sorted(reports):
        for cutoff in sorted(reports[method]):
            r = reports[method][cutoff]
            lines.append(
                f"{method}\t{cutoff}\t{r.precision:.4f}\t{r.recall:.4f}\t{r.f1:.4f}"
            )
    return "\n".join(lines) + "\n"


def leakage_tsv(histogram: Mapping[str, Sequence[float]]) -> str:
    methods = sorted(histogram)
    deciles = len(next(iter(histogram.values())))
    lines = ["decile\t" + "\t".join(methods)]
    for d in range(deciles):
        cells = "\t".join(f"{histogram[m][d]:.4f}" for m in methods)
        lines.append(f"{d + 1}\t{cells}")
    return "\n".join(lines) + "\n"


def bench_tsv(report: BenchReport) -> str:
    lines = ["size\tmode\tmedian_seconds\treps"]
    for row in report.rows:
        lines.append(f"{row.size}\t{row.mode}\t{row.median_seconds:.6f}\t{row.reps}")
    if report.storage:
        s = report.storage
        lines.append("")
        lines.append("storage\tn_features\tfeature_bytes\tindex_bytes\tratio")
        lines.append(
            f"storage\t{s.n_features}\t{s.feature_bytes}\t{s.index_bytes}"
            f"\t{s.ratio:.6f}"
        )
    return "\n".join(lines) + "\n"
