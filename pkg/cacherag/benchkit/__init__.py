"""
Synthetic KGs and the lookup scalability harness for cacherag

Graphs get Zipf-distributed entity out-degrees (roughly the shape of a
public encyclopedic KG). The harness runs batches of point and star queries
per size and reports mean comparison counts and wall-clock per query; the
counts are expected to grow as a + b*log2(n).
"""
import csv
import logging
import time
from dataclasses import dataclass, field
import numpy as np
from cacherag.kg_store import KnowledgeGraph, Triple

logger = logging.getLogger(__name__)

DEFAULT_SIZES = "40000x2^6"
DEFAULT_QUERIES = 50
ENTITY_OBJECT_SHARE = 0.8
LITERAL_RANGE = 1_000_000
MAX_TOP_UP_ROUNDS = 50
CSV_COLUMNS = ('n_triples', 'query_kind', 'mean_comparisons', 'mean_elapsed', 'query_count')


@dataclass(frozen=True)
class SynthSpec:
    n_triples: int
    seed: int
    zipf_exponent: float = 2.5
    predicate_pool: int = 500

    def __post_init__(self):
        if self.n_triples < 1:
            raise ValueError(f"n_triples must be at least 1, got {self.n_triples}")
        if self.zipf_exponent <= 1:
            raise ValueError(f"zipf_exponent must be greater than 1, got {self.zipf_exponent}")
        if self.predicate_pool < 1:
            raise ValueError(f"predicate_pool must be at least 1, got {self.predicate_pool}")

    @property
    def max_degree(self) -> int:
        return self.predicate_pool * 20


def _draw_degrees(rng, spec: SynthSpec) -> np.ndarray:
    """Out-degrees for just enough entities to reach the triple target.
    The last entity's degree is cut so the sum is exactly n_triples."""
    degrees = np.minimum(rng.zipf(spec.zipf_exponent, size=spec.n_triples), spec.max_degree)
    totals = np.cumsum(degrees)
    count = int(np.searchsorted(totals, spec.n_triples)) + 1
    degrees = degrees[:count].copy()
    degrees[-1] -= int(totals[count - 1]) - spec.n_triples
    return degrees


def _make_triples(rng, subjects: np.ndarray, entity_count: int, pool: int):
    size = len(subjects)
    predicates = rng.integers(0, pool, size=size)
    is_entity = rng.random(size) < ENTITY_OBJECT_SHARE
    entity_objects = rng.integers(0, entity_count, size=size)
    literal_objects = rng.integers(0, LITERAL_RANGE, size=size)
    for s, p, ent, e_obj, l_obj in zip(subjects.tolist(), predicates.tolist(), is_entity.tolist(),
                                       entity_objects.tolist(), literal_objects.tolist()):
        if ent:
            yield (f"Q{s}", f"P{p}", f"Q{e_obj}", False)
        else:
            yield (f"Q{s}", f"P{p}", str(l_obj), True)


def synth_kg(spec: SynthSpec, domain_label: str = 'synthetic') -> KnowledgeGraph:
    """Deterministic per spec. Duplicates are replaced by fresh triples on
    random existing subjects until the exact target is met."""
    rng = np.random.default_rng(spec.seed)
    degrees = _draw_degrees(rng, spec)
    entity_count = len(degrees)
    subjects = np.repeat(np.arange(entity_count), degrees)

    seen = {}
    for row in _make_triples(rng, subjects, entity_count, spec.predicate_pool):
        seen.setdefault(row, None)

    rounds = 0
    while len(seen) < spec.n_triples and rounds < MAX_TOP_UP_ROUNDS:
        missing = spec.n_triples - len(seen)
        extra = rng.integers(0, entity_count, size=missing)
        for row in _make_triples(rng, extra, entity_count, spec.predicate_pool):
            seen.setdefault(row, None)
        rounds += 1
    if len(seen) < spec.n_triples:
        logger.warning("Synthetic KG stopped at %s of %s triples", len(seen), spec.n_triples)

    triples = [Triple(s, p, o, lit) for (s, p, o, lit) in seen]
    kg = KnowledgeGraph(triples[:spec.n_triples], domain_label)
    logger.info("Synthesized %s triples over %s entities (exponent %s, seed %s)",
                len(kg), len(kg.entities), spec.zipf_exponent, spec.seed)
    return kg


def degree_slope(kg: KnowledgeGraph, max_degree: int = 10, min_count: int = 5) -> float:
    """Log-log slope of the out-degree frequency distribution over degrees
    1..max_degree that occur at least min_count times."""
    degrees = np.unique([t.subject for t in kg.triples], return_counts=True)[1]
    values, counts = np.unique(degrees, return_counts=True)
    mask = (values <= max_degree) & (counts >= min_count)
    if mask.sum() < 2:
        raise ValueError("Not enough distinct degrees to fit a slope")
    slope, _ = np.polyfit(np.log(values[mask]), np.log(counts[mask]), 1)
    return float(slope)


@dataclass
class ScalabilityRow:
    n_triples: int
    query_kind: str
    mean_comparisons: float
    mean_elapsed: float
    query_count: int


@dataclass
class ScalabilityReport:
    rows: list = field(default_factory=list)
    seed: int = 0
    zipf_exponent: float = 2.5

    def of(self, kind: str) -> list[ScalabilityRow]:
        return [r for r in self.rows if r.query_kind == kind]

    def to_csv(self, sink):
        writer = csv.writer(sink, lineterminator='\n')
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            writer.writerow([r.n_triples, r.query_kind, f"{r.mean_comparisons:.3f}",
                             f"{r.mean_elapsed:.9f}", r.query_count])


@dataclass(frozen=True)
class LogFit:
    a: float
    b: float
    r2: float

    def predict(self, n: int) -> float:
        return self.a + self.b * float(np.log2(n))


def _run_batch(kind: str, lookups) -> tuple[float, float, int]:
    comparisons = []
    elapsed = []
    for lookup in lookups:
        started = time.perf_counter()
        _, stats = lookup()
        elapsed.append(time.perf_counter() - started)
        comparisons.append(stats.comparisons)
    if not comparisons:
        return 0.0, 0.0, 0
    logger.debug("%s batch: %s queries", kind, len(comparisons))
    return float(np.mean(comparisons)), float(np.mean(elapsed)), len(comparisons)


def measure(kg: KnowledgeGraph, queries_per_kind: int, seed: int) -> list[ScalabilityRow]:
    """Point targets come from stored triples, star targets from subjects."""
    rng = np.random.default_rng(seed)
    n = len(kg)
    point_idx = rng.choice(n, size=min(queries_per_kind, n), replace=False)
    star_idx = rng.choice(len(kg.entities), size=min(queries_per_kind, len(kg.entities)), replace=False)
    point_targets = [(kg.triples[i].subject, kg.triples[i].predicate) for i in point_idx.tolist()]
    star_targets = [kg.entities[i] for i in star_idx.tolist()]

    rows = []
    mean_c, mean_t, count = _run_batch('point', (lambda e=e, p=p: kg.point_query(e, p) for e, p in point_targets))
    rows.append(ScalabilityRow(n, 'point', mean_c, mean_t, count))
    mean_c, mean_t, count = _run_batch('star', (lambda e=e: kg.star_query(e) for e in star_targets))
    rows.append(ScalabilityRow(n, 'star', mean_c, mean_t, count))
    return rows


def run_scalability(sizes, queries_per_kind: int = DEFAULT_QUERIES, seed: int = 0,
                    zipf_exponent: float = 2.5) -> ScalabilityReport:
    """Build one synthetic KG per size and time batches of point and star
    queries. Elapsed time covers the queries only, never the index build."""
    sizes = list(sizes)
    if not sizes:
        raise ValueError("At least one size is required")
    if sizes != sorted(sizes):
        raise ValueError(f"Sizes must be ascending, got {sizes}")
    if queries_per_kind < 1:
        raise ValueError(f"queries_per_kind must be at least 1, got {queries_per_kind}")

    report = ScalabilityReport(seed=seed, zipf_exponent=zipf_exponent)
    for i, n in enumerate(sizes):
        started = time.perf_counter()
        kg = synth_kg(SynthSpec(n, seed + i, zipf_exponent))
        rows = measure(kg, queries_per_kind, seed + i)
        report.rows.extend(rows)
        logger.info("Size %s: point %.2f, star %.2f comparisons (%.1fs)", n,
                    rows[0].mean_comparisons, rows[1].mean_comparisons, time.perf_counter() - started)
    return report


def fit_log_growth(report: ScalabilityReport, kind: str = 'point', value: str = 'mean_comparisons') -> LogFit:
    """Least-squares fit of value = a + b * log2(n)."""
    rows = report.of(kind)
    if len(rows) < 2:
        raise ValueError(f"Need at least two sizes to fit, got {len(rows)}")
    x = np.log2([r.n_triples for r in rows])
    y = np.array([getattr(r, value) for r in rows], dtype=float)
    b, a = np.polyfit(x, y, 1)
    residual = float(np.sum((y - (a + b * x)) ** 2))
    total = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if total == 0 else 1.0 - residual / total
    return LogFit(float(a), float(b), r2)


def parse_sizes(text: str) -> list[int]:
    """'40000x2^6' -> 40000 * 2**i for i in 0..5; '1000,2000' is a plain list."""
    text = text.strip().replace(' ', '')
    if not text:
        raise ValueError("Empty size specification")
    if 'x' in text:
        base, _, growth = text.partition('x')
        factor, sep, steps = growth.partition('^')
        if not sep:
            raise ValueError(f"Expected BASExFACTOR^STEPS, got {text!r}")
        try:
            base, factor, steps = int(base), int(factor), int(steps)
        except ValueError as e:
            raise ValueError(f"Bad size specification {text!r}") from e
        if base < 1 or factor < 2 or steps < 1:
            raise ValueError(f"Bad size specification {text!r}")
        return [base * factor ** i for i in range(steps)]
    try:
        sizes = [int(part) for part in text.split(',') if part]
    except ValueError as e:
        raise ValueError(f"Bad size list {text!r}") from e
    if any(s < 1 for s in sizes):
        raise ValueError(f"Sizes must be positive, got {sizes}")
    return sizes
