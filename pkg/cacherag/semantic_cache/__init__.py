"""
Semantic cache for cacherag

Stores (question, plan, answer) tuples under a two-layer Domain -> Aspect
index and selects few-shot examples with greedy maximal marginal relevance
over BM25 similarity. With a capacity set, each bucket is an LRU keyed on a
logical clock.
"""
import logging
import threading
from dataclasses import dataclass, field
from cacherag import metrics
from cacherag.query_compiler import QueryPlan, validate
from cacherag.semantic_cache.bm25 import SimilarityPool, bm25_scores

logger = logging.getLogger(__name__)

GLOBAL_DOMAIN = '_global'
ALL_ASPECTS = '_all'


@dataclass
class CacheEntry:
    id: int
    domain: str
    aspect: str
    question: str
    plan: QueryPlan
    answer: str
    last_used: int = 0


@dataclass(frozen=True)
class CacheConfig:
    lam: float = 0.5
    k: int = 5
    capacity: int | None = None
    relevance_floor: float = 0.1
    single_domain: bool = False
    aspect_index: bool = True
    use_mmr: bool = True

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must be within [0, 1], got {self.lam}")
        if self.k < 1:
            raise ValueError(f"k must be at least 1, got {self.k}")
        if self.capacity is not None and self.capacity < 1:
            raise ValueError(f"capacity must be at least 1, got {self.capacity}")
        if not 0.0 <= self.relevance_floor <= 1.0:
            raise ValueError(f"relevance_floor must be within [0, 1], got {self.relevance_floor}")

    @classmethod
    def from_config(cls, cfg) -> 'CacheConfig':
        return cls(lam=cfg.lam, k=cfg.k, capacity=cfg.capacity, relevance_floor=cfg.relevance_floor,
                   single_domain=cfg.single_domain, aspect_index=cfg.aspect_index, use_mmr=cfg.use_mmr)


@dataclass
class RetrievalReport:
    domain: str
    aspect: str
    bucket_size: int = 0
    relaxed: bool = False
    scored_ids: list = field(default_factory=list)
    excluded_below_floor: list = field(default_factory=list)
    pairwise_evaluations: int = 0
    selected_ids: list = field(default_factory=list)


def mmr_select(query: str, candidates: list, pool: SimilarityPool, lam: float, k: int,
               floor: float) -> tuple[list, list]:
    """Greedy MMR over candidates (pool index i <-> candidates[i]).

    Returns (selected pool indexes in pick order, indexes excluded by the floor).
    The best max-similarity to the selection is kept per candidate and updated
    after each pick, so pair evaluations stay within (k - 1) * len(candidates).
    """
    relevance = pool.relevance(query)
    excluded = [i for i in range(len(candidates)) if relevance[i] < floor]
    remaining = [i for i in range(len(candidates)) if relevance[i] >= floor]
    max_sim = {i: 0.0 for i in remaining}
    selected = []
    while remaining and len(selected) < k:
        best, best_score = None, None
        for i in remaining:
            diversity = max_sim[i] if selected else 0.0
            score = lam * relevance[i] - (1 - lam) * diversity
            if best is None or score > best_score or (score == best_score and candidates[i].id < candidates[best].id):
                best, best_score = i, score
        selected.append(best)
        remaining.remove(best)
        if len(selected) < k:
            for i in remaining:
                sim = pool.pair(i, best)
                if sim > max_sim[i]:
                    max_sim[i] = sim
    return selected, excluded


def top_k_select(query: str, candidates: list, pool: SimilarityPool, k: int, floor: float) -> tuple[list, list]:
    relevance = pool.relevance(query)
    excluded = [i for i in range(len(candidates)) if relevance[i] < floor]
    kept = [i for i in range(len(candidates)) if relevance[i] >= floor]
    kept.sort(key=lambda i: (-relevance[i], candidates[i].id))
    return kept[:k], excluded


class SemanticCache:
    """Two-layer cache. One writer at a time; retrievals score outside the lock
    and only take it to stamp last_used."""

    def __init__(self, config: CacheConfig | None = None):
        self.config = config or CacheConfig()
        self._buckets = {}  # domain -> aspect -> list[CacheEntry] (id order)
        self._lock = threading.RLock()
        self._clock = 0
        self._next_id = 1
        self.hits = 0
        self.misses = 0
        self.evictions = 0

    # -- keys ---------------------------------------------------------------

    def bucket_key(self, domain: str, aspect: str) -> tuple[str, str]:
        domain = GLOBAL_DOMAIN if self.config.single_domain else domain
        aspect = aspect if self.config.aspect_index else ALL_ASPECTS
        return domain, aspect

    def tick(self) -> int:
        with self._lock:
            self._clock += 1
            return self._clock

    @property
    def clock(self) -> int:
        return self._clock

    # -- reads --------------------------------------------------------------

    def __len__(self):
        with self._lock:
            return sum(len(b) for aspects in self._buckets.values() for b in aspects.values())

    def entries(self) -> list[CacheEntry]:
        with self._lock:
            found = [e for aspects in self._buckets.values() for b in aspects.values() for e in b]
        return sorted(found, key=lambda e: e.id)

    def bucket(self, domain: str, aspect: str) -> list[CacheEntry]:
        d, a = self.bucket_key(domain, aspect)
        with self._lock:
            return list(self._buckets.get(d, {}).get(a, []))

    def contains(self, domain: str, aspect: str, question: str) -> bool:
        return any(e.question == question for e in self.bucket(domain, aspect))

    def retrieve(self, query: str, domain: str, aspect: str) -> list[CacheEntry]:
        return self.retrieve_with_report(query, domain, aspect)[0]

    def retrieve_with_report(self, query: str, domain: str, aspect: str) -> tuple[list, RetrievalReport]:
        d, a = self.bucket_key(domain, aspect)
        report = RetrievalReport(domain=d, aspect=a)
        with self._lock:
            aspects = self._buckets.get(d)
            if aspects is None:
                candidates = []
            else:
                candidates = list(aspects.get(a, []))
                report.bucket_size = len(candidates)
                if len(candidates) < self.config.k:
                    # Relax to every aspect under the domain
                    candidates = sorted((e for b in aspects.values() for e in b), key=lambda e: e.id)
                    report.relaxed = True

        if not candidates:
            self._count_lookup(False)
            return [], report

        pool = SimilarityPool([e.question for e in candidates])
        cfg = self.config
        if cfg.use_mmr:
            picked, excluded = mmr_select(query, candidates, pool, cfg.lam, cfg.k, cfg.relevance_floor)
        else:
            picked, excluded = top_k_select(query, candidates, pool, cfg.k, cfg.relevance_floor)
        selected = [candidates[i] for i in picked]

        report.scored_ids = [e.id for e in candidates]
        report.excluded_below_floor = [candidates[i].id for i in excluded]
        report.pairwise_evaluations = pool.pairwise_evaluations
        report.selected_ids = [e.id for e in selected]

        if selected:
            with self._lock:
                now = self.tick()
                for entry in selected:
                    entry.last_used = now
        self._count_lookup(bool(selected))
        return selected, report

    def _count_lookup(self, hit: bool):
        with self._lock:
            if hit:
                self.hits += 1
            else:
                self.misses += 1
        metrics.record_cache_lookup(hit)

    # -- writes -------------------------------------------------------------

    def insert(self, domain: str, aspect: str, question: str, plan: QueryPlan, answer: str,
               vocabulary=None) -> CacheEntry:
        if not plan or not len(plan):
            raise ValueError("Cannot cache an empty plan")
        if vocabulary is not None:
            problems = validate(plan, vocabulary)
            if problems:
                raise ValueError(f"Plan does not validate against the KG vocabulary: {'; '.join(problems)}")
        d, a = self.bucket_key(domain, aspect)
        with self._lock:
            entry = CacheEntry(self._next_id, d, a, question, plan, answer, self.tick())
            self._next_id += 1
            bucket = self._buckets.setdefault(d, {}).setdefault(a, [])
            self._evict_for(bucket)
            bucket.append(entry)
            total = len(self)
        metrics.record_cache_insert(total)
        logger.debug("Cached entry %s under %s/%s", entry.id, d, a)
        return entry

    def _evict_for(self, bucket: list):
        capacity = self.config.capacity
        if capacity is None:
            return
        while len(bucket) >= capacity:
            victim = min(bucket, key=lambda e: (e.last_used, e.id))
            bucket.remove(victim)
            self.evictions += 1
            metrics.record_cache_eviction(len(self))
            logger.debug("Evicted entry %s from %s/%s", victim.id, victim.domain, victim.aspect)

    def restore(self, entry: CacheEntry):
        """Put back a persisted entry as-is (ids and ticks kept)."""
        with self._lock:
            d, a = self.bucket_key(entry.domain, entry.aspect)
            entry.domain, entry.aspect = d, a
            bucket = self._buckets.setdefault(d, {}).setdefault(a, [])
            self._evict_for(bucket)
            bucket.append(entry)
            bucket.sort(key=lambda e: e.id)
            self._next_id = max(self._next_id, entry.id + 1)
            self._clock = max(self._clock, entry.last_used)
        metrics.update_cache_size(len(self))

    # -- reporting ----------------------------------------------------------

    def stats(self) -> dict:
        from cacherag.semantic_cache.store import entry_to_line

        with self._lock:
            buckets = {
                f"{d}/{a}": len(b)
                for d, aspects in sorted(self._buckets.items())
                for a, b in sorted(aspects.items())
                if b
            }
            entries = [e for aspects in self._buckets.values() for b in aspects.values() for e in b]
            return {
                'entries': len(entries),
                'buckets': buckets,
                'hits': self.hits,
                'misses': self.misses,
                'evictions': self.evictions,
                'bytes': sum(len(entry_to_line(e).encode('utf-8')) + 1 for e in entries),
                'capacity': self.config.capacity,
                'clock': self._clock,
            }


__all__ = [
    'CacheConfig', 'CacheEntry', 'RetrievalReport', 'SemanticCache', 'SimilarityPool',
    'bm25_scores', 'mmr_select', 'top_k_select', 'GLOBAL_DOMAIN', 'ALL_ASPECTS',
]
