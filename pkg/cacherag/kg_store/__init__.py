"""
Indexed triple storage for cacherag

A KnowledgeGraph is built once from TSV lines and is read-only afterwards.
Triples are kept in one list sorted by (subject, predicate, object text), so
point queries, star queries and local-schema lookups are all prefix range
scans located with two binary searches.
"""
import bisect
import calendar
import logging
import re
import time
from dataclasses import dataclass
import datetime as dt
from pathlib import Path
from cacherag import metrics

logger = logging.getLogger(__name__)


class MalformedTripleError(ValueError):
    """A TSV line that cannot be read as a triple."""

    def __init__(self, line_no: int, line: str, reason: str = ''):
        self.line_no = line_no
        self.line = line
        message = f"Malformed triple on line {line_no}: {line.rstrip()!r}"
        if reason:
            message += f" ({reason})"
        super().__init__(message)


_YEAR = re.compile(r'\d{4}')
_YEAR_MONTH = re.compile(r'(\d{4})-(\d{2})')
_END_OF_DAY = dict(hour=23, minute=59, second=59, microsecond=999999)


def _period(value: str) -> tuple[dt.datetime, dt.datetime] | None:
    """First and last instant a date bound covers (a year, a month, a day or
    a timestamp). None when the bound is not a date."""
    try:
        if _YEAR.fullmatch(value):
            year = int(value)
            return dt.datetime(year, 1, 1), dt.datetime(year, 12, 31, **_END_OF_DAY)
        if m := _YEAR_MONTH.fullmatch(value):
            year, month = int(m.group(1)), int(m.group(2))
            last_day = calendar.monthrange(year, month)[1]
            return dt.datetime(year, month, 1), dt.datetime(year, month, last_day, **_END_OF_DAY)
        instant = dt.datetime.fromisoformat(value)
    except ValueError:
        return None
    if instant.tzinfo is not None:
        instant = instant.astimezone(dt.timezone.utc).replace(tzinfo=None)
    if len(value) == 10:
        return instant, instant.replace(**_END_OF_DAY)
    return instant, instant


def _number(value: str) -> float | None:
    try:
        return float(value)
    except ValueError:
        return None


def check_temporal_range(start: str, end: str):
    """Raise ValueError unless start..end is an ordered range. Date bounds of
    any precision compare by the time they cover; other bounds must both be
    numbers."""
    first, last = _period(start), _period(end)
    if first is not None and last is not None:
        if first[0] > last[1]:
            raise ValueError(f"temporal range start {start} is after end {end}")
        return
    low, high = _number(start), _number(end)
    if first is None and last is None and low is not None and high is not None:
        if low > high:
            raise ValueError(f"temporal range start {start} is after end {end}")
        return
    raise ValueError(f"temporal bounds {start} and {end} cannot be ordered")


@dataclass(frozen=True)
class Triple:
    subject: str
    predicate: str
    obj: str
    is_literal: bool = False
    temporal: tuple[str, str] | None = None

    def __post_init__(self):
        if not self.subject or not self.predicate:
            raise ValueError("subject and predicate must be non-empty")
        if self.temporal is not None:
            check_temporal_range(*self.temporal)

    @property
    def object_text(self) -> str:
        return f'"{self.obj}"' if self.is_literal else self.obj

    @property
    def key(self) -> tuple:
        temporal = f"{self.temporal[0]}..{self.temporal[1]}" if self.temporal else ''
        return (self.subject, self.predicate, self.object_text, temporal)

    @property
    def number(self) -> float | None:
        if not self.is_literal:
            return None
        try:
            return float(self.obj)
        except ValueError:
            return None

    @property
    def date(self) -> dt.date | None:
        if not self.is_literal:
            return None
        try:
            return dt.date.fromisoformat(self.obj)
        except ValueError:
            return None

    def canonical(self) -> str:
        """subject<TAB>predicate<TAB>object[<TAB>start..end]"""
        parts = [self.subject, self.predicate, self.object_text]
        if self.temporal:
            parts.append(f"{self.temporal[0]}..{self.temporal[1]}")
        return '\t'.join(parts)

    def __lt__(self, other):
        return self.key < other.key


@dataclass
class LookupStats:
    comparisons: int = 0
    results: int = 0
    elapsed: float = 0.0


def parse_triple_line(line: str, line_no: int = 0) -> Triple | None:
    """Parse one TSV line. Returns None for blank and comment lines."""
    text = line.rstrip('\r\n')
    if not text.strip() or text.lstrip().startswith('#'):
        return None
    fields = text.split('\t')
    if len(fields) not in (3, 4):
        raise MalformedTripleError(line_no, line, f"expected 3 or 4 tab-separated fields, got {len(fields)}")
    subject, predicate, raw_obj = (f.strip() for f in fields[:3])
    if not subject or not predicate:
        raise MalformedTripleError(line_no, line, "empty subject or predicate")

    is_literal = len(raw_obj) >= 2 and raw_obj.startswith('"') and raw_obj.endswith('"')
    obj = raw_obj[1:-1] if is_literal else raw_obj
    if not is_literal and not obj:
        raise MalformedTripleError(line_no, line, "empty object")

    temporal = None
    if len(fields) == 4:
        start, sep, end = fields[3].strip().partition('..')
        if not sep or not start or not end:
            raise MalformedTripleError(line_no, line, "temporal field must be start..end")
        temporal = (start, end)

    try:
        return Triple(subject, predicate, obj, is_literal, temporal)
    except ValueError as e:
        raise MalformedTripleError(line_no, line, str(e)) from e


class KnowledgeGraph:
    """Immutable triple store with a sorted (subject, predicate, object) index."""

    def __init__(self, triples=(), domain_label: str = ''):
        unique = {t.key: t for t in triples}
        self._keys = sorted(unique)
        self.triples = tuple(unique[k] for k in self._keys)
        self.domain_label = domain_label
        self.vocabulary = frozenset(t.predicate for t in self.triples)
        self.entities = sorted({t.subject for t in self.triples})

    # spo_index enumerates exactly the stored triples
    @property
    def spo_index(self):
        return self._keys

    @property
    def predicate_vocabulary(self):
        return self.vocabulary

    def __len__(self):
        return len(self.triples)

    def __contains__(self, triple):
        i = bisect.bisect_left(self._keys, triple.key)
        return i < len(self._keys) and self._keys[i] == triple.key

    def _range(self, prefix: tuple) -> tuple[int, int, int]:
        """Locate the [lo, hi) slice of keys starting with prefix.
        Returns (lo, hi, comparisons)."""
        width = len(prefix)
        comparisons = 0

        def counted(k):
            nonlocal comparisons
            comparisons += 1
            return k[:width]

        lo = bisect.bisect_left(self._keys, prefix, key=counted)
        hi = bisect.bisect_right(self._keys, prefix, lo=lo, key=counted)
        return lo, hi, comparisons

    def _lookup(self, kind: str, prefix: tuple) -> tuple[list[Triple], LookupStats]:
        started = time.perf_counter()
        lo, hi, comparisons = self._range(prefix)
        found = list(self.triples[lo:hi])
        stats = LookupStats(comparisons=comparisons, results=len(found),
                            elapsed=time.perf_counter() - started)
        metrics.record_lookup(kind, comparisons)
        return found, stats

    def point_triples(self, entity: str, predicate: str) -> tuple[list[Triple], LookupStats]:
        return self._lookup('point', (entity, predicate))

    def point_query(self, entity: str, predicate: str) -> tuple[list[str], LookupStats]:
        """Objects of (entity, predicate, ?), sorted by canonical text."""
        found, stats = self.point_triples(entity, predicate)
        return [t.obj for t in found], stats

    def star_triples(self, entity: str) -> tuple[list[Triple], LookupStats]:
        return self._lookup('star', (entity,))

    def star_query(self, entity: str) -> tuple[list[tuple[str, str]], LookupStats]:
        """All outgoing (predicate, object) pairs of entity."""
        found, stats = self.star_triples(entity)
        return [(t.predicate, t.obj) for t in found], stats

    def local_schema(self, entity: str) -> set[str]:
        found, _ = self._lookup('schema', (entity,))
        return {t.predicate for t in found}

    def stats(self) -> dict:
        return {
            'domain': self.domain_label,
            'triples': len(self.triples),
            'entities': len(self.entities),
            'predicates': len(self.vocabulary),
            'literals': sum(1 for t in self.triples if t.is_literal),
            'temporal': sum(1 for t in self.triples if t.temporal),
        }


def load_triples(source, domain_label: str = '') -> KnowledgeGraph:
    """Build a graph from an iterable of TSV lines. Duplicates are merged."""
    triples = []
    for line_no, line in enumerate(source, start=1):
        triple = parse_triple_line(line, line_no)
        if triple is not None:
            triples.append(triple)
    kg = KnowledgeGraph(triples, domain_label)
    if len(kg) != len(triples):
        logger.info("Merged %s duplicate triples", len(triples) - len(kg))
    return kg


def load_triples_file(path, domain_label: str = '') -> KnowledgeGraph:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"KG file not found: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        kg = load_triples(f, domain_label or path.stem)
    logger.info("Loaded %s triples from %s (domain %s)", len(kg), path, kg.domain_label)
    return kg


def export_triples(kg: KnowledgeGraph, sink):
    """Write canonical, sorted lines to a text sink."""
    for triple in kg.triples:
        sink.write(triple.canonical() + '\n')


def point_query(kg: KnowledgeGraph, entity: str, predicate: str):
    return kg.point_query(entity, predicate)


def star_query(kg: KnowledgeGraph, entity: str):
    return kg.star_query(entity)


def local_schema(kg: KnowledgeGraph, entity: str) -> set[str]:
    return kg.local_schema(entity)
