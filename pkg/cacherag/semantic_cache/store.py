"""
Cache persistence: one JSON object per line, keys in the fixed order
id, domain, aspect, question, plan, answer, last_used. The plan is its
OP-line wire text.
"""
import json
import logging
from pathlib import Path
from cacherag.query_compiler import PlanFormatError, QueryPlan
from cacherag.semantic_cache import CacheConfig, CacheEntry, SemanticCache

logger = logging.getLogger(__name__)

FIELDS = ('id', 'domain', 'aspect', 'question', 'plan', 'answer', 'last_used')


class CacheFormatError(ValueError):
    """A persisted cache line that cannot be restored."""


def entry_to_line(entry: CacheEntry) -> str:
    record = {
        'id': entry.id,
        'domain': entry.domain,
        'aspect': entry.aspect,
        'question': entry.question,
        'plan': entry.plan.serialize(),
        'answer': entry.answer,
        'last_used': entry.last_used,
    }
    return json.dumps(record, ensure_ascii=False)


def line_to_entry(line: str, line_no: int = 0) -> CacheEntry:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as e:
        raise CacheFormatError(f"Line {line_no}: not JSON ({e})") from e
    if not isinstance(record, dict):
        raise CacheFormatError(f"Line {line_no}: expected an object")
    missing = [f for f in FIELDS if f not in record]
    if missing:
        raise CacheFormatError(f"Line {line_no}: missing field(s) {', '.join(missing)}")
    try:
        plan = QueryPlan.parse(record['plan'])
    except PlanFormatError as e:
        raise CacheFormatError(f"Line {line_no}: bad plan ({e})") from e
    if not len(plan):
        raise CacheFormatError(f"Line {line_no}: empty plan")
    try:
        return CacheEntry(int(record['id']), str(record['domain']), str(record['aspect']),
                          str(record['question']), plan, str(record['answer']), int(record['last_used']))
    except (TypeError, ValueError) as e:
        raise CacheFormatError(f"Line {line_no}: {e}") from e


def export_cache(cache: SemanticCache, sink) -> int:
    """Write every entry, ids ascending. Returns the number written."""
    count = 0
    for entry in cache.entries():
        sink.write(entry_to_line(entry) + '\n')
        count += 1
    return count


def import_cache(source, config: CacheConfig | None = None) -> SemanticCache:
    cache = SemanticCache(config)
    seen = set()
    for line_no, line in enumerate(source, start=1):
        if not line.strip():
            continue
        entry = line_to_entry(line, line_no)
        if entry.id in seen:
            raise CacheFormatError(f"Line {line_no}: duplicate id {entry.id}")
        seen.add(entry.id)
        cache.restore(entry)
    return cache


def save_cache(cache: SemanticCache, path) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + '.tmp')
    with open(tmp, 'w', encoding='utf-8') as f:
        count = export_cache(cache, f)
    tmp.replace(path)
    logger.info("Saved %s cache entries to %s", count, path)
    return count


def load_cache(path, config: CacheConfig | None = None) -> SemanticCache:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Cache file not found: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        cache = import_cache(f, config)
    logger.info("Loaded %s cache entries from %s", len(cache), path)
    return cache


# Process-wide cache the CLI works against (initialized from config)
cache_instance = None


def init_cache(config: CacheConfig | None = None, path=None) -> SemanticCache:
    """Initialize the process-wide cache, from a file when it exists."""
    global cache_instance
    if path and Path(path).exists():
        cache_instance = load_cache(path, config)
    else:
        cache_instance = SemanticCache(config)
    return cache_instance


def get_cache() -> SemanticCache:
    """Get the process-wide cache"""
    return cache_instance
