"""
Prometheus metrics module for cacherag
"""
from prometheus_client import Counter, Gauge, Histogram, Info, generate_latest

# Application info
app_info = Info('cacherag', 'cacherag engine information')
app_info.info({'version': '0.1.0', 'name': 'cacherag'})

# LLM calls
llm_calls_total = Counter(
    'cacherag_llm_calls_total',
    'Total number of LLM completions',
    ['template', 'backend']  # backend: live, scripted
)

llm_latency_seconds = Histogram(
    'cacherag_llm_latency_seconds',
    'Latency of LLM completions in seconds',
    ['template'],
    buckets=[0.001, 0.01, 0.1, 0.5, 1, 2, 5, 10, 30]
)

llm_errors_total = Counter(
    'cacherag_llm_errors_total',
    'Total number of LLM errors',
    ['template', 'error_type']  # error_type: transport, http, timeout, usage
)

llm_retries_total = Counter(
    'cacherag_llm_retries_total',
    'Total number of live backend retries'
)

# Semantic cache
cache_lookups_total = Counter(
    'cacherag_cache_lookups_total',
    'Total number of cache retrievals',
    ['result']  # hit: non-empty selection, miss: empty
)

cache_inserts_total = Counter(
    'cacherag_cache_inserts_total',
    'Total number of cache inserts'
)

cache_evictions_total = Counter(
    'cacherag_cache_evictions_total',
    'Total number of LRU evictions'
)

cache_entries = Gauge(
    'cacherag_cache_entries',
    'Number of entries currently held in the cache'
)

# Expansion and answers
expansion_iterations = Histogram(
    'cacherag_expansion_iterations',
    'Expansion iterations per traversal',
    buckets=[0, 1, 2, 3, 5, 8]
)

answers_total = Counter(
    'cacherag_answers_total',
    'Total number of answered questions',
    ['status']  # ANSWERED, FALLBACK
)

# KG lookups
kg_lookup_comparisons = Histogram(
    'cacherag_kg_lookup_comparisons',
    'Key comparisons per KG lookup',
    ['kind'],  # point, star, schema
    buckets=[4, 8, 16, 24, 32, 48, 64]
)


def get_metrics():
    """Generate Prometheus metrics output"""
    return generate_latest()


# Helper functions for updating metrics

def record_llm_call(template: str, backend: str, latency_seconds: float):
    """Record a completed LLM call"""
    llm_calls_total.labels(template=template, backend=backend).inc()
    llm_latency_seconds.labels(template=template).observe(max(latency_seconds, 0.0))


def record_llm_error(template: str, error_type: str = 'unknown'):
    """Record a failed LLM call"""
    llm_errors_total.labels(template=template, error_type=error_type).inc()


def record_llm_retry():
    llm_retries_total.inc()


def record_cache_lookup(hit: bool):
    cache_lookups_total.labels(result='hit' if hit else 'miss').inc()


def record_cache_insert(total_entries: int):
    cache_inserts_total.inc()
    cache_entries.set(total_entries)


def record_cache_eviction(total_entries: int):
    cache_evictions_total.inc()
    cache_entries.set(total_entries)


def update_cache_size(total_entries: int):
    cache_entries.set(total_entries)


def record_traversal(iterations: int):
    expansion_iterations.observe(iterations)


def record_answer(status: str):
    answers_total.labels(status=status).inc()


def record_lookup(kind: str, comparisons: int):
    kg_lookup_comparisons.labels(kind=kind).observe(comparisons)
