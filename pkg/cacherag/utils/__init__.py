"""
Utility functions for cacherag
"""
import re

_TOKEN_RE = re.compile(r"[^\w\s]", re.UNICODE)
_CAMEL_RE = re.compile(r"(?<=[a-z0-9])(?=[A-Z])")
_QUOTES = '"\'“”‘’'


def tokenize(text: str) -> list[str]:
    """Lowercase, strip punctuation, split on whitespace."""
    if not text:
        return []
    return _TOKEN_RE.sub(' ', text.lower()).split()


def humanize_predicate(predicate: str) -> str:
    """directedBy -> 'directed by', release_date -> 'release date'"""
    spaced = _CAMEL_RE.sub(' ', predicate).replace('_', ' ')
    return ' '.join(spaced.lower().split())


def predicate_tokens(predicate: str) -> list[str]:
    return tokenize(humanize_predicate(predicate))


def strip_quotes(value: str) -> str:
    value = value.strip()
    while len(value) >= 2 and value[0] in _QUOTES and value[-1] in _QUOTES:
        value = value[1:-1].strip()
    return value


def human_readable_size(size_bytes):
    """Convert bytes to human readable format"""
    if size_bytes == 0:
        return "0 B"
    units = ['B', 'KB', 'MB', 'GB', 'TB']
    i = 0
    size = float(size_bytes)
    while size >= 1024 and i < len(units) - 1:
        size /= 1024
        i += 1
    return f"{size:.2f} {units[i]}"


def format_duration(seconds):
    """Format a duration for status lines (ms below one second)."""
    if seconds < 1:
        return f"{seconds * 1000:.1f} ms"
    if seconds < 60:
        return f"{seconds:.2f} s"
    minutes, secs = divmod(int(seconds), 60)
    return f"{minutes}m {secs}s"


def parse_key_lines(text: str) -> list[tuple[str, str]]:
    """Parse `KEY: value` lines of a completion. Keys are uppercased; lines
    without a colon-key are skipped."""
    pairs = []
    for raw in (text or '').splitlines():
        line = raw.strip().lstrip('-*').strip()
        if ':' not in line:
            continue
        key, _, value = line.partition(':')
        key = key.strip().upper().replace(' ', '_')
        if not key or not re.fullmatch(r"[A-Z_][A-Z0-9_]*", key):
            continue
        pairs.append((key, value.strip()))
    return pairs
