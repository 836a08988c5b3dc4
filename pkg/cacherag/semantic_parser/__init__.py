"""
Logical parsing for cacherag: ISR extraction, domain routing over a dynamic
description cache, and aspect derivation for the cache index.
"""
import logging
import re
import threading
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from cacherag.config import ASPECTS_FILE
from cacherag.llm_adapter import TemplateId
from cacherag.utils import humanize_predicate, parse_key_lines, strip_quotes

logger = logging.getLogger(__name__)

GENERAL_ASPECT = 'general'

_QUESTION_WORDS = {
    'who', 'what', 'which', 'when', 'where', 'why', 'how', 'whom', 'whose',
    'is', 'are', 'was', 'were', 'did', 'does', 'do', 'can', 'could', 'has',
    'have', 'had', 'in', 'on', 'the', 'a', 'an', 'list', 'name', 'tell', 'give',
}


class IsrParseError(ValueError):
    """The ISR completion could not be read."""


class RoutingError(ValueError):
    """Domain routing was called without candidates or misused."""


@dataclass(frozen=True)
class QueryContext:
    question: str
    query_time: datetime = field(default_factory=lambda: datetime.now(timezone.utc))

    def __post_init__(self):
        if not self.question or not self.question.strip():
            raise ValueError("question must be non-empty")

    @property
    def iso_time(self) -> str:
        return self.query_time.isoformat()


@dataclass
class ISR:
    raw_entity: str
    constraints: list = field(default_factory=list)
    domain_hint: str = ''
    # Problems noticed while parsing (dropped constraints, fallbacks)
    flags: list = field(default_factory=list)


@dataclass(frozen=True)
class DomainDescription:
    domain: str
    description: str
    version: int = 0


@dataclass(frozen=True)
class RouteDecision:
    domain: str
    reasoning: str = ''
    fallback: bool = False


# ---------------------------------------------------------------------------
# ISR extraction
# ---------------------------------------------------------------------------

def parse_isr(text: str) -> ISR:
    entity = None
    constraints = []
    domain = ''
    for key, value in parse_key_lines(text):
        value = strip_quotes(value)
        if key == 'ENTITY' and entity is None and value:
            entity = value
        elif key == 'CONSTRAINT' and value:
            constraints.append(value)
        elif key == 'DOMAIN' and not domain:
            domain = value.lower()
    if not entity:
        raise IsrParseError("ISR completion has no ENTITY line")
    return ISR(entity, constraints, domain)


def fallback_entity(question: str) -> str:
    """Longest run of capitalized words, skipping leading question words."""
    words = re.findall(r"[\w'’.-]+", question)
    best, run = '', []

    def close():
        nonlocal best
        span = ' '.join(run).strip(".'’")
        if len(span) > len(best):
            best = span

    for word in words:
        if word[:1].isupper() and not (not run and word.lower() in _QUESTION_WORDS):
            run.append(word)
        else:
            if run:
                close()
            run = []
    if run:
        close()
    return best or question.strip().rstrip('?')


def _schema_agnostic(isr: ISR, vocabulary) -> ISR:
    if not vocabulary:
        return isr
    vocabulary = set(vocabulary)
    cleaned = []
    for constraint in isr.constraints:
        if constraint not in vocabulary:
            cleaned.append(constraint)
            continue
        rewritten = humanize_predicate(constraint)
        if rewritten in vocabulary:
            isr.flags.append(f"dropped constraint {constraint!r}: equals a schema predicate")
            logger.warning("Dropped schema-specific constraint %r", constraint)
            continue
        isr.flags.append(f"rewrote constraint {constraint!r} as {rewritten!r}")
        cleaned.append(rewritten)
    isr.constraints = cleaned
    return isr


def extract_isr(ctx: QueryContext, llm, vocabulary=None) -> ISR:
    """Parse the ISR_EXTRACT completion. Raises IsrParseError when there is no
    ENTITY line; callers fall back to fallback_isr()."""
    completion = llm.complete(TemplateId.ISR_EXTRACT, {
        'question': ctx.question,
        'query_time': ctx.iso_time,
    })
    isr = parse_isr(completion.text)
    return _schema_agnostic(isr, vocabulary)


def fallback_isr(ctx: QueryContext, reason: str = '') -> ISR:
    entity = fallback_entity(ctx.question)
    isr = ISR(entity, [ctx.question], '')
    isr.flags.append(f"ISR parse failed ({reason}); using capitalized span {entity!r}")
    return isr


# ---------------------------------------------------------------------------
# Aspect derivation
# ---------------------------------------------------------------------------

def load_aspect_table(path=None) -> list[tuple[str, tuple]]:
    """Read the aspect keyword table; list order is priority."""
    path = Path(path) if path else ASPECTS_FILE
    with open(path, 'rb') as f:
        data = tomllib.load(f)
    table = []
    for aspect, keywords in data.items():
        if isinstance(keywords, str):
            keywords = [keywords]
        table.append((aspect, tuple(k.lower() for k in keywords)))
    return table


_aspect_table = None
_aspect_lock = threading.Lock()


def default_aspect_table():
    global _aspect_table
    with _aspect_lock:
        if _aspect_table is None:
            _aspect_table = load_aspect_table()
        return _aspect_table


def derive_aspect(isr: ISR, table=None) -> str:
    table = table if table is not None else default_aspect_table()
    lowered = [c.lower() for c in isr.constraints]
    for aspect, keywords in table:
        if any(k in c for c in lowered for k in keywords):
            return aspect
    return GENERAL_ASPECT


# ---------------------------------------------------------------------------
# Domain routing and the description cache
# ---------------------------------------------------------------------------

def format_descriptions(descriptions) -> str:
    return '\n'.join(f"[{d.domain}]: {d.description}" for d in descriptions)


def route_domain(ctx: QueryContext, descriptions, llm) -> RouteDecision:
    descriptions = list(descriptions)
    if not descriptions:
        raise RoutingError("No domain descriptions to route over")
    if len(descriptions) == 1:
        return RouteDecision(descriptions[0].domain)

    completion = llm.complete(TemplateId.DOMAIN_ROUTE, {
        'question': ctx.question,
        'descriptions': format_descriptions(descriptions),
    })
    fields = dict(parse_key_lines(completion.text))
    answer = strip_quotes(fields.get('DOMAIN', '')).strip('[]').lower()
    reasoning = fields.get('REASONING', '')
    for d in descriptions:
        if d.domain.lower() == answer:
            return RouteDecision(d.domain, reasoning)
    logger.warning("Router named unknown domain %r; using %s", answer, descriptions[0].domain)
    return RouteDecision(descriptions[0].domain, reasoning, fallback=True)


def _parse_desc_lines(text: str) -> dict:
    updated = {}
    for key, value in parse_key_lines(text):
        if key != 'DESC' or '|' not in value:
            continue
        name, _, desc = value.partition('|')
        name = strip_quotes(name).strip('[]').lower()
        desc = desc.strip()
        if name and desc:
            updated[name] = desc
    return updated


def update_descriptions(failed: str, chosen: str, ctx: QueryContext, reasoning: str,
                        descriptions, llm, instructions: str = '') -> list[DomainDescription]:
    """Refine every description after a wrong routing decision.

    `failed` is the domain the question belonged to, `chosen` the wrong pick.
    Every version is incremented; domains the completion omits keep their text.
    """
    if failed == chosen:
        raise RoutingError(f"update_descriptions needs a wrong pick, got {chosen!r} for both")
    descriptions = list(descriptions)
    completion = llm.complete(TemplateId.DOMAIN_DESC_UPDATE, {
        'descriptions': format_descriptions(descriptions),
        'question': ctx.question,
        'chosen': chosen,
        'failed': failed,
        'reasoning': reasoning or 'not recorded',
        'instructions': instructions,
    })
    new_texts = _parse_desc_lines(completion.text)

    updated = [replace(d, description=new_texts.get(d.domain.lower(), d.description),
                       version=d.version + 1) for d in descriptions]

    by_text = {}
    for i, d in enumerate(updated):
        by_text.setdefault(d.description, []).append(i)
    for indexes in by_text.values():
        if len(indexes) > 1:
            names = ', '.join(updated[i].domain for i in indexes)
            logger.warning("Description update made %s identical; keeping previous texts", names)
            for i in indexes:
                updated[i] = replace(updated[i], description=descriptions[i].description)
    return updated


class DescriptionStore:
    """Versioned domain descriptions shared by concurrent routers. Every write
    installs a new list under the lock; readers take a snapshot."""

    def __init__(self, descriptions=()):
        self._lock = threading.RLock()
        self._items = list(descriptions)

    def snapshot(self) -> list[DomainDescription]:
        with self._lock:
            return list(self._items)

    def replace(self, updated):
        with self._lock:
            self._items = list(updated)

    def get(self, domain: str) -> DomainDescription | None:
        with self._lock:
            for d in self._items:
                if d.domain == domain:
                    return d
        return None

    def ensure(self, domains):
        """Add a default description for any domain that has none."""
        with self._lock:
            items = list(self._items)
            known = {d.domain for d in items}
            for domain in domains:
                if domain not in known:
                    items.append(DomainDescription(
                        domain, f"This KG includes content in the {domain} domain."))
                    known.add(domain)
            self._items = items

    def update(self, failed, chosen, ctx, reasoning, llm, instructions='') -> list[DomainDescription]:
        """The LLM call runs outside the lock. When another write lands first the
        update is redone on the newer texts."""
        while True:
            with self._lock:
                base = self._items
            updated = update_descriptions(failed, chosen, ctx, reasoning, base, llm, instructions)
            with self._lock:
                if self._items is base:
                    self._items = updated
                    return list(updated)
            logger.info("Descriptions changed during an update; redoing it on the newer texts")

    @classmethod
    def load(cls, path) -> 'DescriptionStore':
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Descriptions file not found: {path}")
        items = []
        block = {}

        def flush():
            if block.get('DOMAIN'):
                items.append(DomainDescription(block['DOMAIN'], block.get('DESC', ''),
                                               int(block.get('VERSION', 0) or 0)))
            block.clear()

        for raw in path.read_text(encoding='utf-8').splitlines():
            line = raw.strip()
            if not line or line.startswith('#'):
                continue
            key, _, value = line.partition(':')
            key = key.strip().upper()
            if key == 'DOMAIN':
                flush()
            block[key] = value.strip()
        flush()
        return cls(items)

    def save(self, path):
        lines = []
        for d in self.snapshot():
            lines += [f"DOMAIN: {d.domain}", f"VERSION: {d.version}", f"DESC: {d.description}", '']
        Path(path).write_text('\n'.join(lines), encoding='utf-8')
