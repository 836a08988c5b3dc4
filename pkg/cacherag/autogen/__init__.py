"""
Cold-start cache pre-warming for cacherag

Sample entities uniformly, let the LLM write questions over each entity's
1-hop star, let it review them, then compile the kept candidates' triples
into point-query plans (no LLM involved) and insert them into the cache.
"""
import logging
import random
from dataclasses import dataclass, field
from enum import Enum
from cacherag.kg_store import KnowledgeGraph, Triple
from cacherag.llm_adapter import TemplateId
from cacherag.query_compiler import PointQuery, QueryPlan
from cacherag.semantic_parser import ISR, derive_aspect
from cacherag.utils import strip_quotes

logger = logging.getLogger(__name__)

MAX_CANDIDATES = 5


class Verdict(str, Enum):
    PENDING = 'PENDING'
    KEPT = 'KEPT'
    REJECTED = 'REJECTED'


@dataclass
class SeedCandidate:
    question: str
    triples: list
    answer: str
    verdict: Verdict = Verdict.PENDING
    note: str = ''


@dataclass
class PrewarmReport:
    sampled: int = 0
    candidates: int = 0
    kept: int = 0
    rejected: int = 0
    inserted: int = 0
    skipped: int = 0
    flags: list = field(default_factory=list)


def sample_star_schemas(kg: KnowledgeGraph, count: int, seed: int, flags: list | None = None) -> list[list[Triple]]:
    """Uniform entity sample without replacement; one group of 1-hop triples per entity."""
    if count < 1:
        raise ValueError(f"count must be at least 1, got {count}")
    entities = kg.entities
    if not entities:
        return []
    if count > len(entities):
        message = f"asked for {count} entities but the KG has {len(entities)}; using all"
        logger.warning(message)
        if flags is not None:
            flags.append(message)
        count = len(entities)
    chosen = random.Random(seed).sample(entities, count)
    return [kg.star_triples(entity)[0] for entity in chosen]


def format_group(group) -> str:
    return '\n'.join(f"{t.subject} | {t.predicate} | {t.object_text}" for t in group)


def _parse_triple_ref(text: str, group) -> Triple | None:
    parts = [p.strip() for p in text.split('|')]
    if len(parts) != 3:
        return None
    subject, predicate, obj = parts
    obj = strip_quotes(obj)
    for t in group:
        if t.subject == subject and t.predicate == predicate and t.obj == obj:
            return t
    return None


def parse_candidates(text: str, group) -> list[SeedCandidate]:
    candidates = []
    current = None

    def close():
        if current and current['question'] and current['answer'] is not None:
            candidate = SeedCandidate(current['question'], current['triples'], current['answer'])
            if current['foreign']:
                candidate.verdict = Verdict.REJECTED
                candidate.note = f"references triples outside the sampled group: {current['foreign']}"
            elif not current['triples']:
                candidate.verdict = Verdict.REJECTED
                candidate.note = 'no triples'
            candidates.append(candidate)

    for raw in (text or '').splitlines():
        line = raw.strip().lstrip('-*').strip()
        if not line or line.upper() == 'NA':
            continue
        key, sep, value = line.partition(':')
        if not sep:
            continue
        key = key.strip().upper()
        value = value.strip()
        if key == 'QUESTION':
            close()
            current = None
            if value and value.upper() != 'NA':
                current = {'question': value, 'triples': [], 'answer': None, 'foreign': []}
        elif current is None:
            continue
        elif key == 'TRIPLE':
            triple = _parse_triple_ref(value, group)
            if triple is None:
                current['foreign'].append(value)
            elif triple not in current['triples']:
                current['triples'].append(triple)
        elif key == 'ANSWER':
            if value and value.upper() != 'NA':
                current['answer'] = value
            else:
                current = None
    close()
    return candidates[:MAX_CANDIDATES]


def synthesize(group, llm) -> list[SeedCandidate]:
    if not group:
        raise ValueError("Cannot synthesize questions for an empty group")
    completion = llm.complete(TemplateId.AUTOGEN_QUESTIONS, {'triples': format_group(group)})
    return parse_candidates(completion.text, group)


def format_candidates(candidates) -> str:
    blocks = []
    for i, c in enumerate(candidates, start=1):
        triples = '\n'.join(f"  {format_group([t])}" for t in c.triples)
        blocks.append(f"C{i}: {c.question}\n{triples}\n  Answer: {c.answer}")
    return '\n'.join(blocks)


def filter_candidates(candidates, llm) -> list[SeedCandidate]:
    """Apply KEEP/REJECT per candidate id. Ids the review omits are rejected."""
    pending = [c for c in candidates if c.verdict == Verdict.PENDING]
    if not pending:
        return list(candidates)
    completion = llm.complete(TemplateId.AUTOGEN_FILTER, {'candidates': format_candidates(pending)})
    decisions = {}
    for raw in completion.text.splitlines():
        key, sep, value = raw.strip().partition(':')
        key = key.strip().upper()
        if sep and key.startswith('C') and key[1:].isdigit():
            decisions.setdefault(int(key[1:]), value.strip().upper())
    for i, candidate in enumerate(pending, start=1):
        decision = decisions.get(i, '')
        if decision.startswith('KEEP'):
            candidate.verdict = Verdict.KEPT
        else:
            candidate.verdict = Verdict.REJECTED
            candidate.note = candidate.note or ('missing from review' if not decision else 'rejected by review')
    return list(candidates)


def compile_seed_plan(triples) -> QueryPlan:
    """One point query per distinct (subject, predicate), in first-seen order."""
    ops = []
    seen = set()
    for t in triples:
        if (t.subject, t.predicate) not in seen:
            seen.add((t.subject, t.predicate))
            ops.append(PointQuery(t.subject, t.predicate))
    return QueryPlan(tuple(ops))


def prewarm_with_report(kg: KnowledgeGraph, cache, count: int, seed: int, llm) -> PrewarmReport:
    report = PrewarmReport()
    if not len(kg):
        return report
    groups = sample_star_schemas(kg, count, seed, report.flags)
    report.sampled = len(groups)
    for group in groups:
        candidates = filter_candidates(synthesize(group, llm), llm)
        report.candidates += len(candidates)
        for candidate in candidates:
            if candidate.verdict != Verdict.KEPT:
                report.rejected += 1
                continue
            report.kept += 1
            plan = compile_seed_plan(candidate.triples)
            aspect = derive_aspect(ISR(candidate.triples[0].subject, [candidate.question], kg.domain_label))
            if cache.contains(kg.domain_label, aspect, candidate.question):
                report.skipped += 1
                continue
            cache.insert(kg.domain_label, aspect, candidate.question, plan, candidate.answer,
                         vocabulary=kg.vocabulary)
            report.inserted += 1
    logger.info("Pre-warm: sampled %s, candidates %s, kept %s, inserted %s",
                report.sampled, report.candidates, report.kept, report.inserted)
    return report


def prewarm(kg: KnowledgeGraph, cache, count: int, seed: int, llm) -> int:
    return prewarm_with_report(kg, cache, count, seed, llm).inserted
