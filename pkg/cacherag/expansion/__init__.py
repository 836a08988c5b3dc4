"""
Bounded subgraph expansion for cacherag

The dispatcher judges whether the current subgraph answers the question.
While it says INCOMPLETE the traversal runs a depth step (point lookups of
the suggested relation from the frontier) and a breadth step (top-k_degree
star scan per frontier entity), unions both into the subgraph and records
one plan op. Every expanded subgraph is judged, and the dispatcher judges at
most k_depth subgraphs per question, the pre-check included.
"""
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from cacherag import metrics
from cacherag.kg_store import KnowledgeGraph
from cacherag.llm_adapter import TemplateId
from cacherag.query_compiler import (
    BreadthStep, DepthHop, QueryPlan, Subgraph, advance_frontier, format_examples,
)
from cacherag.utils import parse_key_lines, predicate_tokens, strip_quotes, tokenize

logger = logging.getLogger(__name__)


class Status(str, Enum):
    COMPLETE = 'COMPLETE'
    INCOMPLETE = 'INCOMPLETE'


class Termination(str, Enum):
    COMPLETE = 'COMPLETE'
    BOUND_HIT = 'BOUND_HIT'


@dataclass(frozen=True)
class DispatcherVerdict:
    status: Status
    next_relation: str | None = None
    frontier_hint: frozenset = frozenset()
    # False when the completion could not be read
    parsed: bool = True
    forced: bool = False

    @property
    def complete(self) -> bool:
        return self.status == Status.COMPLETE


@dataclass(frozen=True)
class ExpansionBounds:
    k_depth: int = 3
    k_degree: int = 30

    def __post_init__(self):
        if self.k_depth < 1:
            raise ValueError(f"k_depth must be at least 1, got {self.k_depth}")
        if self.k_degree < 1:
            raise ValueError(f"k_degree must be at least 1, got {self.k_degree}")


@dataclass
class IterationRecord:
    verdict: DispatcherVerdict
    relation: str | None
    frontier: list
    depth_triples: int
    breadth_triples: int
    new_triples: int


@dataclass
class TraversalResult:
    plan: QueryPlan
    subgraph: Subgraph
    termination: Termination
    iterations: int
    verdict: DispatcherVerdict
    records: list = field(default_factory=list)
    dispatch_calls: int = 0
    flags: list = field(default_factory=list)


class TokenOverlapRanker:
    """Scores a predicate by how many of its words occur in the question."""

    def score(self, question_tokens, predicate: str) -> float:
        return float(len(set(predicate_tokens(predicate)) & set(question_tokens)))

    def rank(self, question: str, triples) -> list:
        tokens = tokenize(question)
        scored = [(self.score(tokens, t.predicate), t) for t in triples]
        scored.sort(key=lambda st: (-st[0], st[1].predicate, st[1].object_text))
        return [t for _, t in scored]


DEFAULT_RANKER = TokenOverlapRanker()


def parse_verdict(text: str) -> DispatcherVerdict:
    fields = {}
    for key, value in parse_key_lines(text):
        fields.setdefault(key, value)
    status = fields.get('STATUS', '').strip().upper()
    if status not in (Status.COMPLETE.value, Status.INCOMPLETE.value):
        return DispatcherVerdict(Status.INCOMPLETE, parsed=False)
    if status == Status.COMPLETE.value:
        return DispatcherVerdict(Status.COMPLETE)

    relation = strip_quotes(fields.get('NEXT_RELATION', ''))
    if relation.lower() in ('', 'none', 'na', 'n/a', '-'):
        relation = None
    hint = frozenset(strip_quotes(e) for e in fields.get('FRONTIER', '').split(',') if strip_quotes(e))
    return DispatcherVerdict(Status.INCOMPLETE, relation, hint)


def dispatch(ctx, subgraph: Subgraph, cache_examples, llm, trace=None, flags=None) -> DispatcherVerdict:
    """Judge completeness. An empty subgraph is INCOMPLETE without an LLM call;
    an unreadable completion counts as INCOMPLETE with no hints."""
    started = time.perf_counter()
    if not subgraph.triples:
        verdict = DispatcherVerdict(Status.INCOMPLETE, forced=True)
    else:
        completion = llm.complete(TemplateId.DISPATCH_JUDGE, {
            'question': ctx.question,
            'query_time': ctx.iso_time,
            'subgraph': subgraph.serialize(),
            'examples': format_examples(cache_examples),
        })
        verdict = parse_verdict(completion.text)
        if not verdict.parsed:
            message = "dispatcher completion unreadable; treating as INCOMPLETE"
            logger.warning(message)
            if flags is not None:
                flags.append(message)
            if trace is not None:
                trace.flag('dispatch_unparsed', message)
    if trace is not None:
        trace.record('dispatch', elapsed_ms=(time.perf_counter() - started) * 1000,
                     status=verdict.status.value, next_relation=verdict.next_relation,
                     frontier_hint=sorted(verdict.frontier_hint), forced=verdict.forced)
    return verdict


def depth_expand(kg: KnowledgeGraph, frontier, relation: str) -> set:
    """Index nested-loop join: point lookups of relation from every frontier entity."""
    found = set()
    for entity in sorted(frontier):
        triples, _ = kg.point_triples(entity, relation)
        found.update(triples)
    return found


def breadth_expand(kg: KnowledgeGraph, frontier, ctx, ranker=None, k_degree: int = 30) -> set:
    """Star scan per frontier entity, keeping the k_degree best-ranked pairs."""
    if k_degree < 1:
        raise ValueError(f"k_degree must be at least 1, got {k_degree}")
    ranker = ranker or DEFAULT_RANKER
    question = ctx if isinstance(ctx, str) else ctx.question
    found = set()
    for entity in sorted(frontier):
        triples, _ = kg.star_triples(entity)
        found.update(ranker.rank(question, triples)[:k_degree])
    return found


def heuristic_traversal(ctx, plan: QueryPlan, subgraph: Subgraph, cache_examples, bounds: ExpansionBounds,
                        llm, kg: KnowledgeGraph, verdict: DispatcherVerdict | None = None, ranker=None,
                        use_depth: bool = True, use_breadth: bool = True, trace=None) -> TraversalResult:
    """Expand until the dispatcher says COMPLETE or the judgement budget is spent.

    `verdict` is the judgement already made on `subgraph` (the pipeline's
    pre-check) and counts against the budget. Every expanded subgraph is
    judged, so an expansion only runs while one more judgement fits in
    k_depth: a question never makes more than k_depth dispatcher calls.
    """
    flags = []
    dispatch_calls = 0
    if verdict is None:
        verdict = dispatch(ctx, subgraph, cache_examples, llm, trace, flags)
        dispatch_calls += 0 if verdict.forced else 1
    # Forced verdicts on empty subgraphs cost no call
    judged = 0 if verdict.forced else 1

    records = []
    iterations = 0
    expanded = set()
    termination = Termination.COMPLETE

    while not verdict.complete:
        if judged >= bounds.k_depth or iterations >= bounds.k_depth:
            termination = Termination.BOUND_HIT
            break
        started = time.perf_counter()

        frontier = set(subgraph.frontier)
        if verdict.frontier_hint:
            present = subgraph.entities()
            honoured = verdict.frontier_hint & present
            ignored = verdict.frontier_hint - present
            if ignored:
                message = f"frontier hint ignored for entities outside the subgraph: {sorted(ignored)}"
                flags.append(message)
                logger.warning(message)
                if trace is not None:
                    trace.flag('frontier_hint_ignored', message)
            if honoured:
                frontier = set(honoured)

        relation = verdict.next_relation
        if relation and relation not in kg.vocabulary:
            message = f"next relation {relation!r} is not in the vocabulary; breadth step only"
            flags.append(message)
            logger.warning(message)
            if trace is not None:
                trace.flag('unknown_relation', message)
            relation = None
        if not use_depth:
            relation = None

        depth_triples = depth_expand(kg, frontier, relation) if relation else set()
        breadth_triples = breadth_expand(kg, frontier, ctx, ranker, bounds.k_degree) if use_breadth else set()
        produced = depth_triples | breadth_triples
        new_triples = produced - subgraph.triples

        expanded |= frontier
        subgraph = Subgraph(subgraph.triples | produced, advance_frontier(frontier, produced, expanded))
        plan = plan.append(DepthHop(relation) if relation else BreadthStep())
        iterations += 1

        record = IterationRecord(verdict, relation, sorted(frontier), len(depth_triples),
                                 len(breadth_triples), len(new_triples))
        records.append(record)
        if trace is not None:
            trace.record('expansion', elapsed_ms=(time.perf_counter() - started) * 1000,
                         iteration=iterations, relation=relation, frontier=record.frontier,
                         depth_triples=record.depth_triples, breadth_triples=record.breadth_triples,
                         new_triples=record.new_triples, next_frontier=sorted(subgraph.frontier))

        verdict = dispatch(ctx, subgraph, cache_examples, llm, trace, flags)
        if not verdict.forced:
            judged += 1
            dispatch_calls += 1

    metrics.record_traversal(iterations)
    return TraversalResult(plan, subgraph, termination, iterations, verdict, records, dispatch_calls, flags)
