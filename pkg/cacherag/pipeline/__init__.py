"""
End-to-end question answering for cacherag

parse -> cache retrieve -> compile -> execute -> dispatch -> (traverse ->
re-check) -> summarize -> cache insert, with a direct-answer fallback when
the traversal runs out of budget or the backend is unreachable.
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from cacherag import metrics
from cacherag.config import Config
from cacherag.expansion import ExpansionBounds, Termination, dispatch, heuristic_traversal
from cacherag.kg_store import KnowledgeGraph
from cacherag.llm_adapter import TemplateId, TransportError
from cacherag.pipeline.trace import Trace
from cacherag.query_compiler import CompileError, ExecutionError, QueryPlan, Subgraph, compile_plan, execute
from cacherag.semantic_cache import SemanticCache
from cacherag.semantic_parser import (
    DescriptionStore, IsrParseError, QueryContext, RoutingError, derive_aspect, extract_isr,
    fallback_isr, route_domain,
)

logger = logging.getLogger(__name__)

DONT_KNOW = "I don't know."


class AnswerStatus(str, Enum):
    ANSWERED = 'ANSWERED'
    FALLBACK = 'FALLBACK'


class SummarizeError(ValueError):
    """summarize() was called on an empty subgraph."""


@dataclass
class AnswerRecord:
    answer: str
    status: AnswerStatus
    trace: Trace
    plan_used: QueryPlan
    examples: list = field(default_factory=list)
    termination: Termination | None = None
    inserted_id: int | None = None
    domain: str = ''
    aspect: str = ''
    subgraph: Subgraph | None = None


def summarize(ctx: QueryContext, subgraph: Subgraph, llm) -> str:
    if not subgraph.triples:
        raise SummarizeError("Cannot summarize an empty subgraph")
    completion = llm.complete(TemplateId.SUMMARIZE, {
        'question': ctx.question,
        'query_time': ctx.iso_time,
        'subgraph': subgraph.serialize(),
    })
    return completion.text


def direct_answer(ctx: QueryContext, llm) -> tuple[str, str | None]:
    """LLM-only answer. Returns (text, error) where error is set when the
    backend was unreachable and the fixed text was used."""
    try:
        completion = llm.complete(TemplateId.DIRECT_ANSWER, {
            'question': ctx.question,
            'query_time': ctx.iso_time,
        })
    except TransportError as e:
        return DONT_KNOW, str(e)
    return completion.text.strip() or DONT_KNOW, None


def _flag_all(trace: Trace, code: str, messages):
    for message in messages:
        trace.flag(code, message)


def answer(ctx: QueryContext, kg: KnowledgeGraph, cache: SemanticCache, llm, bounds: ExpansionBounds,
           config: Config | None = None, ranker=None, api_handlers=None, trace: Trace | None = None,
           domain: str | None = None) -> AnswerRecord:
    """Answer one question against one KG, updating the cache on success."""
    config = config or Config()
    trace = trace if trace is not None else Trace()
    llm = llm.with_trace(trace)
    plan = QueryPlan()
    examples = []
    domain = domain or kg.domain_label
    aspect = ''

    try:
        with trace.stage('parse') as rec:
            try:
                isr = extract_isr(ctx, llm, kg.vocabulary)
            except IsrParseError as e:
                isr = fallback_isr(ctx, str(e))
                rec['fallback'] = True
            aspect = derive_aspect(isr)
            domain = domain or isr.domain_hint or 'default'
            rec.update(entity=isr.raw_entity, constraints=isr.constraints, domain_hint=isr.domain_hint,
                       domain=domain, aspect=aspect)
        _flag_all(trace, 'parse', isr.flags)

        if config.use_cache:
            with trace.stage('cache_retrieve') as rec:
                examples, report = cache.retrieve_with_report(ctx.question, domain, aspect)
                rec.update(domain=report.domain, aspect=report.aspect, bucket_size=report.bucket_size,
                           relaxed=report.relaxed, scored_ids=report.scored_ids,
                           excluded_below_floor=report.excluded_below_floor,
                           pairwise_evaluations=report.pairwise_evaluations,
                           selected_ids=report.selected_ids)

        breadth_fallback = False
        compile_flags = []
        with trace.stage('compile') as rec:
            schema = kg.local_schema(isr.raw_entity)
            try:
                plan = compile_plan(isr, schema, examples, llm, compile_flags)
            except CompileError as e:
                breadth_fallback = e.breadth_fallback
                rec['error'] = str(e)
            rec.update(schema=sorted(schema), plan=plan.serialize(), breadth_fallback=breadth_fallback)
        _flag_all(trace, 'compile', compile_flags)

        with trace.stage('execute') as rec:
            try:
                subgraph = execute(plan, kg, topic=isr.raw_entity, question=ctx.question,
                                   k_degree=bounds.k_degree, ranker=ranker, api_handlers=api_handlers,
                                   use_breadth=config.breadth_expansion)
            except ExecutionError as e:
                trace.flag('execute', str(e))
                plan = QueryPlan()
                subgraph = Subgraph(frozenset(), frozenset({isr.raw_entity}))
            rec.update(triples=len(subgraph), frontier=sorted(subgraph.frontier))

        # Pre-check before any traversal
        verdict = dispatch(ctx, subgraph, examples, llm, trace)
        termination = Termination.COMPLETE
        if not verdict.complete:
            result = heuristic_traversal(
                ctx, plan, subgraph, examples, bounds, llm, kg, verdict=verdict, ranker=ranker,
                use_depth=config.depth_expansion, use_breadth=config.breadth_expansion, trace=trace)
            plan, subgraph, termination = result.plan, result.subgraph, result.termination
            # Re-check of the final subgraph reuses the traversal's last verdict
            trace.record('recheck', status=result.verdict.status.value, termination=termination.value,
                         iterations=result.iterations)

        if termination != Termination.COMPLETE:
            return _fallback(ctx, llm, trace, plan, examples, termination, domain, aspect, subgraph,
                             reason='expansion bound reached')

        with trace.stage('summarize') as rec:
            text = summarize(ctx, subgraph, llm)
            rec['triples'] = len(subgraph)

        inserted_id = None
        if config.use_cache:
            with trace.stage('cache_insert') as rec:
                entry = cache.insert(domain, aspect, ctx.question, plan, text, vocabulary=kg.vocabulary)
                inserted_id = entry.id
                rec.update(id=entry.id, domain=entry.domain, aspect=entry.aspect, plan=plan.serialize())

        metrics.record_answer(AnswerStatus.ANSWERED.value)
        return AnswerRecord(text, AnswerStatus.ANSWERED, trace, plan, examples, termination,
                            inserted_id, domain, aspect, subgraph)

    except TransportError as e:
        logger.error("LLM backend failed while answering %r: %s", ctx.question, e)
        return _fallback(ctx, llm, trace, plan, examples, None, domain, aspect, None,
                         reason='transport error', error=str(e))


def _fallback(ctx, llm, trace, plan, examples, termination, domain, aspect, subgraph,
              reason: str, error: str | None = None) -> AnswerRecord:
    with trace.stage('fallback', reason=reason) as rec:
        text, answer_error = direct_answer(ctx, llm)
        if error:
            rec['error'] = error
        if answer_error:
            rec['answer_error'] = answer_error
    metrics.record_answer(AnswerStatus.FALLBACK.value)
    return AnswerRecord(text, AnswerStatus.FALLBACK, trace, plan, examples, termination,
                        None, domain, aspect, subgraph)


class Engine:
    """Everything one deployment needs to answer questions: KGs by domain,
    the shared cache, the LLM client and config."""

    def __init__(self, kgs, cache: SemanticCache, llm, config: Config | None = None,
                 descriptions: DescriptionStore | None = None, ranker=None, api_handlers=None):
        if isinstance(kgs, KnowledgeGraph):
            kgs = [kgs]
        self.kgs = {}
        for kg in kgs:
            if kg.domain_label in self.kgs:
                raise ValueError(f"Two KGs share the domain label {kg.domain_label!r}")
            self.kgs[kg.domain_label] = kg
        if not self.kgs:
            raise ValueError("Engine needs at least one KG")
        self.cache = cache
        self.llm = llm
        self.config = config or Config()
        self.bounds = ExpansionBounds(self.config.k_depth, self.config.k_degree)
        self.descriptions = descriptions or DescriptionStore()
        self.descriptions.ensure(self.kgs)
        self.ranker = ranker
        self.api_handlers = api_handlers

    def _route(self, ctx: QueryContext, trace: Trace) -> str:
        if len(self.kgs) == 1:
            return next(iter(self.kgs))
        candidates = [d for d in self.descriptions.snapshot() if d.domain in self.kgs]
        with trace.stage('route') as rec:
            decision = route_domain(ctx, candidates, self.llm.with_trace(trace))
            rec.update(domain=decision.domain, reasoning=decision.reasoning, fallback=decision.fallback)
        if decision.fallback:
            trace.flag('route', f"router named an unknown domain; using {decision.domain}")
        return decision.domain

    def ask(self, question: str, query_time: datetime | None = None, trace: Trace | None = None) -> AnswerRecord:
        ctx = QueryContext(question, query_time or datetime.now(timezone.utc))
        trace = trace if trace is not None else Trace()
        trace.record('config', **self.config.as_dict())
        started = time.perf_counter()
        try:
            domain = self._route(ctx, trace)
        except TransportError as e:
            domain = next(iter(self.kgs))
            trace.flag('route', f"routing failed ({e}); using {domain}")
        record = answer(ctx, self.kgs[domain], self.cache, self.llm, self.bounds, self.config,
                        self.ranker, self.api_handlers, trace, domain)
        logger.info("Answered %r in %.1f ms (%s)", question, (time.perf_counter() - started) * 1000,
                    record.status.value)
        return record

    def ask_many(self, questions, max_workers: int = 4) -> list[AnswerRecord]:
        """Answer concurrently against the shared cache; results keep input order."""
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(self.ask, questions))

    def report_misroute(self, question: str, chosen: str, correct: str, reasoning: str = '',
                        instructions: str = '') -> list:
        """Feed a wrong routing decision back into the description cache."""
        if chosen == correct:
            raise RoutingError("chosen and correct domains are the same")
        ctx = QueryContext(question)
        return self.descriptions.update(correct, chosen, ctx, reasoning, self.llm, instructions)
