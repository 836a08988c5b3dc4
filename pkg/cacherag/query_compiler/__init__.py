"""
Physical compilation for cacherag

Grounds an ISR onto the valid local schema with cached examples as
few-shot context, validates plans against a predicate vocabulary and executes
them over a KnowledgeGraph.

Plan wire format, one op per line (also the cache persistence format):

    OP: POINT <entity> <predicate>
    OP: STAR <entity>
    OP: API <name> key=value key="two words"
    OP: HOP <relation>
    OP: BREADTH

Tokens containing spaces are double-quoted.
"""
import logging
import shlex
from dataclasses import dataclass
from cacherag.kg_store import KnowledgeGraph, Triple
from cacherag.llm_adapter import TemplateId

logger = logging.getLogger(__name__)


class PlanFormatError(ValueError):
    """A line that is not a valid OP: line."""


class CompileError(ValueError):
    """No usable op survived compilation."""

    def __init__(self, message: str, breadth_fallback: bool = False, flags=None):
        super().__init__(message)
        self.breadth_fallback = breadth_fallback
        self.flags = list(flags or [])


class ExecutionError(RuntimeError):
    """A plan op could not be executed."""


@dataclass(frozen=True)
class PointQuery:
    entity: str
    predicate: str


@dataclass(frozen=True)
class StarQuery:
    entity: str


@dataclass(frozen=True)
class ApiCall:
    name: str
    args: tuple = ()

    @property
    def arguments(self) -> dict:
        return dict(self.args)


@dataclass(frozen=True)
class DepthHop:
    relation: str


@dataclass(frozen=True)
class BreadthStep:
    pass


PlanOp = PointQuery | StarQuery | ApiCall | DepthHop | BreadthStep


def _quote(token: str) -> str:
    if token and not any(c.isspace() or c in '"\'\\' for c in token):
        return token
    return '"' + token.replace('\\', '\\\\').replace('"', '\\"') + '"'


def format_op(op) -> str:
    match op:
        case PointQuery(entity, predicate):
            return f"OP: POINT {_quote(entity)} {_quote(predicate)}"
        case StarQuery(entity):
            return f"OP: STAR {_quote(entity)}"
        case ApiCall(name, args):
            parts = [f"{k}={_quote(v)}" for k, v in args]
            return ' '.join([f"OP: API {_quote(name)}"] + parts)
        case DepthHop(relation):
            return f"OP: HOP {_quote(relation)}"
        case BreadthStep():
            return "OP: BREADTH"
    raise PlanFormatError(f"Not a plan op: {op!r}")


def parse_op(line: str):
    text = line.strip()
    if text.upper().startswith('OP:'):
        text = text[3:]
    try:
        tokens = shlex.split(text)
    except ValueError as e:
        raise PlanFormatError(f"Unbalanced quotes in {line!r}") from e
    if not tokens:
        raise PlanFormatError(f"Empty op line {line!r}")
    kind, rest = tokens[0].upper(), tokens[1:]
    if kind == 'POINT' and len(rest) == 2:
        return PointQuery(rest[0], rest[1])
    if kind == 'STAR' and len(rest) == 1:
        return StarQuery(rest[0])
    if kind == 'HOP' and len(rest) == 1:
        return DepthHop(rest[0])
    if kind == 'BREADTH' and not rest:
        return BreadthStep()
    if kind == 'API' and rest:
        args = []
        for token in rest[1:]:
            key, sep, value = token.partition('=')
            if not sep or not key:
                raise PlanFormatError(f"API argument {token!r} is not key=value")
            args.append((key, value))
        return ApiCall(rest[0], tuple(args))
    raise PlanFormatError(f"Cannot parse op {line!r}")


@dataclass(frozen=True)
class QueryPlan:
    ops: tuple = ()

    def __len__(self):
        return len(self.ops)

    def __iter__(self):
        return iter(self.ops)

    def append(self, op) -> 'QueryPlan':
        return QueryPlan(self.ops + (op,))

    def serialize(self) -> str:
        return '\n'.join(format_op(op) for op in self.ops)

    @classmethod
    def parse(cls, text: str) -> 'QueryPlan':
        """Strict parse of the wire format; blank lines ignored."""
        ops = [parse_op(line) for line in (text or '').splitlines() if line.strip()]
        return cls(tuple(ops))


@dataclass(frozen=True)
class Subgraph:
    triples: frozenset = frozenset()
    frontier: frozenset = frozenset()

    def __len__(self):
        return len(self.triples)

    def sorted_triples(self) -> list[Triple]:
        return sorted(self.triples, key=lambda t: t.key)

    def canonical_lines(self) -> list[str]:
        return [t.canonical() for t in self.sorted_triples()]

    def serialize(self) -> str:
        return '\n'.join(self.canonical_lines())

    def entities(self) -> set[str]:
        return _entities_of(self.triples)


# ---------------------------------------------------------------------------
# Validation and compilation
# ---------------------------------------------------------------------------

def validate(plan: QueryPlan, vocabulary) -> list[str]:
    """One violation per POINT predicate or HOP relation outside vocabulary."""
    vocabulary = set(vocabulary or ())
    violations = []
    for i, op in enumerate(plan.ops):
        if isinstance(op, PointQuery) and op.predicate not in vocabulary:
            violations.append(f"op {i + 1}: predicate {op.predicate!r} is not in the schema")
        elif isinstance(op, DepthHop) and op.relation not in vocabulary:
            violations.append(f"op {i + 1}: relation {op.relation!r} is not in the schema")
    return violations


def format_examples(examples) -> str:
    blocks = []
    for i, entry in enumerate(examples, start=1):
        blocks.append(f"Example {i}\nQuestion: {entry.question}\nPlan:\n{entry.plan.serialize()}")
    return '\n\n'.join(blocks) if blocks else '(none)'


def compile_plan(isr, schema, examples, llm, flags: list | None = None) -> QueryPlan:
    """Ground the ISR on the local schema. Ops naming a predicate outside the
    schema are dropped and flagged; CompileError when nothing survives."""
    schema = set(schema or ())
    flags = flags if flags is not None else []
    constraints = '\n'.join(f"- {c}" for c in isr.constraints) or '(none)'
    completion = llm.complete(TemplateId.QUERY_COMPILE, {
        'topic_entity': isr.raw_entity,
        'constraints': constraints,
        'schema': ', '.join(sorted(schema)) or '(none)',
        'examples': format_examples(examples),
    })

    parsed = []
    for line in completion.text.splitlines():
        if not line.strip().upper().startswith('OP:'):
            continue
        try:
            parsed.append(parse_op(line))
        except PlanFormatError as e:
            flags.append(f"unparseable op skipped: {e}")
            logger.warning("Skipping unparseable op: %s", e)
    if not parsed:
        raise CompileError("Compilation produced no parseable ops", breadth_fallback=True, flags=flags)

    kept = []
    for op in parsed:
        problems = validate(QueryPlan((op,)), schema)
        if problems:
            flags.append(f"dropped {format_op(op)}: not in local schema")
            logger.warning("Dropped hallucinated op %s", format_op(op))
            continue
        kept.append(op)
    if not kept:
        raise CompileError("Every compiled op referenced a predicate outside the schema",
                           breadth_fallback=True, flags=flags)
    return QueryPlan(tuple(kept))


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------

class ApiRegistry:
    """name -> handler(kg, **args) returning triples."""

    def __init__(self, handlers=None):
        self._handlers = dict(handlers or {})

    def register(self, name: str, handler):
        self._handlers[name] = handler

    def get(self, name: str):
        return self._handlers.get(name)

    def __contains__(self, name):
        return name in self._handlers


def entity_objects(triples) -> set[str]:
    return {t.obj for t in triples if not t.is_literal}


def advance_frontier(frontier, produced, expanded) -> frozenset:
    """Entity objects produced by a step that were not expanded yet; the
    current frontier when there are none."""
    fresh = entity_objects(produced) - set(expanded)
    return frozenset(fresh) if fresh else frozenset(frontier)


def execute(plan: QueryPlan, kg: KnowledgeGraph, topic: str | None = None, question: str = '',
            k_degree: int = 30, ranker=None, api_handlers=None, use_breadth: bool = True) -> Subgraph:
    """Run a plan against the KG. HOP and BREADTH replay the expansion steps that
    recorded them: a HOP is the depth join plus the breadth scan of the same
    frontier."""
    from cacherag.expansion import depth_expand, breadth_expand

    registry = api_handlers if isinstance(api_handlers, ApiRegistry) else ApiRegistry(api_handlers)
    triples = set()
    frontier = set()
    expanded = set()

    for op in plan.ops:
        match op:
            case PointQuery(entity, predicate):
                found, _ = kg.point_triples(entity, predicate)
                triples.update(found)
                frontier |= entity_objects(found)
            case StarQuery(entity):
                found, _ = kg.star_triples(entity)
                triples.update(found)
                frontier |= entity_objects(found)
            case ApiCall(name, args):
                handler = registry.get(name)
                if handler is None:
                    raise ExecutionError(f"No handler registered for API call {name!r}")
                found = []
                for t in handler(kg, **dict(args)):
                    if t in kg:
                        found.append(t)
                    else:
                        logger.warning("API %s returned a triple outside the KG: %s", name, t.canonical())
                triples.update(found)
                frontier |= entity_objects(found)
            case DepthHop(relation):
                current = frontier or ({topic} if topic else set())
                found = depth_expand(kg, current, relation)
                if use_breadth:
                    found |= breadth_expand(kg, current, question, ranker, k_degree)
                expanded |= current
                triples.update(found)
                frontier = set(advance_frontier(current, found, expanded))
            case BreadthStep():
                current = frontier or ({topic} if topic else set())
                found = breadth_expand(kg, current, question, ranker, k_degree) if use_breadth else set()
                expanded |= current
                triples.update(found)
                frontier = set(advance_frontier(current, found, expanded))

    if not triples:
        return Subgraph(frozenset(), frozenset({topic}) if topic else frozenset())
    frontier &= _entities_of(triples)
    if not frontier:
        frontier = {t.subject for t in triples}
    return Subgraph(frozenset(triples), frozenset(frontier))


def _entities_of(triples) -> set[str]:
    found = set()
    for t in triples:
        found.add(t.subject)
        if not t.is_literal:
            found.add(t.obj)
    return found
