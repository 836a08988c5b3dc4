import pytest
from hypothesis import given, settings, strategies as st
from cacherag.config import GOLDEN_DOMAIN, GOLDEN_KG
from cacherag.kg_store import load_triples_file
from cacherag.llm_adapter import LlmClient, register_script
from cacherag.query_compiler import (
    ApiCall, ApiRegistry, BreadthStep, CompileError, DepthHop, ExecutionError, PlanFormatError,
    PointQuery, QueryPlan, StarQuery, Subgraph, compile_plan, execute, format_examples, format_op,
    parse_op, validate,
)
from cacherag.semantic_cache import CacheEntry
from cacherag.semantic_parser import ISR

GOLDEN_ISR = ISR('Inception', ['directed by', 'Academy Award', '2018'], 'movies')


class TestWireFormat:
    def test_quoted_tokens(self):
        op = PointQuery('Christopher Nolan', 'directed')
        assert format_op(op) == 'OP: POINT "Christopher Nolan" directed'
        assert parse_op(format_op(op)) == op

    def test_all_op_kinds(self):
        plan = QueryPlan((
            PointQuery('Inception', 'directedBy'),
            StarQuery('Dunkirk'),
            ApiCall('awards', (('year', '2018'), ('category', 'Best Picture'))),
            DepthHop('directed'),
            BreadthStep(),
        ))
        text = plan.serialize()
        assert text.splitlines()[2] == 'OP: API awards year=2018 category="Best Picture"'
        assert QueryPlan.parse(text) == plan

    @pytest.mark.parametrize('line', ['OP: POINT onlyone', 'OP: JUMP x', 'OP: API x novalue', 'OP: POINT "open'])
    def test_bad_lines(self, line):
        with pytest.raises(PlanFormatError):
            parse_op(line)

    def test_examples_rendering(self):
        assert format_examples([]) == '(none)'
        entry = CacheEntry(1, 'movies', 'director', 'Who directed Inception?',
                           QueryPlan((PointQuery('Inception', 'directedBy'),)), 'Christopher Nolan')
        assert 'OP: POINT Inception directedBy' in format_examples([entry])


class TestValidate:
    def test_point_and_hop_are_checked(self):
        plan = QueryPlan((PointQuery('a', 'p'), DepthHop('q'), StarQuery('a'), BreadthStep()))
        assert validate(plan, {'p', 'q'}) == []
        assert len(validate(plan, {'p'})) == 1
        assert len(validate(plan, set())) == 2


class TestCompile:
    def test_golden_compile(self, golden_llm, golden_kg):
        plan = compile_plan(GOLDEN_ISR, golden_kg.local_schema('Inception'), [], golden_llm)
        assert plan == QueryPlan((PointQuery('Inception', 'directedBy'),))

    def test_hallucinated_ops_are_dropped(self, scripted):
        llm = scripted([('QUERY_COMPILE', 'Inception',
                         "OP: POINT Inception directedBy\nOP: POINT Inception director\nnoise line")])
        flags = []
        plan = compile_plan(GOLDEN_ISR, {'directedBy', 'releaseDate'}, [], llm, flags)
        assert plan == QueryPlan((PointQuery('Inception', 'directedBy'),))
        assert any('director' in f for f in flags)

    def test_nothing_parseable_requests_breadth(self, scripted):
        with pytest.raises(CompileError) as excinfo:
            compile_plan(GOLDEN_ISR, {'directedBy'}, [], scripted(default='I cannot help'))
        assert excinfo.value.breadth_fallback

    def test_everything_dropped_requests_breadth(self, scripted):
        llm = scripted([('QUERY_COMPILE', 'Inception', "OP: POINT Inception madeBy")])
        with pytest.raises(CompileError) as excinfo:
            compile_plan(GOLDEN_ISR, {'directedBy'}, [], llm)
        assert excinfo.value.breadth_fallback


predicate_names = st.sampled_from(['directedBy', 'releaseDate', 'director', 'madeBy', 'nominated'])


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(['POINT', 'STAR', 'HOP']), predicate_names), min_size=1, max_size=6))
def test_compiled_plans_always_validate(ops):
    lines = []
    for kind, predicate in ops:
        if kind == 'POINT':
            lines.append(f"OP: POINT Inception {predicate}")
        elif kind == 'STAR':
            lines.append("OP: STAR Inception")
        else:
            lines.append(f"OP: HOP {predicate}")
    schema = {'directedBy', 'releaseDate'}
    llm = LlmClient(register_script([('QUERY_COMPILE', 'Inception', '\n'.join(lines))]))
    try:
        plan = compile_plan(GOLDEN_ISR, schema, [], llm)
    except CompileError:
        return
    assert validate(plan, schema) == []


class TestExecute:
    def test_point_query_frontier(self, golden_kg):
        sub = execute(QueryPlan((PointQuery('Inception', 'directedBy'),)), golden_kg, topic='Inception')
        assert [t.obj for t in sub.sorted_triples()] == ['Christopher Nolan']
        assert sub.frontier == {'Christopher Nolan'}

    def test_cached_plan_replays_hops(self, golden_kg):
        plan = QueryPlan.parse("OP: POINT Inception directedBy\nOP: HOP directed\nOP: BREADTH")
        sub = execute(plan, golden_kg, topic='Inception', question='Which film was nominated?')
        lines = sub.canonical_lines()
        assert 'Dunkirk\tnominated\t"Academy Award for Best Picture (2018)"' in lines
        assert len(sub) == 5

    def test_hop_replays_the_breadth_scan_of_its_frontier(self, make_kg):
        kg = make_kg([('Inception', 'directedBy', 'Christopher Nolan'),
                      ('Christopher Nolan', 'directed', 'Dunkirk'),
                      ('Christopher Nolan', 'born', '"1970"')])
        plan = QueryPlan.parse("OP: POINT Inception directedBy\nOP: HOP directed")
        sub = execute(plan, kg, topic='Inception')
        assert 'Christopher Nolan\tborn\t"1970"' in sub.canonical_lines()
        assert len(sub) == 3
        depth_only = execute(plan, kg, topic='Inception', use_breadth=False)
        assert len(depth_only) == 2

    def test_empty_plan_keeps_topic_as_frontier(self, golden_kg):
        sub = execute(QueryPlan(), golden_kg, topic='Inception')
        assert len(sub) == 0
        assert sub.frontier == {'Inception'}

    def test_star_query(self, golden_kg):
        sub = execute(QueryPlan((StarQuery('Inception'),)), golden_kg)
        assert len(sub) == 2
        assert sub.frontier == {'Christopher Nolan'}

    def test_api_results_are_limited_to_the_kg(self, golden_kg):
        from cacherag.kg_store import Triple

        def nominees(kg, year):
            return [Triple('Dunkirk', 'nominated', f'Academy Award for Best Picture ({year})', True),
                    Triple('Dunkirk', 'won', 'Everything', False)]

        registry = ApiRegistry()
        registry.register('nominees', nominees)
        assert 'nominees' in registry
        sub = execute(QueryPlan((ApiCall('nominees', (('year', '2018'),)),)), golden_kg, api_handlers=registry)
        assert len(sub) == 1

    def test_unregistered_api_is_an_error(self, golden_kg):
        with pytest.raises(ExecutionError):
            execute(QueryPlan((ApiCall('nothing'),)), golden_kg)

    def test_subgraph_serialization_is_sorted(self, golden_kg):
        sub = Subgraph(frozenset(golden_kg.triples))
        assert sub.sorted_triples() == sorted(golden_kg.triples)
        assert sub.canonical_lines()[0] == "Christopher Nolan\tdirected\tDunkirk"


GOLDEN = load_triples_file(GOLDEN_KG, GOLDEN_DOMAIN)
START_ENTITIES = ['Inception', 'Christopher Nolan', 'Dunkirk', 'Tenet', 'Memento']


def nominations_in(kg, year):
    return [t for t in kg.star_triples('Dunkirk')[0] if year in t.obj]


independent_ops = st.one_of(
    st.builds(PointQuery, st.sampled_from(START_ENTITIES), st.sampled_from(sorted(GOLDEN.vocabulary))),
    st.builds(StarQuery, st.sampled_from(START_ENTITIES)),
    st.just(ApiCall('nominations', (('year', '2018'),))),
)


@settings(max_examples=100, deadline=None)
@given(st.lists(independent_ops, min_size=1, max_size=6).flatmap(
    lambda ops: st.tuples(st.just(ops), st.permutations(ops))))
def test_independent_ops_give_the_same_subgraph_in_any_order(plans):
    ops, shuffled = plans
    registry = ApiRegistry({'nominations': nominations_in})
    first = execute(QueryPlan(tuple(ops)), GOLDEN, topic='Inception', api_handlers=registry)
    second = execute(QueryPlan(tuple(shuffled)), GOLDEN, topic='Inception', api_handlers=registry)
    assert first == second
    assert first.triples <= set(GOLDEN.triples)
