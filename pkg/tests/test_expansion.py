import random
from datetime import datetime, timezone
import pytest
from cacherag.expansion import (
    DispatcherVerdict, ExpansionBounds, Status, Termination, TokenOverlapRanker, breadth_expand,
    depth_expand, dispatch, heuristic_traversal, parse_verdict,
)
from cacherag.kg_store import KnowledgeGraph, Triple
from cacherag.pipeline.trace import Trace
from cacherag.query_compiler import BreadthStep, DepthHop, PointQuery, QueryPlan, execute
from cacherag.semantic_parser import QueryContext
from cacherag.config import GOLDEN_QUESTION

QUERY_TIME = datetime(2024, 3, 1, tzinfo=timezone.utc)


def golden_start(kg):
    plan = QueryPlan((PointQuery('Inception', 'directedBy'),))
    return plan, execute(plan, kg, topic='Inception')


class TestVerdict:
    def test_complete(self):
        assert parse_verdict("STATUS: COMPLETE\nNEXT_RELATION: ignored").complete

    def test_incomplete_with_hints(self):
        verdict = parse_verdict('STATUS: incomplete\nNEXT_RELATION: "directed"\nFRONTIER: Dunkirk, "Tenet"')
        assert verdict.status == Status.INCOMPLETE
        assert verdict.next_relation == 'directed'
        assert verdict.frontier_hint == {'Dunkirk', 'Tenet'}

    @pytest.mark.parametrize('relation', ['none', 'NA', '-', ''])
    def test_no_relation(self, relation):
        assert parse_verdict(f"STATUS: INCOMPLETE\nNEXT_RELATION: {relation}").next_relation is None

    def test_unreadable_is_incomplete(self):
        verdict = parse_verdict("I think it is probably fine")
        assert not verdict.complete
        assert not verdict.parsed


class TestDispatch:
    def test_empty_subgraph_needs_no_call(self, scripted, golden_kg):
        llm = scripted()
        verdict = dispatch(QueryContext("q", QUERY_TIME), execute(QueryPlan(), golden_kg, topic='X'), [], llm)
        assert verdict.forced
        assert llm.call_count == 0

    def test_unparsed_completion_is_flagged(self, scripted, golden_kg):
        trace = Trace()
        _, sub = golden_start(golden_kg)
        verdict = dispatch(QueryContext("q", QUERY_TIME), sub, [], scripted(default='no idea'), trace)
        assert not verdict.complete
        assert [r['code'] for r in trace.of('flag')] == ['dispatch_unparsed']

    def test_golden_pre_check(self, golden_llm, golden_kg):
        _, sub = golden_start(golden_kg)
        verdict = dispatch(QueryContext(GOLDEN_QUESTION, QUERY_TIME), sub, [], golden_llm)
        assert verdict.status == Status.INCOMPLETE
        assert verdict.next_relation == 'directed'


class TestSteps:
    def test_depth_expand_joins_from_every_frontier_entity(self, golden_kg):
        found = depth_expand(golden_kg, {'Christopher Nolan', 'Inception'}, 'directed')
        assert sorted(t.obj for t in found) == ['Dunkirk', 'Interstellar', 'Tenet']

    def test_breadth_expand_caps_each_entity(self, make_kg):
        kg = make_kg([('hub', f'p{i}', f'o{i}') for i in range(10)] + [('other', f'q{i}', 'x') for i in range(4)])
        found = breadth_expand(kg, {'hub', 'other'}, 'anything', k_degree=3)
        assert sum(1 for t in found if t.subject == 'hub') == 3
        assert sum(1 for t in found if t.subject == 'other') == 3

    def test_breadth_prefers_predicates_named_in_the_question(self, make_kg):
        kg = make_kg([('Dunkirk', 'releaseDate', 'x'), ('Dunkirk', 'nominated', 'y'), ('Dunkirk', 'budget', 'z')])
        found = breadth_expand(kg, {'Dunkirk'}, 'Which award was Dunkirk nominated for?', k_degree=1)
        assert [t.predicate for t in found] == ['nominated']

    def test_ranker_splits_camel_case(self):
        ranker = TokenOverlapRanker()
        assert ranker.score(['release', 'date'], 'releaseDate') == 2.0

    def test_bad_bounds(self):
        with pytest.raises(ValueError):
            ExpansionBounds(k_depth=0)
        with pytest.raises(ValueError):
            ExpansionBounds(k_degree=0)


class TestTraversal:
    def test_golden_traversal(self, golden_llm, golden_kg):
        plan, sub = golden_start(golden_kg)
        result = heuristic_traversal(QueryContext(GOLDEN_QUESTION, QUERY_TIME), plan, sub, [],
                                     ExpansionBounds(3, 30), golden_llm, golden_kg)
        assert result.termination == Termination.COMPLETE
        assert result.iterations == 2
        assert result.plan == QueryPlan((PointQuery('Inception', 'directedBy'), DepthHop('directed'), BreadthStep()))
        assert 'Dunkirk\tnominated\t"Academy Award for Best Picture (2018)"' in result.subgraph.canonical_lines()
        assert result.dispatch_calls == 3

    def test_pre_check_verdict_is_reused(self, golden_llm, golden_kg):
        plan, sub = golden_start(golden_kg)
        verdict = DispatcherVerdict(Status.INCOMPLETE, 'directed')
        result = heuristic_traversal(QueryContext(GOLDEN_QUESTION, QUERY_TIME), plan, sub, [],
                                     ExpansionBounds(3, 30), golden_llm, golden_kg, verdict=verdict)
        assert result.dispatch_calls == 2

    def test_bound_hit_after_judging_the_final_subgraph(self, scripted, golden_kg):
        llm = scripted(default="STATUS: INCOMPLETE")
        plan, sub = golden_start(golden_kg)
        result = heuristic_traversal(QueryContext("q", QUERY_TIME), plan, sub, [], ExpansionBounds(2, 30),
                                     llm, golden_kg)
        assert result.termination == Termination.BOUND_HIT
        # the pre-check and the one expansion it can still afford to judge
        assert result.iterations == 1
        assert llm.call_count == 2
        assert result.subgraph.serialize() in llm.calls[-1].prompt

    def test_answer_reached_on_the_last_affordable_hop_completes(self, golden_llm, golden_kg):
        plan, sub = golden_start(golden_kg)
        result = heuristic_traversal(QueryContext(GOLDEN_QUESTION, QUERY_TIME), plan, sub, [],
                                     ExpansionBounds(3, 30), golden_llm, golden_kg)
        assert result.termination == Termination.COMPLETE
        assert result.dispatch_calls == 3
        tighter = heuristic_traversal(QueryContext(GOLDEN_QUESTION, QUERY_TIME), plan, sub, [],
                                      ExpansionBounds(2, 30), golden_llm, golden_kg)
        assert tighter.termination == Termination.BOUND_HIT
        assert tighter.iterations == 1

    def test_single_judgement_budget_never_expands(self, scripted, golden_kg):
        llm = scripted(default="STATUS: INCOMPLETE\nNEXT_RELATION: directed")
        plan, sub = golden_start(golden_kg)
        result = heuristic_traversal(QueryContext("q", QUERY_TIME), plan, sub, [], ExpansionBounds(1, 30),
                                     llm, golden_kg)
        assert result.termination == Termination.BOUND_HIT
        assert (result.iterations, result.plan, result.subgraph) == (0, plan, sub)
        assert llm.call_count == 1

    def test_empty_start_expands_k_depth_times(self, scripted, golden_kg):
        llm = scripted(default="STATUS: INCOMPLETE")
        sub = execute(QueryPlan(), golden_kg, topic='Inception')
        result = heuristic_traversal(QueryContext("q", QUERY_TIME), QueryPlan(), sub, [], ExpansionBounds(2, 30),
                                     llm, golden_kg)
        assert result.iterations == 2
        assert result.dispatch_calls == 2

    def test_frontier_hint_outside_subgraph_is_ignored(self, scripted, golden_kg):
        trace = Trace()
        llm = scripted(default="STATUS: INCOMPLETE\nFRONTIER: Memento")
        plan, sub = golden_start(golden_kg)
        result = heuristic_traversal(QueryContext("q", QUERY_TIME), plan, sub, [], ExpansionBounds(2, 30),
                                     llm, golden_kg, trace=trace)
        assert any('Memento' in f for f in result.flags)
        assert 'frontier_hint_ignored' in [r['code'] for r in trace.of('flag')]
        assert result.records[0].frontier == ['Christopher Nolan']

    def test_unknown_relation_falls_back_to_breadth(self, scripted, golden_kg):
        llm = scripted(default="STATUS: INCOMPLETE\nNEXT_RELATION: composedBy")
        plan, sub = golden_start(golden_kg)
        result = heuristic_traversal(QueryContext("q", QUERY_TIME), plan, sub, [], ExpansionBounds(2, 30),
                                     llm, golden_kg)
        assert result.plan.ops[-1] == BreadthStep()
        assert any('composedBy' in f for f in result.flags)

    def test_depth_only_ablation(self, golden_llm, golden_kg):
        plan, sub = golden_start(golden_kg)
        result = heuristic_traversal(QueryContext(GOLDEN_QUESTION, QUERY_TIME), plan, sub, [],
                                     ExpansionBounds(3, 30), golden_llm, golden_kg, use_breadth=False)
        # Without breadth the nomination is never reached
        assert result.termination == Termination.BOUND_HIT
        assert all(r.breadth_triples == 0 for r in result.records)

    def test_breadth_only_ablation(self, golden_llm, golden_kg):
        plan, sub = golden_start(golden_kg)
        result = heuristic_traversal(QueryContext(GOLDEN_QUESTION, QUERY_TIME), plan, sub, [],
                                     ExpansionBounds(3, 30), golden_llm, golden_kg, use_depth=False)
        assert result.termination == Termination.COMPLETE
        assert result.plan.ops[1:] == (BreadthStep(), BreadthStep())


def random_kg(rnd: random.Random) -> KnowledgeGraph:
    entities = [f"e{i}" for i in range(rnd.randint(2, 12))]
    predicates = [f"p{i}" for i in range(rnd.randint(1, 4))]
    triples = [Triple(rnd.choice(entities), rnd.choice(predicates), rnd.choice(entities))
               for _ in range(rnd.randint(1, 80))]
    return KnowledgeGraph(triples, 'random')


def test_iterations_never_exceed_the_bounds(scripted, rng):
    for _ in range(1000):
        kg = random_kg(rng)
        k_depth, k_degree = rng.randint(1, 4), rng.randint(1, 5)
        relation = rng.choice(sorted(kg.vocabulary) + ['none'])
        llm = scripted(default=f"STATUS: INCOMPLETE\nNEXT_RELATION: {relation}")
        start = kg.entities[0]
        plan = QueryPlan((PointQuery(start, sorted(kg.local_schema(start))[0]),))
        sub = execute(plan, kg, topic=start)
        result = heuristic_traversal(QueryContext("q", QUERY_TIME), plan, sub, [],
                                     ExpansionBounds(k_depth, k_degree), llm, kg)
        assert result.iterations == k_depth - 1
        assert result.termination == Termination.BOUND_HIT
        assert result.dispatch_calls == k_depth
        assert len(result.plan) == k_depth
        for record in result.records:
            assert record.breadth_triples <= k_degree * len(record.frontier)


def test_subgraph_only_grows_and_stays_inside_the_kg(scripted, rng):
    # One more judgement buys exactly one more expansion of the same run
    for _ in range(200):
        kg = random_kg(rng)
        relation = rng.choice(sorted(kg.vocabulary) + ['none'])
        start = kg.entities[0]
        plan = QueryPlan((PointQuery(start, sorted(kg.local_schema(start))[0]),))
        sub = execute(plan, kg, topic=start)
        previous = sub.triples
        for budget in range(1, 6):
            llm = scripted(default=f"STATUS: INCOMPLETE\nNEXT_RELATION: {relation}")
            result = heuristic_traversal(QueryContext("q", QUERY_TIME), plan, sub, [],
                                         ExpansionBounds(budget, 3), llm, kg)
            assert result.iterations == budget - 1
            assert previous <= result.subgraph.triples <= set(kg.triples)
            previous = result.subgraph.triples


def test_breadth_on_a_hub_keeps_the_best_ranked_neighbours(make_kg, rng):
    words = ['award', 'nomination', 'film', 'year', 'budget', 'cast', 'genre', 'studio']
    rows = []
    for i in range(100):
        first, second = rng.choice(words), rng.choice(words)
        rows.append((f'{first}_{second}_{i}', {first, second}))
    kg = make_kg([('hub', predicate, f'n{i}') for i, (predicate, _) in enumerate(rows)])
    question = 'Which award nomination did the studio receive?'
    asked = {'award', 'nomination', 'studio'}

    scores = {predicate: len(named & asked) for predicate, named in rows}
    oracle = sorted(kg.triples, key=lambda t: (-scores[t.predicate], t.predicate, t.object_text))[:30]

    found = breadth_expand(kg, {'hub'}, question, k_degree=30)
    assert len(found) == 30
    assert found == set(oracle)


def test_replaying_the_traversal_plan_rebuilds_its_subgraph(scripted, rng):
    for _ in range(300):
        kg = random_kg(rng)
        k_depth, k_degree = rng.randint(1, 4), rng.randint(1, 5)
        relation = rng.choice(sorted(kg.vocabulary) + ['none'])
        llm = scripted(default=f"STATUS: INCOMPLETE\nNEXT_RELATION: {relation}")
        start = kg.entities[0]
        plan = QueryPlan((PointQuery(start, sorted(kg.local_schema(start))[0]),))
        sub = execute(plan, kg, topic=start, question="q", k_degree=k_degree)
        result = heuristic_traversal(QueryContext("q", QUERY_TIME), plan, sub, [],
                                     ExpansionBounds(k_depth, k_degree), llm, kg)
        replayed = execute(result.plan, kg, topic=start, question="q", k_degree=k_degree)
        assert replayed.triples == result.subgraph.triples
