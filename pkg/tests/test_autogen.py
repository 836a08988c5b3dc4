from collections import Counter
import pytest
from cacherag.autogen import (
    Verdict, compile_seed_plan, filter_candidates, parse_candidates, prewarm, prewarm_with_report,
    sample_star_schemas,
)
from cacherag.kg_store import KnowledgeGraph, Triple
from cacherag.query_compiler import PointQuery, QueryPlan, validate
from cacherag.semantic_cache import CacheConfig, SemanticCache

NOLAN_GROUP = [
    Triple('Christopher Nolan', 'directed', 'Dunkirk'),
    Triple('Christopher Nolan', 'directed', 'Interstellar'),
    Triple('Christopher Nolan', 'directed', 'Tenet'),
]


class TestSampling:
    def test_same_seed_same_sample(self, golden_kg):
        assert sample_star_schemas(golden_kg, 2, seed=7) == sample_star_schemas(golden_kg, 2, seed=7)

    def test_groups_are_full_stars(self, golden_kg):
        groups = sample_star_schemas(golden_kg, 3, seed=0)
        assert sorted(len(g) for g in groups) == [1, 2, 3]
        for group in groups:
            assert len({t.subject for t in group}) == 1

    def test_count_above_entity_count_is_capped_and_flagged(self, golden_kg):
        flags = []
        groups = sample_star_schemas(golden_kg, 10, seed=0, flags=flags)
        assert len(groups) == 3
        assert flags

    def test_bad_count(self, golden_kg):
        with pytest.raises(ValueError):
            sample_star_schemas(golden_kg, 0, seed=0)

    def test_sampling_is_uniform_over_entities(self, make_kg):
        kg = make_kg([(f"e{i:03d}", 'p', 'x') for i in range(100)])
        counts = Counter()
        for seed in range(10_000):
            [group] = sample_star_schemas(kg, 1, seed)
            counts[group[0].subject] += 1
        expected = 10_000 / 100
        chi_square = sum((counts[e] - expected) ** 2 / expected for e in kg.entities)
        # 99 degrees of freedom; the 0.999 quantile is about 148
        assert chi_square < 160


class TestCandidates:
    def test_parse_keeps_known_triples(self):
        text = ("QUESTION: Which films has Christopher Nolan directed?\n"
                "TRIPLE: Christopher Nolan | directed | Dunkirk\n"
                "TRIPLE: Christopher Nolan | directed | Tenet\n"
                "ANSWER: Dunkirk and Tenet\n")
        [candidate] = parse_candidates(text, NOLAN_GROUP)
        assert candidate.verdict == Verdict.PENDING
        assert [t.obj for t in candidate.triples] == ['Dunkirk', 'Tenet']

    def test_foreign_triples_reject_the_candidate(self):
        text = ("QUESTION: Did Nolan direct Memento?\n"
                "TRIPLE: Christopher Nolan | directed | Memento\n"
                "ANSWER: yes\n")
        [candidate] = parse_candidates(text, NOLAN_GROUP)
        assert candidate.verdict == Verdict.REJECTED
        assert 'Memento' in candidate.note

    def test_na_answers_are_skipped(self):
        assert parse_candidates("NA", NOLAN_GROUP) == []
        text = "QUESTION: What is Q42?\nTRIPLE: Christopher Nolan | directed | Dunkirk\nANSWER: NA\n"
        assert parse_candidates(text, NOLAN_GROUP) == []

    def test_at_most_five(self):
        block = "QUESTION: q{i}\nTRIPLE: Christopher Nolan | directed | Dunkirk\nANSWER: a\n"
        text = ''.join(block.format(i=i) for i in range(8))
        assert len(parse_candidates(text, NOLAN_GROUP)) == 5

    def test_review_omissions_are_rejections(self, scripted):
        text = "".join(f"QUESTION: q{i}\nTRIPLE: Christopher Nolan | directed | Dunkirk\nANSWER: a\n"
                       for i in range(3))
        candidates = parse_candidates(text, NOLAN_GROUP)
        llm = scripted([('AUTOGEN_FILTER', 'C1', "C1: KEEP\nC2: REJECT")])
        verdicts = [c.verdict for c in filter_candidates(candidates, llm)]
        assert verdicts == [Verdict.KEPT, Verdict.REJECTED, Verdict.REJECTED]
        assert candidates[2].note == 'missing from review'


def test_seed_plan_groups_by_subject_and_predicate():
    triples = NOLAN_GROUP + [Triple('Dunkirk', 'nominated', 'Best Picture', True)]
    plan = compile_seed_plan(triples)
    assert plan == QueryPlan((PointQuery('Christopher Nolan', 'directed'), PointQuery('Dunkirk', 'nominated')))


class TestPrewarm:
    def test_golden_prewarm_inserts_one_entry_per_entity(self, golden_kg, golden_llm):
        cache = SemanticCache(CacheConfig())
        report = prewarm_with_report(golden_kg, cache, count=3, seed=0, llm=golden_llm)
        assert report.sampled == 3
        assert report.inserted == 3
        assert len(cache) == 3
        for entry in cache.entries():
            assert entry.domain == 'movies'
            assert validate(entry.plan, golden_kg.vocabulary) == []

    def test_every_kept_candidate_is_inserted(self, golden_kg, scripted):
        questions = "".join(
            f"QUESTION: Which films has Christopher Nolan directed, variant {i}?\n"
            "TRIPLE: Christopher Nolan | directed | Dunkirk\nANSWER: Dunkirk\n" for i in range(5))
        llm = scripted([
            ('AUTOGEN_QUESTIONS', 'Christopher Nolan | directed', questions),
            ('AUTOGEN_FILTER', 'C1', "\n".join(f"C{i}: KEEP" for i in range(1, 6))),
        ])
        kg_nolan_only = KnowledgeGraph([t for t in golden_kg.triples if t.subject == "Christopher Nolan"], "movies")
        cache = SemanticCache(CacheConfig())
        assert prewarm(kg_nolan_only, cache, count=5, seed=1, llm=llm) == 5
        assert all(e.plan == QueryPlan((PointQuery('Christopher Nolan', 'directed'),)) for e in cache.entries())

    def test_rerun_skips_duplicates(self, golden_kg, golden_llm):
        cache = SemanticCache(CacheConfig())
        prewarm(golden_kg, cache, count=3, seed=0, llm=golden_llm)
        report = prewarm_with_report(golden_kg, cache, count=3, seed=0, llm=golden_llm)
        assert report.inserted == 0
        assert report.skipped == 3
        assert len(cache) == 3

    def test_empty_kg_does_nothing(self, make_kg, golden_llm):
        cache = SemanticCache(CacheConfig())
        assert prewarm(make_kg([]), cache, count=3, seed=0, llm=golden_llm) == 0
        assert golden_llm.call_count == 0
