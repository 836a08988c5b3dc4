from datetime import datetime, timezone
from cacherag.autogen import prewarm_with_report
from cacherag.config import GOLDEN_DOMAIN, GOLDEN_KG, GOLDEN_QUESTION, GOLDEN_SCRIPT
from cacherag.kg_store import load_triples_file
from cacherag.llm_adapter import LlmClient, load_script
from cacherag.pipeline import AnswerStatus, Engine
from cacherag.pipeline.trace import Trace
from cacherag.semantic_cache import CacheConfig, SemanticCache

GOLDEN_QUERY_TIME = datetime(2024, 3, 1, tzinfo=timezone.utc)


def run_golden(config, prewarm_count: int = 3, seed: int = 0, trace: Trace | None = None):
    """Fixture KG + golden script + pre-warm, then the running-example question.
    Returns (record, report, llm_calls_for_question)."""
    kg = load_triples_file(GOLDEN_KG, GOLDEN_DOMAIN)
    llm = LlmClient(load_script(GOLDEN_SCRIPT))
    cache = SemanticCache(CacheConfig.from_config(config))
    report = prewarm_with_report(kg, cache, prewarm_count, seed, llm)
    engine = Engine([kg], cache, llm, config)
    before = llm.call_count
    record = engine.ask(GOLDEN_QUESTION, GOLDEN_QUERY_TIME, trace)
    return record, report, llm.call_count - before


class ReplayCommandsMixin:
    def register_replay_commands(self, subparsers):
        replay = subparsers.add_parser('replay', help='Replay a shipped scenario end to end')
        actions = replay.add_subparsers(dest='replay_command', required=True)

        golden = actions.add_parser('golden', help='The Inception example on the scripted backend')
        golden.add_argument('--trace', help='Write the JSON-lines trace here')
        golden.add_argument('--count', type=int, default=3, help='Entities to pre-warm from')
        golden.add_argument('--seed', type=int, default=0)
        golden.set_defaults(handler=self.replay_golden)

    def replay_golden(self, args):
        record, report, calls = run_golden(self.config, args.count, args.seed)
        self.echo(f"🔥 Pre-warmed {report.inserted} entries")
        self.echo(f"❓ {GOLDEN_QUESTION}")
        self.print_answer(record)
        self.echo(f"   {calls} LLM calls, termination {record.termination.value if record.termination else 'none'}, "
                  f"cached under {record.domain}/{record.aspect}")
        if args.trace:
            record.trace.write(args.trace)
        return 0 if record.status == AnswerStatus.ANSWERED else 2
