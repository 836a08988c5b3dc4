from cacherag.cli.base import build_engine, kg_paths_for, parse_time, persist_cache
from cacherag.pipeline import AnswerStatus


class AskCommandsMixin:
    def register_ask_commands(self, subparsers):
        ask = subparsers.add_parser('ask', help='Answer one question')
        ask.add_argument('question')
        ask.add_argument('--kg', action='append', help='TSV triple file (repeat for several KGs)')
        ask.add_argument('--domain', default='', help='Domain label for a single KG')
        ask.add_argument('--time', help='Query time as ISO-8601 (default: now)')
        ask.add_argument('--trace', help='Write the JSON-lines trace here')
        ask.set_defaults(handler=self.ask)

    def print_answer(self, record):
        self.echo(record.answer)
        if record.status == AnswerStatus.FALLBACK:
            self.echo("⚠️  Answered without KG evidence (fallback)")
        if len(record.plan_used):
            self.echo(f"   plan: {' | '.join(record.plan_used.serialize().splitlines())}")

    def ask(self, args):
        engine = build_engine(self.config, kg_paths_for(args, self.config), args.domain)
        record = engine.ask(args.question, parse_time(args.time))
        self.print_answer(record)
        if args.trace:
            record.trace.write(args.trace)
        persist_cache(self.config, engine.cache)
        return 0
