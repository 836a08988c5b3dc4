import logging
from cacherag.cli.base import UsageError, build_engine, kg_paths_for, persist_cache
from cacherag.pipeline.trace import Trace

logger = logging.getLogger(__name__)

PROMPT = "❓ "


class ReplCommandsMixin:
    def register_repl_commands(self, subparsers):
        repl = subparsers.add_parser('repl', help='Answer questions interactively against one live cache')
        repl.add_argument('--kg', action='append')
        repl.add_argument('--domain', default='')
        repl.add_argument('--persist', action='store_true', help='Save the cache to --cache on exit')
        repl.add_argument('--trace', help='Append every question trace here')
        repl.set_defaults(handler=self.repl)

    def repl(self, args):
        if args.persist and not self.config.cache_path:
            raise UsageError("--persist needs --cache FILE")
        engine = build_engine(self.config, kg_paths_for(args, self.config), args.domain)
        self.echo(f"💬 {len(engine.kgs)} KG(s) loaded, {len(engine.cache)} cached entries. "
                  f"Type :stats or :quit.")
        answered = 0
        try:
            while True:
                self.out.write(PROMPT)
                self.out.flush()
                line = self.stdin.readline()
                if not line:
                    break
                question = line.strip()
                if not question:
                    continue
                if question == ':quit':
                    break
                if question == ':stats':
                    stats = engine.cache.stats()
                    self.echo(f"entries {stats['entries']}, hits {stats['hits']}, "
                              f"misses {stats['misses']}, evictions {stats['evictions']}")
                    continue
                trace = Trace()
                record = engine.ask(question, trace=trace)
                self.print_answer(record)
                if args.trace:
                    trace.write(args.trace, append=True)
                answered += 1
        finally:
            if args.persist:
                persist_cache(self.config, engine.cache)
                self.echo(f"💾 Saved {len(engine.cache)} entries to {self.config.cache_path}")
        logger.info("REPL answered %s questions", answered)
        return 0
