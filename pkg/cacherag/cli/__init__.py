"""
Command-line surface for cacherag

This package is split by concern:
  base.py      - raising argument parser, exit codes, config-to-engine builders
  commands/    - per-area command mixins composed onto CacheRagCli
"""
import logging
import sys
from pathlib import Path
from cacherag import metrics
from cacherag.cli.base import (
    EXIT_INTERNAL, EXIT_OK, EXIT_USAGE, CliArgumentParser, UsageError,
)
from cacherag.cli.commands.ask import AskCommandsMixin
from cacherag.cli.commands.bench import BenchCommandsMixin
from cacherag.cli.commands.cache import CacheCommandsMixin
from cacherag.cli.commands.kg import KgCommandsMixin
from cacherag.cli.commands.repl import ReplCommandsMixin
from cacherag.cli.commands.replay import ReplayCommandsMixin
from cacherag.config import load_config, validate_config
from cacherag.kg_store import MalformedTripleError
from cacherag.semantic_cache.store import CacheFormatError

logger = logging.getLogger(__name__)

# Errors caused by the user's input rather than by the engine
USER_ERRORS = (UsageError, FileNotFoundError, IsADirectoryError, MalformedTripleError, CacheFormatError)


class CacheRagCli(
    KgCommandsMixin, CacheCommandsMixin, AskCommandsMixin, ReplCommandsMixin,
    BenchCommandsMixin, ReplayCommandsMixin,
):
    def __init__(self, stdout=None, stdin=None):
        self.out = stdout or sys.stdout
        self.stdin = stdin or sys.stdin
        self.config = None
        self.parser = self.setup_parser()

    def setup_parser(self):
        parser = CliArgumentParser(prog='cacherag', description='Cache-guided question answering over KGs')
        parser.add_argument('--config', help='key=value config file')
        parser.add_argument('--verbose', action='store_true')
        parser.add_argument('--metrics', help='Write Prometheus metrics here on exit')
        parser.add_argument('--llm', choices=('live', 'script'))
        parser.add_argument('--script', dest='llm_script', help='Scripted backend rules file')
        parser.add_argument('--cache', dest='cache_path', help='Cache file (loaded if present)')
        parser.add_argument('--descriptions', dest='descriptions_path', help='Domain descriptions file')
        parser.add_argument('--prompts', dest='prompt_dir', help='Prompt template directory')
        parser.add_argument('--capacity', type=int, help='Per-bucket LRU capacity')
        parser.add_argument('--lambda', dest='lam', type=float)
        parser.add_argument('--k', type=int)
        parser.add_argument('--k-depth', dest='k_depth', type=int)
        parser.add_argument('--k-degree', dest='k_degree', type=int)
        parser.add_argument('--floor', dest='relevance_floor', type=float)

        subparsers = parser.add_subparsers(dest='command', required=True, parser_class=CliArgumentParser)
        self.register_kg_commands(subparsers)
        self.register_cache_commands(subparsers)
        self.register_ask_commands(subparsers)
        self.register_repl_commands(subparsers)
        self.register_bench_commands(subparsers)
        self.register_replay_commands(subparsers)
        return parser

    def echo(self, text: str = ''):
        print(text, file=self.out)

    def resolve_config(self, args):
        overrides = {
            key: getattr(args, key)
            for key in ('llm', 'llm_script', 'cache_path', 'descriptions_path', 'prompt_dir', 'capacity',
                        'lam', 'k', 'k_depth', 'k_degree', 'relevance_floor')
        }
        try:
            cfg = load_config(args.config, overrides=overrides)
        except ValueError as e:
            raise UsageError(str(e)) from None
        problems = validate_config(cfg)
        if problems:
            raise UsageError("Invalid configuration:\n  - " + "\n  - ".join(problems))
        return cfg

    def run(self, argv=None) -> int:
        from cacherag.main import setup_logging

        try:
            args = self.parser.parse_args(argv)
        except UsageError as e:
            print(f"❌ {e}", file=sys.stderr)
            return EXIT_USAGE
        except SystemExit as e:
            # --help
            return e.code if isinstance(e.code, int) else EXIT_OK

        setup_logging(args.verbose)
        try:
            self.config = self.resolve_config(args)
            return args.handler(args) or EXIT_OK
        except USER_ERRORS as e:
            print(f"❌ {e}", file=sys.stderr)
            return EXIT_USAGE
        except Exception as e:
            logger.exception("Command %s failed", args.command)
            print(f"💥 Internal error: {e}", file=sys.stderr)
            return EXIT_INTERNAL
        finally:
            if args.metrics:
                self.write_metrics(args.metrics)

    def write_metrics(self, path):
        try:
            Path(path).write_bytes(metrics.get_metrics())
        except OSError as e:
            logger.error("Could not write metrics to %s: %s", path, e)


__all__ = ['CacheRagCli', 'UsageError', 'USER_ERRORS']
