from cacherag.autogen import prewarm_with_report
from cacherag.cli.base import UsageError, build_llm, load_kgs, open_cache, persist_cache
from cacherag.semantic_cache import CacheConfig
from cacherag.semantic_cache.store import export_cache, load_cache, save_cache
from cacherag.utils import human_readable_size


class CacheCommandsMixin:
    def register_cache_commands(self, subparsers):
        cache = subparsers.add_parser('cache', help='Warm, inspect, export or import the semantic cache')
        actions = cache.add_subparsers(dest='cache_command', required=True)

        warm = actions.add_parser('warm', help='Pre-warm the cache with auto-generated questions')
        warm.add_argument('--kg', required=True)
        warm.add_argument('--domain', default='')
        warm.add_argument('--count', type=int, required=True, help='Entities to sample')
        warm.add_argument('--seed', type=int, default=0)
        warm.set_defaults(handler=self.cache_warm)

        stats = actions.add_parser('stats', help='Entries per bucket, hit/miss counters and size')
        stats.set_defaults(handler=self.cache_stats)

        export = actions.add_parser('export', help='Write the cache as JSON lines')
        export.add_argument('out', help="Output file, or '-' for stdout")
        export.set_defaults(handler=self.cache_export)

        imp = actions.add_parser('import', help='Replace the --cache file with an exported cache')
        imp.add_argument('source')
        imp.set_defaults(handler=self.cache_import)

    def cache_warm(self, args):
        if args.count < 1:
            raise UsageError(f"--count must be at least 1, got {args.count}")
        kg = load_kgs([args.kg], args.domain)[0]
        cache = open_cache(self.config)
        report = prewarm_with_report(kg, cache, args.count, args.seed, build_llm(self.config))
        self.echo(f"🔥 Pre-warmed {kg.domain_label}: sampled {report.sampled}, "
                  f"candidates {report.candidates}, kept {report.kept}, inserted {report.inserted}")
        for flag in report.flags:
            self.echo(f"⚠️  {flag}")
        if not persist_cache(self.config, cache):
            self.echo("⚠️  No --cache file given; the warmed entries were not saved")
        return 0

    def cache_stats(self, args):
        stats = open_cache(self.config).stats()
        self.echo(f"entries: {stats['entries']}")
        self.echo(f"hits: {stats['hits']}")
        self.echo(f"misses: {stats['misses']}")
        self.echo(f"evictions: {stats['evictions']}")
        self.echo(f"size: {human_readable_size(stats['bytes'])}")
        self.echo(f"capacity: {stats['capacity'] or 'unbounded'}")
        for bucket, count in stats['buckets'].items():
            self.echo(f"  {bucket}: {count}")
        return 0

    def cache_export(self, args):
        cache = open_cache(self.config)
        if args.out == '-':
            export_cache(cache, self.out)
            return 0
        count = save_cache(cache, args.out)
        self.echo(f"📦 Exported {count} entries to {args.out}")
        return 0

    def cache_import(self, args):
        if not self.config.cache_path:
            raise UsageError("cache import needs --cache FILE to write into")
        cache = load_cache(args.source, CacheConfig.from_config(self.config))
        persist_cache(self.config, cache)
        self.echo(f"📥 Imported {len(cache)} entries into {self.config.cache_path}")
        return 0
