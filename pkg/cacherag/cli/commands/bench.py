import logging
import time
from cacherag.benchkit import DEFAULT_QUERIES, DEFAULT_SIZES, fit_log_growth, parse_sizes, run_scalability
from cacherag.cli.base import UsageError
from cacherag.utils import format_duration

logger = logging.getLogger(__name__)


class BenchCommandsMixin:
    def register_bench_commands(self, subparsers):
        bench = subparsers.add_parser('bench', help='Benchmarks')
        actions = bench.add_subparsers(dest='bench_command', required=True)

        scal = actions.add_parser('scalability', help='Lookup cost over growing synthetic KGs')
        scal.add_argument('--sizes', default=DEFAULT_SIZES, help="e.g. 40000x2^6 or 1000,2000,4000")
        scal.add_argument('--queries', type=int, default=DEFAULT_QUERIES, help='Queries per kind and size')
        scal.add_argument('--seed', type=int, default=0)
        scal.add_argument('--exponent', type=float, default=2.5)
        scal.add_argument('--out', help='CSV output (default: stdout)')
        scal.set_defaults(handler=self.bench_scalability)

    def bench_scalability(self, args):
        try:
            sizes = parse_sizes(args.sizes)
        except ValueError as e:
            raise UsageError(str(e)) from None
        started = time.perf_counter()
        report = run_scalability(sizes, args.queries, args.seed, args.exponent)
        elapsed = format_duration(time.perf_counter() - started)

        if args.out:
            with open(args.out, 'w', encoding='utf-8', newline='') as f:
                report.to_csv(f)
            self.echo(f"📈 Wrote {len(report.rows)} rows to {args.out} in {elapsed}")
        else:
            report.to_csv(self.out)
            logger.info("Scalability run finished in %s", elapsed)

        if len(sizes) > 1:
            for kind in ('point', 'star'):
                fit = fit_log_growth(report, kind)
                message = f"{kind}: comparisons = {fit.a:.2f} + {fit.b:.2f}*log2(n), R^2 {fit.r2:.3f}"
                if args.out:
                    self.echo(f"   {message}")
                else:
                    logger.info(message)
        return 0
