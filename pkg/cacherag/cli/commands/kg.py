import sys
from cacherag.benchkit import SynthSpec, synth_kg
from cacherag.kg_store import export_triples, load_triples_file


class KgCommandsMixin:
    def register_kg_commands(self, subparsers):
        kg = subparsers.add_parser('kg', help='Load, synthesize or inspect a knowledge graph')
        actions = kg.add_subparsers(dest='kg_command', required=True)

        load = actions.add_parser('load', help='Parse a TSV triple file and report what it holds')
        load.add_argument('file')
        load.add_argument('--domain', default='', help='Domain label (default: file stem)')
        load.set_defaults(handler=self.kg_load)

        synth = actions.add_parser('synth', help='Generate a synthetic KG with Zipf out-degrees')
        synth.add_argument('--triples', type=int, required=True)
        synth.add_argument('--seed', type=int, default=0)
        synth.add_argument('--exponent', type=float, default=2.5)
        synth.add_argument('--predicates', type=int, default=500)
        synth.add_argument('--out', help='Output TSV (default: stdout)')
        synth.set_defaults(handler=self.kg_synth)

        stats = actions.add_parser('stats', help='Print triple, entity and predicate counts')
        stats.add_argument('file')
        stats.set_defaults(handler=self.kg_stats)

    def kg_load(self, args):
        kg = load_triples_file(args.file, args.domain)
        self.echo(f"✅ Loaded {len(kg)} triples from {args.file} (domain {kg.domain_label})")
        self.echo(f"   {len(kg.entities)} entities, {len(kg.vocabulary)} predicates")
        return 0

    def kg_synth(self, args):
        spec = SynthSpec(args.triples, args.seed, args.exponent, args.predicates)
        kg = synth_kg(spec)
        if args.out:
            with open(args.out, 'w', encoding='utf-8') as f:
                export_triples(kg, f)
            self.echo(f"🧪 Wrote {len(kg)} synthetic triples to {args.out}")
        else:
            export_triples(kg, self.out)
            print(f"🧪 Generated {len(kg)} synthetic triples", file=sys.stderr)
        return 0

    def kg_stats(self, args):
        kg = load_triples_file(args.file)
        for key, value in kg.stats().items():
            self.echo(f"{key}: {value}")
        return 0
