from experiments.management.base import ExperimentCommand
from experiments.runners import run_evaluate


class Command(ExperimentCommand):
    help = 'Score a training checkpoint on a corpus and write JSON, text and per-class CSV reports'

    option_keys = {
        'checkpoint': 'checkpoint',
        'data': 'data',
        'split': 'split',
        'ks': 'ks',
        'kl_min_count': 'kl_min_count',
    }

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--checkpoint', help='best.arrc or final.arrc of a training run')
        parser.add_argument('--data', help='Corpus directory')
        parser.add_argument('--split', choices=['val', 'all'], help='Held-out samples (default) or every sample')
        parser.add_argument('--ks', type=int, nargs='+', help='Cut-offs for top-k metrics (default 1 5)')
        parser.add_argument('--kl-min-count', type=int,
                            help='Minimum occurrences of a state for the transition KL diagnostic')
        parser.add_argument('--run-dir', help='Output directory (default: a new timestamped run directory)')

    def run(self, **options):
        config = self.build_config(options)
        run, report = run_evaluate(config, options.get('run_dir'))
        self.stdout.write(report.to_text())
        self.stdout.write(self.style.SUCCESS(f"Reports written to {run.run_dir}"))
