from experiments.management.base import ExperimentCommand
from experiments.runners import run_sweep

from .train import TRAIN_OPTION_KEYS, TRAIN_SECTIONS, add_training_arguments


class Command(ExperimentCommand):
    help = 'Train once per value of the swept parameters (T, gap_strategy, n) and tabulate a metric'

    sections = TRAIN_SECTIONS
    option_keys = {**TRAIN_OPTION_KEYS, 'by': 'by', 'metric': 'metric'}

    def add_arguments(self, parser):
        super().add_arguments(parser)
        add_training_arguments(parser)
        parser.add_argument('--by', action='append', metavar='PARAMETER=V1,V2,...',
                            help='Swept parameter and values; repeat for a grid, e.g. '
                                 '--by gap_strategy=unknown,random,previous --by T=4,6,8,10,12')
        parser.add_argument('--metric', help='Metric placed in the table (default cm_recall@5)')

    def run(self, **options):
        config = self.build_config(options)
        run, table = run_sweep(config, options.get('run_dir'), progress=self.show_progress())
        self.stdout.write(table.to_string(float_format=lambda x: f"{x:.4f}"))
        self.stdout.write(self.style.SUCCESS(f"Sweep of {len(run.metrics)} runs written to {run.run_dir}"))
