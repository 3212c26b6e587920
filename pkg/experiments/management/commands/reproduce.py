from experiments.management.base import ExperimentCommand
from experiments.runners import reproduce


class Command(ExperimentCommand):
    help = "Re-execute a run from its manifest.json and check that its metrics are reproduced bitwise"

    def add_arguments(self, parser):
        parser.add_argument('source', help='Run directory (or manifest.json) to reproduce')
        parser.add_argument('--run-dir', help='Output directory (default: a new timestamped run directory)')

    def run(self, **options):
        manifest, run = reproduce(options['source'], options.get('run_dir'), progress=self.show_progress())
        self.stdout.write(self.style.SUCCESS(
            f"Reproduced {manifest['command']} run {manifest.get('id')} in {run.run_dir}"
        ))
