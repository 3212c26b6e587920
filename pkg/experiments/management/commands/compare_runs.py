from experiments.management.base import ExperimentCommand
from experiments.runners import compare_runs


class Command(ExperimentCommand):
    help = 'Show the final metrics of two runs side by side with their gap (second - first)'

    def add_arguments(self, parser):
        parser.add_argument('first', help='Run directory')
        parser.add_argument('second', help='Run directory')
        parser.add_argument('--output', help='Also write the comparison as CSV')

    def run(self, **options):
        table = compare_runs(options['first'], options['second'])
        if options.get('output'):
            table.to_csv(options['output'], float_format='%.17g')
        self.stdout.write(table.to_string())
