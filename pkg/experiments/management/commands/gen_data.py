from experiments.management.base import ExperimentCommand
from experiments.runners import run_gen_data


class Command(ExperimentCommand):
    help = 'Generate a synthetic Markov-chain corpus: label sequences plus optional clips and annotated timelines'

    sections = ('synthetic',)
    option_keys = {
        'k': 'synthetic.k',
        'succ': 'synthetic.succ',
        'num': 'synthetic.num',
        'len': 'synthetic.len',
        'sigma': 'synthetic.sigma',
        'seed': 'synthetic.seed',
        'videos': 'synthetic.videos',
        'segments': 'synthetic.segments',
        'clips': 'synthetic.clips',
        'frame_size': 'synthetic.frame_size',
        'channels': 'synthetic.channels',
        'clip_frames': 'synthetic.clip_frames',
    }

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--k', type=int, help='Number of actions (chain states)')
        parser.add_argument('--succ', type=int, help='Successors per state')
        parser.add_argument('--num', type=int, help='Number of label sequences')
        parser.add_argument('--len', type=int, help='Labels per sequence (at least 2)')
        parser.add_argument('--sigma', type=float, help='Pixel noise of rendered clips')
        parser.add_argument('--seed', type=int)
        parser.add_argument('--videos', type=int, help='Annotated timelines to generate (0 for none)')
        parser.add_argument('--segments', type=int, help='Annotated segments per timeline')
        parser.add_argument('--clips', type=int, help='Render clips for the first N sequences (0 for none)')
        parser.add_argument('--frame-size', type=int)
        parser.add_argument('--channels', type=int)
        parser.add_argument('--clip-frames', type=int, help='Frames per rendered clip')
        parser.add_argument('--output', help='Corpus directory (default: a new run directory)')
        parser.add_argument('--force', action='store_true', help='Overwrite a non-empty output directory')

    def run(self, **options):
        config = self.build_config(options)
        run, corpus = run_gen_data(config, output=options.get('output'), force=options['force'])
        self.stdout.write(self.style.SUCCESS(
            f"Generated {len(corpus.sequences)} sequences over {corpus.chain.K} actions in {run.run_dir}"
        ))
