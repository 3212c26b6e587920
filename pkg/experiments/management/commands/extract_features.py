from experiments.management.base import ExperimentCommand
from experiments.runners import run_extract_features


class Command(ExperimentCommand):
    help = 'Encode the corpus videos with an untrained encoder and store the feature sequences'

    sections = ('encoder', 'training')
    option_keys = {
        'data': 'data',
        'pretrain_frames': 'training.pretrain_frames',
        'pretrain_interval': 'training.pretrain_interval',
        'dtype': 'training.dtype',
        'seed': 'training.seed',
    }

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--data', help='Corpus directory written by gen_data')
        parser.add_argument('--pretrain-frames', type=int, help='Frames encoded per video')
        parser.add_argument('--pretrain-interval', type=int, help='Spacing of the encoded frames')
        parser.add_argument('--dtype', choices=['float64', 'float32'])
        parser.add_argument('--seed', type=int, help='Seed of the per-video frame offsets')
        parser.add_argument('--run-dir', help='Output directory (default: a new timestamped run directory)')

    def run(self, **options):
        config = self.build_config(options)
        run, features = run_extract_features(config, options.get('run_dir'))
        videos, frames, dim = features.shape
        self.stdout.write(self.style.SUCCESS(
            f"Wrote {videos} x {frames} features of width {dim} to {run.paths['features']}"
        ))
