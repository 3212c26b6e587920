from experiments.management.base import ExperimentCommand
from experiments.runners import run_train

TRAIN_SECTIONS = ('encoder', 'decoder', 'sampling', 'training')

TRAIN_OPTION_KEYS = {
    'data': 'data',
    'source': 'source',
    'init_decoder': 'init_decoder',
    'mode': 'training.mode',
    'epochs': 'training.epochs',
    'warmup_epochs': 'training.warmup_epochs',
    'cosine_epochs': 'training.cosine_epochs',
    'lr': 'training.lr',
    'weight_decay': 'training.weight_decay',
    'batch_size': 'training.batch_size',
    'rec_weight': 'training.rec_weight',
    'pre_weight': 'training.pre_weight',
    'val_fraction': 'training.val_fraction',
    'encoder_tuning': 'training.encoder_tuning',
    'pretrain_frames': 'training.pretrain_frames',
    'pretrain_interval': 'training.pretrain_interval',
    'dtype': 'training.dtype',
    'seed': 'training.seed',
    'T': 'sampling.T',
    'n': 'sampling.n',
    'tau_a': 'sampling.tau_a',
    'gap_strategy': 'sampling.gap_strategy',
}


def add_training_arguments(parser):
    parser.add_argument('--data', help='Corpus directory written by gen_data')
    parser.add_argument('--source', choices=['sequences', 'timelines'],
                        help='Label sequences directly, or anticipation samples cut from annotated timelines')
    parser.add_argument('--mode', help='label-only, pretrain or end-to-end')
    parser.add_argument('--init-decoder', help='Pre-training checkpoint to start end-to-end training from')
    parser.add_argument('--epochs', type=int, help='0 evaluates the initialized model only')
    parser.add_argument('--warmup-epochs', type=int)
    parser.add_argument('--cosine-epochs', type=int)
    parser.add_argument('--lr', type=float)
    parser.add_argument('--weight-decay', type=float)
    parser.add_argument('--batch-size', type=int)
    parser.add_argument('--rec-weight', type=float, help='Weight of the recognition loss')
    parser.add_argument('--pre-weight', type=float, help='Weight of the next-action loss')
    parser.add_argument('--val-fraction', type=float)
    parser.add_argument('--encoder-tuning', choices=['full', 'adapters', 'frozen'])
    parser.add_argument('--pretrain-frames', type=int)
    parser.add_argument('--pretrain-interval', type=int)
    parser.add_argument('--dtype', choices=['float64', 'float32'])
    parser.add_argument('--seed', type=int, help='Training seed (batch order and validation split)')
    parser.add_argument('--T', type=int, help='Observed sequence length')
    parser.add_argument('--n', type=int, help='Frames per clip')
    parser.add_argument('--tau-a', type=float, help='Anticipation time in seconds')
    parser.add_argument('--gap-strategy', choices=['unknown', 'random', 'previous'])
    parser.add_argument('--run-dir', help='Output directory (default: a new timestamped run directory)')


class Command(ExperimentCommand):
    help = 'Train a label-only, pre-training or end-to-end model on a generated corpus'

    sections = TRAIN_SECTIONS
    option_keys = TRAIN_OPTION_KEYS

    def add_arguments(self, parser):
        super().add_arguments(parser)
        add_training_arguments(parser)

    def run(self, **options):
        config = self.build_config(options)
        run, outcome = run_train(config, options.get('run_dir'), progress=self.show_progress())
        summary = ', '.join(f"{key}={value:.4f}" for key, value in sorted(run.metrics.items())
                            if value is not None
                            and key in ('cm_recall@5', 'top1', 'val_loss', 'recognition_top1', 'train_l_total'))
        self.stdout.write(self.style.SUCCESS(f"Finished {run.mode} training in {run.run_dir}: {summary}"))
