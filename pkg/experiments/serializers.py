from pathlib import Path

from rest_framework import serializers

from corpus.sampling import GapStrategy, SamplingConfig
from corpus.storage import CHAIN_FILE
from decoder.config import DecoderConfig
from encoder.config import EncoderConfig
from training.config import EncoderTuning, TrainConfig, TrainingMode
from training.pipelines import SOURCES, RunSpec

from .models import EpochRecord, ExperimentRun

SWEEP_PARAMETERS = ('T', 'gap_strategy', 'n')


class ConfigSerializer(serializers.Serializer):
    """Field checks here; cross-field checks are delegated to the frozen config class."""
    config_class = None

    def validate(self, attrs):
        try:
            self.config_class(**attrs)
        except ValueError as exc:
            raise serializers.ValidationError(str(exc))
        return attrs


class EncoderConfigSerializer(ConfigSerializer):
    config_class = EncoderConfig

    frame_size = serializers.IntegerField(min_value=1)
    channels = serializers.IntegerField(min_value=1)
    patch_size = serializers.IntegerField(min_value=1)
    embed_dim = serializers.IntegerField(min_value=1)
    depth = serializers.IntegerField(min_value=1)
    heads = serializers.IntegerField(min_value=1)
    n_frames = serializers.IntegerField(min_value=1)
    mlp_ratio = serializers.IntegerField(min_value=1)
    temporal_attention = serializers.BooleanField()
    seed = serializers.IntegerField(min_value=0)


class DecoderConfigSerializer(ConfigSerializer):
    config_class = DecoderConfig

    model_dim = serializers.IntegerField(min_value=1)
    depth = serializers.IntegerField(min_value=1)
    heads = serializers.IntegerField(min_value=1)
    max_T = serializers.IntegerField(min_value=1)
    mlp_ratio = serializers.IntegerField(min_value=1)
    causal = serializers.BooleanField()
    seed = serializers.IntegerField(min_value=0)


class SamplingConfigSerializer(ConfigSerializer):
    config_class = SamplingConfig

    tau_a = serializers.FloatField()
    T = serializers.IntegerField(min_value=1)
    n = serializers.IntegerField(min_value=1)
    fps = serializers.FloatField()
    gap_strategy = serializers.ChoiceField(choices=[s.value for s in GapStrategy])
    seed = serializers.IntegerField(min_value=0)

    def validate_tau_a(self, value):
        if value <= 0:
            raise serializers.ValidationError("Anticipation time must be positive.")
        return value

    def validate_fps(self, value):
        if value <= 0:
            raise serializers.ValidationError("Frame rate must be positive.")
        return value


class TrainConfigSerializer(ConfigSerializer):
    config_class = TrainConfig

    mode = serializers.CharField()
    epochs = serializers.IntegerField(min_value=0)
    warmup_epochs = serializers.IntegerField(min_value=0)
    cosine_epochs = serializers.IntegerField(min_value=0)
    lr = serializers.FloatField()
    weight_decay = serializers.FloatField(min_value=0.0)
    batch_size = serializers.IntegerField(min_value=1)
    beta1 = serializers.FloatField(min_value=0.0, max_value=1.0)
    beta2 = serializers.FloatField(min_value=0.0, max_value=1.0)
    eps = serializers.FloatField(min_value=0.0)
    rec_weight = serializers.FloatField(min_value=0.0)
    pre_weight = serializers.FloatField(min_value=0.0)
    val_fraction = serializers.FloatField(min_value=0.0)
    encoder_tuning = serializers.ChoiceField(choices=[t.value for t in EncoderTuning])
    pretrain_frames = serializers.IntegerField(min_value=2)
    pretrain_interval = serializers.IntegerField(min_value=1)
    dtype = serializers.ChoiceField(choices=['float64', 'float32'])
    seed = serializers.IntegerField(min_value=0)

    def validate_mode(self, value):
        try:
            return TrainingMode.parse(value).value
        except ValueError:
            choices = ', '.join(m.value.replace('_', '-') for m in TrainingMode)
            raise serializers.ValidationError(f"Unknown mode '{value}'. Choose one of: {choices}.")


def _existing_corpus(value):
    path = Path(value)
    if not (path / CHAIN_FILE).exists():
        raise serializers.ValidationError(f"{path} is not a generated corpus directory.")
    return str(path)


def _existing_file(value):
    if not Path(value).is_file():
        raise serializers.ValidationError(f"{value} does not exist.")
    return str(value)


class RunConfigSerializer(serializers.Serializer):
    """A complete training run: corpus, label source and every model/optimizer config"""
    data = serializers.CharField()
    source = serializers.ChoiceField(choices=SOURCES, default='sequences')
    init_decoder = serializers.CharField(allow_null=True, default=None)
    encoder = EncoderConfigSerializer()
    decoder = DecoderConfigSerializer()
    sampling = SamplingConfigSerializer()
    training = TrainConfigSerializer()

    def validate_data(self, value):
        return _existing_corpus(value)

    def validate_init_decoder(self, value):
        return _existing_file(value) if value else None

    def validate(self, attrs):
        mode = TrainingMode.parse(attrs['training']['mode'])
        max_T = attrs['decoder']['max_T']
        if attrs['sampling']['T'] > max_T:
            raise serializers.ValidationError(
                f"Sequence length T={attrs['sampling']['T']} exceeds the decoder's max_T={max_T}."
            )
        if mode is TrainingMode.END_TO_END and attrs['sampling']['n'] > attrs['encoder']['n_frames']:
            raise serializers.ValidationError(
                f"Clips of n={attrs['sampling']['n']} frames exceed the encoder's n_frames={attrs['encoder']['n_frames']}."
            )
        if mode is TrainingMode.PRETRAIN and attrs['training']['pretrain_frames'] > max_T:
            raise serializers.ValidationError(
                f"pretrain_frames={attrs['training']['pretrain_frames']} exceeds the decoder's max_T={max_T}."
            )
        if attrs.get('init_decoder') and mode is not TrainingMode.END_TO_END:
            raise serializers.ValidationError("init_decoder only applies to end-to-end training.")
        return attrs

    def to_run_spec(self):
        data = self.validated_data
        return RunSpec(
            train=TrainConfig(**data['training']),
            encoder=EncoderConfig(**data['encoder']),
            decoder=dict(data['decoder']),
            sampling=SamplingConfig(**data['sampling']),
            source=data['source'],
            init_decoder=data.get('init_decoder'),
        )


class SweepConfigSerializer(RunConfigSerializer):
    by = serializers.ListField(child=serializers.CharField(), min_length=1)
    metric = serializers.CharField(default='cm_recall@5')

    def validate_by(self, value):
        """'T=4,6,8' -> ['T', [4, 6, 8]]; several axes make a cartesian grid."""
        axes, seen = [], set()
        for item in value:
            if '=' not in item:
                raise serializers.ValidationError(f"Expected PARAMETER=V1,V2,... got '{item}'.")
            parameter, text = item.split('=', 1)
            raw = [v.strip() for v in text.split(',') if v.strip()]
            parameter = parameter.strip()
            if parameter not in SWEEP_PARAMETERS:
                raise serializers.ValidationError(
                    f"Cannot sweep '{parameter}'. Sweepable parameters: {', '.join(SWEEP_PARAMETERS)}."
                )
            if parameter in seen:
                raise serializers.ValidationError(f"'{parameter}' is swept twice.")
            if not raw:
                raise serializers.ValidationError(f"No values given for '{parameter}'.")
            seen.add(parameter)
            axes.append([parameter, [self._sweep_value(parameter, v) for v in raw]])
        return axes

    @staticmethod
    def _sweep_value(parameter, value):
        if parameter == 'gap_strategy':
            try:
                return GapStrategy(str(value).lower()).value
            except ValueError:
                raise serializers.ValidationError(f"Unknown gap strategy '{value}'.")
        try:
            number = int(value)
        except (TypeError, ValueError):
            raise serializers.ValidationError(f"{parameter} values must be integers, got '{value}'.")
        if number < 1:
            raise serializers.ValidationError(f"{parameter} values must be at least 1.")
        return number

    def validate(self, attrs):
        attrs = super().validate(attrs)
        mode = TrainingMode.parse(attrs['training']['mode'])
        if mode is TrainingMode.PRETRAIN and attrs['metric'] != 'val_loss':
            raise serializers.ValidationError("Pre-training sweeps can only tabulate val_loss.")
        for parameter, values in attrs['by']:
            if parameter == 'gap_strategy' and attrs['source'] != 'timelines':
                raise serializers.ValidationError("Sweeping gap_strategy needs source 'timelines'.")
            if parameter == 'T' and max(values) > attrs['decoder']['max_T']:
                raise serializers.ValidationError(
                    f"Swept T={max(values)} exceeds the decoder's max_T={attrs['decoder']['max_T']}."
                )
            if parameter == 'n' and mode is TrainingMode.END_TO_END and max(values) > attrs['encoder']['n_frames']:
                raise serializers.ValidationError(
                    f"Swept n={max(values)} exceeds the encoder's n_frames={attrs['encoder']['n_frames']}."
                )
        return attrs


class ExtractFeaturesConfigSerializer(serializers.Serializer):
    """Feature export: corpus, encoder and the frame sampling of pre-training"""
    data = serializers.CharField()
    encoder = EncoderConfigSerializer()
    training = TrainConfigSerializer()

    def validate_data(self, value):
        return _existing_corpus(value)


class EvaluateConfigSerializer(serializers.Serializer):
    checkpoint = serializers.CharField()
    data = serializers.CharField()
    split = serializers.ChoiceField(choices=['val', 'all'], default='val')
    ks = serializers.ListField(child=serializers.IntegerField(min_value=1), min_length=1, default=[1, 5])
    kl_min_count = serializers.IntegerField(min_value=1, default=1000)

    def validate_checkpoint(self, value):
        return _existing_file(value)

    def validate_data(self, value):
        return _existing_corpus(value)


class CorpusConfigSerializer(serializers.Serializer):
    """Synthetic corpus generation parameters"""
    k = serializers.IntegerField(min_value=1)
    succ = serializers.IntegerField(min_value=1)
    num = serializers.IntegerField(min_value=1)
    len = serializers.IntegerField()
    sigma = serializers.FloatField(min_value=0.0)
    seed = serializers.IntegerField(min_value=0)
    videos = serializers.IntegerField(min_value=0, default=0)
    segments = serializers.IntegerField(min_value=1, default=20)
    clips = serializers.IntegerField(min_value=0, default=0)
    frame_size = serializers.IntegerField(min_value=1, default=16)
    channels = serializers.IntegerField(min_value=1, default=3)
    clip_frames = serializers.IntegerField(min_value=1, default=4)

    def validate_len(self, value):
        if value < 2:
            raise serializers.ValidationError("Sequences need at least 2 labels for next-action prediction.")
        return value

    def validate(self, attrs):
        if attrs['succ'] > attrs['k']:
            raise serializers.ValidationError(
                f"Each state can have at most k={attrs['k']} successors, got succ={attrs['succ']}."
            )
        if attrs['clips'] > attrs['num']:
            raise serializers.ValidationError(f"Cannot render clips for {attrs['clips']} of {attrs['num']} sequences.")
        return attrs


class EpochRecordSerializer(serializers.ModelSerializer):
    class Meta:
        model = EpochRecord
        fields = ['epoch', 'l_rec', 'l_pre', 'l_total', 'cm_recall_at_5', 'top1', 'lr', 'values']


class ExperimentRunSerializer(serializers.ModelSerializer):
    """The manifest.json of a run directory"""
    parent = serializers.UUIDField(source='parent_id', read_only=True)

    class Meta:
        model = ExperimentRun
        fields = [
            'id', 'command', 'mode', 'status', 'run_dir', 'parent',
            'config', 'seeds', 'data_hashes', 'paths', 'metrics', 'error',
            'wall_clock_s', 'steps', 'created_at', 'finished_at',
        ]
        read_only_fields = fields


def flatten_errors(detail, prefix=''):
    """DRF error detail -> ['training.lr: ...', ...]."""
    if isinstance(detail, dict):
        lines = []
        for key, value in detail.items():
            name = prefix if key == 'non_field_errors' else (f"{prefix}.{key}" if prefix else str(key))
            lines.extend(flatten_errors(value, name))
        return lines
    if isinstance(detail, list):
        return [line for item in detail for line in flatten_errors(item, prefix)]
    return [f"{prefix}: {detail}" if prefix else str(detail)]
