import logging

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from rest_framework import serializers

from experiments.runs import load_config_file, merge_config, parse_assignment
from experiments.serializers import flatten_errors

logger = logging.getLogger(__name__)

CONFIG_ERROR = 2
RUNTIME_ERROR = 3


def nested(dotted, value):
    for key in reversed(dotted.split('.')):
        value = {key: value}
    return value


class ExperimentCommand(BaseCommand):
    """
    Layered configuration for experiment commands: ARR_DEFAULTS sections,
    then --config FILE, then individual flags, then --set overrides.
    Configuration problems exit with code 2, failures while running with 3.
    """
    sections = ()
    # option dest -> dotted config key
    option_keys = {}

    def add_arguments(self, parser):
        parser.add_argument('--config', metavar='PATH', help='YAML or JSON config file; flags override its values')
        parser.add_argument('--set', dest='overrides', action='append', default=[], metavar='SECTION.KEY=VALUE',
                            help='Override any config value (repeatable), e.g. --set training.lr=3e-4')

    def build_config(self, options):
        config = {section: dict(settings.ARR_DEFAULTS.get(section, {})) for section in self.sections}
        layers = []
        if options.get('config'):
            layers.append(load_config_file(options['config']))
        flags = {}
        for dest, dotted in self.option_keys.items():
            if options.get(dest) is not None:
                flags = merge_config(flags, nested(dotted, options[dest]))
        layers.append(flags)
        layers.extend(parse_assignment(text) for text in options.get('overrides') or [])
        return merge_config(config, *layers)

    def show_progress(self):
        return self.stderr.isatty()

    def handle(self, *args, **options):
        try:
            self.run(**options)
        except CommandError:
            raise
        except serializers.ValidationError as exc:
            message = '\n  '.join(flatten_errors(exc.detail))
            logger.error(f"Invalid configuration:\n  {message}")
            raise CommandError(f"Invalid configuration:\n  {message}", returncode=CONFIG_ERROR) from exc
        except (ValueError, FileNotFoundError) as exc:
            logger.error(f"{type(exc).__name__}: {exc}")
            raise CommandError(str(exc), returncode=CONFIG_ERROR) from exc
        except RuntimeError as exc:
            logger.error(f"{type(exc).__name__}: {exc}")
            raise CommandError(str(exc), returncode=RUNTIME_ERROR) from exc

    def run(self, **options):
        raise NotImplementedError
