import enum
import logging
import math
import time
from pathlib import Path

import numpy as np
from django.db import transaction
from django.utils import timezone

from .models import EpochRecord, ExperimentRun
from .runs import write_manifest
from .serializers import ExperimentRunSerializer

logger = logging.getLogger(__name__)


def plain(value):
    """Recursively convert numpy scalars, paths, enums and tuples to JSON types; non-finite floats become None."""
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return plain(value.tolist())
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        # JSON has no NaN or infinity
        return float(value) if math.isfinite(value) else None
    return value


def scalar_metrics(metrics):
    return {key: float(value) for key, value in metrics.items()
            if isinstance(value, (int, float, np.integer, np.floating)) and not isinstance(value, bool)}


def _column(value):
    return float(value) if value is not None and math.isfinite(value) else None


class ExperimentService:
    """
    Service class for the bookkeeping of one command invocation: the registry
    row and the manifest.json in the run directory, kept in step
    """

    def __init__(self, command, run_dir, mode='', parent=None):
        self.run_dir = Path(run_dir)
        self.run = ExperimentRun(command=command, mode=mode or '', run_dir=str(self.run_dir), parent=parent)
        self._started = None

    def start(self, config, seeds=None, data_hashes=None, paths=None):
        """
        Register the run and write its first manifest

        Args:
            config: Fully merged and validated configuration
            seeds: Every seed the run derives its randomness from
            data_hashes: Blob hashes of the input artifacts
            paths: Input and output locations

        Returns:
            ExperimentRun: The saved registry row
        """
        try:
            self.run.config = plain(config)
            self.run.seeds = plain(seeds or {})
            self.run.data_hashes = dict(data_hashes or {})
            self.run.paths = plain(paths or {})
            self.run.status = 'running'
            self.run.save()
            self._started = time.perf_counter()
            self.write_manifest()
            logger.info(f"Started {self.run.command} run {self.run.id} in {self.run_dir}")
            return self.run
        except Exception as e:
            logger.error(f"Error registering {self.run.command} run in {self.run_dir}: {str(e)}")
            raise

    def record_epochs(self, history):
        """
        Mirror a training run's epoch log

        Args:
            history: List of per-epoch dicts as produced by ``fit``
        """
        try:
            records = [
                EpochRecord(
                    run=self.run,
                    epoch=int(row['epoch']),
                    l_rec=_column(row.get('l_rec')),
                    l_pre=_column(row.get('l_pre')),
                    l_total=_column(row.get('l_total')),
                    cm_recall_at_5=_column(row.get('cm_recall@5')),
                    top1=_column(row.get('top1')),
                    lr=_column(row.get('lr')),
                    values=plain(row),
                )
                for row in history
            ]
            with transaction.atomic():
                EpochRecord.objects.filter(run=self.run).delete()
                EpochRecord.objects.bulk_create(records)
        except Exception as e:
            logger.error(f"Error recording epochs for run {self.run.id}: {str(e)}")
            raise

    def complete(self, metrics, steps=0, paths=None, data_hashes=None):
        """
        Mark the run completed and rewrite its manifest

        Args:
            metrics: Final metrics of the run
            steps: Optimizer steps taken
            paths: Output locations to add to the manifest
            data_hashes: Hashes of produced artifacts to add to the manifest

        Returns:
            ExperimentRun: The updated registry row
        """
        self.run.metrics = plain(metrics)
        self.run.steps = int(steps)
        if paths:
            self.run.paths = {**self.run.paths, **plain(paths)}
        if data_hashes:
            self.run.data_hashes = {**self.run.data_hashes, **data_hashes}
        return self._finish('completed')

    def fail(self, exc):
        self.run.error = f"{type(exc).__name__}: {exc}"
        logger.error(f"{self.run.command} run {self.run.id} failed: {self.run.error}")
        return self._finish('failed')

    def _finish(self, status):
        try:
            self.run.status = status
            self.run.finished_at = timezone.now()
            if self._started is not None:
                self.run.wall_clock_s = time.perf_counter() - self._started
            self.run.save()
            self.write_manifest()
            return self.run
        except Exception as e:
            logger.error(f"Error finishing run {self.run.id}: {str(e)}")
            raise

    def write_manifest(self):
        return write_manifest(self.run_dir, ExperimentRunSerializer(self.run).data)
