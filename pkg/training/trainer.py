"""
The optimization loop shared by all training modes.

Epoch 0 is a no-update pass that records the initialized model's training
loss and validation metrics; epochs 1..E run Adam with the warmup-cosine
schedule. Batches are drawn from a per-epoch seeded permutation.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from tqdm import tqdm

from corpus.seeding import derive_seed
from numerics.checkpoint import save_checkpoint
from numerics.exceptions import NonFiniteError, NonFiniteGradientError
from numerics.optim import Adam
from numerics.schedule import LrSchedule
from numerics.tensor import no_grad

from .exceptions import NonFiniteLossError, TrainingError

logger = logging.getLogger(__name__)

EPOCH_COLUMNS = ['epoch', 'l_rec', 'l_pre', 'l_total', 'cm_recall@5', 'top1', 'lr']
BEST_CHECKPOINT = 'best.arrc'
FINAL_CHECKPOINT = 'final.arrc'
EPOCH_LOG = 'epochs.csv'


@dataclass
class FitResult:
    history: list
    best_epoch: int
    best_score: float
    final_metrics: dict
    steps: int
    paths: dict = field(default_factory=dict)

    @property
    def epochs(self):
        return pd.DataFrame(self.history).reindex(columns=_columns(self.history))

    def final(self, key):
        return self.history[-1][key]


def _batches(indices, batch_size):
    for start in range(0, len(indices), batch_size):
        yield indices[start:start + batch_size]


def _epoch_row(epoch, reports, weights, metrics, lr):
    row = {'epoch': epoch, 'lr': lr}
    total = sum(weights)
    for key in ('l_rec', 'l_pre', 'l_total'):
        row[key] = float(sum(getattr(r, key) * w for r, w in zip(reports, weights)) / total) if total else float('nan')
    for key, value in metrics.items():
        if isinstance(value, (int, float)):
            row[key] = float(value)
    row.setdefault('cm_recall@5', float('nan'))
    row.setdefault('top1', float('nan'))
    return row


def fit(objective, cfg, run_dir=None, metadata=None, progress=False):
    """
    Train ``objective.model`` and return a FitResult. With ``run_dir`` the
    epoch log and the best and final checkpoints are written there.

    Raises:
        NonFiniteLossError: the loss became NaN or infinite.
        TrainingError: any other numerical failure, with epoch/step context.
    """
    model = objective.model
    params = objective.trainable_parameters()
    optimizer = Adam(params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps,
                     weight_decay=cfg.weight_decay)
    train = objective.train_indices
    steps_per_epoch = max(1, math.ceil(len(train) / cfg.batch_size))
    schedule = LrSchedule(cfg.lr, cfg.warmup_epochs, cfg.cosine_epochs, steps_per_epoch)
    run_dir = Path(run_dir) if run_dir is not None else None
    metadata = dict(metadata or {})
    metadata.setdefault('mode', cfg.mode.value)
    metadata['train_config'] = cfg.to_dict()

    history = []
    best_score, best_epoch = -math.inf, 0
    step = 0
    logger.info(f"Training {cfg.mode.value}: {len(params)} parameter tensors, {len(train)} train / "
                f"{len(objective.val_indices)} validation samples, {steps_per_epoch} steps per epoch")

    for epoch in tqdm(range(cfg.epochs + 1), desc='epochs', disable=not progress):
        reports, weights = [], []
        lr = schedule.lr_at_step(step)
        if epoch == 0:
            with no_grad():
                for batch in _batches(train, cfg.batch_size):
                    reports.append(_guarded(objective.batch_loss, batch, epoch, step)[1])
                    weights.append(len(batch))
        else:
            order = np.random.default_rng(derive_seed(cfg.seed, 'epoch', epoch)).permutation(train)
            for batch in _batches(order, cfg.batch_size):
                lr = schedule.lr_at_step(step)
                optimizer.zero_grad()
                total, report = _guarded(objective.batch_loss, batch, epoch, step)
                try:
                    total.backward()
                    optimizer.step(lr)
                except (NonFiniteError, NonFiniteGradientError) as exc:
                    logger.error(f"Numerical failure at epoch {epoch}, step {step}: {exc}")
                    raise TrainingError(str(exc), epoch, step) from exc
                reports.append(report)
                weights.append(len(batch))
                step += 1

        metrics = objective.validate()
        row = _epoch_row(epoch, reports, weights, metrics, lr)
        history.append(row)
        logger.info(
            f"epoch {epoch}: l_rec={row['l_rec']:.4f} l_pre={row['l_pre']:.4f} l_total={row['l_total']:.4f} "
            f"cm_recall@5={row['cm_recall@5']:.4f} top1={row['top1']:.4f} lr={lr:.3g}"
        )
        score = objective.score(metrics)
        if epoch == 0 or score > best_score:
            best_score, best_epoch = score, epoch
            if run_dir is not None:
                save_checkpoint(run_dir / BEST_CHECKPOINT, model, {**metadata, 'epoch': epoch, 'score': score})

    paths = {}
    if run_dir is not None:
        paths['final'] = save_checkpoint(run_dir / FINAL_CHECKPOINT, model,
                                         {**metadata, 'epoch': cfg.epochs, 'steps': step})
        paths['best'] = run_dir / BEST_CHECKPOINT
        paths['epochs'] = run_dir / EPOCH_LOG
        pd.DataFrame(history).reindex(columns=_columns(history)).to_csv(paths['epochs'], index=False,
                                                                        float_format='%.17g')
    return FitResult(history, best_epoch, best_score, metrics, step, paths)


def _columns(history):
    extra = sorted({key for row in history for key in row} - set(EPOCH_COLUMNS))
    return EPOCH_COLUMNS + extra


def _guarded(batch_loss, batch, epoch, step):
    try:
        total, report = batch_loss(batch)
    except NonFiniteError as exc:
        logger.error(f"Non-finite values at epoch {epoch}, step {step}: {exc}")
        raise NonFiniteLossError(f"Loss computation produced non-finite values: {exc}", epoch, step) from exc
    if not math.isfinite(report.l_total):
        logger.error(f"Non-finite loss {report.l_total} at epoch {epoch}, step {step}")
        raise NonFiniteLossError(f"Loss is {report.l_total}", epoch, step)
    return total, report
