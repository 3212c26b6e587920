from django.db import models
import uuid


class ExperimentRun(models.Model):
    """
    One command invocation. Mirrors the manifest.json written to its run directory
    """
    STATUS_CHOICES = [
        ('preparing', 'Preparing'),
        ('running', 'Running'),
        ('completed', 'Completed'),
        ('failed', 'Failed'),
    ]

    COMMAND_CHOICES = [
        ('gen_data', 'Generate data'),
        ('train', 'Train'),
        ('evaluate', 'Evaluate'),
        ('sweep', 'Sweep'),
        ('extract_features', 'Extract features'),
    ]

    id = models.UUIDField(primary_key=True, default=uuid.uuid4, editable=False)
    command = models.CharField(max_length=20, choices=COMMAND_CHOICES)
    mode = models.CharField(max_length=20, blank=True)
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default='preparing')
    run_dir = models.CharField(max_length=500)

    # Sweep cells point at their sweep; reproductions at the run they re-execute
    parent = models.ForeignKey('self', on_delete=models.SET_NULL, null=True, blank=True, related_name='children')

    # Manifest contents
    config = models.JSONField(default=dict)
    seeds = models.JSONField(default=dict)
    data_hashes = models.JSONField(default=dict)
    paths = models.JSONField(default=dict)
    metrics = models.JSONField(default=dict)
    error = models.TextField(blank=True)

    wall_clock_s = models.FloatField(null=True, blank=True)
    steps = models.IntegerField(default=0)

    created_at = models.DateTimeField(auto_now_add=True)
    finished_at = models.DateTimeField(null=True, blank=True)

    class Meta:
        ordering = ['-created_at']
        indexes = [
            models.Index(fields=['-created_at'], name='run_created_idx'),
            models.Index(fields=['command', 'status'], name='run_command_status_idx'),
        ]

    def __str__(self):
        label = f"{self.command} ({self.mode})" if self.mode else self.command
        return f"{label} - {self.status} - {self.run_dir}"


class EpochRecord(models.Model):
    """One row of a training run's epoch log"""
    run = models.ForeignKey(ExperimentRun, on_delete=models.CASCADE, related_name='epochs')
    epoch = models.IntegerField()

    l_rec = models.FloatField(null=True, blank=True)
    l_pre = models.FloatField(null=True, blank=True)
    l_total = models.FloatField(null=True, blank=True)
    cm_recall_at_5 = models.FloatField(null=True, blank=True)
    top1 = models.FloatField(null=True, blank=True)
    lr = models.FloatField(null=True, blank=True)

    # Every column of the epoch log, including mode-specific ones like val_loss
    values = models.JSONField(default=dict)

    class Meta:
        ordering = ['run', 'epoch']
        constraints = [
            models.UniqueConstraint(fields=['run', 'epoch'], name='unique_epoch_per_run'),
        ]

    def __str__(self):
        return f"Epoch {self.epoch} of {self.run_id}"
