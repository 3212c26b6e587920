# Generated by Django 5.2.8 on 2026-10-17 09:12

import django.db.models.deletion
import uuid
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.UUIDField(default=uuid.uuid4, editable=False, primary_key=True, serialize=False)),
                ('command', models.CharField(choices=[('gen_data', 'Generate data'), ('train', 'Train'), ('evaluate', 'Evaluate'), ('sweep', 'Sweep')], max_length=20)),
                ('mode', models.CharField(blank=True, max_length=20)),
                ('status', models.CharField(choices=[('preparing', 'Preparing'), ('running', 'Running'), ('completed', 'Completed'), ('failed', 'Failed')], default='preparing', max_length=20)),
                ('run_dir', models.CharField(max_length=500)),
                ('config', models.JSONField(default=dict)),
                ('seeds', models.JSONField(default=dict)),
                ('data_hashes', models.JSONField(default=dict)),
                ('paths', models.JSONField(default=dict)),
                ('metrics', models.JSONField(default=dict)),
                ('error', models.TextField(blank=True)),
                ('wall_clock_s', models.FloatField(blank=True, null=True)),
                ('steps', models.IntegerField(default=0)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('finished_at', models.DateTimeField(blank=True, null=True)),
                ('parent', models.ForeignKey(blank=True, null=True, on_delete=django.db.models.deletion.SET_NULL, related_name='children', to='experiments.experimentrun')),
            ],
            options={
                'ordering': ['-created_at'],
                'indexes': [models.Index(fields=['-created_at'], name='run_created_idx'), models.Index(fields=['command', 'status'], name='run_command_status_idx')],
            },
        ),
        migrations.CreateModel(
            name='EpochRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('epoch', models.IntegerField()),
                ('l_rec', models.FloatField(blank=True, null=True)),
                ('l_pre', models.FloatField(blank=True, null=True)),
                ('l_total', models.FloatField(blank=True, null=True)),
                ('cm_recall_at_5', models.FloatField(blank=True, null=True)),
                ('top1', models.FloatField(blank=True, null=True)),
                ('lr', models.FloatField(blank=True, null=True)),
                ('values', models.JSONField(default=dict)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='epochs', to='experiments.experimentrun')),
            ],
            options={
                'ordering': ['run', 'epoch'],
                'constraints': [models.UniqueConstraint(fields=('run', 'epoch'), name='unique_epoch_per_run')],
            },
        ),
    ]
