# Generated by Django 5.2.8 on 2026-10-17 14:40

from django.db import migrations, models


class Migration(migrations.Migration):

    dependencies = [
        ('experiments', '0001_initial'),
    ]

    operations = [
        migrations.AlterField(
            model_name='experimentrun',
            name='command',
            field=models.CharField(choices=[('gen_data', 'Generate data'), ('train', 'Train'), ('evaluate', 'Evaluate'), ('sweep', 'Sweep'), ('extract_features', 'Extract features')], max_length=20),
        ),
    ]
