# Generated by Django 4.2.27 on 2026-10-17 09:12

from django.db import migrations, models
import uuid


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='RunRecord',
            fields=[
                ('uuid', models.UUIDField(default=uuid.uuid4, primary_key=True, serialize=False)),
                ('command', models.CharField(choices=[('gen-data', 'Generate data'), ('train', 'Train'), ('eval', 'Evaluate'), ('simulate', 'Simulate'), ('reach', 'Reach')], max_length=32)),
                ('config', models.JSONField(default=dict)),
                ('seed', models.BigIntegerField(blank=True, null=True)),
                ('paths', models.JSONField(default=dict)),
                ('timings', models.JSONField(default=dict)),
                ('tool_version', models.CharField(max_length=32)),
                ('created_at', models.DateTimeField()),
            ],
            options={
                'db_table': 'hybrid_automaton_runrecord',
                'ordering': ['-created_at'],
                'indexes': [models.Index(fields=['command', 'created_at'], name='hybrid_run_cmd_created_idx')],
            },
        ),
    ]
