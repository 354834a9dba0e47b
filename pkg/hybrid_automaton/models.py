"""
Run ledger: one row per CLI invocation, mirroring the manifest written next to its outputs.
"""

from uuid import uuid4

from django.db import models


class RunRecord(models.Model):
    COMMAND_CHOICES = [
        ("gen-data", "Generate data"),
        ("train", "Train"),
        ("eval", "Evaluate"),
        ("simulate", "Simulate"),
        ("reach", "Reach"),
    ]

    uuid = models.UUIDField(primary_key=True, default=uuid4)
    command = models.CharField(max_length=32, choices=COMMAND_CHOICES)
    config = models.JSONField(default=dict)
    seed = models.BigIntegerField(null=True, blank=True)
    paths = models.JSONField(default=dict)
    timings = models.JSONField(default=dict)
    tool_version = models.CharField(max_length=32)
    created_at = models.DateTimeField()

    class Meta:
        db_table = "hybrid_automaton_runrecord"
        ordering = ["-created_at"]
        indexes = [models.Index(fields=["command", "created_at"], name="hybrid_run_cmd_created_idx")]

    def __str__(self):
        return f"RunRecord - {self.command} - {self.uuid}"
