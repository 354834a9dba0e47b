import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import pendulum
import sentry_sdk
from django.conf import settings

from hybrid_automaton.adapters.storage import PathLike, read_json, write_json

logger = logging.getLogger(__name__)


def utc_now_iso() -> str:
    return pendulum.now("UTC").to_iso8601_string()


@dataclass
class RunManifest:
    command: str
    config: Dict[str, Any]
    seed: Optional[int]
    paths: Dict[str, str]
    timings: Dict[str, Any] = field(default_factory=dict)
    tool_version: str = ""
    created_at: str = field(default_factory=utc_now_iso)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunManifest":
        return cls(**data)


def manifest_path(output: PathLike) -> Path:
    output = Path(output)
    return output.with_name(f"{output.name}.manifest.json")


class RunRepository:
    def save_manifest(self, output: PathLike, manifest: RunManifest) -> Path:
        path = manifest_path(output)
        write_json(path, manifest.to_dict())
        return path

    def load_manifest(self, output: PathLike) -> RunManifest:
        return RunManifest.from_dict(read_json(manifest_path(output)))

    def record(self, manifest: RunManifest):
        """Ledger row for ``manifest``; a database failure is reported but never fails the run."""
        if not settings.HYBRAN_RECORD_RUNS:
            return None
        try:
            from hybrid_automaton.models import RunRecord

            return RunRecord.objects.create(
                command=manifest.command,
                config=manifest.config,
                seed=manifest.seed,
                paths=manifest.paths,
                timings=manifest.timings,
                tool_version=manifest.tool_version,
                created_at=pendulum.parse(manifest.created_at),
            )
        except Exception as e:
            sentry_sdk.set_tag("command", manifest.command)
            sentry_sdk.set_context("run_repository", {"paths": manifest.paths})
            sentry_sdk.capture_exception(e)
            logger.error(
                "[RunRepository] Error recording run",
                extra={"command": manifest.command, "error": str(e)},
                exc_info=True,
            )
            return None
