import json
import logging

from hybrid_automaton.adapters.storage import PathLike, read_json, write_json
from hybrid_automaton.automaton import HybridAutomaton
from hybrid_automaton.exceptions import ModelValidationError

logger = logging.getLogger(__name__)


class ModelRepository:
    def save(self, path: PathLike, automaton: HybridAutomaton) -> None:
        write_json(path, automaton.to_dict())
        logger.info(
            "[ModelRepository] Model saved",
            extra={"path": str(path), "cells": len(automaton.nets), "transitions": len(automaton.transitions)},
        )

    def load(self, path: PathLike) -> HybridAutomaton:
        try:
            data = read_json(path)
        except json.JSONDecodeError as e:
            raise ModelValidationError(f"{path}: not valid JSON ({e})") from e
        if not isinstance(data, dict):
            raise ModelValidationError(f"{path}: model must be a JSON object")

        automaton = HybridAutomaton.from_dict(data)
        logger.info("[ModelRepository] Model loaded", extra={"path": str(path), "cells": len(automaton.nets)})
        return automaton
