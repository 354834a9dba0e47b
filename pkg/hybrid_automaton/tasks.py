import logging

import numpy as np
from celery import shared_task

from hybrid_automaton.dataset import CellDataset
from hybrid_automaton.nn import Architecture, NeuralNet, TrainConfig, TrainResult, train_job

logger = logging.getLogger(__name__)


def cell_job_payload(dataset: CellDataset, arch: Architecture, cfg: TrainConfig) -> dict:
    """JSON-safe training job; floats survive the round trip exactly."""
    return {
        "cell": dataset.cell,
        "inputs": dataset.inputs.tolist(),
        "targets": dataset.targets.tolist(),
        "input_dim": int(dataset.inputs.shape[1]),
        "output_dim": int(dataset.targets.shape[1]),
        "arch": arch.to_dict(),
        "config": cfg.to_dict(),
    }


def result_from_payload(payload: dict) -> TrainResult:
    return TrainResult(
        net=NeuralNet.from_dict(payload["net"]),
        loss=payload["loss"],
        seconds=payload["seconds"],
        cell=payload["cell"],
        history=payload.get("history", []),
    )


@shared_task(name="hybrid_automaton.tasks.train_cell_task")
def train_cell_task(payload: dict) -> dict:
    """Train the network of one cell on a worker."""
    cell = payload["cell"]
    logger.info(f"[TrainCellTask] Starting training for cell {cell}")

    dataset = CellDataset(
        cell=cell,
        inputs=np.asarray(payload["inputs"], dtype=np.float64).reshape(-1, payload["input_dim"]),
        targets=np.asarray(payload["targets"], dtype=np.float64).reshape(-1, payload["output_dim"]),
    )
    arch = Architecture.from_dict(payload["arch"])
    cfg = TrainConfig.from_dict(payload["config"])

    result = train_job((dataset, arch, cfg))
    logger.info(
        f"[TrainCellTask] Finished training for cell {cell}",
        extra={"cell": cell, "loss": result.loss, "seconds": result.seconds},
    )
    return {
        "cell": cell,
        "net": result.net.to_dict(),
        "loss": result.loss,
        "seconds": result.seconds,
        "history": result.history,
    }
