import csv
import logging
from typing import Dict, List, Sequence

import numpy as np

from hybrid_automaton.adapters.storage import PathLike, atomic_write, float_text
from hybrid_automaton.dynamics import Trace
from hybrid_automaton.exceptions import InvalidArgumentError, TraceFormatError

logger = logging.getLogger(__name__)


def trace_header(state_dim: int, input_dim: int) -> List[str]:
    return (
        ["trace_id", "k"]
        + [f"x{i + 1}" for i in range(state_dim)]
        + [f"u{i + 1}" for i in range(input_dim)]
    )


class TraceRepository:
    """Trace CSV: one row per (trace, step), the final state row of each trace has empty input fields."""

    def save(self, path: PathLike, traces: Sequence[Trace]) -> int:
        if not traces:
            raise InvalidArgumentError("refusing to write an empty trace file")
        state_dim, input_dim = traces[0].state_dim, traces[0].input_dim
        rows = 0
        with atomic_write(path) as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(trace_header(state_dim, input_dim))
            for trace in traces:
                if trace.state_dim != state_dim or trace.input_dim != input_dim:
                    raise InvalidArgumentError(f"trace {trace.id} does not match the dimensions of the first trace")
                for k, state in enumerate(trace.states):
                    inputs = trace.inputs[k] if k < trace.steps else [None] * input_dim
                    writer.writerow(
                        [trace.id, k]
                        + [float_text(value) for value in state]
                        + ["" if value is None else float_text(value) for value in inputs]
                    )
                    rows += 1

        logger.info("[TraceRepository] Traces saved", extra={"path": str(path), "traces": len(traces), "rows": rows})
        return rows

    def load(self, path: PathLike) -> List[Trace]:
        with open(path, encoding="utf-8", newline="") as handle:
            reader = csv.reader(handle)
            try:
                header = next(reader)
            except StopIteration as e:
                raise TraceFormatError(f"{path}: empty trace file") from e

            state_dim = sum(1 for name in header if name.startswith("x"))
            input_dim = sum(1 for name in header if name.startswith("u"))
            if header != trace_header(state_dim, input_dim) or state_dim == 0:
                raise TraceFormatError(f"{path}: unexpected header {header}")

            grouped: Dict[int, List[List[str]]] = {}
            for line, row in enumerate(reader, start=2):
                if len(row) != len(header):
                    raise TraceFormatError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
                try:
                    trace_id = int(row[0])
                except ValueError as e:
                    raise TraceFormatError(f"{path}:{line}: bad trace id {row[0]!r}") from e
                grouped.setdefault(trace_id, []).append(row)

        traces = [self._build_trace(path, trace_id, rows, state_dim) for trace_id, rows in grouped.items()]
        if not traces:
            raise TraceFormatError(f"{path}: no trace rows")
        logger.info("[TraceRepository] Traces loaded", extra={"path": str(path), "traces": len(traces)})
        return traces

    def _build_trace(self, path: PathLike, trace_id: int, rows: List[List[str]], state_dim: int) -> Trace:
        try:
            steps = [int(row[1]) for row in rows]
            if steps != list(range(len(rows))):
                raise TraceFormatError(f"{path}: trace {trace_id} steps are not 0..{len(rows) - 1} in order")
            if len(rows) < 2:
                raise TraceFormatError(f"{path}: trace {trace_id} has no transitions")
            states = np.array([[float(value) for value in row[2 : 2 + state_dim]] for row in rows])
            if any(value != "" for value in rows[-1][2 + state_dim :]):
                raise TraceFormatError(f"{path}: final row of trace {trace_id} must have empty inputs")
            inputs = np.array([[float(value) for value in row[2 + state_dim :]] for row in rows[:-1]])
        except ValueError as e:
            raise TraceFormatError(f"{path}: trace {trace_id}: {e}") from e

        if not (np.all(np.isfinite(states)) and np.all(np.isfinite(inputs))):
            raise TraceFormatError(f"{path}: trace {trace_id} contains non-finite values")
        return Trace(id=trace_id, states=states, inputs=inputs.reshape(len(rows) - 1, -1))
