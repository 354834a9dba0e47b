"""
File primitives shared by the repositories.
"""

import json
import logging
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator, TextIO, Union

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]


def float_text(value: float) -> str:
    """17 significant digits, enough to round-trip any float64."""
    return format(float(value), ".17g")


@contextmanager
def atomic_write(path: PathLike, mode: str = "w") -> Iterator[TextIO]:
    """
    Write to a temporary file next to ``path`` and rename it into place on success.
    Readers never see a partial file.
    """
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)

    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=str(path.parent or "."))
    try:
        kwargs = {} if "b" in mode else {"encoding": "utf-8", "newline": "\n"}
        with os.fdopen(fd, mode, **kwargs) as handle:
            yield handle
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except FileNotFoundError:
            pass
        raise
    logger.debug("[storage] File written", extra={"path": str(path)})


def write_json(path: PathLike, data: Any) -> None:
    with atomic_write(path) as handle:
        json.dump(data, handle, indent=2, sort_keys=False, allow_nan=False)
        handle.write("\n")


def read_json(path: PathLike) -> Any:
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)
