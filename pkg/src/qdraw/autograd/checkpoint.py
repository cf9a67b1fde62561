"""Named-tensor checkpoints (format ``QDCKPT``, version 1; see ``qdraw._container``)."""
from __future__ import annotations

import numpy as np

from .. import _container
from .engine import Value

MAGIC = "QDCKPT"
VERSION = 1


def save_checkpoint(path, params: dict[str, Value | np.ndarray], meta: dict | None = None) -> None:
    arrays = {k: (v.data if isinstance(v, Value) else np.asarray(v)) for k, v in params.items()}
    _container.write(path, MAGIC, VERSION, meta or {}, arrays)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    meta, arrays = _container.read(path, MAGIC, VERSION)
    return arrays, meta
