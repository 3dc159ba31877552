"""Checkpoint files.

A checkpoint is a single ``.npz`` archive mapping dotted string paths to
float arrays, plus one reserved ``__meta__`` entry holding a JSON record
(iteration counter, seed, config echo, loss history, ...).  The format is
deliberately dumb: numpy round-trips bit-exactly, so saving and restoring
params, buffers, and optimizer moments reproduces training byte for byte.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ValidationError

META_KEY = "__meta__"


def save_checkpoint(path, arrays, meta):
    """Write ``arrays`` (dict name -> ndarray) and a JSON-able ``meta``."""
    path = Path(path)
    for key in arrays:
        if key == META_KEY:
            raise ValidationError(f"array key {META_KEY!r} is reserved")
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {k: np.asarray(v) for k, v in arrays.items()}
    payload[META_KEY] = np.asarray(json.dumps(meta, sort_keys=True))
    np.savez(path, **payload)


def load_checkpoint(path):
    """Read back (arrays, meta).  Raises ValidationError on malformed files."""
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as z:
            if META_KEY not in z.files:
                raise ValidationError(f"{path} has no {META_KEY} record")
            meta = json.loads(str(z[META_KEY][()]))
            arrays = {k: z[k] for k in z.files if k != META_KEY}
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read checkpoint {path}: {exc}") from exc
    return arrays, meta


def prefixed(prefix, arrays):
    """{'enc.w': a} -> {'<prefix>enc.w': a}."""
    return {prefix + k: v for k, v in arrays.items()}


def group(arrays, prefix):
    """Inverse of ``prefixed``: the sub-dict under ``prefix``, stripped."""
    n = len(prefix)
    picked = {k[n:]: v for k, v in arrays.items() if k.startswith(prefix)}
    if not picked:
        raise ValidationError(f"checkpoint has no entries under {prefix!r}")
    return picked
