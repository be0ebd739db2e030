"""JSON checkpoints for the pattern models.

Parameter blocks are base64-encoded little-endian float64 with shape
headers, so checkpoints round-trip bit-exactly.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from .smile import SmileModel
from .surreal import SurrealModel


def _encode_block(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=np.float64)
    return {
        "shape": list(a.shape),
        "data": base64.b64encode(a.astype("<f8").tobytes()).decode("ascii"),
    }


def _decode_block(block: dict) -> np.ndarray:
    raw = np.frombuffer(base64.b64decode(block["data"]), dtype="<f8")
    return raw.reshape(block["shape"]).astype(np.float64)


def _encode_group(group: dict) -> dict:
    return {k: _encode_block(v) for k, v in group.items()}


def _decode_group(group: dict) -> dict:
    return {k: _decode_block(v) for k, v in group.items()}


def save_model(model, path) -> Path:
    if isinstance(model, SmileModel):
        kind = "smile"
    elif isinstance(model, SurrealModel):
        kind = "surreal"
    else:
        raise TypeError(f"unsupported model type {type(model).__name__}")
    doc = {
        "format": "biobench-pattern-model",
        "version": 1,
        "kind": kind,
        "l_bound": model.l_bound,
        "gen": _encode_group(model.gen),
        "inv": _encode_group(model.inv),
        "disc": _encode_group(model.disc),
    }
    path = Path(path)
    with path.open("w") as fh:
        json.dump(doc, fh)
    return path


def load_model(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "biobench-pattern-model":
        raise ValueError("not a pattern-model checkpoint")
    cls = {"smile": SmileModel, "surreal": SurrealModel}[doc["kind"]]
    disc = _decode_group(doc["disc"])
    disc["b0"] = np.asarray(float(disc["b0"]))
    return cls(
        gen=_decode_group(doc["gen"]),
        inv=_decode_group(doc["inv"]),
        disc=disc,
        l_bound=float(doc["l_bound"]),
    )
