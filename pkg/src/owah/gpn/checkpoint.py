"""Checkpointing as plain npz archives.

The vocabulary rows ride along with the weights so a checkpoint refuses to
serve states encoded differently from how it was trained.  float64 arrays
survive the npz round trip bit for bit, which replay determinism relies on.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..goals import VocabEntry
from .network import GoalPredictionNet

FORMAT = "owah-gpn/1"


def save_checkpoint(net: GoalPredictionNet, path: str | Path) -> None:
    meta = {
        "format": FORMAT,
        "entries": [list(e) for e in net.entries],
        "dims": {"c": net.c, "d": net.d, "h": net.h},
    }
    arrays = {f"param_{k}": v for k, v in net.params.items()}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        np.savez(f, meta=json.dumps(meta, sort_keys=True), **arrays)


def load_checkpoint(path: str | Path) -> GoalPredictionNet:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("format") != FORMAT:
            raise ValueError(f"not a recognized checkpoint: {path}")
        entries = tuple(VocabEntry(*e) for e in meta["entries"])
        dims = meta["dims"]
        net = GoalPredictionNet(
            entries, num_buckets=dims["c"], embed_dim=dims["d"], hidden_dim=dims["h"]
        )
        for k in net.params:
            net.params[k] = z[f"param_{k}"].astype(np.float64, copy=True)
    return net
