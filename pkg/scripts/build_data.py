"""Build the full benchmark data directory: datasets plus GPN checkpoints.

Usage: python3 scripts/build_data.py [ROOT]

Idempotent: splits and checkpoints that already exist are left alone.
"""

import logging
import sys
import time
from pathlib import Path

from owah.bench import (
    GPN_TAG_FOR_SPLIT,
    checkpoint_path,
    default_manifest,
    episodes_path,
    generate_dataset,
    train_gpn,
)

logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
log = logging.getLogger("build_data")


def main() -> None:
    root = Path(sys.argv[1] if len(sys.argv) > 1 else "owah_data")
    root.mkdir(parents=True, exist_ok=True)
    for split in ("test", "train_small", "train_large"):
        if episodes_path(root, split).exists():
            log.info("split %s already present, skipping", split)
            continue
        t0 = time.time()
        episodes = generate_dataset(default_manifest(split), root)
        log.info(
            "split %s: %d episodes in %.1fs", split, len(episodes), time.time() - t0
        )
    for split in ("train_small", "train_large"):
        tag = GPN_TAG_FOR_SPLIT[split]
        if checkpoint_path(root, tag).exists():
            log.info("checkpoint %s already present, skipping", tag)
            continue
        t0 = time.time()
        net, report, path = train_gpn(root, split)
        drop = 1.0 - report.val_losses[-1] / report.val_losses[0]
        log.info(
            "gpn %s: %.1fs, val loss %.4f -> %.4f (drop %.1f%%), saved %s",
            tag,
            time.time() - t0,
            report.val_losses[0],
            report.val_losses[-1],
            100 * drop,
            path,
        )


if __name__ == "__main__":
    main()
