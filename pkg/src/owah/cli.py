"""Command-line entry point: datasets, training, evaluation, replay, serving.

All data-touching commands resolve their working directory the same way:
``--data-dir`` if given, else the ``OWAH_DATA_DIR`` environment variable,
else ``owah_data`` under the current directory.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .baselines import HelperSpec
from .bench import (
    GPN_TAG_FOR_SPLIT,
    SPLIT_SIZES,
    data_dir,
    default_manifest,
    generate_dataset,
    run_eval,
    train_gpn,
    write_report,
)
from .episode import EpisodeRecord, replay_record

log = logging.getLogger("owah.cli")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="owah",
        description="Household-assistance benchmark: generate datasets, "
        "train the goal-prediction network, evaluate helpers, replay "
        "records, and serve live sessions.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="debug-level logging"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="generate solo-run dataset splits")
    gen.add_argument(
        "--split",
        default="all",
        choices=("all", *SPLIT_SIZES),
        help="which split to generate (default: all)",
    )
    gen.add_argument("--size", type=int, default=None, help="episode count override")
    gen.add_argument("--data-dir", default=None, help="dataset directory")

    train = sub.add_parser("train-gpn", help="train a goal-prediction checkpoint")
    train.add_argument(
        "--split",
        default="train_large",
        choices=tuple(GPN_TAG_FOR_SPLIT),
        help="training split (default: train_large)",
    )
    train.add_argument("--epochs", type=int, default=20)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--data-dir", default=None, help="dataset directory")

    ev = sub.add_parser("eval", help="evaluate a helper over a split")
    ev.add_argument(
        "--helper",
        required=True,
        help="helper selector, e.g. nopa, hp_gt, nopa,no_return, hp_gpn,gpn=small",
    )
    ev.add_argument("--split", default="test", choices=tuple(SPLIT_SIZES))
    ev.add_argument("--runs", type=int, default=3, help="joint runs per episode")
    ev.add_argument("--out", default=None, help="report directory (default: stdout)")
    ev.add_argument("--data-dir", default=None, help="dataset directory")

    rep = sub.add_parser("replay", help="verify a recorded episode tick by tick")
    rep.add_argument("record", help="path to an episode record (JSON lines)")

    srv = sub.add_parser("serve", help="run the live session service")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8080)
    srv.add_argument("--data-dir", default=None, help="dataset directory")
    return parser


def _cmd_gen_data(args) -> int:
    root = data_dir(args.data_dir)
    splits = tuple(SPLIT_SIZES) if args.split == "all" else (args.split,)
    for split in splits:
        episodes = generate_dataset(default_manifest(split, args.size), root)
        print(f"{split}: {len(episodes)} episodes under {root}")
    return 0


def _cmd_train_gpn(args) -> int:
    root = data_dir(args.data_dir)
    net, report, path = train_gpn(
        root, args.split, epochs=args.epochs, seed=args.seed
    )
    first, last = report.val_losses[0], report.val_losses[-1]
    print(f"val loss {first:.4f} -> {last:.4f}  checkpoint {path}")
    return 0


def _cmd_eval(args) -> int:
    root = data_dir(args.data_dir)
    spec = HelperSpec.parse(args.helper)
    report = run_eval(root, args.split, spec, runs=args.runs)
    if args.out is None:
        print(report.to_json(), end="")
    else:
        for path in write_report(report, Path(args.out)):
            print(path)
    mean, se = report.mean_speedup, report.se_speedup
    print(f"{spec.label} on {args.split}: speedup {mean:+.3f} +/- {se:.3f}",
          file=sys.stderr)
    return 0


def _cmd_replay(args) -> int:
    record = EpisodeRecord.read(args.record)
    header = record.header
    try:
        template, seed = header["template"], header["seed"]
    except KeyError:
        print("record has no template/seed metadata, cannot rebuild the "
              "initial state", file=sys.stderr)
        return 2
    from .bench import build_episode

    state, _ = build_episode(template, seed)
    try:
        replay_record(record, state)
    except ValueError as exc:
        print(f"DIVERGED: {exc}", file=sys.stderr)
        return 1
    print(f"OK: {record.length} ticks replayed, every state hash matches")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .live import build_app

    app = build_app(data_root=data_dir(args.data_dir))
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train-gpn": _cmd_train_gpn,
    "eval": _cmd_eval,
    "replay": _cmd_replay,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(message)s",
    )
    return _COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
