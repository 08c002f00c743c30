"""Command-line front end.

Verbs: train, eval, export, ablate, synth.  Exit code 0 on success;
failures print one machine-parseable line ``error: <category>: <detail>``
to stderr and exit nonzero (config=2, data=3, checkpoint=4, diverged=5,
io=6).
"""

from __future__ import annotations

import argparse
import sys

from .data import synth_dataset, write_dataset
from .gridio import ensure_dir
from .train import (
    RunConfig,
    TrainingDiverged,
    ablation_sweep,
    evaluate_checkpoint,
    export_density,
    resolve_out_dir,
    train,
)

_EXIT_CODES = {"config": 2, "data": 3, "checkpoint": 4, "diverged": 5, "io": 6}


class _CliError(Exception):
    def __init__(self, category: str, detail: str):
        super().__init__(detail)
        self.category = category


def _load_config(path) -> RunConfig:
    try:
        return RunConfig.from_file(path)
    except FileNotFoundError:
        raise _CliError("io", f"config not found: {path}") from None
    except ValueError as exc:
        raise _CliError("config", str(exc)) from None


def _cmd_train(args) -> None:
    cfg = _load_config(args.config)
    try:
        result = train(cfg)
    except TrainingDiverged as exc:
        raise _CliError("diverged", str(exc)) from None
    except (FileNotFoundError, ValueError) as exc:
        raise _CliError("data", str(exc)) from None
    last = result.rows[-1]
    print(f"trained {last.step} steps, final loss {last.total:.6f}")
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"log: {result.log_path}")


def _cmd_eval(args) -> None:
    try:
        report = evaluate_checkpoint(args.checkpoint, args.manifest,
                                     out_path=args.out)
    except FileNotFoundError as exc:
        raise _CliError("io", str(exc)) from None
    except ValueError as exc:
        category = "checkpoint" if "checkpoint" in str(exc) else "data"
        raise _CliError(category, str(exc)) from None
    sys.stdout.write(report.to_text())


def _cmd_export(args) -> None:
    try:
        written = export_density(args.checkpoint, args.image, args.out)
    except FileNotFoundError as exc:
        raise _CliError("io", str(exc)) from None
    except ValueError as exc:
        category = "checkpoint" if "checkpoint" in str(exc) else "data"
        raise _CliError(category, str(exc)) from None
    for path in written:
        print(path)


def _cmd_ablate(args) -> None:
    cfg = _load_config(args.config)
    try:
        reports = ablation_sweep(cfg)
    except TrainingDiverged as exc:
        raise _CliError("diverged", str(exc)) from None
    except (FileNotFoundError, ValueError) as exc:
        raise _CliError("data", str(exc)) from None
    for name, report in reports.items():
        print(f"{name}: mae_mean={report.mae_mean:.6f} "
              f"mse_mean={report.mse_mean:.6f}")
    print(f"table: {resolve_out_dir(cfg.out_dir) / 'ablation.txt'}")


def _cmd_synth(args) -> None:
    cfg = _load_config(args.config)
    out = ensure_dir(resolve_out_dir(args.out))
    try:
        samples = synth_dataset(cfg.scene, cfg.train_scenes + cfg.val_scenes)
        manifest = write_dataset(samples, out)
    except OSError as exc:
        raise _CliError("io", str(exc)) from None
    print(f"wrote {len(samples)} scenes")
    print(f"manifest: {manifest}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="multicount",
        description="multi-class object counting via density-map regression")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a run config")
    p.add_argument("--config", required=True)
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default=None, help="also write metrics here")
    p.set_defaults(handler=_cmd_eval)

    p = sub.add_parser("export", help="export predicted density/attention maps")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_export)

    p = sub.add_parser("ablate", help="train and compare the four module "
                                      "configurations")
    p.add_argument("--config", required=True)
    p.set_defaults(handler=_cmd_ablate)

    p = sub.add_parser("synth", help="materialize a synthetic dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.handler(args)
    except _CliError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return _EXIT_CODES.get(exc.category, 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
