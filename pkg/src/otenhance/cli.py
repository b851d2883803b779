"""Command-line surface tying synthesis, degradation, training, enhancement
and evaluation together.

Subcommands: ``synth``, ``degrade``, ``train``, ``enhance``, ``eval-nr``,
``eval-fr``, ``report``. Every subcommand accepts ``--config <json>`` and
``--seed <n>``. Exit codes: 0 success, 1 usage error (synopsis on stderr),
2 runtime failure.

The JSON config file may contain the sections ``synth``, ``degradation``,
``train`` and ``classifier``, each a flat object of the corresponding
dataclass fields (nested ``train`` sections: ``objective``, ``generator``,
``critic``, ``augment``).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import evaluation, pairing, simulate, training
from .imaging import center_crop_resize, load_image, save_image
from .metrics import QualityLabel

USAGE_EXIT = 1
RUNTIME_EXIT = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"config file {path} must contain a JSON object")
    return data


def _section(config: dict, name: str) -> dict:
    value = config.get(name, {})
    if not isinstance(value, dict):
        raise UsageError(f"config section {name!r} must be an object")
    return dict(value)


def _dataclass_from(cls, section: dict, seed: int | None):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise UsageError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = dict(section)
    for key, value in kwargs.items():
        if isinstance(value, list):
            kwargs[key] = tuple(value)
    if seed is not None and "seed" in known:
        kwargs["seed"] = seed
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad {cls.__name__}: {exc}") from None


def _cmd_synth(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    synth_spec = _dataclass_from(simulate.SynthSpec, _section(config, "synth"), args.seed)
    degradation = _dataclass_from(
        simulate.DegradationSpec, _section(config, "degradation"), args.seed
    )
    manifest = simulate.build_corpus(
        args.n_per_grade, args.out, template=synth_spec, degradation=degradation
    )
    print(manifest)
    return 0


def _cmd_degrade(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    spec = _dataclass_from(simulate.DegradationSpec, _section(config, "degradation"), args.seed)
    in_dir = Path(args.in_dir)
    out_dir = Path(args.out)
    pngs = sorted(p for p in in_dir.iterdir() if p.suffix.lower() == ".png")
    if not pngs:
        raise FileNotFoundError(f"no PNG images in {in_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, path in enumerate(pngs):
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, i]))
        save_image(simulate.degrade(load_image(path), spec, rng), out_dir / path.name)
    print(f"degraded {len(pngs)} images into {out_dir}")
    return 0


def _train_config(config: dict, seed: int | None) -> training.TrainConfig:
    section = _section(config, "train")
    if seed is not None:
        section["seed"] = seed
    try:
        return training.config_from_dict(section)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad train config: {exc}") from None


def _cmd_train(args: argparse.Namespace) -> int:
    cfg = _train_config(_load_config(args.config), args.seed)
    records = pairing.load_manifest(args.manifest)
    low = [r for r in records if r.quality is QualityLabel.REJECT]
    high = [r for r in records if r.quality is QualityLabel.GOOD]
    result = training.train(cfg, low, high, args.out, resume_from=args.resume)
    print(result.final_checkpoint)
    return 0


def _cmd_enhance(args: argparse.Namespace) -> int:
    _ = _load_config(args.config)
    state = training.load_checkpoint(args.checkpoint)
    cfg = training.config_from_dict(state["config"])
    in_dir = Path(args.in_dir)
    out_dir = Path(args.out)
    pngs = sorted(p for p in in_dir.iterdir() if p.suffix.lower() == ".png")
    if not pngs:
        raise FileNotFoundError(f"no PNG images in {in_dir}")
    images = [center_crop_resize(load_image(p), cfg.image_side) for p in pngs]
    outputs = training.enhance(state, images)
    out_dir.mkdir(parents=True, exist_ok=True)
    for path, out in zip(pngs, outputs):
        save_image(out, out_dir / path.name)
    print(f"enhanced {len(pngs)} images into {out_dir}")
    return 0


def _cmd_eval_nr(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    if args.classifier is None and args.quality_manifest is None:
        raise UsageError("eval-nr needs --classifier or --quality-manifest")
    if args.classifier is not None:
        classifier = evaluation.ImageClassifier.load(args.classifier)
    else:
        clf_cfg = _dataclass_from(
            evaluation.ClassifierConfig, _section(config, "classifier"), args.seed
        )
        records = pairing.load_manifest(args.quality_manifest)
        classifier, metrics = evaluation.train_quality_classifier(records, clf_cfg)
        print(f"# quality classifier held-out kappa={metrics['kappa']:.4f} "
              f"auroc={metrics['auroc_good_vs_rest']:.4f}", file=sys.stderr)
        if args.save_classifier:
            classifier.save(args.save_classifier)
    dr_records = pairing.load_manifest(args.dr_manifest) if args.dr_manifest else None
    report = evaluation.evaluate_no_reference(args.enhanced, classifier, dr_records)
    if args.out:
        report.to_json(args.out)
    print(evaluation.render_table(report))
    return 0


def _cmd_eval_fr(args: argparse.Namespace) -> int:
    _ = _load_config(args.config)
    report = evaluation.evaluate_full_reference(args.pairs, args.corpus, args.enhanced)
    if args.out:
        report.to_json(args.out)
    print(evaluation.render_table(report))
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    _ = _load_config(args.config)
    report = evaluation.EvalReport.from_json(args.in_file)
    if args.csv:
        report.write_csv(args.csv)
    print(evaluation.render_table(report))
    return 0


def build_parser() -> _Parser:
    parser = _Parser(
        prog="otenhance",
        description="Unpaired image enhancement with a transport-cost-constrained "
                    "adversarial objective: corpus synthesis, training, and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="override configured seeds")

    p = sub.add_parser("synth", help="render a labeled synthetic corpus")
    p.add_argument("--out", required=True, help="corpus output directory")
    p.add_argument("--n-per-grade", type=int, default=10)
    common(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("degrade", help="degrade every PNG in a directory")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=_cmd_degrade)

    p = sub.add_parser("train", help="train the enhancement generator")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="run directory (checkpoints, loss log)")
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    common(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("enhance", help="run a trained generator over a directory")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=_cmd_enhance)

    p = sub.add_parser("eval-nr", help="no-reference evaluation (converted ratio)")
    p.add_argument("--enhanced", required=True, help="directory of enhanced images")
    p.add_argument("--classifier", default=None, help="saved quality classifier")
    p.add_argument("--quality-manifest", default=None,
                   help="labeled manifest to train a quality classifier")
    p.add_argument("--save-classifier", default=None)
    p.add_argument("--dr-manifest", default=None,
                   help="manifest providing disease grades for the task metrics")
    p.add_argument("--out", default=None, help="write report JSON here")
    common(p)
    p.set_defaults(func=_cmd_eval_nr)

    p = sub.add_parser("eval-fr", help="full-reference evaluation (PSNR/SSIM vs clean)")
    p.add_argument("--pairs", required=True, help="pairs.csv from synth")
    p.add_argument("--corpus", required=True, help="corpus directory (good/, reject/)")
    p.add_argument("--enhanced", required=True)
    p.add_argument("--out", default=None, help="write report JSON here")
    common(p)
    p.set_defaults(func=_cmd_eval_fr)

    p = sub.add_parser("report", help="render a report JSON as table and CSV")
    p.add_argument("--in", dest="in_file", required=True)
    p.add_argument("--csv", default=None, help="write per-item rows as CSV here")
    common(p)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(argv)
        if getattr(args, "command", None) is None:
            raise UsageError("missing subcommand")
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except Exception as exc:  # runtime failure: report and signal exit 2
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_EXIT


if __name__ == "__main__":
    sys.exit(main())
