"""No-reference and full-reference evaluation protocols plus report
serialization.

No-reference: a small quality classifier grades each enhanced image and the
converted ratio is the fraction graded good; optionally a small
disease-grade classifier is trained on the enhanced images (80/20 split by
id hash) and its held-out accuracy / kappa / one-vs-rest AUROC are
reported. Full-reference: per-pair PSNR/SSIM of enhanced-vs-clean next to
the degraded-vs-clean baseline.

Every aggregate in a report is recomputable from its per-item rows.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .imaging import center_crop_resize, load_image
from .metrics import ConfusionMatrix, QualityLabel, auroc, cohens_kappa, converted_ratio, psnr, ssim
from .networks import load_parameters, save_parameters, spec_fingerprint
from .pairing import FundusRecord

QUALITY_ORDER = (QualityLabel.GOOD, QualityLabel.USABLE, QualityLabel.REJECT)

REPORT_CSV_COLUMNS = (
    "id", "psnr_baseline", "psnr_enhanced", "ssim_baseline", "ssim_enhanced",
    "quality_verdict", "dr_grade_true", "dr_grade_pred",
)


@dataclass(frozen=True)
class ClassifierConfig:
    """Small CNN classifier recipe (quality grading or disease grading)."""

    n_classes: int = 3
    in_channels: int = 3
    image_side: int = 64
    base_channels: int = 8
    conv_layers: int = 3
    epochs: int = 40
    batch_size: int = 32
    lr: float = 3e-3
    seed: int = 0
    val_fraction: float = 0.2

    def __post_init__(self) -> None:
        if self.n_classes < 2:
            raise ValueError("need at least two classes")
        if self.conv_layers < 1:
            raise ValueError("conv_layers must be >= 1")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in (0, 1)")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


class SmallCnn(nn.Module):
    def __init__(self, cfg: ClassifierConfig):
        super().__init__()
        layers: list[nn.Module] = []
        c = cfg.in_channels
        width = cfg.base_channels
        for _ in range(cfg.conv_layers):
            layers += [nn.Conv2d(c, width, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2)]
            c, width = width, width * 2
        self.features = nn.Sequential(*layers)
        self.head = nn.Linear(c, cfg.n_classes)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.features(x)
        return self.head(h.mean(dim=(2, 3)))


@dataclass
class ImageClassifier:
    """A trained small CNN plus its config; predictions are softmax rows."""

    net: SmallCnn
    config: ClassifierConfig

    def predict_proba(self, images: list[np.ndarray], batch_size: int = 64) -> np.ndarray:
        self.net.eval()
        outputs = []
        with torch.no_grad():
            for lo in range(0, len(images), batch_size):
                chunk = np.stack(
                    [center_crop_resize(im, self.config.image_side) for im in
                     images[lo : lo + batch_size]]
                ).astype(np.float32)
                logits = self.net(torch.from_numpy(chunk))
                outputs.append(F.softmax(logits, dim=1).numpy())
        return np.concatenate(outputs, axis=0)

    def save(self, path: str | Path) -> None:
        """Write parameters plus a ``<path>.json`` sidecar with the config."""
        path = Path(path)
        save_parameters(self.net, self.config, path)
        with open(path.with_suffix(path.suffix + ".json"), "w") as fh:
            json.dump(dataclasses.asdict(self.config), fh, indent=1)

    @classmethod
    def load(cls, path: str | Path, config: ClassifierConfig | None = None) -> "ImageClassifier":
        path = Path(path)
        if config is None:
            with open(path.with_suffix(path.suffix + ".json")) as fh:
                config = ClassifierConfig(**json.load(fh))
        net = SmallCnn(config)
        load_parameters(path, config, net)
        return cls(net, config)

    @property
    def fingerprint(self) -> str:
        return spec_fingerprint(self.config)


def id_in_validation(item_id: str, val_fraction: float = 0.2) -> bool:
    """Deterministic split membership from a stable hash of the item id."""
    digest = int(hashlib.sha1(item_id.encode()).hexdigest(), 16)
    return (digest % 1000) < int(round(val_fraction * 1000))


def _train_cnn(
    images: list[np.ndarray],
    labels: list[int],
    ids: list[str],
    cfg: ClassifierConfig,
) -> tuple[ImageClassifier, np.ndarray, list[int], list[int], np.ndarray]:
    """Train on the non-validation split; return (classifier, validation
    indices, val truth, val predictions, val probability rows)."""
    torch_gen = torch.Generator()
    torch_gen.manual_seed(cfg.seed)
    net = SmallCnn(cfg)
    for module in net.modules():
        if isinstance(module, (nn.Conv2d, nn.Linear)):
            fan_in = module.weight.size(1) * (
                module.weight[0][0].numel() if module.weight.dim() > 2 else 1
            )
            bound = 1.0 / math.sqrt(fan_in)
            with torch.no_grad():
                module.weight.uniform_(-bound, bound, generator=torch_gen)
                module.bias.uniform_(-bound, bound, generator=torch_gen)

    prepared = np.stack(
        [center_crop_resize(im, cfg.image_side) for im in images]
    ).astype(np.float32)
    label_arr = np.asarray(labels, dtype=np.int64)
    val_mask = np.array([id_in_validation(i, cfg.val_fraction) for i in ids])
    if val_mask.all() or (~val_mask).all():
        # Hash split degenerated (tiny corpus): fall back to a modular split.
        val_mask = np.arange(len(ids)) % int(round(1 / cfg.val_fraction)) == 0
    train_x = torch.from_numpy(prepared[~val_mask])
    train_y = torch.from_numpy(label_arr[~val_mask])

    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 21]))
    net.train()
    for _ in range(cfg.epochs):
        order = rng.permutation(len(train_x))
        for lo in range(0, len(order), cfg.batch_size):
            idx = torch.from_numpy(order[lo : lo + cfg.batch_size])
            logits = net(train_x[idx])
            loss = F.cross_entropy(logits, train_y[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()

    clf = ImageClassifier(net, cfg)
    val_idx = np.flatnonzero(val_mask)
    probs = clf.predict_proba([images[i] for i in val_idx])
    preds = probs.argmax(axis=1)
    return clf, val_idx, list(label_arr[val_mask]), list(preds), probs


def train_quality_classifier(
    records: list[FundusRecord], cfg: ClassifierConfig | None = None
) -> tuple[ImageClassifier, dict]:
    """Train a three-way quality grader from a labeled manifest.

    Returns the classifier and held-out metrics: kappa over the three-way
    confusion matrix and AUROC for good-vs-rest. Requires at least two
    distinct quality labels among the records.
    """
    cfg = cfg or ClassifierConfig()
    if len({rec.quality for rec in records}) < 2:
        raise ValueError("manifest must contain at least two quality classes")
    images = [load_image(rec.path) for rec in records]
    class_index = {label: i for i, label in enumerate(QUALITY_ORDER)}
    labels = [class_index[rec.quality] for rec in records]
    ids = [rec.id for rec in records]
    clf, _, val_true, val_pred, val_probs = _train_cnn(images, labels, ids, cfg)

    matrix = ConfusionMatrix.from_predictions(val_true, val_pred, cfg.n_classes)
    good_idx = class_index[QualityLabel.GOOD]
    scored = [
        (float(val_probs[i, good_idx]), val_true[i] == good_idx) for i in range(len(val_true))
    ]
    metrics = {
        "kappa": cohens_kappa(matrix),
        "auroc_good_vs_rest": auroc(scored),
        "n_validation": len(val_true),
        "n_train": len(records) - len(val_true),
    }
    return clf, metrics


def classify_quality(clf: ImageClassifier, images: list[np.ndarray]) -> list[QualityLabel]:
    probs = clf.predict_proba(images)
    return [QUALITY_ORDER[int(i)] for i in probs.argmax(axis=1)]


@dataclass
class ReportRow:
    id: str
    psnr_baseline: float | None = None
    psnr_enhanced: float | None = None
    ssim_baseline: float | None = None
    ssim_enhanced: float | None = None
    quality_verdict: str | None = None
    dr_grade_true: int | None = None
    dr_grade_pred: int | None = None
    in_validation: bool | None = None
    dr_scores: tuple[float, ...] | None = None


@dataclass
class EvalReport:
    """Evaluation aggregates plus the per-item rows they derive from."""

    kind: str
    rows: list[ReportRow] = field(default_factory=list)
    converted_ratio: float | None = None
    accuracy: float | None = None
    kappa: float | None = None
    auroc: float | None = None
    mean_psnr: float | None = None
    mean_ssim: float | None = None
    mean_psnr_baseline: float | None = None
    mean_ssim_baseline: float | None = None
    header: dict = field(default_factory=dict)

    def to_json(self, path: str | Path) -> None:
        payload = dataclasses.asdict(self)
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1)

    @classmethod
    def from_json(cls, path: str | Path) -> "EvalReport":
        with open(path) as fh:
            payload = json.load(fh)
        rows = [ReportRow(**{**r, "dr_scores": tuple(r["dr_scores"]) if r.get("dr_scores") else None})
                for r in payload.pop("rows", [])]
        return cls(rows=rows, **payload)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(REPORT_CSV_COLUMNS)
            for row in self.rows:
                writer.writerow(
                    ["" if getattr(row, col) is None else
                     (repr(getattr(row, col)) if isinstance(getattr(row, col), float)
                      else getattr(row, col))
                     for col in REPORT_CSV_COLUMNS]
                )


def recompute_aggregates(report: EvalReport) -> dict:
    """Re-derive every aggregate from the per-item rows (consistency oracle)."""
    out: dict = {}
    rows = report.rows
    if report.converted_ratio is not None:
        out["converted_ratio"] = converted_ratio(
            [QualityLabel.parse(r.quality_verdict) for r in rows if r.quality_verdict]
        )
    if report.mean_psnr is not None:
        out["mean_psnr"] = float(np.mean([r.psnr_enhanced for r in rows]))
        out["mean_ssim"] = float(np.mean([r.ssim_enhanced for r in rows]))
        out["mean_psnr_baseline"] = float(np.mean([r.psnr_baseline for r in rows]))
        out["mean_ssim_baseline"] = float(np.mean([r.ssim_baseline for r in rows]))
    if report.accuracy is not None:
        val = [r for r in rows if r.in_validation]
        true = [r.dr_grade_true for r in val]
        pred = [r.dr_grade_pred for r in val]
        out["accuracy"] = float(np.mean([t == p for t, p in zip(true, pred)]))
        n = max(max(true), max(pred)) + 1
        out["kappa"] = cohens_kappa(ConfusionMatrix.from_predictions(true, pred, n))
        out["auroc"] = _macro_auroc(
            np.asarray(true), np.asarray([r.dr_scores for r in val], dtype=np.float64)
        )
    return out


def _macro_auroc(true: np.ndarray, scores: np.ndarray) -> float:
    """One-vs-rest AUROC averaged over classes with both kinds of examples."""
    values = []
    for cls in range(scores.shape[1]):
        positives = true == cls
        if positives.any() and (~positives).any():
            values.append(auroc([(float(s), bool(p)) for s, p in zip(scores[:, cls], positives)]))
    if not values:
        raise ValueError("no class has both positive and negative examples")
    return float(np.mean(values))


def _list_pngs(directory: Path) -> list[Path]:
    return sorted(p for p in directory.iterdir() if p.suffix.lower() == ".png")


def evaluate_no_reference(
    enhanced_dir: str | Path,
    classifier: ImageClassifier,
    dr_records: list[FundusRecord] | None = None,
    dr_config: ClassifierConfig | None = None,
) -> EvalReport:
    """Grade every image in a directory and report the converted ratio.

    When manifest records with disease grades are supplied, a small grade
    classifier is additionally trained on the enhanced images (80/20 split
    by id hash) and its held-out accuracy, kappa and macro one-vs-rest
    AUROC are included.
    """
    enhanced_dir = Path(enhanced_dir)
    paths = _list_pngs(enhanced_dir)
    if not paths:
        raise ValueError(f"no PNG images in {enhanced_dir}")
    images = [load_image(p) for p in paths]
    ids = [p.stem for p in paths]
    verdicts = classify_quality(classifier, images)
    rows = [
        ReportRow(id=i, quality_verdict=v.value) for i, v in zip(ids, verdicts)
    ]
    report = EvalReport(
        kind="no_reference",
        rows=rows,
        converted_ratio=converted_ratio(verdicts),
        header={
            "quality_classifier": classifier.fingerprint,
            "split": "80/20 by id hash",
        },
    )

    if dr_records is not None:
        grade_by_id = {rec.id: rec.dr_grade for rec in dr_records}
        known = [i for i, rid in enumerate(ids) if rid in grade_by_id]
        if not known:
            raise ValueError("no enhanced image id matches the provided manifest")
        cfg = dr_config or ClassifierConfig(n_classes=5)
        sub_images = [images[i] for i in known]
        sub_ids = [ids[i] for i in known]
        labels = [grade_by_id[r] for r in sub_ids]
        clf, val_idx, val_true, val_pred, val_probs = _train_cnn(sub_images, labels, sub_ids, cfg)
        val_ids = [sub_ids[i] for i in val_idx]
        by_id = {row.id: row for row in rows}
        for k, rid in enumerate(val_ids):
            row = by_id[rid]
            row.dr_grade_true = int(val_true[k])
            row.dr_grade_pred = int(val_pred[k])
            row.in_validation = True
            row.dr_scores = tuple(float(v) for v in val_probs[k])
        matrix = ConfusionMatrix.from_predictions(val_true, val_pred, cfg.n_classes)
        report.accuracy = float(np.mean([t == p for t, p in zip(val_true, val_pred)]))
        report.kappa = cohens_kappa(matrix)
        report.auroc = _macro_auroc(np.asarray(val_true), val_probs)
        report.header["dr_classifier"] = clf.fingerprint
    return report


def read_pairs(path: str | Path) -> list[tuple[str, str]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [(row["clean_id"], row["degraded_id"]) for row in reader]


def evaluate_full_reference(
    pairs_file: str | Path,
    corpus_dir: str | Path,
    enhanced_dir: str | Path,
) -> EvalReport:
    """Per-pair PSNR/SSIM of enhanced and degraded images against clean
    ground truth; means reported next to the degraded baseline."""
    corpus_dir = Path(corpus_dir)
    enhanced_dir = Path(enhanced_dir)
    pairs = read_pairs(pairs_file)
    if not pairs:
        raise ValueError(f"no pairs listed in {pairs_file}")
    rows = []
    for clean_id, degraded_id in pairs:
        locations = {
            "clean": corpus_dir / "good" / f"{clean_id}.png",
            "degraded": corpus_dir / "reject" / f"{degraded_id}.png",
            "enhanced": enhanced_dir / f"{degraded_id}.png",
        }
        for role, p in locations.items():
            if not p.is_file():
                raise FileNotFoundError(f"pair {clean_id}/{degraded_id}: missing {role} image {p}")
        clean = load_image(locations["clean"])
        degraded = load_image(locations["degraded"])
        enhanced = load_image(locations["enhanced"])
        rows.append(
            ReportRow(
                id=degraded_id,
                psnr_baseline=psnr(degraded, clean),
                psnr_enhanced=psnr(enhanced, clean),
                ssim_baseline=ssim(degraded, clean),
                ssim_enhanced=ssim(enhanced, clean),
            )
        )
    return EvalReport(
        kind="full_reference",
        rows=rows,
        mean_psnr=float(np.mean([r.psnr_enhanced for r in rows])),
        mean_ssim=float(np.mean([r.ssim_enhanced for r in rows])),
        mean_psnr_baseline=float(np.mean([r.psnr_baseline for r in rows])),
        mean_ssim_baseline=float(np.mean([r.ssim_baseline for r in rows])),
        header={"pairs_file": str(pairs_file)},
    )


def render_table(report: EvalReport) -> str:
    """Aligned text table of the report aggregates."""
    def fmt(v) -> str:
        if v is None:
            return "-"
        if isinstance(v, float):
            return "inf" if math.isinf(v) else f"{v:.4f}"
        return str(v)

    lines = []
    if report.kind == "full_reference":
        lines.append(f"Full-reference evaluation ({len(report.rows)} pairs)")
        header = f"{'Row':<12}{'PSNR':>10}{'SSIM':>10}"
        lines.append(header)
        lines.append("-" * len(header))
        lines.append(
            f"{'degraded':<12}{fmt(report.mean_psnr_baseline):>10}"
            f"{fmt(report.mean_ssim_baseline):>10}"
        )
        lines.append(f"{'enhanced':<12}{fmt(report.mean_psnr):>10}{fmt(report.mean_ssim):>10}")
    else:
        lines.append(f"No-reference evaluation ({len(report.rows)} images)")
        header = f"{'CR':>8}{'Accuracy':>10}{'Kappa':>8}{'AUC':>8}"
        lines.append(header)
        lines.append("-" * len(header))
        lines.append(
            f"{fmt(report.converted_ratio):>8}{fmt(report.accuracy):>10}"
            f"{fmt(report.kappa):>8}{fmt(report.auroc):>8}"
        )
    if report.header:
        lines.append("")
        for key, value in sorted(report.header.items()):
            lines.append(f"# {key}: {value}")
    return "\n".join(lines)
