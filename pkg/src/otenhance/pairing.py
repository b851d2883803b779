"""Dataset manifests and grade-matched resampling of unpaired training pairs.

A manifest is a CSV with header ``id,path,quality,dr_grade``. Paths are
resolved relative to the manifest file. Pair sampling draws low-quality
inputs uniformly and matches each with a uniformly drawn high-quality
target of the same disease grade, so structural content statistics stay
aligned across the pair; pools that cannot honor that matching are a hard
error rather than a silent fallback.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .metrics import QualityLabel

MANIFEST_COLUMNS = ("id", "path", "quality", "dr_grade")
DR_GRADES = (0, 1, 2, 3, 4)


class ManifestError(Exception):
    """Malformed manifest content; the message names the offending row."""


class GradeMatchError(Exception):
    """A required disease grade has no candidates in the target pool."""


@dataclass(frozen=True)
class FundusRecord:
    """One manifest row: image id, resolved path, quality label, disease grade."""

    id: str
    path: Path
    quality: QualityLabel
    dr_grade: int

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("record id must be nonempty")
        if not str(self.path):
            raise ValueError("record path must be nonempty")
        if self.dr_grade not in DR_GRADES:
            raise ValueError(f"dr_grade must be in {DR_GRADES}, got {self.dr_grade}")


@dataclass
class PairBatch:
    """Aligned unpaired-training batch: low-quality inputs, high-quality
    targets, and the shared disease grade of each pair."""

    inputs: list
    targets: list
    grades: list[int]

    def __post_init__(self) -> None:
        if not (len(self.inputs) == len(self.targets) == len(self.grades) >= 1):
            raise ValueError("inputs, targets and grades must have equal nonzero length")


@dataclass
class RecordPairBatch:
    """Like PairBatch but holding manifest records instead of pixel data."""

    inputs: list[FundusRecord]
    targets: list[FundusRecord]
    grades: list[int]


def load_manifest(path: str | Path) -> list[FundusRecord]:
    """Parse a manifest CSV into records, rejecting duplicates and bad rows."""
    path = Path(path)
    records: list[FundusRecord] = []
    seen: set[str] = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        if tuple(h.strip() for h in header) != MANIFEST_COLUMNS:
            raise ManifestError(
                f"{path}: line 1: expected header {','.join(MANIFEST_COLUMNS)}, "
                f"got {','.join(header)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 4:
                raise ManifestError(f"{path}: line {lineno}: expected 4 fields, got {len(row)}")
            rid, rel, quality_text, grade_text = (cell.strip() for cell in row)
            try:
                quality = QualityLabel.parse(quality_text)
            except ValueError as exc:
                raise ManifestError(f"{path}: line {lineno}: {exc}") from None
            try:
                grade = int(grade_text)
            except ValueError:
                raise ManifestError(
                    f"{path}: line {lineno}: dr_grade {grade_text!r} is not an integer"
                ) from None
            if grade not in DR_GRADES:
                raise ManifestError(
                    f"{path}: line {lineno}: dr_grade {grade} outside {DR_GRADES}"
                )
            if rid in seen:
                raise ManifestError(f"{path}: line {lineno}: duplicate id {rid!r}")
            seen.add(rid)
            try:
                records.append(
                    FundusRecord(rid, (path.parent / rel).resolve(), quality, grade)
                )
            except ValueError as exc:
                raise ManifestError(f"{path}: line {lineno}: {exc}") from None
    return records


def write_manifest(path: str | Path, records: list[FundusRecord]) -> None:
    """Write records as a manifest CSV with paths relative to the manifest."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_COLUMNS)
        for rec in records:
            try:
                rel = Path(rec.path).resolve().relative_to(path.parent.resolve())
            except ValueError:
                rel = Path(rec.path)
            writer.writerow([rec.id, rel.as_posix(), rec.quality.value, rec.dr_grade])


def check_grade_coverage(
    low: list[FundusRecord], high: list[FundusRecord]
) -> dict[int, list[FundusRecord]]:
    """High-quality records grouped by grade, failing on uncovered grades."""
    by_grade: dict[int, list[FundusRecord]] = {}
    for rec in high:
        by_grade.setdefault(rec.dr_grade, []).append(rec)
    missing = sorted({rec.dr_grade for rec in low} - set(by_grade))
    if missing:
        raise GradeMatchError(
            f"no high-quality records at grade(s) {missing} to match the low-quality pool"
        )
    return by_grade


def sample_pair_records(
    low: list[FundusRecord],
    high: list[FundusRecord],
    batch_size: int,
    rng: np.random.Generator,
) -> RecordPairBatch:
    """Draw a batch of grade-matched (low, high) record pairs with replacement.

    Inputs are uniform over the low pool; each target is uniform over the
    high-pool records sharing the input's grade. Deterministic given the
    generator state.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if not low or not high:
        raise ValueError("both record pools must be nonempty")
    by_grade = check_grade_coverage(low, high)
    inputs: list[FundusRecord] = []
    targets: list[FundusRecord] = []
    grades: list[int] = []
    for _ in range(batch_size):
        src = low[int(rng.integers(0, len(low)))]
        pool = by_grade[src.dr_grade]
        tgt = pool[int(rng.integers(0, len(pool)))]
        inputs.append(src)
        targets.append(tgt)
        grades.append(src.dr_grade)
    return RecordPairBatch(inputs, targets, grades)


def sample_pair_batch(
    low: list[FundusRecord],
    high: list[FundusRecord],
    batch_size: int,
    rng: np.random.Generator,
    loader=None,
) -> PairBatch:
    """Sample grade-matched record pairs and load their pixel data.

    ``loader`` maps a path to an image array; it defaults to
    :func:`otenhance.imaging.load_image` and can be swapped for a caching
    loader by callers on a hot path.
    """
    if loader is None:
        from .imaging import load_image as loader
    recs = sample_pair_records(low, high, batch_size, rng)
    return PairBatch(
        inputs=[loader(rec.path) for rec in recs.inputs],
        targets=[loader(rec.path) for rec in recs.targets],
        grades=recs.grades,
    )
