"""Corpus ingestion, ground-truth annotations, filtering, and splits.

Expected layout::

    <root>/<paper_id>/paper.txt      required, UTF-8 plain text
    <root>/<paper_id>/readme.txt     optional
    <root>/<paper_id>/source.ref     optional, URL or path to the code
    <root>/ground_truth.csv          optional annotations, one row per paper

The CSV header is mandatory: paper_id, code_available, readme_present,
manually_runnable, then one column per pitfall (P1..Pm) with values
present / partial / absent / unclear.  Empty cells mean "not annotated".
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

STAGE_RATE = "rate"
STAGE_PREPARE = "prepare"
STAGE_ASSESS = "assess"

_BOOL_VALUES = {
    "true": True, "false": False,
    "yes": True, "no": False,
    "1": True, "0": False,
}

_PITFALL_VALUES = ("present", "partial", "absent", "unclear")

_RUNNABILITY_COLUMNS = ("code_available", "readme_present", "manually_runnable")


class MissingRoot(FileNotFoundError):
    pass


class DuplicatePaperId(ValueError):
    pass


@dataclass(frozen=True)
class GroundTruthRecord:
    """Expert annotation of one paper; runnability flags may be absent."""

    paper_id: str
    code_available: bool | None = None
    readme_present: bool | None = None
    manually_runnable: bool | None = None
    pitfalls: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.readme_present and not self.code_available:
            raise ValueError("a readme implies available code")
        for pid, value in self.pitfalls.items():
            if value not in _PITFALL_VALUES:
                raise ValueError(f"pitfall {pid}: unknown annotation {value!r}")


@dataclass(frozen=True)
class CorpusEntry:
    paper_id: str
    paper_text: str
    readme_text: str | None = None
    source_ref: str | None = None
    ground_truth: GroundTruthRecord | None = None

    def __post_init__(self) -> None:
        if not self.paper_text:
            raise ValueError("paper_text must be nonempty")


@dataclass(frozen=True)
class LoadedCorpus:
    entries: tuple[CorpusEntry, ...]
    errors: tuple[str, ...]

    def by_id(self) -> dict[str, CorpusEntry]:
        return {e.paper_id: e for e in self.entries}


def _parse_bool(raw: str, column: str, paper_id: str) -> bool | None:
    raw = raw.strip().lower()
    if raw == "":
        return None
    if raw not in _BOOL_VALUES:
        raise ValueError(f"{paper_id}: column {column}: cannot parse boolean {raw!r}")
    return _BOOL_VALUES[raw]


def load_ground_truth(csv_path: Path) -> dict[str, GroundTruthRecord]:
    """Parse the annotation CSV; raises on duplicate paper ids."""
    records: dict[str, GroundTruthRecord] = {}
    with open(csv_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "paper_id" not in reader.fieldnames:
            raise ValueError(f"{csv_path}: header row with paper_id column is mandatory")
        pitfall_columns = [
            c for c in reader.fieldnames
            if c not in ("paper_id",) + _RUNNABILITY_COLUMNS
        ]
        for row in reader:
            paper_id = (row.get("paper_id") or "").strip()
            if not paper_id:
                raise ValueError(f"{csv_path}: row with empty paper_id")
            if paper_id in records:
                raise DuplicatePaperId(f"duplicate annotation for {paper_id!r}")
            pitfalls = {}
            for col in pitfall_columns:
                value = (row.get(col) or "").strip().lower()
                if value:
                    pitfalls[col] = value
            records[paper_id] = GroundTruthRecord(
                paper_id=paper_id,
                code_available=_parse_bool(row.get("code_available", ""), "code_available", paper_id),
                readme_present=_parse_bool(row.get("readme_present", ""), "readme_present", paper_id),
                manually_runnable=_parse_bool(row.get("manually_runnable", ""), "manually_runnable", paper_id),
                pitfalls=pitfalls,
            )
    return records


def _read_utf8(path: Path) -> str:
    return path.read_bytes().decode("utf-8")


def load_corpus(root: str | Path) -> LoadedCorpus:
    """Load every paper directory under root, collecting per-entry errors.

    Malformed entries (bad UTF-8, invalid annotations) are skipped and
    reported in the error list; annotations without a matching directory
    are reported as well.  Duplicate paper ids raise.
    """
    root = Path(root)
    if not root.is_dir():
        raise MissingRoot(f"corpus root not found: {root}")

    gt_path = root / "ground_truth.csv"
    ground_truth = load_ground_truth(gt_path) if gt_path.is_file() else {}

    entries: list[CorpusEntry] = []
    errors: list[str] = []
    seen_dirs: set[str] = set()
    for paper_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        paper_id = paper_dir.name
        seen_dirs.add(paper_id)
        paper_path = paper_dir / "paper.txt"
        if not paper_path.is_file():
            errors.append(f"{paper_id}: missing paper.txt")
            continue
        try:
            paper_text = _read_utf8(paper_path)
            readme_path = paper_dir / "readme.txt"
            readme_text = _read_utf8(readme_path) if readme_path.is_file() else None
            ref_path = paper_dir / "source.ref"
            source_ref = _read_utf8(ref_path).strip() if ref_path.is_file() else None
            entry = CorpusEntry(
                paper_id=paper_id,
                paper_text=paper_text,
                readme_text=readme_text,
                source_ref=source_ref or None,
                ground_truth=ground_truth.get(paper_id),
            )
        except UnicodeDecodeError as exc:
            errors.append(f"{paper_id}: malformed UTF-8: {exc}")
            continue
        except ValueError as exc:
            errors.append(f"{paper_id}: {exc}")
            continue
        entries.append(entry)

    for paper_id in sorted(set(ground_truth) - seen_dirs):
        errors.append(f"{paper_id}: annotation has no matching paper directory")

    return LoadedCorpus(entries=tuple(entries), errors=tuple(errors))


def filter_for_stage(
    entries: Sequence[CorpusEntry], stage: str
) -> list[CorpusEntry]:
    """Stage eligibility: rate needs code and a readme, prepare needs
    code, assess needs pitfall annotations.  Entries without ground truth
    are excluded (eligibility is an annotation-level fact)."""
    if stage == STAGE_RATE:
        keep = lambda gt: bool(gt.code_available) and bool(gt.readme_present)
    elif stage == STAGE_PREPARE:
        keep = lambda gt: bool(gt.code_available)
    elif stage == STAGE_ASSESS:
        keep = lambda gt: bool(gt.pitfalls)
    else:
        raise ValueError(f"unknown stage: {stage!r}")
    return [e for e in entries if e.ground_truth is not None and keep(e.ground_truth)]


@dataclass(frozen=True)
class Split:
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    seed: int

    def __post_init__(self) -> None:
        if set(self.train_ids) & set(self.test_ids):
            raise ValueError("train and test ids must be disjoint")


def seeded_split(entries: Sequence[CorpusEntry], n_train: int, seed: int) -> Split:
    """Deterministic shuffle of the sorted ids; first n_train go to train."""
    ids = sorted(e.paper_id for e in entries)
    if n_train >= len(ids):
        raise ValueError(f"n_train={n_train} must be smaller than the corpus ({len(ids)})")
    if n_train < 0:
        raise ValueError("n_train must be nonnegative")
    rng = random.Random(seed)
    rng.shuffle(ids)
    return Split(train_ids=tuple(ids[:n_train]), test_ids=tuple(ids[n_train:]), seed=seed)
