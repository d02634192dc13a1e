"""Text-based reproducibility rating.

Scores the concatenation of a paper's text and its Readme against a
reproducibility concept vector and converts the score into a
runs / not-runs verdict using a recall-calibrated cutoff.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Sequence

from .jsonio import canonical_dumps
from .measure import ConceptVector, PromptPair, project_score

LABEL_RUNS = "runs"
LABEL_NOT_RUNS = "not_runs"

PAPER_HEADER = "=== PAPER ==="
README_SEPARATOR = "=== README ==="


class DegenerateLabels(ValueError):
    """Calibration needs both label classes to be present."""


@dataclass(frozen=True)
class RateInput:
    paper_id: str
    paper_text: str
    readme_text: str

    def __post_init__(self) -> None:
        if not self.paper_text:
            raise ValueError("paper_text must be nonempty")
        if not self.readme_text:
            raise ValueError("readme_text must be nonempty; rating is only defined with a Readme")


@dataclass(frozen=True)
class Cutoff:
    """Score threshold plus the calibration evidence behind it."""

    threshold: float
    train_recall: float
    train_precision: float
    n_train: int

    def __post_init__(self) -> None:
        if not (0.0 <= self.train_recall <= 1.0 and 0.0 <= self.train_precision <= 1.0):
            raise ValueError("calibration metrics must lie in [0, 1]")
        if self.n_train < 2:
            raise ValueError("calibration needs at least 2 training examples")

    def to_json(self) -> str:
        return canonical_dumps(
            {
                "version": 1,
                "threshold": self.threshold,
                "train_recall": self.train_recall,
                "train_precision": self.train_precision,
                "n_train": self.n_train,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "Cutoff":
        doc = json.loads(text)
        if doc.get("version") != 1:
            raise ValueError(f"unsupported cutoff version: {doc.get('version')}")
        return cls(
            threshold=float(doc["threshold"]),
            train_recall=float(doc["train_recall"]),
            train_precision=float(doc["train_precision"]),
            n_train=int(doc["n_train"]),
        )


@dataclass(frozen=True)
class RateVerdict:
    paper_id: str
    score: float
    label: str
    cutoff_used: Cutoff
    prompt_digest: str
    provider_id: str

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "paper_id": self.paper_id,
            "score": self.score,
            "label": self.label,
            "cutoff_used": json.loads(self.cutoff_used.to_json()),
            "concept_ref": {
                "prompt_digest": self.prompt_digest,
                "provider_id": self.provider_id,
            },
        }

    def to_json(self) -> str:
        return canonical_dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "RateVerdict":
        cut = doc["cutoff_used"]
        return cls(
            paper_id=doc["paper_id"],
            score=float(doc["score"]),
            label=doc["label"],
            cutoff_used=Cutoff.from_json(canonical_dumps(cut)),
            prompt_digest=doc["concept_ref"]["prompt_digest"],
            provider_id=doc["concept_ref"]["provider_id"],
        )


def load_default_rate_prompts() -> PromptPair:
    """The versioned prompt asset shipped with the package."""
    text = resources.files("aekit.assets").joinpath("rate_prompts.json").read_text("utf-8")
    doc = json.loads(text)
    return PromptPair(
        positive=doc["positive"],
        negative=doc["negative"],
        neutral=doc["neutral"],
        concept_name=doc["concept_name"],
    )


def compose_rate_document(input: RateInput) -> str:
    """Deterministic concatenation: header, paper, separator, readme."""
    return (
        f"{PAPER_HEADER}\n{input.paper_text}\n{README_SEPARATOR}\n{input.readme_text}"
    )


def calibrate_cutoff(scores: Sequence[float], labels: Sequence[str]) -> Cutoff:
    """Pick the threshold that maximizes recall of the runs class.

    Candidates are the distinct scores plus (min - 1).  Pure recall
    maximization alone would always pick the lowest candidate, so ties
    are broken by precision and then by the larger threshold, which keeps
    the cutoff as selective as recall allows.  A score equal to the
    threshold counts as runs.
    """
    if len(scores) != len(labels):
        raise ValueError("scores and labels must align")
    for lab in labels:
        if lab not in (LABEL_RUNS, LABEL_NOT_RUNS):
            raise ValueError(f"unknown label: {lab!r}")
    n_pos = sum(1 for lab in labels if lab == LABEL_RUNS)
    if n_pos == 0 or n_pos == len(labels):
        raise DegenerateLabels("calibration needs both runs and not_runs examples")

    candidates = sorted(set(scores)) + [min(scores) - 1.0]
    best: tuple[float, float, float] | None = None
    for threshold in candidates:
        tp = sum(1 for s, lab in zip(scores, labels) if s >= threshold and lab == LABEL_RUNS)
        fp = sum(1 for s, lab in zip(scores, labels) if s >= threshold and lab == LABEL_NOT_RUNS)
        fn = n_pos - tp
        recall = tp / (tp + fn)
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        key = (recall, precision, threshold)
        if best is None or key > best:
            best = key
    recall, precision, threshold = best
    return Cutoff(
        threshold=threshold,
        train_recall=recall,
        train_precision=precision,
        n_train=len(scores),
    )


def rate_document(
    input: RateInput,
    concept: ConceptVector,
    cutoff: Cutoff,
    provider,
    neutral_prompt: str | None = None,
) -> RateVerdict:
    """Score one paper+readme document and apply the cutoff rule."""
    if neutral_prompt is None:
        neutral_prompt = load_default_rate_prompts().neutral
    document = compose_rate_document(input)
    score = project_score(provider.embed(neutral_prompt, document), concept)
    label = LABEL_RUNS if score >= cutoff.threshold else LABEL_NOT_RUNS
    return RateVerdict(
        paper_id=input.paper_id,
        score=score,
        label=label,
        cutoff_used=cutoff,
        prompt_digest=concept.prompt_digest,
        provider_id=concept.provider_id,
    )
