"""Methodological-pitfall assessment.

One concept vector is extracted per pitfall; a paper is then featurized
into a vector of projection scores (one per pitfall) and per-pitfall
logistic classifiers turn scores into presence probabilities.  Training
refuses to fit any pitfall with fewer than five examples in either class
and marks it skipped instead, so thin annotations never produce a
confidently wrong classifier.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .jsonio import canonical_dumps
from .measure import ConceptVector, ProbeSet, PromptPair, extract_concept_vector, project_score

MIN_PER_CLASS = 5

DEFAULT_L2 = 1e-3
DEFAULT_LR = 0.1
DEFAULT_ITERS = 5_000

STATUS_TRAINED = "trained"
STATUS_SKIPPED = "skipped_insufficient_data"

LABEL_PRESENT = "present"
LABEL_ABSENT = "absent"
LABEL_SKIPPED = "skipped"

# Annotation values accepted from ground truth; "partial" counts as
# present, "unclear" rows are excluded per pitfall.
ANNOTATION_VALUES = ("present", "partial", "absent", "unclear")

MODE_UNIVARIATE = "univariate"
MODE_FULL_VECTOR = "full_vector"


class ClassImbalance(ValueError):
    """Fewer than the minimum examples in one class."""


class AlignmentMismatch(ValueError):
    """Features and annotations do not line up by paper id."""


class PitfallBankError(RuntimeError):
    """Extraction failed for one or more pitfalls."""

    def __init__(self, failed: dict[str, Exception]):
        self.failed = failed
        detail = ", ".join(f"{pid}: {exc}" for pid, exc in failed.items())
        super().__init__(f"concept extraction failed for {sorted(failed)} ({detail})")


@dataclass(frozen=True)
class PitfallSpec:
    pitfall_id: str
    name: str
    prompts: PromptPair

    def __post_init__(self) -> None:
        if not self.pitfall_id:
            raise ValueError("pitfall_id must be nonempty")


def load_pitfall_specs(path: str | None = None) -> list[PitfallSpec]:
    """Pitfall prompt bank from a JSON file, defaulting to the shipped asset."""
    if path is None:
        from importlib import resources

        text = resources.files("aekit.assets").joinpath("pitfalls.json").read_text("utf-8")
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    doc = json.loads(text)
    specs = []
    for item in doc["pitfalls"]:
        specs.append(
            PitfallSpec(
                pitfall_id=item["pitfall_id"],
                name=item["name"],
                prompts=PromptPair(
                    positive=item["positive"],
                    negative=item["negative"],
                    neutral=item["neutral"],
                    concept_name=f"pitfall-{item['pitfall_id']}-{item['name']}",
                ),
            )
        )
    if len({s.pitfall_id for s in specs}) != len(specs):
        raise ValueError("pitfall_ids must be unique")
    return specs


@dataclass(frozen=True)
class PitfallBankEntry:
    pitfall_id: str
    name: str
    neutral_prompt: str
    concept: ConceptVector


@dataclass(frozen=True)
class PitfallBank:
    """Ordered per-pitfall concepts plus the neutral prompts used to score."""

    entries: tuple[PitfallBankEntry, ...]

    def __post_init__(self) -> None:
        ids = [e.pitfall_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("pitfall_ids must be unique within a bank")
        object.__setattr__(self, "entries", tuple(self.entries))

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def concepts(self) -> list[ConceptVector]:
        return [e.concept for e in self.entries]

    @property
    def pitfall_ids(self) -> list[str]:
        return [e.pitfall_id for e in self.entries]

    def to_json(self) -> str:
        return canonical_dumps(
            {
                "version": 1,
                "entries": [
                    {
                        "pitfall_id": e.pitfall_id,
                        "name": e.name,
                        "neutral_prompt": e.neutral_prompt,
                        "concept": json.loads(e.concept.to_json()),
                    }
                    for e in self.entries
                ],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "PitfallBank":
        doc = json.loads(text)
        if doc.get("version") != 1:
            raise ValueError(f"unsupported pitfall bank version: {doc.get('version')}")
        entries = tuple(
            PitfallBankEntry(
                pitfall_id=e["pitfall_id"],
                name=e["name"],
                neutral_prompt=e["neutral_prompt"],
                concept=ConceptVector.from_json(canonical_dumps(e["concept"])),
            )
            for e in doc["entries"]
        )
        return cls(entries=entries)


def build_pitfall_bank(
    specs: Sequence[PitfallSpec], probes: ProbeSet, provider
) -> PitfallBank:
    """One concept vector per pitfall, order preserved.

    Extraction failures are collected and raised together so a single bad
    pitfall prompt does not hide the rest.
    """
    if not specs:
        raise ValueError("need at least one pitfall spec")
    entries: list[PitfallBankEntry] = []
    failed: dict[str, Exception] = {}
    for spec in specs:
        try:
            concept = extract_concept_vector(probes, spec.prompts, provider)
        except Exception as exc:
            failed[spec.pitfall_id] = exc
            continue
        entries.append(
            PitfallBankEntry(
                pitfall_id=spec.pitfall_id,
                name=spec.name,
                neutral_prompt=spec.prompts.neutral,
                concept=concept,
            )
        )
    if failed:
        raise PitfallBankError(failed)
    return PitfallBank(entries=tuple(entries))


@dataclass(frozen=True)
class PitfallFeatureVector:
    paper_id: str
    scores: tuple[float, ...]

    @property
    def m(self) -> int:
        return len(self.scores)


def featurize(
    paper_text: str, bank: PitfallBank, provider, paper_id: str = ""
) -> PitfallFeatureVector:
    """Project one paper onto every pitfall direction in bank order."""
    if len(bank) == 0:
        raise ValueError("pitfall bank is empty")
    scores = tuple(
        project_score(provider.embed(entry.neutral_prompt, paper_text), entry.concept)
        for entry in bank.entries
    )
    return PitfallFeatureVector(paper_id=paper_id, scores=scores)


# --------------------------------------------------------------------------
# Logistic regression (full-batch gradient descent, deterministic)
# --------------------------------------------------------------------------

def sigmoid(z: np.ndarray | float) -> np.ndarray | float:
    # Two-branch form avoids overflow for large |z|.
    arr = np.atleast_1d(np.asarray(z, dtype=np.float64))
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    ez = np.exp(arr[~pos])
    out[~pos] = ez / (1.0 + ez)
    return float(out[0]) if np.ndim(z) == 0 else out


def logistic_loss(w: np.ndarray, b: float, xs: np.ndarray, ys: np.ndarray, l2: float) -> float:
    """Mean logistic loss plus (l2/2)*||w||^2; the bias is unregularized."""
    z = xs @ w + b
    # log(1 + exp(-y*z)) in the stable log1p(exp(-|t|)) + max(-t, 0) form
    t = np.where(ys == 1, z, -z)
    losses = np.log1p(np.exp(-np.abs(t))) + np.maximum(-t, 0.0)
    return float(losses.mean() + 0.5 * l2 * float(w @ w))


def logistic_gradient(
    w: np.ndarray, b: float, xs: np.ndarray, ys: np.ndarray, l2: float
) -> tuple[np.ndarray, float]:
    z = xs @ w + b
    residual = sigmoid(z) - ys
    grad_w = xs.T @ residual / len(ys) + l2 * w
    grad_b = float(residual.mean())
    return grad_w, grad_b


def _fit_logistic_nd(
    xs: np.ndarray,
    ys: np.ndarray,
    l2: float,
    lr: float,
    iters: int,
) -> tuple[np.ndarray, float]:
    """Zero-initialized full-batch gradient descent; deterministic.

    The data term takes an explicit gradient step; the L2 penalty takes
    an implicit (proximal) step, w /= (1 + lr*l2), which has the same
    stationary point as plain gradient descent on the regularized loss
    but stays stable for arbitrarily large l2.
    """
    if l2 < 0:
        raise ValueError("l2 must be nonnegative")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    n_pos = int(np.sum(ys == 1))
    n_neg = len(ys) - n_pos
    if n_pos < MIN_PER_CLASS or n_neg < MIN_PER_CLASS:
        raise ClassImbalance(
            f"need at least {MIN_PER_CLASS} examples per class, got {n_pos} / {n_neg}"
        )
    w = np.zeros(xs.shape[1])
    b = 0.0
    shrink = 1.0 + lr * l2
    for _ in range(iters):
        grad_w, grad_b = logistic_gradient(w, b, xs, ys, 0.0)
        w = (w - lr * grad_w) / shrink
        b = b - lr * grad_b
    return w, b


def fit_logistic(
    xs: Sequence[float],
    ys: Sequence[int],
    l2: float = DEFAULT_L2,
    lr: float = DEFAULT_LR,
    iters: int = DEFAULT_ITERS,
) -> tuple[float, float]:
    """Univariate logistic fit: returns (weight, bias)."""
    x = np.asarray(xs, dtype=np.float64).reshape(-1, 1)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape[0] != y.shape[0]:
        raise ValueError("xs and ys must align")
    w, b = _fit_logistic_nd(x, y, l2, lr, iters)
    return float(w[0]), b


# --------------------------------------------------------------------------
# Assessor model
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PitfallClassifier:
    """Per-pitfall trained record; weights has length 1 in univariate mode."""

    pitfall_id: str
    status: str
    weights: tuple[float, ...] = ()
    bias: float = 0.0
    trained_on: int = 0

    def __post_init__(self) -> None:
        if self.status not in (STATUS_TRAINED, STATUS_SKIPPED):
            raise ValueError(f"unknown status: {self.status!r}")
        if self.status == STATUS_TRAINED and self.trained_on < 2 * MIN_PER_CLASS:
            raise ValueError(
                f"trained classifier must have seen >= {2 * MIN_PER_CLASS} examples"
            )


@dataclass(frozen=True)
class AssessorModel:
    """Ordered per-pitfall classifiers; order matches the bank."""

    mode: str
    classifiers: tuple[PitfallClassifier, ...]

    def __post_init__(self) -> None:
        if self.mode not in (MODE_UNIVARIATE, MODE_FULL_VECTOR):
            raise ValueError(f"unknown mode: {self.mode!r}")
        object.__setattr__(self, "classifiers", tuple(self.classifiers))

    @property
    def pitfall_ids(self) -> list[str]:
        return [c.pitfall_id for c in self.classifiers]

    def to_json(self) -> str:
        return canonical_dumps(
            {
                "version": 1,
                "mode": self.mode,
                "classifiers": [
                    {
                        "pitfall_id": c.pitfall_id,
                        "status": c.status,
                        "weights": list(c.weights),
                        "bias": c.bias,
                        "trained_on": c.trained_on,
                    }
                    for c in self.classifiers
                ],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "AssessorModel":
        doc = json.loads(text)
        if doc.get("version") != 1:
            raise ValueError(f"unsupported assessor model version: {doc.get('version')}")
        classifiers = tuple(
            PitfallClassifier(
                pitfall_id=c["pitfall_id"],
                status=c["status"],
                weights=tuple(float(w) for w in c["weights"]),
                bias=float(c["bias"]),
                trained_on=int(c["trained_on"]),
            )
            for c in doc["classifiers"]
        )
        return cls(mode=doc["mode"], classifiers=classifiers)


def _binary_label(annotation: str) -> int | None:
    """present/partial -> 1, absent -> 0, unclear -> excluded."""
    if annotation in ("present", "partial"):
        return 1
    if annotation == "absent":
        return 0
    if annotation == "unclear":
        return None
    raise ValueError(f"unknown pitfall annotation: {annotation!r}")


def train_assessor(
    features: Sequence[PitfallFeatureVector],
    annotations: dict[str, dict[str, str]],
    pitfall_ids: Sequence[str],
    mode: str = MODE_UNIVARIATE,
    l2: float = DEFAULT_L2,
    lr: float = DEFAULT_LR,
    iters: int = DEFAULT_ITERS,
) -> AssessorModel:
    """Fit one classifier per pitfall, skipping under-annotated ones.

    annotations maps paper_id -> {pitfall_id -> value}.  Every feature
    vector must have an annotation record and the expected length; a
    pitfall with fewer than five usable examples in either class yields a
    skipped entry rather than a model.
    """
    if not features:
        raise AlignmentMismatch("no feature vectors given")
    if not annotations:
        raise AlignmentMismatch("no annotations given")
    for fv in features:
        if fv.paper_id not in annotations:
            raise AlignmentMismatch(f"no annotation for paper {fv.paper_id!r}")
        if fv.m != len(pitfall_ids):
            raise AlignmentMismatch(
                f"feature vector for {fv.paper_id!r} has length {fv.m}, expected {len(pitfall_ids)}"
            )

    classifiers: list[PitfallClassifier] = []
    for i, pid in enumerate(pitfall_ids):
        xs: list[Sequence[float] | float] = []
        ys: list[int] = []
        for fv in features:
            value = annotations[fv.paper_id].get(pid)
            if value is None:
                continue
            label = _binary_label(value)
            if label is None:
                continue
            xs.append(fv.scores if mode == MODE_FULL_VECTOR else fv.scores[i])
            ys.append(label)
        n_pos = sum(ys)
        n_neg = len(ys) - n_pos
        if n_pos < MIN_PER_CLASS or n_neg < MIN_PER_CLASS:
            classifiers.append(PitfallClassifier(pitfall_id=pid, status=STATUS_SKIPPED))
            continue
        x = np.asarray(xs, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        w, b = _fit_logistic_nd(x, np.asarray(ys, dtype=np.float64), l2, lr, iters)
        classifiers.append(
            PitfallClassifier(
                pitfall_id=pid,
                status=STATUS_TRAINED,
                weights=tuple(float(v) for v in w),
                bias=b,
                trained_on=len(ys),
            )
        )
    return AssessorModel(mode=mode, classifiers=tuple(classifiers))


@dataclass(frozen=True)
class PitfallFinding:
    pitfall_id: str
    label: str
    probability: float | None
    score: float


@dataclass(frozen=True)
class PitfallReport:
    paper_id: str
    findings: tuple[PitfallFinding, ...]

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "paper_id": self.paper_id,
            "findings": [
                {
                    "pitfall_id": f.pitfall_id,
                    "label": f.label,
                    "probability": f.probability,
                    "score": f.score,
                }
                for f in self.findings
            ],
        }

    def to_json(self) -> str:
        return canonical_dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "PitfallReport":
        findings = tuple(
            PitfallFinding(
                pitfall_id=f["pitfall_id"],
                label=f["label"],
                probability=None if f["probability"] is None else float(f["probability"]),
                score=float(f["score"]),
            )
            for f in doc["findings"]
        )
        return cls(paper_id=doc["paper_id"], findings=findings)


def assess_document(
    paper_text: str,
    bank: PitfallBank,
    model: AssessorModel,
    provider,
    paper_id: str = "",
) -> PitfallReport:
    """Featurize one paper and apply the per-pitfall classifiers.

    Probability >= 0.5 labels the pitfall present; skipped classifiers
    produce skipped findings with no probability.  An empty bank yields
    an empty report.
    """
    if len(bank) != len(model.classifiers):
        raise AlignmentMismatch(
            f"bank has {len(bank)} pitfalls, model has {len(model.classifiers)}"
        )
    for entry, clf in zip(bank.entries, model.classifiers):
        if entry.pitfall_id != clf.pitfall_id:
            raise AlignmentMismatch(
                f"bank/model order mismatch: {entry.pitfall_id} vs {clf.pitfall_id}"
            )
    if len(bank) == 0:
        return PitfallReport(paper_id=paper_id, findings=())

    fv = featurize(paper_text, bank, provider, paper_id=paper_id)
    findings: list[PitfallFinding] = []
    for i, clf in enumerate(model.classifiers):
        score = fv.scores[i]
        if clf.status == STATUS_SKIPPED:
            findings.append(
                PitfallFinding(pitfall_id=clf.pitfall_id, label=LABEL_SKIPPED, probability=None, score=score)
            )
            continue
        x = np.asarray(fv.scores) if model.mode == MODE_FULL_VECTOR else np.asarray([score])
        prob = float(sigmoid(float(np.asarray(clf.weights) @ x + clf.bias)))
        label = LABEL_PRESENT if prob >= 0.5 else LABEL_ABSENT
        findings.append(
            PitfallFinding(pitfall_id=clf.pitfall_id, label=label, probability=prob, score=score)
        )
    return PitfallReport(paper_id=paper_id, findings=tuple(findings))
