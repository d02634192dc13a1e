"""Concept-vector extraction and projection scoring.

The measurement instrument works in three steps: feed every probing text
through an embedding provider twice, once under each pole of a prompt
pair; take the elementwise absolute difference of each embedding pair;
and distill the leading principal component of the resulting delta
collection into a unit direction.  Projecting a new document's embedding
onto that direction yields a scalar score for how strongly the document
expresses the concept.

Embeddings and delta matrices are plain 1-D / 2-D float64 numpy arrays.
Only the distilled direction carries provenance metadata (see
:class:`ConceptVector`).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

if TYPE_CHECKING:
    from .gateway import EmbeddingProvider

# Power iteration runs on the scatter matrix of the centered deltas with a
# deterministic start vector, so repeated calls give bitwise-equal output.
POWER_TOL = 1e-10
POWER_MAX_ITERS = 10_000
DEGENERATE_FROBENIUS_TOL = 1e-12
UNIT_NORM_TOL = 1e-9

SIGN_CONVENTION_MEAN_POSITIVE = "mean-positive"


class DimensionMismatch(ValueError):
    """Operands live in embedding spaces of different dimension."""


class AllZeroDeltas(ValueError):
    """Every probe delta is (numerically) zero; no direction exists."""


@dataclass(frozen=True)
class PromptPair:
    """The two poles defining a concept, plus the neutral scoring prompt."""

    positive: str
    negative: str
    neutral: str
    concept_name: str

    def __post_init__(self) -> None:
        for name in ("positive", "negative", "neutral", "concept_name"):
            if not getattr(self, name).strip():
                raise ValueError(f"PromptPair.{name} must be nonempty")
        if self.positive == self.negative:
            raise ValueError("positive and negative prompts must differ")

    def digest(self) -> str:
        """Stable sha256 over all four fields, hex-encoded."""
        payload = json.dumps(
            [self.concept_name, self.positive, self.negative, self.neutral],
            ensure_ascii=False,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ProbeSet:
    """Ordered probing texts used to train one concept vector."""

    probes: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.probes) < 3:
            raise ValueError(
                f"need at least 3 probing texts for a nondegenerate spread, got {len(self.probes)}"
            )
        if any(not p.strip() for p in self.probes):
            raise ValueError("probing texts must be nonempty")
        object.__setattr__(self, "probes", tuple(self.probes))

    @property
    def count(self) -> int:
        return len(self.probes)


def as_embedding(values: Sequence[float] | np.ndarray) -> np.ndarray:
    """Coerce to a finite 1-D float64 vector."""
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1 or vec.size == 0:
        raise ValueError(f"embedding must be a nonempty 1-D vector, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise ValueError("embedding contains non-finite entries")
    return vec


def compute_deltas(
    pos: Sequence[np.ndarray], neg: Sequence[np.ndarray]
) -> np.ndarray:
    """Elementwise absolute differences |pos_i - neg_i|, one row per probe.

    Both lists must have the same length (>= 3) and a uniform dimension.
    The absolute value is taken per coordinate, not as a vector norm, so
    the output is an n x d matrix with nonnegative entries.
    """
    if len(pos) != len(neg):
        raise ValueError(f"pole lists differ in length: {len(pos)} vs {len(neg)}")
    if len(pos) < 3:
        raise ValueError(f"need at least 3 probe pairs, got {len(pos)}")
    rows = []
    dim = None
    for i, (p, q) in enumerate(zip(pos, neg)):
        p = as_embedding(p)
        q = as_embedding(q)
        if dim is None:
            dim = p.size
        if p.size != dim or q.size != dim:
            raise DimensionMismatch(
                f"probe {i}: dimensions {p.size}/{q.size} do not match expected {dim}"
            )
        rows.append(np.abs(p - q))
    return np.vstack(rows)


def _power_iteration(mat: np.ndarray) -> np.ndarray:
    """Leading eigenvector of a symmetric PSD matrix, deterministic start."""
    k = mat.shape[0]
    start = np.ones(k) / np.sqrt(k)
    # If the all-ones start sits in the null space, fall back to the basis
    # vector with the largest diagonal entry (nonzero for a PSD matrix with
    # nonzero trace).
    if np.linalg.norm(mat @ start) < DEGENERATE_FROBENIUS_TOL:
        start = np.zeros(k)
        start[int(np.argmax(np.diag(mat)))] = 1.0
    v = start
    for _ in range(POWER_MAX_ITERS):
        w = mat @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return v
        w /= norm
        if np.linalg.norm(w - v) < POWER_TOL:
            return w
        v = w
    return v


def first_principal_component(deltas: np.ndarray) -> np.ndarray:
    """Unit leading principal component of a delta matrix, sign-fixed.

    Columns are mean-centered before forming the scatter matrix.  The
    eigenvector is computed by power iteration on the d x d scatter (or
    the n x n Gram matrix when n < d) and its sign is flipped so that the
    mean projection of the *uncentered* rows is nonnegative.

    Degenerate spread (centered matrix ~ 0) falls back to the normalized
    mean row; if that is also ~ 0 the deltas carry no signal and
    :class:`AllZeroDeltas` is raised.
    """
    x = np.asarray(deltas, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"delta matrix must be 2-D, got shape {x.shape}")
    n, d = x.shape
    if n < 3 or d < 1:
        raise ValueError(f"delta matrix needs n >= 3 and d >= 1, got {n} x {d}")

    mean_row = x.mean(axis=0)
    centered = x - mean_row
    if np.linalg.norm(centered) < DEGENERATE_FROBENIUS_TOL:
        norm = np.linalg.norm(mean_row)
        if norm < DEGENERATE_FROBENIUS_TOL:
            raise AllZeroDeltas("all probe deltas are zero; concept is undetectable")
        return mean_row / norm

    if n < d:
        gram = centered @ centered.T
        w = _power_iteration(gram)
        direction = centered.T @ w
        direction /= np.linalg.norm(direction)
    else:
        scatter = centered.T @ centered
        direction = _power_iteration(scatter)

    # Sign convention: uncentered rows are nonnegative, so a stable
    # orientation is the one their mean projects positively onto.
    if float(x.mean(axis=0) @ direction) < 0.0:
        direction = -direction
    return direction


@dataclass(frozen=True, eq=False)
class ConceptVector:
    """A distilled unit direction plus the provenance needed to reuse it.

    Scores computed against a ConceptVector are only comparable when
    provider_id and prompt_digest match, which is why both are carried
    along and recorded in every verdict downstream.
    """

    direction: np.ndarray
    concept_name: str
    provider_id: str
    prompt_digest: str
    probe_count: int
    sign_convention: str = SIGN_CONVENTION_MEAN_POSITIVE

    def __post_init__(self) -> None:
        vec = as_embedding(self.direction)
        if abs(np.linalg.norm(vec) - 1.0) > UNIT_NORM_TOL:
            raise ValueError("direction must have unit Euclidean norm")
        vec = vec.copy()
        vec.setflags(write=False)
        object.__setattr__(self, "direction", vec)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ConceptVector):
            return NotImplemented
        return (
            np.array_equal(self.direction, other.direction)
            and self.concept_name == other.concept_name
            and self.provider_id == other.provider_id
            and self.prompt_digest == other.prompt_digest
            and self.probe_count == other.probe_count
            and self.sign_convention == other.sign_convention
        )

    @property
    def dim(self) -> int:
        return int(self.direction.size)

    def to_json(self) -> str:
        """Versioned canonical JSON; float round-trip is lossless."""
        from .jsonio import canonical_dumps

        return canonical_dumps(
            {
                "version": 1,
                "concept_name": self.concept_name,
                "provider_id": self.provider_id,
                "prompt_digest": self.prompt_digest,
                "probe_count": self.probe_count,
                "dim": self.dim,
                "sign_convention": self.sign_convention,
                "direction": [float(v) for v in self.direction],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "ConceptVector":
        doc = json.loads(text)
        if doc.get("version") != 1:
            raise ValueError(f"unsupported concept vector version: {doc.get('version')}")
        direction = np.asarray(doc["direction"], dtype=np.float64)
        if direction.size != doc["dim"]:
            raise ValueError("declared dim does not match direction length")
        return cls(
            direction=direction,
            concept_name=doc["concept_name"],
            provider_id=doc["provider_id"],
            prompt_digest=doc["prompt_digest"],
            probe_count=int(doc["probe_count"]),
            sign_convention=doc.get("sign_convention", SIGN_CONVENTION_MEAN_POSITIVE),
        )


def extract_concept_vector(
    probes: ProbeSet, prompts: PromptPair, provider: "EmbeddingProvider"
) -> ConceptVector:
    """Full extraction pipeline: embed under both poles, delta, PCA."""
    pos = [provider.embed(prompts.positive, text) for text in probes.probes]
    neg = [provider.embed(prompts.negative, text) for text in probes.probes]
    deltas = compute_deltas(pos, neg)
    direction = first_principal_component(deltas)
    return ConceptVector(
        direction=direction,
        concept_name=prompts.concept_name,
        provider_id=provider.provider_id,
        prompt_digest=prompts.digest(),
        probe_count=probes.count,
    )


def project_score(embedding: np.ndarray, concept: ConceptVector) -> float:
    """Dot product with the stored unit direction.

    The direction is pre-normalized, so no division is needed; the score
    is unbounded and linear in the embedding.
    """
    vec = as_embedding(embedding)
    if vec.size != concept.dim:
        raise DimensionMismatch(
            f"embedding dim {vec.size} does not match concept dim {concept.dim}"
        )
    return float(vec @ concept.direction)
