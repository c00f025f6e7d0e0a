"""Text-image alignment scoring and composite template ranking.

Alignment uses the rescaled clipped cosine between unit-norm text and image
embeddings from a pluggable backend. Template ranking aggregates per-item
alignment scores into five normalized components (mean alignment,
consistency, success rate, best-case and worst-case fractions) and combines
them with fixed weights.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

from .errors import AccimgError

DEFAULT_RESCALE = 2.5


class EmbeddingBackend(Protocol):
    """Contract for embedding providers.

    Returned vectors must be unit L2 norm (within 1e-5) with a constant
    dimension per backend; implementations must allow concurrent calls.
    """

    model_id: str
    dim: int

    def embed_text(self, text: str) -> Sequence[float]:
        ...

    def embed_image(self, image: bytes) -> Sequence[float]:
        ...


def _dot(u: Sequence[float], v: Sequence[float]) -> float:
    if len(u) != len(v):
        raise AccimgError(f"embedding dimension mismatch: {len(u)} vs {len(v)}")
    return math.fsum(a * b for a, b in zip(u, v))


def clip_score(
    text: str, image: bytes, backend: EmbeddingBackend, w: float = DEFAULT_RESCALE
) -> float:
    """``w * max(cos(text, image), 0)`` over the backend's unit embeddings."""
    t = backend.embed_text(text)
    v = backend.embed_image(image)
    return w * max(_dot(t, v), 0.0)


def clip_score_from_vectors(
    text_vec: Sequence[float], image_vec: Sequence[float], w: float = DEFAULT_RESCALE
) -> float:
    return w * max(_dot(text_vec, image_vec), 0.0)


@dataclass(frozen=True)
class ClipScoreRecord:
    """Alignment score of one generated image against its source sentence."""

    item_id: str
    style: str
    template: str
    score: float
    model_id: str = ""
    w: float = DEFAULT_RESCALE

    def to_record(self) -> dict:
        return {
            "item_id": self.item_id,
            "style": self.style,
            "template": self.template,
            "score": self.score,
            "model_id": self.model_id,
            "w": self.w,
        }

    @classmethod
    def from_record(cls, record: dict) -> "ClipScoreRecord":
        return cls(
            item_id=record["item_id"],
            style=record["style"],
            template=record["template"],
            score=float(record["score"]),
            model_id=record.get("model_id", ""),
            w=float(record.get("w", DEFAULT_RESCALE)),
        )


def write_scores(records: Iterable[ClipScoreRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_record(), ensure_ascii=False))
            fh.write("\n")


def read_scores(path: str | Path) -> list[ClipScoreRecord]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(ClipScoreRecord.from_record(json.loads(line)))
    return out


# ---------------------------------------------------------------------------
# Composite template ranking


@dataclass(frozen=True)
class CompositeWeights:
    """Fixed weights of the composite template score; must sum to 1."""

    mean: float = 0.4
    consistency: float = 0.2
    success: float = 0.2
    best: float = 0.1
    worst: float = 0.1

    def __post_init__(self):
        total = self.mean + self.consistency + self.success + self.best + self.worst
        if abs(total - 1.0) > 1e-9:
            raise AccimgError(f"composite weights must sum to 1, got {total}")


@dataclass(frozen=True)
class TemplateScoreComponents:
    """The five normalized component scores of one template."""

    template: str
    mean_alignment: float  # min-max normalized mean raw score
    consistency: float
    success_rate: float
    best_fraction: float
    worst_fraction: float
    raw_mean: float = 0.0  # unnormalized, carried for reporting


MU_NORM_MINMAX = "minmax"
MU_NORM_RAW = "raw"


def component_stats(
    scores: Mapping[tuple[str, str], float],
    attempts: Iterable[tuple[str, str]],
    mu_norm: str = MU_NORM_MINMAX,
) -> list[TemplateScoreComponents]:
    """Aggregate per-(template, item) scores into per-template components.

    ``scores`` maps (template, item) to the raw alignment score of the
    template's image for that item; ``attempts`` enumerates every
    (template, item) that was attempted, scored or not. Missing scores count
    against the success rate. Per item, exactly one template is credited as
    best and one as worst; ties go to the lexicographically first template
    for best and the lexicographically last for worst, so the fractions stay
    exact. With ``minmax`` normalization an all-equal range maps every mean
    to 1 to keep the composite defined.
    """
    if not scores:
        raise AccimgError("no scores to aggregate")
    attempts = set(attempts)
    missing = set(scores) - attempts
    if missing:
        raise AccimgError(f"scores present for unattempted pairs: {sorted(missing)[:3]}")

    templates = sorted({t for t, _ in attempts})
    if len(templates) < 2:
        raise AccimgError("component stats need at least two templates")
    items = sorted({i for _, i in attempts})

    by_template: dict[str, list[float]] = {t: [] for t in templates}
    for (t, _item), s in scores.items():
        by_template[t].append(s)

    raw_means = {}
    sigmas = {}
    for t in templates:
        vals = by_template[t]
        if vals:
            m = sum(vals) / len(vals)
            raw_means[t] = m
            sigmas[t] = math.sqrt(sum((v - m) ** 2 for v in vals) / len(vals))
        else:
            raw_means[t] = 0.0
            sigmas[t] = 0.0

    if mu_norm == MU_NORM_MINMAX:
        lo, hi = min(raw_means.values()), max(raw_means.values())
        if hi - lo == 0:
            mu = {t: 1.0 for t in templates}
        else:
            mu = {t: (raw_means[t] - lo) / (hi - lo) for t in templates}
    elif mu_norm == MU_NORM_RAW:
        mu = dict(raw_means)
    else:
        raise AccimgError(f"unknown mean-normalization strategy {mu_norm!r}")

    max_sigma = max(sigmas.values())
    if max_sigma == 0:
        consistency = {t: 1.0 for t in templates}
    else:
        consistency = {t: 1.0 - sigmas[t] / max_sigma for t in templates}

    attempted_count = {t: 0 for t in templates}
    scored_count = {t: 0 for t in templates}
    for t, item in attempts:
        attempted_count[t] += 1
        if (t, item) in scores:
            scored_count[t] += 1
    success = {
        t: (scored_count[t] / attempted_count[t] if attempted_count[t] else 0.0)
        for t in templates
    }

    best_credits = {t: 0 for t in templates}
    worst_credits = {t: 0 for t in templates}
    for item in items:
        scored = [(t, scores[(t, item)]) for t in templates if (t, item) in scores]
        if not scored:
            continue
        top = max(s for _, s in scored)
        bottom = min(s for _, s in scored)
        best = min(t for t, s in scored if s == top)
        worst = max(t for t, s in scored if s == bottom)
        best_credits[best] += 1
        worst_credits[worst] += 1

    n_items = len(items)
    return [
        TemplateScoreComponents(
            template=t,
            mean_alignment=mu[t],
            consistency=consistency[t],
            success_rate=success[t],
            best_fraction=best_credits[t] / n_items,
            worst_fraction=worst_credits[t] / n_items,
            raw_mean=raw_means[t],
        )
        for t in templates
    ]


def composite(
    components: TemplateScoreComponents, weights: CompositeWeights = CompositeWeights()
) -> float:
    """Weighted combination of the five components; worst-case enters inverted.

    Weights are interpreted as exact decimals and the sum is evaluated in
    rational arithmetic with a single final rounding, so degenerate inputs
    (all components equal, weights summing to one) reproduce the component
    value bit-exactly.
    """
    values = {
        "mean_alignment": components.mean_alignment,
        "consistency": components.consistency,
        "success_rate": components.success_rate,
        "best_fraction": components.best_fraction,
        "worst_fraction": components.worst_fraction,
    }
    for name, v in values.items():
        if not 0.0 <= v <= 1.0:
            raise AccimgError(f"component {name}={v} outside [0, 1]")
    w = [
        Fraction(str(weights.mean)),
        Fraction(str(weights.consistency)),
        Fraction(str(weights.success)),
        Fraction(str(weights.best)),
        Fraction(str(weights.worst)),
    ]
    total = (
        w[0] * Fraction(components.mean_alignment)
        + w[1] * Fraction(components.consistency)
        + w[2] * Fraction(components.success_rate)
        + w[3] * Fraction(components.best_fraction)
        + w[4] * (1 - Fraction(components.worst_fraction))
    )
    return float(total)


def rank_templates(
    components: Sequence[TemplateScoreComponents],
    weights: CompositeWeights = CompositeWeights(),
    display_scale: float = 1.0,
) -> dict:
    """Rank templates by composite score, descending.

    Ties break on mean alignment, then template name. ``display_scale``
    multiplies a secondary display column only; composites stay in [0, 1].
    """
    if len(components) < 2:
        raise AccimgError("ranking needs at least two templates")
    rows = []
    for comp in components:
        score = composite(comp, weights)
        rows.append(
            {
                "template": comp.template,
                "composite": score,
                "composite_display": score * display_scale,
                "raw_mean": comp.raw_mean,
                "mean_alignment": comp.mean_alignment,
                "consistency": comp.consistency,
                "success_rate": comp.success_rate,
                "best_fraction": comp.best_fraction,
                "worst_fraction": comp.worst_fraction,
            }
        )
    rows.sort(key=lambda r: (-r["composite"], -r["mean_alignment"], r["template"]))
    return {"weights": vars(weights), "display_scale": display_scale, "ranking": rows}


def scores_and_attempts(
    records: Iterable[ClipScoreRecord],
) -> tuple[dict[tuple[str, str], float], set[tuple[str, str]]]:
    """Build component_stats inputs from score records.

    Multiple styles of the same (template, item) average into one score.
    Every template is treated as having attempted the union of items across
    templates (missing scores count as unsuccessful attempts).
    """
    pooled: dict[tuple[str, str], list[float]] = {}
    templates: set[str] = set()
    items: set[str] = set()
    for rec in records:
        pooled.setdefault((rec.template, rec.item_id), []).append(rec.score)
        templates.add(rec.template)
        items.add(rec.item_id)
    scores = {key: sum(vals) / len(vals) for key, vals in pooled.items()}
    attempts = {(t, i) for t in templates for i in items}
    return scores, attempts
