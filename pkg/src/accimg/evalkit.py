"""Expert-annotation ingestion and every downstream evaluation statistic:
inter-annotator agreement, style recall, human-machine correlation,
dimension contributions, completion rates, and accessibility indices.

All functions are pure over immutable record lists and byte-deterministic
for a fixed input.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import AccimgError, DegenerateAgreementError
from .genpipe import AnonymizationMap

log = logging.getLogger(__name__)

# Rating dimensions and their scale maxima (minimum is always 0).
DIMENSIONS = {
    "image_simplicity": 15,
    "image_quality": 15,
    "text_simplicity": 15,
    "text_quality": 15,
    "ethics": 20,
    "text_image_alignment": 20,
}

MAX_STYLE_GUESSES = 3

# Accessibility index weights; each group sums to 1.
STYLE_INDEX_WEIGHTS = {
    "text_image_alignment": 0.6,
    "image_simplicity": 0.25,
    "image_quality": 0.15,
}
DATASET_INDEX_WEIGHTS = {
    "text_quality": 0.5,
    "text_simplicity": 0.5,
}


def normalize_dimension(name: str) -> str:
    # Tolerate spellings like "Text-Image Alignment" / "TextImageAlignment".
    key = re.sub(r"(?<=[a-z0-9])(?=[A-Z])", "_", name.strip())
    key = re.sub(r"[^a-z0-9]+", "_", key.lower()).strip("_")
    if key not in DIMENSIONS:
        raise AccimgError(f"unknown dimension {name!r}; expected one of {list(DIMENSIONS)}")
    return key


@dataclass(frozen=True)
class AnnotationRecord:
    """One expert's scores and style guesses for one anonymized image."""

    annotator: str
    image_id: str
    item_id: str
    style_truth: str
    scores: Mapping[str, int]
    style_guesses: tuple[str, ...] = ()
    flags: str = ""

    @property
    def dataset_source(self) -> str:
        # Item ids are "<source>_<seq>"; recover the source slug.
        return self.item_id.rsplit("_", 1)[0]


def _validate_scores(raw: Mapping, where: str) -> dict[str, int]:
    scores = {}
    for name, value in raw.items():
        dim = normalize_dimension(name)
        value = int(value)
        top = DIMENSIONS[dim]
        if not 0 <= value <= top:
            raise AccimgError(f"{where}: {dim} score {value} outside 0..{top}")
        scores[dim] = value
    return scores


def _records_from_generic(rows: list[dict], amap: AnonymizationMap) -> list[AnnotationRecord]:
    records = []
    for i, row in enumerate(rows, start=1):
        where = f"row {i}"
        image_id = str(
            row.get("image") or row.get("image_id") or row.get("image_numeric_id") or ""
        )
        if image_id not in amap.entries:
            raise AccimgError(f"{where}: unknown image id {image_id!r}")
        meta = amap.entries[image_id]
        guesses = tuple(dict.fromkeys(row.get("style_guesses", ())))
        if len(guesses) > MAX_STYLE_GUESSES:
            raise AccimgError(f"{where}: more than {MAX_STYLE_GUESSES} style guesses")
        records.append(
            AnnotationRecord(
                annotator=str(row["annotator"]),
                image_id=image_id,
                item_id=meta["item_id"],
                style_truth=meta["style"],
                scores=_validate_scores(row.get("scores", {}), where),
                style_guesses=guesses,
                flags=str(row.get("flags", "") or ""),
            )
        )
    return records


def _records_from_labeling_tool(rows: list[dict], amap: AnonymizationMap) -> list[AnnotationRecord]:
    """Adapter for the nested task/annotations/result export layout."""
    flat = []
    for task in rows:
        image_ref = str(task.get("data", {}).get("image", ""))
        image_id = Path(image_ref).stem
        for ann in task.get("annotations", []):
            completed_by = ann.get("completed_by", "")
            if isinstance(completed_by, dict):
                completed_by = completed_by.get("email") or completed_by.get("id")
            scores: dict = {}
            guesses: list = []
            flags = ""
            for result in ann.get("result", []):
                name = result.get("from_name", "")
                value = result.get("value", {})
                if "rating" in value:
                    scores[name] = value["rating"]
                elif "number" in value:
                    scores[name] = value["number"]
                elif "choices" in value:
                    guesses.extend(value["choices"])
                elif "text" in value:
                    texts = value["text"]
                    flags = "; ".join(texts) if isinstance(texts, list) else str(texts)
            flat.append(
                {
                    "annotator": str(completed_by),
                    "image": image_id,
                    "scores": scores,
                    "style_guesses": guesses,
                    "flags": flags,
                }
            )
    return _records_from_generic(flat, amap)


def ingest_annotations(path: str | Path, amap: AnonymizationMap) -> list[AnnotationRecord]:
    """Parse an annotation export (generic rows or labeling-tool tasks).

    Rows fail loudly with their position on unknown image ids, out-of-scale
    scores, or duplicate (annotator, image) pairs.
    """
    text = Path(path).read_text(encoding="utf-8").strip()
    if not text:
        return []
    if text.startswith("["):
        rows = json.loads(text)
    else:
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
    if rows and ("annotations" in rows[0] or "result" in rows[0]):
        records = _records_from_labeling_tool(rows, amap)
    else:
        records = _records_from_generic(rows, amap)

    seen = set()
    for rec in records:
        key = (rec.annotator, rec.image_id)
        if key in seen:
            raise AccimgError(f"duplicate annotation for {key}")
        seen.add(key)
    return records


# ---------------------------------------------------------------------------
# Krippendorff's alpha


METRIC_NOMINAL = "nominal"
METRIC_ORDINAL = "ordinal"
METRIC_INTERVAL = "interval"


def alpha_from_units(units: Iterable[Sequence[float]], metric: str = METRIC_INTERVAL) -> float:
    """Agreement over rating units via the coincidence-matrix formulation.

    Each unit is the list of values different raters gave one item; units
    with fewer than two values are ignored. Raises DegenerateAgreementError
    when expected disagreement is zero (every pairable value identical).
    """
    pairable = [list(u) for u in units if len(u) >= 2]
    if not pairable:
        raise AccimgError("no unit has two or more ratings")

    values = sorted({v for unit in pairable for v in unit})
    index = {v: i for i, v in enumerate(values)}
    k = len(values)

    # Ordered pairs of ratings from distinct raters within each unit,
    # weighted by 1/(m_u - 1).
    coincidence = [[0.0] * k for _ in range(k)]
    for unit in pairable:
        m = len(unit)
        for pos_a, a in enumerate(unit):
            for pos_b, b in enumerate(unit):
                if pos_a != pos_b:
                    coincidence[index[a]][index[b]] += 1.0 / (m - 1)

    marginals = [sum(row) for row in coincidence]
    n = sum(marginals)

    if metric == METRIC_NOMINAL:
        delta = lambda i, j: 0.0 if i == j else 1.0
    elif metric == METRIC_INTERVAL:
        delta = lambda i, j: (values[i] - values[j]) ** 2
    elif metric == METRIC_ORDINAL:

        def delta(i, j):
            lo, hi = min(i, j), max(i, j)
            span = sum(marginals[lo: hi + 1]) - (marginals[lo] + marginals[hi]) / 2.0
            return span ** 2
    else:
        raise AccimgError(f"unknown distance metric {metric!r}")

    observed = 0.0
    expected = 0.0
    for i in range(k):
        for j in range(k):
            d = delta(i, j)
            observed += coincidence[i][j] * d
            expected += marginals[i] * marginals[j] * d
    observed /= n
    expected /= n * (n - 1)

    if expected == 0:
        raise DegenerateAgreementError(
            "expected disagreement is zero: all ratings identical"
        )
    return 1.0 - observed / expected


def _dimension_units(
    records: Iterable[AnnotationRecord], dimension: str, min_raters: int
) -> list[list[float]]:
    by_item: dict[str, list[float]] = {}
    for rec in records:
        if dimension in rec.scores:
            by_item.setdefault(rec.image_id, []).append(float(rec.scores[dimension]))
    return [vals for vals in by_item.values() if len(vals) >= min_raters]


def krippendorff_alpha(
    records: Iterable[AnnotationRecord],
    dimension: str,
    metric: str = METRIC_INTERVAL,
    min_raters: int = 2,
) -> float:
    """Alpha over one dimension, keeping items rated by >= min_raters experts."""
    dimension = normalize_dimension(dimension)
    units = _dimension_units(records, dimension, min_raters)
    if len(units) < 2:
        raise AccimgError(
            f"need at least 2 items with >= {min_raters} ratings on "
            f"{dimension}, found {len(units)}"
        )
    return alpha_from_units(units, metric=metric)


def agreement_report(
    records: list[AnnotationRecord], metric: str = METRIC_INTERVAL
) -> dict:
    """Alpha per dimension for the all-experts, 3+, and 2+ rater subgroups.

    Each cell carries the item and rating counts it was computed over;
    degenerate or underpopulated cells report a reason instead of a value.
    """
    n_experts = len({rec.annotator for rec in records})
    subgroups = {"all_experts": max(n_experts, 2), "at_least_3": 3, "at_least_2": 2}
    out: dict[str, dict] = {}
    for dim in DIMENSIONS:
        out[dim] = {}
        for label, min_raters in subgroups.items():
            units = _dimension_units(records, dim, min_raters)
            cell = {
                "n_items": len(units),
                "n_ratings": sum(len(u) for u in units),
            }
            if len(units) < 2:
                cell["alpha"] = None
                cell["note"] = "insufficient items"
            else:
                try:
                    cell["alpha"] = alpha_from_units(units, metric=metric)
                except DegenerateAgreementError:
                    cell["alpha"] = None
                    cell["note"] = "degenerate: all ratings identical"
            out[dim][label] = cell
    return out


# ---------------------------------------------------------------------------
# Style recall


def recall_at_3(records: Iterable[AnnotationRecord]) -> dict:
    """Hit when the true style appears among the (<= 3) guesses.

    Duplicate guesses and guess order are irrelevant; empty guesses miss.
    """
    per_expert: dict[str, dict] = {}
    hits = total = 0
    for rec in records:
        bucket = per_expert.setdefault(rec.annotator, {"hits": 0, "total": 0})
        hit = rec.style_truth in set(rec.style_guesses)
        bucket["hits"] += int(hit)
        bucket["total"] += 1
        hits += int(hit)
        total += 1
    for bucket in per_expert.values():
        bucket["recall"] = bucket["hits"] / bucket["total"] if bucket["total"] else 0.0
    return {
        "per_expert": dict(sorted(per_expert.items())),
        "overall": {
            "hits": hits,
            "total": total,
            "recall": hits / total if total else 0.0,
        },
    }


def style_recall_breakdown(records: Iterable[AnnotationRecord]) -> dict:
    """Recall@3 grouped by true style, with difficulty tiers."""
    per_style: dict[str, dict] = {}
    for rec in records:
        bucket = per_style.setdefault(rec.style_truth, {"hits": 0, "total": 0})
        bucket["hits"] += int(rec.style_truth in set(rec.style_guesses))
        bucket["total"] += 1
    for bucket in per_style.values():
        r = bucket["hits"] / bucket["total"] if bucket["total"] else 0.0
        bucket["recall"] = r
        if r >= 0.70:
            bucket["tier"] = "Easy"
        elif r >= 0.50:
            bucket["tier"] = "Medium"
        elif r >= 0.25:
            bucket["tier"] = "Hard"
        else:
            bucket["tier"] = "Very Hard"
    return dict(sorted(per_style.items(), key=lambda kv: -kv[1]["recall"]))


# ---------------------------------------------------------------------------
# Pearson correlation with exact t-distribution p-values


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz method)."""
    max_iter, eps, tiny = 300, 3e-16, 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        step = d * c
        h *= step
        if abs(step - 1.0) < eps:
            return h
    raise AccimgError("incomplete beta continued fraction did not converge")


def _betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, df: float) -> float:
    """Two-sided tail probability of Student's t via the incomplete beta."""
    if math.isinf(t):
        return 0.0
    return _betainc_reg(df / 2.0, 0.5, df / (df + t * t))


@dataclass(frozen=True)
class CorrelationReport:
    level: str
    r: float
    p: float
    n: int

    @property
    def stars(self) -> str:
        if self.p < 0.001:
            return "***"
        if self.p < 0.01:
            return "**"
        if self.p < 0.05:
            return "*"
        return ""


def pearson(x: Sequence[float], y: Sequence[float], level: str = "raw_pooled") -> CorrelationReport:
    """Product-moment correlation with a two-sided exact t-test p-value."""
    n = len(x)
    if n != len(y):
        raise AccimgError("paired observations required")
    if n < 3:
        raise AccimgError(f"need at least 3 paired observations, got {n}")
    mx = sum(x) / n
    my = sum(y) / n
    sxx = math.fsum((a - mx) ** 2 for a in x)
    syy = math.fsum((b - my) ** 2 for b in y)
    if sxx == 0 or syy == 0:
        raise AccimgError("zero variance in one of the variables")
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    r = sxy / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    if abs(r) >= 1.0:
        p = 0.0
    else:
        t = abs(r) * math.sqrt((n - 2) / (1.0 - r * r))
        p = t_sf_two_sided(t, n - 2)
    return CorrelationReport(level=level, r=r, p=p, n=n)


def standardize_per_expert(
    values_by_expert: Mapping[str, Sequence[float]],
) -> dict[str, list[float]]:
    """Z-score each expert's values (mean 0, sample standard deviation 1).

    Experts with zero variance are excluded with a warning rather than
    poisoning the pool.
    """
    out = {}
    for expert, values in values_by_expert.items():
        n = len(values)
        if n < 2:
            log.warning("expert %s has fewer than 2 ratings, excluded", expert)
            continue
        mean = sum(values) / n
        var = sum((v - mean) ** 2 for v in values) / (n - 1)
        if var == 0:
            log.warning("expert %s has zero rating variance, excluded", expert)
            continue
        sd = math.sqrt(var)
        out[expert] = [(v - mean) / sd for v in values]
    return out


def human_machine_correlation(
    pairs_by_expert: Mapping[str, Sequence[tuple[float, float]]],
    standardized: bool = False,
) -> CorrelationReport:
    """Correlate machine scores with ratings pooled across experts.

    ``pairs_by_expert`` maps expert to (machine score, human rating) pairs.
    With ``standardized`` the ratings are z-scored within expert first.
    """
    if standardized:
        z = standardize_per_expert(
            {e: [rating for _, rating in pairs] for e, pairs in pairs_by_expert.items()}
        )
        xs, ys = [], []
        for expert, pairs in pairs_by_expert.items():
            if expert not in z:
                continue
            xs.extend(score for score, _ in pairs)
            ys.extend(z[expert])
        return pearson(xs, ys, level="per_expert_standardized")
    xs = [score for pairs in pairs_by_expert.values() for score, _ in pairs]
    ys = [rating for pairs in pairs_by_expert.values() for _, rating in pairs]
    return pearson(xs, ys, level="raw_pooled")


# ---------------------------------------------------------------------------
# Dimension contributions


def contribution_shares(means: Mapping[str, float]) -> dict:
    """Share of each dimension's mean in the total, as percent."""
    total = sum(means.values())
    if total == 0:
        raise AccimgError("all dimension means are zero")
    return {
        dim: {"mean": mean, "share_pct": 100.0 * mean / total}
        for dim, mean in means.items()
    }


def dimension_contributions(records: Iterable[AnnotationRecord]) -> dict:
    records = list(records)
    if not records:
        raise AccimgError("no records")
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for rec in records:
        for dim, value in rec.scores.items():
            sums[dim] = sums.get(dim, 0.0) + value
            counts[dim] = counts.get(dim, 0) + 1
    means = {dim: sums[dim] / counts[dim] for dim in sums}
    return contribution_shares(means)


# ---------------------------------------------------------------------------
# Accessibility indices


@dataclass(frozen=True)
class AccessibilityIndex:
    kind: str  # "style" | "dataset"
    key: str
    score: float  # 0..100, averaged across experts
    per_expert_scores: Mapping[str, float] = field(default_factory=dict)


def _record_index(rec: AnnotationRecord, weights: Mapping[str, float]) -> float:
    total = 0.0
    for dim, weight in weights.items():
        if dim not in rec.scores:
            raise AccimgError(
                f"record {rec.annotator}/{rec.image_id} missing dimension {dim}"
            )
        total += weight * (rec.scores[dim] / DIMENSIONS[dim])
    return 100.0 * total


def accessibility_index(
    records: Iterable[AnnotationRecord], kind: str
) -> list[AccessibilityIndex]:
    """Weighted 0-100 index per style or per dataset source.

    Each record's relevant dimensions are normalized by their scale maxima
    and combined with the fixed weights; records average within each expert
    first, then across experts.
    """
    if kind == "style":
        weights = STYLE_INDEX_WEIGHTS
        key_of = lambda rec: rec.style_truth
    elif kind == "dataset":
        weights = DATASET_INDEX_WEIGHTS
        key_of = lambda rec: rec.dataset_source
    else:
        raise AccimgError(f"unknown index kind {kind!r}")

    grouped: dict[str, dict[str, list[float]]] = {}
    for rec in records:
        grouped.setdefault(key_of(rec), {}).setdefault(rec.annotator, []).append(
            _record_index(rec, weights)
        )

    out = []
    for key in sorted(grouped):
        per_expert = {
            expert: sum(values) / len(values)
            for expert, values in sorted(grouped[key].items())
        }
        score = sum(per_expert.values()) / len(per_expert)
        out.append(
            AccessibilityIndex(kind=kind, key=key, score=score, per_expert_scores=per_expert)
        )
    out.sort(key=lambda idx: -idx.score)
    return out


# ---------------------------------------------------------------------------
# Completion


def completion_rates(assigned: Mapping[str, int], completed: Mapping[str, int]) -> dict:
    per_expert = {}
    for expert in sorted(assigned):
        a = assigned[expert]
        c = completed.get(expert, 0)
        per_expert[expert] = {"assigned": a, "completed": c, "rate": c / a if a else 0.0}
    total_assigned = sum(assigned.values())
    total_completed = sum(completed.get(e, 0) for e in assigned)
    return {
        "per_expert": per_expert,
        "total": {
            "assigned": total_assigned,
            "completed": total_completed,
            "rate": total_completed / total_assigned if total_assigned else 0.0,
        },
    }


def completion_report(
    records: Iterable[AnnotationRecord], assignments: Mapping[str, Sequence[str]]
) -> dict:
    """Per-expert completion rates, flagging work outside the assignment."""
    done: dict[str, set] = {}
    flagged = []
    for rec in records:
        done.setdefault(rec.annotator, set()).add(rec.image_id)
        if rec.annotator in assignments and rec.image_id not in set(assignments[rec.annotator]):
            flagged.append({"annotator": rec.annotator, "image_id": rec.image_id})
    report = completion_rates(
        {e: len(ids) for e, ids in assignments.items()},
        {e: len(images) for e, images in done.items()},
    )
    report["outside_assignment"] = flagged
    return report


# ---------------------------------------------------------------------------
# Bundled report


def full_report(
    records: list[AnnotationRecord],
    assignments: Mapping[str, Sequence[str]] | None = None,
    clip_scores: Mapping[tuple[str, str], float] | None = None,
    alpha_metric: str = METRIC_INTERVAL,
) -> dict:
    """All evaluation sections in one deterministic JSON-ready object.

    ``clip_scores`` maps (item_id, style) to machine alignment scores and
    enables the correlation section.
    """
    report: dict = {"n_annotations": len(records)}

    experts = sorted({rec.annotator for rec in records})

    source_counts: dict[str, int] = {}
    for rec in records:
        source_counts[rec.dataset_source] = source_counts.get(rec.dataset_source, 0) + 1
    report["source_distribution"] = {
        src: {"count": n, "pct": 100.0 * n / len(records) if records else 0.0}
        for src, n in sorted(source_counts.items(), key=lambda kv: -kv[1])
    }

    if assignments is not None:
        report["completion"] = completion_report(records, assignments)

    if records:
        report["dimension_contributions"] = dimension_contributions(records)

    report["agreement"] = agreement_report(records, metric=alpha_metric)

    report["style_recall"] = recall_at_3(records)
    report["style_difficulty"] = style_recall_breakdown(records)

    if clip_scores is not None:
        pairs_by_expert: dict[str, list[tuple[float, float]]] = {}
        for rec in records:
            key = (rec.item_id, rec.style_truth)
            if key in clip_scores and "text_image_alignment" in rec.scores:
                pairs_by_expert.setdefault(rec.annotator, []).append(
                    (clip_scores[key], float(rec.scores["text_image_alignment"]))
                )
        correlation: dict[str, dict] = {}
        if pairs_by_expert:
            for level, standardized in (("raw_pooled", False), ("per_expert_standardized", True)):
                try:
                    rep = human_machine_correlation(pairs_by_expert, standardized=standardized)
                    correlation[level] = {"r": rep.r, "p": rep.p, "n": rep.n, "sig": rep.stars}
                except AccimgError as exc:
                    correlation[level] = {"error": str(exc)}
            for expert in experts:
                pairs = pairs_by_expert.get(expert, [])
                try:
                    rep = pearson(
                        [s for s, _ in pairs], [v for _, v in pairs], level=f"per_expert:{expert}"
                    )
                    correlation[f"per_expert:{expert}"] = {
                        "r": rep.r, "p": rep.p, "n": rep.n, "sig": rep.stars,
                    }
                except AccimgError as exc:
                    correlation[f"per_expert:{expert}"] = {"error": str(exc)}
        report["correlation"] = correlation

    try:
        report["accessibility_index_style"] = [
            {"key": idx.key, "score": idx.score, "per_expert": dict(idx.per_expert_scores)}
            for idx in accessibility_index(records, "style")
        ]
        report["accessibility_index_dataset"] = [
            {"key": idx.key, "score": idx.score, "per_expert": dict(idx.per_expert_scores)}
            for idx in accessibility_index(records, "dataset")
        ]
    except AccimgError as exc:
        report["accessibility_index_error"] = str(exc)

    return report


def write_records(records: Iterable[AnnotationRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(
                json.dumps(
                    {
                        "annotator": rec.annotator,
                        "image_id": rec.image_id,
                        "item_id": rec.item_id,
                        "style_truth": rec.style_truth,
                        "scores": dict(rec.scores),
                        "style_guesses": list(rec.style_guesses),
                        "flags": rec.flags,
                    },
                    ensure_ascii=False,
                )
            )
            fh.write("\n")


def read_records(path: str | Path) -> list[AnnotationRecord]:
    records = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            records.append(
                AnnotationRecord(
                    annotator=row["annotator"],
                    image_id=row["image_id"],
                    item_id=row["item_id"],
                    style_truth=row["style_truth"],
                    scores={normalize_dimension(k): int(v) for k, v in row["scores"].items()},
                    style_guesses=tuple(row.get("style_guesses", ())),
                    flags=row.get("flags", ""),
                )
            )
    return records
