"""Builds the canonical sentence-pair corpus from the four source datasets.

Ingestion goes through thin per-source adapters into a common
(original, [simplification candidates]) intermediate, keeps exactly one
simplification per original (seeded pick, reproducible), strips formatting
artifacts, filters by simplified-sentence length, and samples a balanced
subset per source.

Accepted source layouts inside the sources directory, per source slug
(``asset``, ``onestopenglish``, ``simpa``, ``wikipedia``):

* ``<slug>.tsv`` — tab-separated, first column the original sentence,
  remaining columns one or more simplifications.
* ``<slug>.orig`` plus either ``<slug>.simp`` or ``<slug>.simp.0``,
  ``<slug>.simp.1``, ... — aligned line formats, line *i* of each file
  belongs to the same original.
"""

from __future__ import annotations

import json
import logging
import random
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import AccimgError, SourceUnderflowError

log = logging.getLogger(__name__)

SOURCES = ("ASSET", "OneStopEnglish", "SimPA", "Wikipedia")

# Domain labels per source, as recorded in the corpus metadata.
SOURCE_DOMAINS = {
    "ASSET": "Wikipedia",
    "OneStopEnglish": "News",
    "SimPA": "Web",
    "Wikipedia": "Wikipedia",
}

_SOURCE_SLUGS = {s.lower(): s for s in SOURCES}

# Bracketed markup remnants ([1], [citation needed], {{...}}, <ref>, ...).
_MARKUP_RE = re.compile(r"\[[^\[\]]*\]|\{\{[^{}]*\}\}|<[^<>]+>")
_WS_RE = re.compile(r"\s+")

DEFAULT_MIN_TOKENS = 10
DEFAULT_MAX_TOKENS = 55

# Serialized field order of the canonical corpus record.
_RECORD_FIELDS = (
    "id",
    "dataset",
    "domain",
    "original",
    "simplified",
    "length_original",
    "length_simplified",
)


def count_tokens(text: str) -> int:
    """Whitespace token count after trimming; empty string counts 0."""
    return len(text.split())


def clean_sentence(text: str) -> str:
    """Strip bracketed markup remnants and collapse whitespace."""
    text = _MARKUP_RE.sub(" ", text)
    return _WS_RE.sub(" ", text).strip()


def normalize_source(name: str) -> str:
    """Map any casing/slug of a source name onto its canonical form."""
    key = name.replace("_", "").replace("-", "").lower()
    if key in _SOURCE_SLUGS:
        return _SOURCE_SLUGS[key]
    raise AccimgError(f"unknown source {name!r}; expected one of {SOURCES}")


@dataclass(frozen=True)
class SentencePair:
    """One complex/simplified sentence pair with source metadata."""

    id: str
    dataset_source: str
    domain: str
    original: str
    simplified: str
    length_original: int
    length_simplified: int

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "dataset": self.dataset_source,
            "domain": self.domain,
            "original": self.original,
            "simplified": self.simplified,
            "length_original": self.length_original,
            "length_simplified": self.length_simplified,
        }

    @classmethod
    def from_record(cls, record: dict) -> "SentencePair":
        return cls(
            id=record["id"],
            dataset_source=record["dataset"],
            domain=record["domain"],
            original=record["original"],
            simplified=record["simplified"],
            length_original=int(record["length_original"]),
            length_simplified=int(record["length_simplified"]),
        )


@dataclass(frozen=True)
class CorpusStats:
    n_per_source: dict
    mean_len_original: float
    mean_len_simplified: float
    mean_reduction_tokens: float
    mean_reduction_pct: float


def make_pair(source: str, seq: int, original: str, simplified: str) -> SentencePair:
    """Build a pair with id ``<slug>_NNN`` and freshly derived token counts."""
    source = normalize_source(source)
    return SentencePair(
        id=f"{source.lower()}_{seq:03d}",
        dataset_source=source,
        domain=SOURCE_DOMAINS[source],
        original=original,
        simplified=simplified,
        length_original=count_tokens(original),
        length_simplified=count_tokens(simplified),
    )


def _read_tsv_rows(path: Path) -> list[tuple[int, str, list[str]]]:
    rows = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) < 2:
                rows.append((lineno, "", []))  # reported by caller
                continue
            rows.append((lineno, cols[0], [c for c in cols[1:] if c.strip()]))
    return rows


def _read_aligned_rows(orig_path: Path) -> list[tuple[int, str, list[str]]]:
    stem = orig_path.name[: -len(".orig")]
    simp_paths = sorted(
        p for p in orig_path.parent.iterdir()
        if p.name == f"{stem}.simp" or p.name.startswith(f"{stem}.simp.")
    )
    if not simp_paths:
        raise AccimgError(f"no aligned simplification files next to {orig_path}")
    originals = orig_path.read_text(encoding="utf-8").splitlines()
    columns = [p.read_text(encoding="utf-8").splitlines() for p in simp_paths]
    rows = []
    for i, original in enumerate(originals):
        candidates = [col[i] for col in columns if i < len(col) and col[i].strip()]
        rows.append((i + 1, original, candidates))
    return rows


def ingest_source(path: str | Path, kind: str, seed: int = 0) -> list[SentencePair]:
    """Read one source file into cleaned pairs, one simplification per original.

    When a row offers several simplifications, candidates are shuffled with a
    seed derived from (seed, source) and the first is kept, so the choice is
    random but reproducible. Unparseable rows are logged with their line
    number, skipped, and counted. Duplicate originals keep the first row.
    """
    path = Path(path)
    kind = normalize_source(kind)
    if not path.exists():
        raise AccimgError(f"source file not found: {path}")
    if path.suffix == ".orig":
        rows = _read_aligned_rows(path)
    else:
        rows = _read_tsv_rows(path)

    rng = random.Random(f"{seed}:{kind}")
    pairs: list[SentencePair] = []
    seen_originals: set[str] = set()
    skipped = 0
    for lineno, original, candidates in rows:
        original = clean_sentence(original)
        candidates = [clean_sentence(c) for c in candidates]
        candidates = [c for c in candidates if c]
        if not original or not candidates:
            skipped += 1
            log.warning("%s:%d: unparseable or empty row, skipped", path.name, lineno)
            continue
        if original in seen_originals:
            skipped += 1
            log.warning("%s:%d: duplicate original, skipped", path.name, lineno)
            continue
        seen_originals.add(original)
        if len(candidates) > 1:
            rng.shuffle(candidates)
        pairs.append(make_pair(kind, len(pairs), original, candidates[0]))
    if skipped:
        log.info("%s: %d rows skipped, %d pairs retained", path.name, skipped, len(pairs))
    return pairs


def filter_by_length(
    pairs: list[SentencePair],
    min_tokens: int = DEFAULT_MIN_TOKENS,
    max_tokens: int = DEFAULT_MAX_TOKENS,
) -> list[SentencePair]:
    """Keep pairs whose simplified length is within [min, max], inclusive."""
    return [p for p in pairs if min_tokens <= p.length_simplified <= max_tokens]


def sample_balanced(
    pairs_by_source: dict[str, list[SentencePair]],
    n_per_source: int = 100,
    seed: int = 0,
) -> list[SentencePair]:
    """Draw exactly ``n_per_source`` uniform pairs per source, reproducibly.

    Each source draws from its own ``random.Random(f"{seed}:{source}")`` via
    ``sample()`` over file order, so adding a source never shifts another
    source's draw.
    """
    out: list[SentencePair] = []
    for source in sorted(pairs_by_source):
        pool = pairs_by_source[source]
        if len(pool) < n_per_source:
            raise SourceUnderflowError(source, len(pool), n_per_source)
        rng = random.Random(f"{seed}:{source}")
        out.extend(rng.sample(pool, n_per_source))
    return out


def compute_stats(corpus: list[SentencePair]) -> CorpusStats:
    """Mean lengths and token/percent reduction over a non-empty corpus."""
    if not corpus:
        raise AccimgError("cannot compute stats of an empty corpus")
    n_per_source: dict[str, int] = {}
    for p in corpus:
        n_per_source[p.dataset_source] = n_per_source.get(p.dataset_source, 0) + 1
    mean_orig = sum(p.length_original for p in corpus) / len(corpus)
    mean_simp = sum(p.length_simplified for p in corpus) / len(corpus)
    reduction = mean_orig - mean_simp
    return CorpusStats(
        n_per_source=dict(sorted(n_per_source.items())),
        mean_len_original=mean_orig,
        mean_len_simplified=mean_simp,
        mean_reduction_tokens=reduction,
        mean_reduction_pct=100.0 * reduction / mean_orig,
    )


def write_corpus(pairs: list[SentencePair], path: str | Path) -> None:
    """One JSON record per line, fixed key order, UTF-8, LF line endings."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for p in pairs:
            fh.write(json.dumps(p.to_record(), ensure_ascii=False))
            fh.write("\n")


def read_corpus(path: str | Path) -> list[SentencePair]:
    pairs = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                missing = [f for f in _RECORD_FIELDS if f not in record]
                if missing:
                    raise KeyError(missing[0])
            except (json.JSONDecodeError, KeyError) as exc:
                raise AccimgError(f"{path}:{lineno}: bad corpus record ({exc})") from exc
            pairs.append(SentencePair.from_record(record))
    return pairs


def discover_source_files(sources_dir: str | Path) -> dict[str, Path]:
    """Locate one input file per source slug inside ``sources_dir``."""
    sources_dir = Path(sources_dir)
    found = {}
    for slug, source in _SOURCE_SLUGS.items():
        tsv = sources_dir / f"{slug}.tsv"
        orig = sources_dir / f"{slug}.orig"
        if tsv.exists():
            found[source] = tsv
        elif orig.exists():
            found[source] = orig
    return found


def build_corpus(
    sources_dir: str | Path,
    n_per_source: int = 100,
    min_tokens: int = DEFAULT_MIN_TOKENS,
    max_tokens: int = DEFAULT_MAX_TOKENS,
    seed: int = 0,
) -> list[SentencePair]:
    """Ingest, length-filter, and balance-sample every discovered source."""
    files = discover_source_files(sources_dir)
    if not files:
        raise AccimgError(f"no source files found under {sources_dir}")
    by_source = {}
    for source, path in sorted(files.items()):
        pairs = ingest_source(path, source, seed=seed)
        by_source[source] = filter_by_length(pairs, min_tokens, max_tokens)
    return sample_balanced(by_source, n_per_source=n_per_source, seed=seed)
