import json
from pathlib import Path

import pytest

from accimg.corpus import SentencePair, make_pair

DATA_DIR = Path(__file__).parent / "data"


def sentence(n_tokens: int, word: str = "word") -> str:
    return " ".join(f"{word}{i}" for i in range(n_tokens))


def pair_with_lengths(source: str, seq: int, len_orig: int, len_simp: int) -> SentencePair:
    return make_pair(source, seq, sentence(len_orig), sentence(len_simp))


@pytest.fixture
def tiny_sources(tmp_path):
    """A sources directory with all four datasets in mixed layouts."""
    src = tmp_path / "sources"
    src.mkdir()

    # ASSET-style: aligned .orig plus ten .simp.N reference files.
    originals = [sentence(14, f"orig{i}_") for i in range(6)]
    (src / "asset.orig").write_text("\n".join(originals) + "\n", encoding="utf-8")
    for ref in range(10):
        simps = [sentence(12, f"s{ref}_{i}_") for i in range(6)]
        (src / f"asset.simp.{ref}").write_text("\n".join(simps) + "\n", encoding="utf-8")

    # The rest as TSV with a single simplification column.
    for slug in ("onestopenglish", "simpa", "wikipedia"):
        rows = [
            f"{sentence(15, slug + 'o')}\t{sentence(11, slug + 's')}"
            for _ in range(6)
        ]
        # vary the sentences so originals are unique
        rows = [
            f"{sentence(15, f'{slug}o{i}_')}\t{sentence(11, f'{slug}s{i}_')}"
            for i in range(6)
        ]
        (src / f"{slug}.tsv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    return src


@pytest.fixture
def golden_bundle_record():
    return json.loads((DATA_DIR / "golden_bundle.json").read_text(encoding="utf-8"))
