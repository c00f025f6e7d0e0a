"""Acceptance suite: one test per release criterion, each at its stated
tolerance, printing one pass line per criterion (run with ``pytest -s``
to see them inline). Everything here is hermetic: mock chat, image, and
embedding backends only.
"""

import math
import random
import time
import zlib

import pytest
from scipy import stats as scipy_stats

from accimg import corpus, evalkit, genpipe, scoring
from accimg import templates as T
from accimg.errors import DegenerateAgreementError

from conftest import pair_with_lengths
from test_evalkit import brute_alpha
from test_genpipe import PNG, NO_SLEEP, BlockingClient, CountingClient, make_bundles


def ok(name):
    print(f"[ACCEPTANCE] {name}: PASS")


# ---------------------------------------------------------------------------


def test_composite_equation():
    started = time.perf_counter()
    rng = random.Random(2024)
    for _ in range(100):
        mu, c, s, b, w = (rng.random() for _ in range(5))
        got = scoring.composite(scoring.TemplateScoreComponents("t", mu, c, s, b, w))
        literal = 0.4 * mu + 0.2 * c + 0.2 * s + 0.1 * b + 0.1 * (1 - w)
        assert abs(got - literal) <= 1e-12
    # equal-component tuples (worst entering inverted) return the value exactly
    for k in range(17):
        x = k / 16
        comp = scoring.TemplateScoreComponents("t", x, x, x, x, 1 - x)
        assert scoring.composite(comp) == x
    assert scoring.composite(scoring.TemplateScoreComponents("t", 0.5, 0.5, 0.5, 0.5, 0.5)) == 0.5
    assert scoring.composite(scoring.TemplateScoreComponents("t", 1, 1, 1, 1, 0)) == 1.0
    elapsed = time.perf_counter() - started
    assert elapsed < 1.0, f"composite criterion took {elapsed:.3f}s"
    ok("composite-equation")


def test_krippendorff_alpha():
    started = time.perf_counter()
    # perfect agreement with cross-item variance
    units = [[v, v, v, v] for v in (1, 5, 9, 2, 7)]
    assert evalkit.alpha_from_units(units, "interval") == 1.0
    assert evalkit.alpha_from_units(units, "nominal") == 1.0
    assert evalkit.alpha_from_units(units, "ordinal") == 1.0

    rng = random.Random(31)
    matrices = 0
    while matrices < 50:
        units = [
            [rng.randint(0, 6) for _ in range(rng.randint(2, 5))]
            for _ in range(rng.randint(2, 10))
        ]
        try:
            expected = {m: brute_alpha(units, m) for m in ("nominal", "ordinal", "interval")}
        except DegenerateAgreementError:
            continue
        for metric, want in expected.items():
            got = evalkit.alpha_from_units(units, metric)
            assert abs(got - want) <= 1e-9, (metric, units)
        matrices += 1

    with pytest.raises(DegenerateAgreementError):
        evalkit.alpha_from_units([[4, 4, 4], [4, 4]], "interval")
    elapsed = time.perf_counter() - started
    assert elapsed < 5.0, f"alpha criterion took {elapsed:.3f}s"
    ok("krippendorff-alpha")


def test_recall_at_3_regression():
    counts = {"A": (126, 250), "M": (139, 276), "K": (120, 250), "L": (77, 200)}
    records = []
    n = 0
    for expert, (hits, total) in counts.items():
        for i in range(total):
            guesses = ("Retro", "Cartoon", "Geometric") if i < hits else ("Cartoon",)
            records.append(evalkit.AnnotationRecord(
                annotator=expert, image_id=f"{n:04d}", item_id=f"wikipedia_{n:03d}",
                style_truth="Retro", scores={}, style_guesses=guesses,
            ))
            n += 1
    out = evalkit.recall_at_3(records)
    assert round(out["per_expert"]["A"]["recall"], 3) == 0.504
    assert round(out["per_expert"]["M"]["recall"], 3) == 0.504
    assert round(out["per_expert"]["K"]["recall"], 3) == 0.480
    assert round(out["per_expert"]["L"]["recall"], 3) == 0.385
    assert out["overall"]["hits"] == 462
    assert out["overall"]["total"] == 976
    assert round(out["overall"]["recall"], 3) == 0.473
    ok("recall-at-3-regression")


def test_dimension_contribution_regression():
    means = {
        "image_simplicity": 4.56,
        "image_quality": 6.34,
        "text_simplicity": 5.65,
        "text_quality": 10.13,
        "ethics": 14.74,
        "text_image_alignment": 5.49,
    }
    expected = {
        "image_simplicity": 9.7,
        "image_quality": 13.5,
        "text_simplicity": 12.1,
        "text_quality": 21.6,
        "ethics": 31.4,
        "text_image_alignment": 11.7,
    }
    shares = evalkit.contribution_shares(means)
    for dim, pct in expected.items():
        assert abs(shares[dim]["share_pct"] - pct) <= 0.1
    ok("dimension-contributions-regression")


def test_completion_regression():
    out = evalkit.completion_rates(
        assigned={"A": 650, "K": 650, "L": 650, "M": 650},
        completed={"A": 250, "K": 250, "L": 200, "M": 276},
    )
    assert out["total"]["completed"] == 976 and out["total"]["assigned"] == 2600
    assert round(100 * out["total"]["rate"], 1) == 37.5
    expected = {"A": 38.5, "K": 38.5, "L": 30.8, "M": 42.5}
    for expert, pct in expected.items():
        assert round(100 * out["per_expert"][expert]["rate"], 1) == pct
    ok("completion-regression")


def test_pearson():
    x = [0.5, 1.0, 1.5, 2.0, 2.5]
    assert evalkit.pearson(x, [3 * v - 1 for v in x]).r == 1.0
    assert evalkit.pearson(x, [-2 * v + 4 for v in x]).r == -1.0

    rng = random.Random(555)
    for _ in range(50):
        n = rng.randint(3, 200)
        xs = [rng.gauss(0, 1) for _ in range(n)]
        ys = [0.4 * a + rng.gauss(0, 1.2) for a in xs]
        rep = evalkit.pearson(xs, ys)
        ref = scipy_stats.pearsonr(xs, ys)
        assert abs(rep.r - ref.statistic) <= 1e-9
        assert abs(rep.p - ref.pvalue) <= 1e-6

    pairs = {
        e: [(rng.gauss(0, 1), rng.gauss(10, 3)) for _ in range(25)]
        for e in ("A", "K", "L", "M")
    }
    base = evalkit.human_machine_correlation(pairs, standardized=True)
    warped = {
        e: [(s, (i + 1) * 1.7 * v + 11 * i) for s, v in rows]
        for i, (e, rows) in enumerate(pairs.items())
    }
    moved = evalkit.human_machine_correlation(warped, standardized=True)
    assert abs(moved.r - base.r) <= 1e-9
    ok("pearson")


def test_clip_score():
    v = [0.6, 0.8, 0.0]
    assert scoring.clip_score_from_vectors(v, v) == pytest.approx(2.5, abs=1e-12)
    assert scoring.clip_score_from_vectors([1, 0], [0, 1]) == 0.0
    assert scoring.clip_score_from_vectors([1, 0], [-0.9, math.sqrt(1 - 0.81)]) == 0.0

    rng = random.Random(99)
    for _ in range(100):
        a = [rng.gauss(0, 1) for _ in range(16)]
        b = [rng.gauss(0, 1) for _ in range(16)]
        na = math.sqrt(sum(x * x for x in a))
        nb = math.sqrt(sum(x * x for x in b))
        ua = [x / na for x in a]
        ub = [x / nb for x in b]
        want = 2.5 * max(sum(p * q for p, q in zip(ua, ub)), 0.0)
        assert abs(scoring.clip_score_from_vectors(ua, ub) - want) <= 1e-12
    ok("clip-score")


def test_pipeline_resume(tmp_path):
    started = time.perf_counter()
    bundles = make_bundles(50, ["Retro"])
    tasks = genpipe.plan_tasks(bundles)
    assert len(tasks) == 50

    class Crash(BaseException):
        pass

    for k in (1, 25, 49):
        workdir = tmp_path / f"k{k}"
        workdir.mkdir()
        ckpt = workdir / "ckpt.log"
        state = {"n": 0}

        def crash_after_k(_task):
            # the checkpoint must parse at every crash point
            loaded = genpipe.load_checkpoint(ckpt)
            state["n"] += 1
            assert len(loaded.completed) == state["n"]
            if state["n"] == k:
                raise Crash

        with pytest.raises(Crash):
            genpipe.run(
                tasks, CountingClient(), out_dir=workdir / "img",
                checkpoint_path=ckpt, run_digest="d", concurrency=1,
                sleep=NO_SLEEP, on_terminal=crash_after_k,
            )
        assert len(genpipe.load_checkpoint(ckpt).completed) == k

        client = CountingClient()
        report = genpipe.run(
            tasks, client, out_dir=workdir / "img", checkpoint_path=ckpt,
            run_digest="d", concurrency=1, sleep=NO_SLEEP,
        )
        assert len(client.calls) == 50 - k
        assert report.skipped == k
        assert report.total_terminal == 50
        assert len(genpipe.load_checkpoint(ckpt).completed) == 50
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0, f"resume criterion took {elapsed:.3f}s"
    ok("pipeline-resume")


def test_moderation_handling(tmp_path):
    bundles = make_bundles(50, ["Retro"])
    flagged = {3, 11, 24, 37, 48}  # 10% of 50
    for i in flagged:
        bundles[i].template_prompts[0]["prompt"] += " forbidden"
    tasks = genpipe.plan_tasks(bundles)
    flagged_ids = {t.task_id for t in tasks if "forbidden" in t.prompt}

    client = BlockingClient(trigger="forbidden")
    report = genpipe.run(
        tasks, client, out_dir=tmp_path / "img", checkpoint_path=tmp_path / "c.log",
        run_digest="d", concurrency=4, sleep=NO_SLEEP,
    )
    assert report.blocked == 5 and report.succeeded == 45
    ckpt = genpipe.load_checkpoint(tmp_path / "c.log")
    blocked = {tid for tid, rec in ckpt.completed.items() if rec["status"] == "blocked"}
    assert blocked == flagged_ids
    for tid in blocked:
        rec = ckpt.completed[tid]
        assert rec["error"].startswith("moderation")
        assert rec["attempts"] == 1  # zero retries on blocked tasks
    # every prompt was sent exactly once (blocks were never re-sent)
    assert len(client.calls) == 50
    assert len(set(client.calls)) == 50
    ok("moderation-handling")


# ---------------------------------------------------------------------------
# Template conformance


def _mutants(template, style, golden, seed):
    """At least ten by-construction hard-rule violations of a golden prompt."""
    marker = style.keyword_markers[0]
    other_marker = next(
        s.keyword_markers[0] for s in T.STYLES.values()
        if s.name != style.name and marker not in s.keyword_markers[0]
    )
    out = [
        ("drop-style-marker", golden.replace(marker, "plain")),
        ("swap-style-marker", golden.replace(marker, other_marker)),
        ("empty", ""),
        ("reversed", golden[::-1]),
    ]
    if template.requires_numeric_markers:
        out += [
            ("drop-numeric-sentence",
             golden.replace("Include a visible numeric marker (1, 2, 3...) near each object.", "")),
            ("numeric-to-plain", golden.replace("numeric marker", "marker")),
            ("numeric-to-badge", golden.replace("numeric marker", "badge")),
            ("numeric-hyphenated", golden.replace("numeric marker", "numeric-marker")),
            ("truncate-first-sentence", golden.split(". ")[0] + "."),
            ("drop-marker-and-numeric",
             golden.replace(marker, "plain").replace("numeric marker", "badge")),
        ]
    else:
        for word in ("text", "words", "letters", "numbers"):
            out.append((f"inject-{word}-front", f"Add {word} overlays. " + golden))
            out.append((f"inject-{word}-back", golden + f" Render {word} below each item."))
    if template.spacing_pct is not None:
        out += [
            ("strip-percent", golden.replace("%", " ")),
            ("wrong-percent", golden.replace(f"{template.spacing_pct}%", "7%")),
            ("drop-spacing-words",
             golden.replace("spacing", "gap").replace("margin", "gap")
                   .replace("separation", "gap").replace("apart", "away")),
        ]
    if template.requires_background:
        out.append(("drop-background", golden.replace("background", "backdrop")))
    rng = random.Random(seed)
    rng.shuffle(out)
    return out[:10]


def test_template_conformance():
    pair = pair_with_lengths("Wikipedia", 1, 20, 15)
    combos = 0
    for template in T.TEMPLATES.values():
        for style in T.STYLES.values():
            system = T.build_meta_prompt(pair, template, style)[0]["content"]
            for line in template.instruction_lines:
                assert line in system, (template.slug, style.name, line)

            golden = T.build_conforming_prompt(template, style, pair.simplified)
            assert T.hard_violations(T.validate_prompt(golden, template, style)) == []

            seed = zlib.crc32(f"{template.slug}/{style.name}".encode())
            mutants = _mutants(template, style, golden, seed=seed)
            assert len(mutants) == 10, (template.slug, style.name)
            for desc, mutant in mutants:
                hard = T.hard_violations(T.validate_prompt(mutant, template, style))
                assert hard, (template.slug, style.name, desc, mutant)
            combos += 1
    assert combos == len(T.TEMPLATES) * 10 == 60
    ok("template-conformance")


def test_corpus_criterion():
    pairs = [pair_with_lengths("Wikipedia", i, 30, n) for i, n in enumerate((9, 10, 55, 56))]
    kept = corpus.filter_by_length(pairs)
    assert [p.length_simplified for p in kept] == [10, 55]

    by_source = {
        src: [pair_with_lengths(src, i, 25, 20) for i in range(12)]
        for src in corpus.SOURCES
    }
    sample = corpus.sample_balanced(by_source, n_per_source=7, seed=13)
    assert len(sample) == 28
    for src in corpus.SOURCES:
        assert sum(1 for p in sample if p.dataset_source == src) == 7

    orig = [26, 26, 26, 26, 26, 26, 26, 26, 27, 27]
    simp = [24, 24, 24, 24, 24, 24, 24, 24, 23, 24]
    stats = corpus.compute_stats(
        [pair_with_lengths("ASSET", i, o, s) for i, (o, s) in enumerate(zip(orig, simp))]
    )
    assert round(stats.mean_len_original, 1) == 26.2
    assert round(stats.mean_len_simplified, 1) == 23.9
    assert round(stats.mean_reduction_tokens, 1) == 2.3
    assert round(stats.mean_reduction_pct, 1) == 8.8
    ok("corpus")


def test_anonymization(tmp_path):
    styles = T.STYLE_NAMES
    src = tmp_path / "imgs"
    src.mkdir()
    names = []
    for i in range(20):
        for s in styles:  # 20 items x 10 styles = 200 images
            name = genpipe.image_filename(f"wikipedia_{i:03d}", s)
            (src / name).write_bytes(PNG)
            names.append(name)

    amap = genpipe.anonymize(src, tmp_path / "anon", seed=17, map_path=tmp_path / "map.json")
    assert len(amap.entries) == 200
    inverse = amap.inverse()  # raises if not bijective
    assert len(inverse) == 200
    for numeric_id, meta in amap.entries.items():
        assert genpipe.image_filename(meta["item_id"], meta["style"]) == \
            meta["original_path"].rsplit("/", 1)[-1]
        assert inverse[(meta["item_id"], meta["style"])] == numeric_id

    for seed in range(100):
        assignment = genpipe.assign_numeric_ids(names, seed)
        assert len(assignment) == 200
        assert len(set(assignment)) == 200  # numeric ids collide for no seed
        assert len(set(assignment.values())) == 200
    ok("anonymization")
