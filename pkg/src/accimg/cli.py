"""``accimg`` command line: one entry point over the whole pipeline.

Configuration precedence is flags > environment > config file (YAML); the
resolved configuration is logged at startup for provenance. Exit codes:
0 success, 1 usage error, 2 validation failure, 3 provider/backend failure.
"""

from __future__ import annotations

import json
import logging
import os
import sys
from pathlib import Path

import click
import yaml

from . import corpus as corpus_mod
from . import evalkit, genpipe, scoring, templates
from .errors import AccimgError, BlockedError, PermanentError, TransientError
from .genpipe import AnonymizationMap
from .providers import HttpEmbeddingBackend, chat_client_for, image_client_for

log = logging.getLogger("accimg")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_PROVIDER = 3


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise AccimgError(f"config file {path} must hold a mapping")
    return data


def _resolve(flag_value, env_var: str, config: dict, key: str, default=None):
    """Flags beat environment beats config file beats default."""
    if flag_value not in (None, ""):
        return flag_value
    env = os.environ.get(env_var, "")
    if env:
        return env
    if key in config:
        return config[key]
    return default


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="YAML config file; flags and environment override it.")
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
@click.pass_context
def cli(ctx, config_path, verbose):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    ctx.obj = {"config": _load_config(config_path)}
    if config_path:
        log.info("loaded config from %s", config_path)


# ---------------------------------------------------------------------------
# corpus


@cli.group()
def corpus():
    """Build and inspect the sentence-pair corpus."""


@corpus.command("build")
@click.option("--sources", "sources_dir", required=True, type=click.Path())
@click.option("--per-source", default=100, show_default=True)
@click.option("--min-tokens", default=corpus_mod.DEFAULT_MIN_TOKENS, show_default=True)
@click.option("--max-tokens", default=corpus_mod.DEFAULT_MAX_TOKENS, show_default=True)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--dry-run", is_flag=True)
def corpus_build(sources_dir, per_source, min_tokens, max_tokens, seed, out_path, dry_run):
    """Ingest the source datasets into the canonical corpus file."""
    if dry_run:
        files = corpus_mod.discover_source_files(sources_dir)
        click.echo(json.dumps({
            "sources": {s: str(p) for s, p in sorted(files.items())},
            "per_source": per_source,
            "min_tokens": min_tokens,
            "max_tokens": max_tokens,
            "seed": seed,
            "out": out_path,
        }, indent=2))
        return 0
    pairs = corpus_mod.build_corpus(
        sources_dir, n_per_source=per_source,
        min_tokens=min_tokens, max_tokens=max_tokens, seed=seed,
    )
    corpus_mod.write_corpus(pairs, out_path)
    stats = corpus_mod.compute_stats(pairs)
    log.info("wrote %d pairs to %s", len(pairs), out_path)
    click.echo(json.dumps({
        "pairs": len(pairs),
        "n_per_source": stats.n_per_source,
        "mean_len_original": round(stats.mean_len_original, 2),
        "mean_len_simplified": round(stats.mean_len_simplified, 2),
    }))
    return 0


@corpus.command("stats")
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
def corpus_stats(corpus_path):
    """Print corpus statistics as JSON."""
    pairs = corpus_mod.read_corpus(corpus_path)
    stats = corpus_mod.compute_stats(pairs)
    click.echo(json.dumps({
        "n_per_source": stats.n_per_source,
        "mean_len_original": stats.mean_len_original,
        "mean_len_simplified": stats.mean_len_simplified,
        "mean_reduction_tokens": stats.mean_reduction_tokens,
        "mean_reduction_pct": stats.mean_reduction_pct,
    }, indent=2))
    return 0


# ---------------------------------------------------------------------------
# prompts


def _parse_styles(spec: str) -> list:
    if spec == "all":
        return [templates.STYLES[name] for name in templates.STYLE_NAMES]
    return [templates.style_from_name(s.strip()) for s in spec.split(",") if s.strip()]


@cli.group()
def prompts():
    """Turn corpus sentences into style-specific image prompts."""


@prompts.command("build")
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--template", "template_slug", default="basic_object_focus_v2", show_default=True)
@click.option("--styles", default="all", show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--chat-url", default=None, help="Chat backend URL (or offline:).")
@click.option("--dry-run", is_flag=True)
@click.pass_context
def prompts_build(ctx, corpus_path, template_slug, styles, out_path, chat_url, dry_run):
    """Generate one validated prompt bundle per sentence."""
    config = ctx.obj["config"]
    template = templates.template_from_slug(template_slug)
    style_list = _parse_styles(styles)
    pairs = corpus_mod.read_corpus(corpus_path)
    if dry_run:
        click.echo(json.dumps({
            "template": template.slug,
            "styles": [s.name for s in style_list],
            "sentences": len(pairs),
            "prompts_planned": len(pairs) * len(style_list),
            "out": out_path,
        }, indent=2))
        return 0

    url = _resolve(chat_url, "CHAT_API_URL", config, "chat_api_url")
    key = _resolve(None, "CHAT_API_KEY", config, "chat_api_key", "")
    model = _resolve(None, "CHAT_MODEL", config, "chat_model", "")
    log.info("chat backend: %s", url or "(unset)")
    client = chat_client_for(url or "", api_key=key, model=model)

    bundles = []
    failures = []
    for index, pair in enumerate(pairs):
        bundle = templates.assemble_bundle(pair, template, style_list, client, index=index)
        bundles.append(bundle)
        for style_name, err in bundle.failed_styles.items():
            failures.append({"id": pair.id, "style": style_name, "error": err})
    templates.write_bundles(bundles, out_path)
    log.info("wrote %d bundles to %s (%d style failures)", len(bundles), out_path, len(failures))
    click.echo(json.dumps({"bundles": len(bundles), "failures": failures}))
    if failures:
        if all(f["error"].startswith("prompt failed validation") for f in failures):
            return EXIT_VALIDATION
        return EXIT_PROVIDER
    return 0


# ---------------------------------------------------------------------------
# generate


def _generate_options(f):
    opts = [
        click.option("--bundles", "bundles_path", required=True, type=click.Path()),
        click.option("--out", "out_dir", required=True, type=click.Path()),
        click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path()),
        click.option("--concurrency", default=8, show_default=True, type=int),
        click.option("--max-attempts", default=5, show_default=True, type=int),
        click.option("--base-delay", default=2.0, show_default=True, type=float),
        click.option("--size", default=genpipe.DEFAULT_IMAGE_SIZE, show_default=True),
        click.option("--gen-url", default=None, help="Image backend URL (or offline:)."),
        click.option("--seed", default=0, show_default=True, type=int),
        click.option("--dry-run", is_flag=True),
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


def _run_generate(ctx, bundles_path, out_dir, checkpoint_path, concurrency,
                  max_attempts, base_delay, size, gen_url, seed, dry_run, resume):
    config = ctx.obj["config"]
    bundles = templates.read_bundles(bundles_path)
    tasks = genpipe.plan_tasks(bundles)
    # The digest covers what is generated (tasks, size, destination), not
    # operational knobs like concurrency or retry limits.
    digest = genpipe.config_digest({
        "task_ids": sorted(t.task_id for t in tasks),
        "size": size,
        "out_dir": str(out_dir),
    })
    if dry_run:
        click.echo(json.dumps({
            "tasks": len(tasks),
            "config_digest": digest,
            "out_dir": str(out_dir),
            "checkpoint": str(checkpoint_path),
            "concurrency": concurrency,
            "resume": resume,
        }, indent=2))
        return 0
    if resume and not Path(checkpoint_path).exists():
        raise AccimgError(f"resume requested but checkpoint {checkpoint_path} is missing")

    url = _resolve(gen_url, "GEN_API_URL", config, "gen_api_url")
    key = _resolve(None, "GEN_API_KEY", config, "gen_api_key", "")
    log.info("image backend: %s", url or "(unset)")
    client = image_client_for(url or "", api_key=key)

    report = genpipe.run(
        tasks,
        client,
        out_dir=out_dir,
        checkpoint_path=checkpoint_path,
        run_digest=digest,
        concurrency=concurrency,
        retry_policy=genpipe.RetryPolicy(max_attempts=max_attempts, base_delay=base_delay),
        size=size,
        seed=seed,
    )
    click.echo(json.dumps({
        "succeeded": report.succeeded,
        "blocked": report.blocked,
        "failed": report.failed,
        "skipped": report.skipped,
    }))
    return EXIT_PROVIDER if report.failed else 0


@cli.group()
def generate():
    """Run the prompt-to-image batch."""


@generate.command("run")
@_generate_options
@click.pass_context
def generate_run(ctx, **kwargs):
    """Execute all planned generation tasks."""
    return _run_generate(ctx, resume=False, **kwargs)


@generate.command("resume")
@_generate_options
@click.pass_context
def generate_resume(ctx, **kwargs):
    """Continue an interrupted run from its checkpoint."""
    return _run_generate(ctx, resume=True, **kwargs)


# ---------------------------------------------------------------------------
# anonymize / assign


@cli.command("anonymize")
@click.option("--in", "in_dir", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--map", "map_path", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--dry-run", is_flag=True)
def anonymize_cmd(in_dir, out_dir, map_path, seed, dry_run):
    """Copy images under style-blind numeric names and emit the lookup map."""
    if dry_run:
        n = len(list(Path(in_dir).glob("*.png")))
        click.echo(json.dumps({"images": n, "out": str(out_dir), "map": str(map_path)}))
        return 0
    amap = genpipe.anonymize(in_dir, out_dir, seed=seed, map_path=map_path)
    click.echo(json.dumps({"images": len(amap.entries), "map": str(map_path)}))
    return 0


@cli.command("assign")
@click.option("--map", "map_path", required=True, type=click.Path())
@click.option("--experts", default="A,K,L,M", show_default=True)
@click.option("--shared", default=200, show_default=True, type=int)
@click.option("--unique", default=450, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path())
def assign_cmd(map_path, experts, shared, unique, seed, out_path):
    """Split anonymized images into shared + unique per-expert assignments."""
    amap = AnonymizationMap.from_json(Path(map_path).read_text(encoding="utf-8"))
    expert_list = [e.strip() for e in experts.split(",") if e.strip()]
    assignments = genpipe.split_assignments(
        sorted(amap.entries), expert_list, shared=shared,
        unique_per_expert=unique, seed=seed,
    )
    Path(out_path).write_text(json.dumps(assignments, indent=2) + "\n", encoding="utf-8")
    click.echo(json.dumps({e: len(ids) for e, ids in assignments.items()}))
    return 0


# ---------------------------------------------------------------------------
# score


@cli.group()
def score():
    """Alignment scoring and template ranking."""


@score.command("clip")
@click.option("--bundles", "bundles_path", required=True, type=click.Path())
@click.option("--images", "images_dir", required=True, type=click.Path())
@click.option("--backend-url", default=None, help="Embedding service URL.")
@click.option("--w", "rescale", default=scoring.DEFAULT_RESCALE, show_default=True, type=float)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.pass_context
def score_clip(ctx, bundles_path, images_dir, backend_url, rescale, out_path):
    """Score every generated image against its source sentence."""
    config = ctx.obj["config"]
    url = _resolve(backend_url, "SCORER_URL", config, "scorer_url")
    if not url:
        raise AccimgError("no embedding backend configured (set SCORER_URL)")
    backend = HttpEmbeddingBackend(url)
    log.info("embedding backend %s (%s, dim %d)", url, backend.model_id, backend.dim)

    bundles = templates.read_bundles(bundles_path)
    images_dir = Path(images_dir)
    texts, images, keys = [], [], []
    skipped = 0
    for bundle in bundles:
        for entry in bundle.template_prompts:
            path = images_dir / genpipe.image_filename(bundle.id, entry["style"])
            if not path.exists():
                skipped += 1
                continue
            texts.append(bundle.simplified_text)
            images.append(path.read_bytes())
            keys.append((bundle.id, entry["style"], bundle.template))
    if skipped:
        log.info("%d (item, style) pairs have no image and were skipped", skipped)

    text_vecs = backend.embed_texts(texts)
    image_vecs = backend.embed_images(images)
    records = [
        scoring.ClipScoreRecord(
            item_id=item, style=style, template=template,
            score=scoring.clip_score_from_vectors(tv, iv, w=rescale),
            model_id=backend.model_id, w=rescale,
        )
        for (item, style, template), tv, iv in zip(keys, text_vecs, image_vecs)
    ]
    scoring.write_scores(records, out_path)
    click.echo(json.dumps({"scored": len(records), "skipped": skipped, "out": str(out_path)}))
    return 0


@score.command("composite")
@click.option("--scores", "scores_path", required=True, type=click.Path())
@click.option("--mu-norm", default=scoring.MU_NORM_MINMAX, show_default=True,
              type=click.Choice([scoring.MU_NORM_MINMAX, scoring.MU_NORM_RAW]))
@click.option("--display-scale", default=1.0, show_default=True, type=float)
@click.option("--out", "out_path", required=True, type=click.Path())
def score_composite(scores_path, mu_norm, display_scale, out_path):
    """Rank templates with the weighted composite score."""
    records = scoring.read_scores(scores_path)
    scores, attempts = scoring.scores_and_attempts(records)
    components = scoring.component_stats(scores, attempts, mu_norm=mu_norm)
    report = scoring.rank_templates(components, display_scale=display_scale)
    Path(out_path).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    click.echo(json.dumps([
        {"template": row["template"], "composite": round(row["composite"], 4)}
        for row in report["ranking"]
    ]))
    return 0


# ---------------------------------------------------------------------------
# eval


def _load_map(map_path: str) -> AnonymizationMap:
    return AnonymizationMap.from_json(Path(map_path).read_text(encoding="utf-8"))


def _clip_scores_by_key(scores_path: str) -> dict:
    return {
        (rec.item_id, rec.style): rec.score
        for rec in scoring.read_scores(scores_path)
    }


@cli.group(name="eval")
def eval_group():
    """Statistics over expert-annotation exports."""


@eval_group.command("ingest")
@click.option("--export", "export_path", required=True, type=click.Path())
@click.option("--map", "map_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
def eval_ingest(export_path, map_path, out_path):
    """Normalize an annotation export into canonical records."""
    records = evalkit.ingest_annotations(export_path, _load_map(map_path))
    evalkit.write_records(records, out_path)
    click.echo(json.dumps({"records": len(records), "out": str(out_path)}))
    return 0


@eval_group.command("alpha")
@click.option("--records", "records_path", required=True, type=click.Path())
@click.option("--dimension", required=True)
@click.option("--metric", default=evalkit.METRIC_INTERVAL, show_default=True,
              type=click.Choice([evalkit.METRIC_NOMINAL, evalkit.METRIC_ORDINAL,
                                 evalkit.METRIC_INTERVAL]))
@click.option("--min-raters", default=2, show_default=True, type=click.IntRange(2, 4))
def eval_alpha(records_path, dimension, metric, min_raters):
    """Inter-annotator agreement on one dimension."""
    records = evalkit.read_records(records_path)
    alpha = evalkit.krippendorff_alpha(records, dimension, metric=metric, min_raters=min_raters)
    click.echo(json.dumps({
        "dimension": evalkit.normalize_dimension(dimension),
        "metric": metric,
        "min_raters": min_raters,
        "alpha": alpha,
    }))
    return 0


@eval_group.command("recall3")
@click.option("--records", "records_path", required=True, type=click.Path())
def eval_recall3(records_path):
    """Style-recognition Recall@3 per expert and overall."""
    records = evalkit.read_records(records_path)
    click.echo(json.dumps(evalkit.recall_at_3(records), indent=2))
    return 0


@eval_group.command("correlate")
@click.option("--records", "records_path", required=True, type=click.Path())
@click.option("--scores", "scores_path", required=True, type=click.Path())
@click.option("--standardize", is_flag=True)
def eval_correlate(records_path, scores_path, standardize):
    """Correlate machine alignment scores with expert alignment ratings."""
    records = evalkit.read_records(records_path)
    clip_scores = _clip_scores_by_key(scores_path)
    pairs_by_expert: dict = {}
    for rec in records:
        key = (rec.item_id, rec.style_truth)
        if key in clip_scores and "text_image_alignment" in rec.scores:
            pairs_by_expert.setdefault(rec.annotator, []).append(
                (clip_scores[key], float(rec.scores["text_image_alignment"]))
            )
    report = evalkit.human_machine_correlation(pairs_by_expert, standardized=standardize)
    click.echo(json.dumps({
        "level": report.level, "r": report.r, "p": report.p,
        "n": report.n, "sig": report.stars,
    }))
    return 0


@eval_group.command("index")
@click.option("--records", "records_path", required=True, type=click.Path())
@click.option("--kind", required=True, type=click.Choice(["style", "dataset"]))
def eval_index(records_path, kind):
    """Weighted 0-100 accessibility index per style or dataset."""
    records = evalkit.read_records(records_path)
    indices = evalkit.accessibility_index(records, kind)
    click.echo(json.dumps([
        {"key": idx.key, "score": idx.score, "per_expert": dict(idx.per_expert_scores)}
        for idx in indices
    ], indent=2))
    return 0


@eval_group.command("report")
@click.option("--records", "records_path", required=True, type=click.Path())
@click.option("--assignments", "assignments_path", default=None, type=click.Path())
@click.option("--scores", "scores_path", default=None, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
def eval_report(records_path, assignments_path, scores_path, out_path):
    """Bundle every evaluation section into one JSON report."""
    records = evalkit.read_records(records_path)
    assignments = None
    if assignments_path:
        assignments = json.loads(Path(assignments_path).read_text(encoding="utf-8"))
    clip_scores = _clip_scores_by_key(scores_path) if scores_path else None
    report = evalkit.full_report(records, assignments=assignments, clip_scores=clip_scores)
    Path(out_path).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    click.echo(json.dumps({"sections": sorted(report), "out": str(out_path)}))
    return 0


# ---------------------------------------------------------------------------


def dispatch(argv: list[str]) -> int:
    """Run the CLI on ``argv`` and map outcomes onto the exit-code contract."""
    try:
        rv = cli.main(args=list(argv), prog_name="accimg", standalone_mode=False)
        return int(rv) if isinstance(rv, int) else EXIT_OK
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        exc.show()
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_USAGE
    except (TransientError, PermanentError, BlockedError) as exc:
        click.echo(f"provider error: {exc}", err=True)
        return EXIT_PROVIDER
    except AccimgError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_VALIDATION


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
