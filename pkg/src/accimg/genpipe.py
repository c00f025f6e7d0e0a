"""Batch prompt-to-image execution: planning, concurrent runs with retries,
crash-safe checkpointing, anonymization, and annotation assignment splits.

The runner keeps all mutable run state on the coordinating thread; workers
only talk to the image client. Every terminal task is recorded in the
checkpoint before the next result is processed, and the checkpoint file is
replaced atomically (write-temp-then-rename) so a crash at any point leaves
a parseable file. Moderation blocks are terminal and never retried.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import re
import shutil
import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Protocol

from .errors import (
    AccimgError,
    BlockedError,
    CheckpointMismatchError,
    PermanentError,
    TransientError,
)
from .templates import PromptBundle, style_from_name

log = logging.getLogger(__name__)

DEFAULT_IMAGE_SIZE = "1024x1024"

STATUS_PENDING = "pending"
STATUS_SUCCEEDED = "succeeded"
STATUS_BLOCKED = "blocked"
STATUS_FAILED = "failed"


class ImageClient(Protocol):
    """Contract for the image backend.

    ``generate`` returns raw image bytes or raises BlockedError (moderation,
    terminal), TransientError (retried per policy), or PermanentError.
    Implementations must tolerate concurrent calls.
    """

    def generate(self, prompt: str, size: str) -> bytes:
        ...


@dataclass
class GenerationTask:
    """One prompt-to-image unit with lifecycle status."""

    task_id: str
    item_id: str
    style: str
    prompt: str
    status: str = STATUS_PENDING
    attempts: int = 0
    image_path: str = ""
    error: str = ""


@dataclass(frozen=True)
class RetryPolicy:
    """Exponential backoff with bounded jitter.

    The jittered delay is drawn from the upper half of each exponential step,
    so successive delays never decrease for a doubling factor.
    """

    max_attempts: int = 5
    base_delay: float = 2.0
    factor: float = 2.0
    max_delay: float = 60.0
    jitter: bool = True

    def delay(self, attempt: int, rng: random.Random) -> float:
        """Delay before retrying after attempt number ``attempt`` (1-based)."""
        step = min(self.max_delay, self.base_delay * self.factor ** (attempt - 1))
        if self.jitter:
            step *= 0.5 + 0.5 * rng.random()
        return step


@dataclass
class RunReport:
    succeeded: int = 0
    blocked: int = 0
    failed: int = 0
    skipped: int = 0  # already terminal in the checkpoint

    @property
    def terminal(self) -> int:
        return self.succeeded + self.blocked + self.failed

    @property
    def total_terminal(self) -> int:
        """Terminal tasks including those already completed before this run."""
        return self.terminal + self.skipped


def style_slug(style_name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "", style_name.lower())


def image_filename(item_id: str, style_name: str) -> str:
    return f"{item_id.lower()}_{style_slug(style_name)}.png"


def task_id_for(item_id: str, style_name: str, template: str, prompt: str) -> str:
    digest = hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:12]
    key = f"{item_id}|{style_slug(style_name)}|{template}|{digest}"
    return hashlib.sha256(key.encode("utf-8")).hexdigest()[:16]


def plan_tasks(bundles: list[PromptBundle]) -> list[GenerationTask]:
    """One pending task per (item, style), with deterministic ids and paths."""
    tasks: list[GenerationTask] = []
    seen: set[tuple[str, str]] = set()
    for bundle in bundles:
        for entry in bundle.template_prompts:
            key = (bundle.id, entry["style"])
            if key in seen:
                raise AccimgError(f"duplicate (item, style): {key}")
            seen.add(key)
            tasks.append(
                GenerationTask(
                    task_id=task_id_for(bundle.id, entry["style"], bundle.template, entry["prompt"]),
                    item_id=bundle.id,
                    style=entry["style"],
                    prompt=entry["prompt"],
                    image_path=image_filename(bundle.id, entry["style"]),
                )
            )
    return tasks


# ---------------------------------------------------------------------------
# Checkpointing


def config_digest(config: dict) -> str:
    """Stable digest of the run configuration guarding checkpoint reuse."""
    canonical = json.dumps(config, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


@dataclass
class Checkpoint:
    config_digest: str
    completed: dict = field(default_factory=dict)  # task_id -> terminal record
    updated_at: float = 0.0


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


class CheckpointWriter:
    """Single-writer, per-task checkpoint with atomic replace.

    The file holds a header line with the config digest followed by one JSON
    line per durable terminal task; the whole file is rewritten through a
    temp file on every append so readers never observe a torn write.

    Only succeeded and blocked outcomes are durable: a succeeded image exists
    on disk and a moderation block will repeat, so neither is ever re-sent.
    Failed tasks are terminal for the run report but stay eligible for a
    later rerun.
    """

    def __init__(self, path: str | Path, digest: str, completed: dict | None = None):
        self.path = Path(path)
        self.digest = digest
        self.completed: dict = dict(completed or {})
        self._flush()

    def record(self, task: GenerationTask) -> None:
        if task.status not in (STATUS_SUCCEEDED, STATUS_BLOCKED):
            raise AccimgError(f"cannot checkpoint non-durable task {task.task_id}")
        self.completed[task.task_id] = {
            "task_id": task.task_id,
            "status": task.status,
            "attempts": task.attempts,
            "image_path": task.image_path if task.status == STATUS_SUCCEEDED else "",
            "error": task.error,
        }
        self._flush()

    def _flush(self) -> None:
        header = json.dumps({"config_digest": self.digest, "updated_at": time.time()})
        lines = [header]
        lines.extend(json.dumps(rec, sort_keys=True) for rec in self.completed.values())
        _atomic_write_text(self.path, "\n".join(lines) + "\n")


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise AccimgError(f"empty checkpoint file: {path}")
    header = json.loads(lines[0])
    ckpt = Checkpoint(
        config_digest=header["config_digest"],
        updated_at=float(header.get("updated_at", 0.0)),
    )
    for line in lines[1:]:
        if not line.strip():
            continue
        rec = json.loads(line)
        ckpt.completed[rec["task_id"]] = rec  # later lines win (compaction on load)
    return ckpt


# ---------------------------------------------------------------------------
# Runner


def _attempt_task(
    task: GenerationTask,
    client: ImageClient,
    out_dir: Path,
    policy: RetryPolicy,
    size: str,
    sleep: Callable[[float], None],
    rng: random.Random,
) -> GenerationTask:
    """Drive one task to a terminal status. Runs on a worker thread."""
    attempts = 0
    while True:
        attempts += 1
        try:
            data = client.generate(task.prompt, size)
        except BlockedError as exc:
            log.info("task %s blocked: %s", task.task_id, exc.reason)
            return replace(task, status=STATUS_BLOCKED, attempts=attempts, error=exc.reason)
        except TransientError as exc:
            if attempts >= policy.max_attempts:
                return replace(
                    task, status=STATUS_FAILED, attempts=attempts,
                    error=f"retries exhausted: {exc}",
                )
            sleep(policy.delay(attempts, rng))
            continue
        except PermanentError as exc:
            return replace(task, status=STATUS_FAILED, attempts=attempts, error=str(exc))

        target = out_dir / task.image_path
        target.parent.mkdir(parents=True, exist_ok=True)
        tmp = target.with_suffix(".tmp")
        tmp.write_bytes(data)
        tmp.replace(target)
        return replace(task, status=STATUS_SUCCEEDED, attempts=attempts, error="")


def run(
    tasks: list[GenerationTask],
    client: ImageClient,
    *,
    out_dir: str | Path,
    checkpoint_path: str | Path,
    run_digest: str,
    concurrency: int = 8,
    retry_policy: RetryPolicy | None = None,
    size: str = DEFAULT_IMAGE_SIZE,
    sleep: Callable[[float], None] = time.sleep,
    seed: int = 0,
    on_terminal: Callable[[GenerationTask], None] | None = None,
) -> RunReport:
    """Execute tasks with bounded concurrency, retries, and resume support.

    A pre-existing checkpoint must carry the same ``run_digest``; its
    completed tasks are never re-sent. ``on_terminal`` is a test seam invoked
    after each terminal task has been checkpointed.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint_path = Path(checkpoint_path)
    policy = retry_policy or RetryPolicy()

    completed: dict = {}
    if checkpoint_path.exists():
        ckpt = load_checkpoint(checkpoint_path)
        if ckpt.config_digest != run_digest:
            raise CheckpointMismatchError(
                f"checkpoint {checkpoint_path} was written for config "
                f"{ckpt.config_digest}, current run is {run_digest}"
            )
        completed = ckpt.completed
    writer = CheckpointWriter(checkpoint_path, run_digest, completed)

    report = RunReport()
    pending = []
    for task in tasks:
        if task.task_id in writer.completed:
            report.skipped += 1
        else:
            pending.append(task)

    if not pending:
        return report

    rng = random.Random(seed)
    with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
        futures = {
            pool.submit(
                _attempt_task, task, client, out_dir, policy, size, sleep,
                random.Random(rng.random()),
            ): task
            for task in pending
        }
        not_done = set(futures)
        try:
            while not_done:
                done, not_done = wait(not_done, return_when=FIRST_COMPLETED)
                for fut in done:
                    finished = fut.result()  # non-contract errors propagate
                    if finished.status == STATUS_SUCCEEDED:
                        writer.record(finished)
                        report.succeeded += 1
                    elif finished.status == STATUS_BLOCKED:
                        writer.record(finished)
                        report.blocked += 1
                    else:
                        report.failed += 1
                    if on_terminal is not None:
                        on_terminal(finished)
        except BaseException:
            for fut in not_done:
                fut.cancel()
            raise
    return report


# ---------------------------------------------------------------------------
# Anonymization and assignment


_FILENAME_RE = re.compile(r"^(?P<item>.+)_(?P<style>[a-z0-9]+)\.png$")


def parse_image_filename(name: str) -> tuple[str, str]:
    """Recover (item_id, style name) from a generated image filename."""
    m = _FILENAME_RE.match(name)
    if m is None:
        raise AccimgError(f"filename does not follow the naming scheme: {name!r}")
    slug = m.group("style")
    style = style_from_name(slug)  # raises for unknown slugs
    return m.group("item"), style.name


@dataclass
class AnonymizationMap:
    """Bijection from style-blind numeric ids to (item, style, original path)."""

    entries: dict  # numeric_id -> {"item_id", "style", "original_path"}

    def inverse(self) -> dict:
        inv = {}
        for numeric_id, meta in self.entries.items():
            key = (meta["item_id"], meta["style"])
            if key in inv:
                raise AccimgError(f"anonymization map is not bijective at {key}")
            inv[key] = numeric_id
        return inv

    def to_json(self) -> str:
        ordered = {k: self.entries[k] for k in sorted(self.entries)}
        return json.dumps(ordered, indent=2, ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "AnonymizationMap":
        return cls(entries=json.loads(text))


def assign_numeric_ids(names: list[str], seed: int) -> dict[str, str]:
    """Seeded shuffle of filenames onto zero-padded numeric ids (0001...)."""
    if len(names) > 9999:
        raise AccimgError("anonymization supports at most 9999 images")
    shuffled = sorted(names)
    random.Random(seed).shuffle(shuffled)
    return {f"{i:04d}": name for i, name in enumerate(shuffled, start=1)}


def anonymize(
    image_dir: str | Path, out_dir: str | Path, seed: int, map_path: str | Path | None = None
) -> AnonymizationMap:
    """Copy images to style-blind numeric names and emit the lookup map.

    Files are copied, never moved; every source filename must parse back to
    (item, style), and offenders are reported together.
    """
    image_dir = Path(image_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    names = sorted(p.name for p in image_dir.glob("*.png"))
    bad = []
    parsed = {}
    for name in names:
        try:
            parsed[name] = parse_image_filename(name)
        except AccimgError:
            bad.append(name)
    if bad:
        raise AccimgError(f"unparseable image filenames: {bad}")

    assignment = assign_numeric_ids(names, seed)
    entries = {}
    for numeric_id, name in assignment.items():
        item_id, style = parsed[name]
        target = out_dir / f"{numeric_id}.png"
        if target.exists():
            raise AccimgError(f"anonymized name collision: {target}")
        shutil.copyfile(image_dir / name, target)
        entries[numeric_id] = {
            "item_id": item_id,
            "style": style,
            "original_path": str(image_dir / name),
        }
    amap = AnonymizationMap(entries=entries)
    if map_path is not None:
        Path(map_path).write_text(amap.to_json() + "\n", encoding="utf-8")
    return amap


def split_assignments(
    anonymized_ids: list[str],
    experts: list[str],
    shared: int = 200,
    unique_per_expert: int = 450,
    seed: int = 0,
) -> dict[str, list[str]]:
    """Give every expert the shared set plus a disjoint unique slice."""
    needed = shared + len(experts) * unique_per_expert
    if len(anonymized_ids) < needed:
        raise AccimgError(
            f"not enough ids: have {len(anonymized_ids)}, need {needed} "
            f"({shared} shared + {len(experts)}x{unique_per_expert} unique)"
        )
    ids = sorted(anonymized_ids)
    random.Random(seed).shuffle(ids)
    shared_ids = ids[:shared]
    assignments = {}
    offset = shared
    for expert in experts:
        unique = ids[offset: offset + unique_per_expert]
        offset += unique_per_expert
        assignments[expert] = shared_ids + unique
    return assignments
