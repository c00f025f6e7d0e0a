"""Prompt templates, visual styles, meta-prompt construction, and prompt linting.

Five layout templates encode accessibility constraints as instruction lines
that are injected verbatim into the meta-prompt sent to a chat model. The
chat model maps sentence semantics onto concrete objects and returns a
single image-generation prompt, which is then lint-validated against the
template's hard rules (style keyword, spacing clause, banned content,
background) before being persisted into a bundle.

Registries are module constants and must not be mutated after import.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Protocol

from .corpus import SentencePair
from .errors import AccimgError, PermanentError, TransientError, ValidationFailed

DEFAULT_TEMPERATURE = 0.7
DEFAULT_MAX_TOKENS = 500


@dataclass(frozen=True)
class GeneralConstraints:
    """Baseline accessibility constraints shared by every template."""

    object_min: int = 3
    object_max: int = 5
    require_spacing: bool = True
    forbid_text_numbers_motion: bool = True
    forbid_abstract_metaphor_bias: bool = True
    require_plain_background: bool = True

    def lines(self, allow_numeric_markers: bool = False) -> tuple[str, ...]:
        no_text = (
            "Do not render written words or motion effects; the numeric "
            "markers required by this layout are allowed."
            if allow_numeric_markers
            else "Do not render text, numbers, or motion effects."
        )
        return (
            f"Include between {_NUM_WORDS[self.object_min]} and "
            f"{_NUM_WORDS[self.object_max]} distinct objects.",
            "Keep clear spatial separation between objects.",
            no_text,
            "Exclude abstract, metaphorical, or culturally biased elements.",
            "Use a plain or neutral background.",
        )


_NUM_WORDS = {1: "one", 2: "two", 3: "three", 4: "four", 5: "five"}

GENERAL_CONSTRAINTS = GeneralConstraints()


@dataclass(frozen=True)
class TemplateSpec:
    """One layout template: its instruction lines plus lint parameters."""

    name: str
    version: str
    instruction_lines: tuple[str, ...]
    spacing_pct: int | None = None
    spacing_clause: str | None = None
    requires_background: bool = False
    object_range: tuple[int, int] = (3, 5)
    requires_numeric_markers: bool = False

    @property
    def slug(self) -> str:
        base = re.sub(r"(?<!^)(?=[A-Z])", "_", self.name).lower()
        return base if self.version == "v1" else f"{base}_{self.version}"

    @property
    def label(self) -> str:
        return re.sub(r"(?<!^)(?=[A-Z])", " ", self.name)


_BASIC_OBJECT_FOCUS_LINES = (
    "Do not align or group objects (arrange them with neutral positioning).",
    "Avoid any suggestion of scene, narrative, or sequence.",
    "Ensure all objects are visually equal.",
    "No object should stand out more than the others.",
    "Background must be uniform and simple (e.g., white or gray).",
    "Emphasize maximum spacing between all objects.",
)

# Refinement of the winning layout: fixed object count, wider spacing,
# capped size variation.
_BASIC_OBJECT_FOCUS_V2_EXTRA = (
    "Include exactly four distinct objects.",
    "Keep at least 30% spacing between objects.",
    "Cap object size variation at 10% so all objects keep equal prominence.",
)

_TEMPLATE_LIST = (
    TemplateSpec(
        name="BasicObjectFocus",
        version="v1",
        instruction_lines=_BASIC_OBJECT_FOCUS_LINES,
        requires_background=True,
    ),
    TemplateSpec(
        name="BasicObjectFocus",
        version="v2",
        instruction_lines=_BASIC_OBJECT_FOCUS_LINES + _BASIC_OBJECT_FOCUS_V2_EXTRA,
        spacing_pct=30,
        spacing_clause="at least 30% spacing between objects",
        requires_background=True,
        object_range=(4, 4),
    ),
    TemplateSpec(
        name="ContextualScene",
        version="v1",
        instruction_lines=(
            "Arrange all objects in a straight, horizontal line.",
            "Use a single perspective, no variation in object size or depth.",
            "Maintain equal size across all objects to avoid depth illusion.",
            "Include one minimal environmental element (e.g., surface, wall) when needed.",
            "Keep at least 20% spacing between each object to preserve separation.",
        ),
        spacing_pct=20,
        spacing_clause="at least 20% spacing between each object",
    ),
    TemplateSpec(
        name="EducationalLayout",
        version="v1",
        instruction_lines=(
            "Arrange objects in a strict left-to-right horizontal sequence.",
            "Visually connect each object to the next with a line or arrow.",
            "Gradually reduce object size from left to right by 10–15%.",
            "Include a visible numeric marker (1, 2, 3...) near each object.",
            "Limit the maximum object count to 4 to maintain consistency.",
            "Narrow spacing slightly with each subsequent object to guide visual flow.",
        ),
        object_range=(3, 4),
        requires_numeric_markers=True,
    ),
    TemplateSpec(
        name="MultiLevelDetail",
        version="v1",
        instruction_lines=(
            "Place objects across exactly three spatial layers: foreground, midground, and background.",
            "Foreground objects must be 2× larger than midground objects.",
            "Midground objects must be 2× larger than background objects.",
            "Each layer must use a unique lightness or brightness level.",
            "Position layers vertically: foreground at the bottom, background at the top.",
            "Avoid horizontal alignment across layers to emphasize separation.",
        ),
    ),
    TemplateSpec(
        name="GridLayout",
        version="v1",
        instruction_lines=(
            "Choose a 2×2 or 3×3 grid structure, depending on object count.",
            "Place one object per cell, centered precisely.",
            "Use equal-sized cells with clearly defined, thick borders.",
            "Ensure all objects are the same size and prominence.",
            "Maintain at least 25% margin around each object within its cell.",
            "Do not allow diagonal, overlapping, or asymmetrical arrangements.",
        ),
        spacing_pct=25,
        spacing_clause="at least 25% margin around each object",
    ),
)

TEMPLATES: dict[tuple[str, str], TemplateSpec] = {
    (t.name, t.version): t for t in _TEMPLATE_LIST
}

TEMPLATE_NAMES = tuple(dict.fromkeys(t.name for t in _TEMPLATE_LIST))


@dataclass(frozen=True)
class StyleSpec:
    """One of the ten visual styles, with the keyword markers a conforming
    prompt must contain."""

    name: str
    keyword_markers: tuple[str, ...]

    @property
    def slug(self) -> str:
        return re.sub(r"[^a-z0-9]+", "", self.name.lower())


_STYLE_LIST = (
    StyleSpec("Cartoon", ("cartoon",)),
    StyleSpec("Realistic", ("realistic",)),
    StyleSpec("Artistic", ("artistic",)),
    StyleSpec("Minimalistic", ("minimalistic",)),
    StyleSpec("Digital Art", ("digital art",)),
    StyleSpec("3D Rendered", ("3d render",)),
    StyleSpec("Geometric", ("geometric",)),
    StyleSpec("Retro", ("retro",)),
    StyleSpec("Storybook", ("storybook",)),
    StyleSpec("Technical", ("technical illustration",)),
)

STYLES: dict[str, StyleSpec] = {s.name: s for s in _STYLE_LIST}
STYLE_NAMES = tuple(STYLES)


def get_template(name: str, version: str = "v1") -> TemplateSpec:
    key = (name, version)
    if key not in TEMPLATES:
        raise AccimgError(f"unknown template {name!r} version {version!r}")
    return TEMPLATES[key]


def template_from_slug(slug: str) -> TemplateSpec:
    """Resolve CLI-style slugs like ``basic_object_focus_v2``."""
    for t in _TEMPLATE_LIST:
        if t.slug == slug:
            return t
    raise AccimgError(
        f"unknown template slug {slug!r}; expected one of "
        f"{[t.slug for t in _TEMPLATE_LIST]}"
    )


def style_from_name(name: str) -> StyleSpec:
    """Resolve a style from its display name or any slugged spelling."""
    if name in STYLES:
        return STYLES[name]
    want = re.sub(r"[^a-z0-9]+", "", name.lower())
    for s in _STYLE_LIST:
        if s.slug == want:
            return s
    raise AccimgError(f"unknown style {name!r}; expected one of {STYLE_NAMES}")


# ---------------------------------------------------------------------------
# Meta-prompt construction


class ChatClient(Protocol):
    """Contract for the chat backend that turns sentences into image prompts.

    Implementations must be safe to call from concurrent contexts and raise
    TransientError / PermanentError for provider failures.
    """

    def send(self, messages: list[dict], temperature: float, max_tokens: int) -> str:
        ...


def build_meta_prompt(
    pair: SentencePair,
    template: TemplateSpec,
    style: StyleSpec,
    constraints: GeneralConstraints = GENERAL_CONSTRAINTS,
) -> list[dict]:
    """System + user messages instructing the chat model to emit one prompt.

    The system message embeds the shared constraints, the template's
    instruction lines verbatim, and the style directive; the user message
    carries only the simplified sentence.
    """
    general = constraints.lines(allow_numeric_markers=template.requires_numeric_markers)
    parts = [
        "You convert one simplified sentence into a single image-generation prompt.",
        "Read the sentence, decide which objects and relations to depict and how "
        "to represent abstract ideas concretely, then reply with only the final "
        "image prompt and nothing else.",
        "",
        "Accessibility requirements:",
        *(f"- {line}" for line in general),
        "",
        f"Layout: {template.label} ({template.version}). Follow every rule:",
        *(f"- {line}" for line in template.instruction_lines),
        "",
        f"Style: {style.name}. The prompt must name the style explicitly "
        f"(include {', '.join(repr(m) for m in style.keyword_markers)}).",
    ]
    return [
        {"role": "system", "content": "\n".join(parts)},
        {"role": "user", "content": pair.simplified},
    ]


# ---------------------------------------------------------------------------
# Prompt linting


@dataclass(frozen=True)
class Violation:
    rule: str
    severity: str  # "hard" | "soft"
    excerpt: str


_BANNED_CONTENT_RE = re.compile(r"\b(text|words|letters|numbers)\b", re.IGNORECASE)
_SPACING_CONTEXT_RE = re.compile(r"\b(spacing|margin|separation|apart)\b", re.IGNORECASE)
_NUMERIC_MARKER_RE = re.compile(r"numeric marker|numbered", re.IGNORECASE)

_WORD_TO_NUM = {
    "one": 1, "two": 2, "three": 3, "four": 4, "five": 5,
    "six": 6, "seven": 7, "eight": 8, "nine": 9, "ten": 10,
}
_OBJECT_COUNT_RE = re.compile(
    r"\b(one|two|three|four|five|six|seven|eight|nine|ten|\d+)\b"
    r"(?:\s+\w+){0,2}\s+objects?\b",
    re.IGNORECASE,
)


def validate_prompt(
    prompt: str, template: TemplateSpec, style: StyleSpec
) -> list[Violation]:
    """Lint a generated image prompt against template and style rules.

    Hard rules: the style keyword must appear; the template's spacing or
    margin percentage clause must appear when mandated; banned content terms
    must be absent (except under templates that require numeric markers,
    which must instead mention them); a background clause must appear when
    the template mandates a plain background. Soft rule: the stated object
    count should fall inside the template's range.
    """
    violations: list[Violation] = []
    low = prompt.lower()

    for marker in style.keyword_markers:
        if marker.lower() not in low:
            violations.append(Violation("style_keyword", "hard", marker))

    if template.spacing_pct is not None:
        pct_ok = re.search(rf"\b{template.spacing_pct}\s*%", prompt)
        if not (pct_ok and _SPACING_CONTEXT_RE.search(prompt)):
            violations.append(Violation("spacing_clause", "hard", template.spacing_clause))

    if template.requires_numeric_markers:
        if not _NUMERIC_MARKER_RE.search(prompt):
            violations.append(
                Violation("numeric_markers", "hard", "visible numeric marker near each object")
            )
    else:
        banned = sorted({m.group(0).lower() for m in _BANNED_CONTENT_RE.finditer(prompt)})
        for word in banned:
            violations.append(Violation("banned_content", "hard", word))

    if template.requires_background and "background" not in low:
        violations.append(Violation("background", "hard", "plain background clause"))

    lo, hi = template.object_range
    m = _OBJECT_COUNT_RE.search(prompt)
    if m is None:
        violations.append(Violation("object_count", "soft", "no explicit object count"))
    else:
        token = m.group(1).lower()
        count = _WORD_TO_NUM.get(token) or int(token)
        if not lo <= count <= hi:
            violations.append(
                Violation("object_count", "soft", f"{count} objects outside {lo}..{hi}")
            )
    return violations


def hard_violations(violations: list[Violation]) -> list[Violation]:
    return [v for v in violations if v.severity == "hard"]


# ---------------------------------------------------------------------------
# Prompt generation


def generate_prompt(
    pair: SentencePair,
    template: TemplateSpec,
    style: StyleSpec,
    client: ChatClient,
    temperature: float = DEFAULT_TEMPERATURE,
    max_tokens: int = DEFAULT_MAX_TOKENS,
) -> str:
    """Ask the chat client for an image prompt, repairing once on hard failures.

    If the first response violates hard rules, the violations are fed back in
    a follow-up turn; a second failure raises ValidationFailed carrying the
    final violation list.
    """
    messages = build_meta_prompt(pair, template, style)
    text = client.send(messages, temperature=temperature, max_tokens=max_tokens).strip()
    hard = hard_violations(validate_prompt(text, template, style))
    if not hard:
        return text

    feedback = (
        "The prompt you produced breaks these rules: "
        + "; ".join(f"{v.rule}: {v.excerpt}" for v in hard)
        + ". Rewrite the image prompt so every rule is satisfied, and reply "
        "with only the corrected prompt."
    )
    retry = messages + [
        {"role": "assistant", "content": text},
        {"role": "user", "content": feedback},
    ]
    text = client.send(retry, temperature=temperature, max_tokens=max_tokens).strip()
    hard = hard_violations(validate_prompt(text, template, style))
    if hard:
        raise ValidationFailed(hard)
    return text


# ---------------------------------------------------------------------------
# Bundles


@dataclass
class PromptBundle:
    """One sentence's set of style-specific prompts under one template."""

    index: int
    id: str
    simplified_text: str
    dataset_source: str
    template: str  # template slug, e.g. "basic_object_focus_v2"
    template_prompts: list[dict] = field(default_factory=list)
    failed_styles: dict = field(default_factory=dict)  # style name -> error, not persisted

    @property
    def partial(self) -> bool:
        return bool(self.failed_styles)

    def styles(self) -> list[str]:
        return [entry["style"] for entry in self.template_prompts]

    def to_record(self) -> dict:
        return {
            "index": self.index,
            "id": self.id,
            "simplified_text": self.simplified_text,
            "dataset_source": self.dataset_source,
            "template": self.template,
            "template_prompts": [
                {"style": e["style"], "prompt": e["prompt"]} for e in self.template_prompts
            ],
        }

    @classmethod
    def from_record(cls, record: dict) -> "PromptBundle":
        return cls(
            index=int(record["index"]),
            id=record["id"],
            simplified_text=record["simplified_text"],
            dataset_source=record["dataset_source"],
            template=record["template"],
            template_prompts=[
                {"style": e["style"], "prompt": e["prompt"]}
                for e in record["template_prompts"]
            ],
        )


def assemble_bundle(
    pair: SentencePair,
    template: TemplateSpec,
    styles: list[StyleSpec],
    client: ChatClient,
    index: int = 0,
) -> PromptBundle:
    """Generate one validated prompt per style; failures mark the bundle partial."""
    if not styles:
        raise AccimgError("styles must be non-empty")
    names = [s.name for s in styles]
    if len(set(names)) != len(names):
        raise AccimgError(f"duplicate styles requested: {names}")

    bundle = PromptBundle(
        index=index,
        id=pair.id,
        simplified_text=pair.simplified,
        dataset_source=pair.dataset_source,
        template=template.slug,
    )
    for style in styles:
        try:
            prompt = generate_prompt(pair, template, style, client)
        except (ValidationFailed, TransientError, PermanentError) as exc:
            bundle.failed_styles[style.name] = str(exc)
            continue
        bundle.template_prompts.append({"style": style.name, "prompt": prompt})
    return bundle


def write_bundles(bundles: list[PromptBundle], path) -> None:
    """One bundle object per line, fixed key order, UTF-8, LF endings."""
    from pathlib import Path

    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for b in bundles:
            fh.write(json.dumps(b.to_record(), ensure_ascii=False))
            fh.write("\n")


def read_bundles(path) -> list[PromptBundle]:
    from pathlib import Path

    bundles = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                bundles.append(PromptBundle.from_record(json.loads(line)))
            except (json.JSONDecodeError, KeyError) as exc:
                raise AccimgError(f"{path}:{lineno}: bad bundle record ({exc})") from exc
    return bundles


_FUNCTION_WORDS = frozenset(
    "with that this from were have been being will would could should about "
    "into over under after before while than then there these those such very "
    "when where which what whose they them their does doesn must each most "
    "some many much anything something called made make kind".split()
)


def build_conforming_prompt(
    template: TemplateSpec, style: StyleSpec, sentence: str
) -> str:
    """Reference prompt that satisfies every hard rule for (template, style).

    Used by the offline chat provider and by conformance fixtures; the
    subject words are content words from the sentence with banned terms
    filtered out.
    """
    words = [w.strip(".,;:!?\"'()").lower() for w in sentence.split()]
    subjects = [
        w for w in words
        if len(w) > 3 and w not in _FUNCTION_WORDS and not _BANNED_CONTENT_RE.fullmatch(w)
    ][:4] or ["object"]

    lo, hi = template.object_range
    count_word = _NUM_WORDS.get(min(4, hi), str(min(4, hi)))
    marker = style.keyword_markers[0]
    parts = [
        f"Create a {marker} style image with {count_word} distinct objects "
        f"drawn from: {', '.join(subjects)}.",
        "Keep every object evenly sized and clearly separated.",
    ]
    if template.spacing_clause is not None:
        parts.append(f"Maintain {template.spacing_clause}.")
    if template.requires_numeric_markers:
        parts.append("Include a visible numeric marker (1, 2, 3...) near each object.")
    parts.append("Use a plain light gray background.")
    return " ".join(parts)
