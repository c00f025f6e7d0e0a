import json

import pytest

from accimg import templates as T
from accimg.corpus import make_pair
from accimg.errors import AccimgError, PermanentError, ValidationFailed
from accimg.providers import OfflineChatClient


PAIR = make_pair("Wikipedia", 387, "A cottage pie has meat and potato.",
                 "A cottage pie has meat and potato.")


class ScriptedChat:
    """Chat mock that replays a fixed transcript and records calls."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.calls = []

    def send(self, messages, temperature, max_tokens):
        self.calls.append(messages)
        return self.responses.pop(0)


def conforming(template, style):
    return T.build_conforming_prompt(template, style, PAIR.simplified)


def test_registry_shapes():
    assert set(T.TEMPLATE_NAMES) == {
        "BasicObjectFocus", "ContextualScene", "EducationalLayout",
        "MultiLevelDetail", "GridLayout",
    }
    assert ("BasicObjectFocus", "v2") in T.TEMPLATES
    assert len(T.STYLE_NAMES) == 10
    assert "Digital Art" in T.STYLES and "3D Rendered" in T.STYLES


def test_basic_object_focus_v2_extra_clauses():
    v1 = T.get_template("BasicObjectFocus", "v1")
    v2 = T.get_template("BasicObjectFocus", "v2")
    extra = set(v2.instruction_lines) - set(v1.instruction_lines)
    joined = " ".join(extra)
    assert "exactly four" in joined
    assert "30% spacing" in joined
    assert "10%" in joined


def test_template_slug_roundtrip():
    for tpl in T.TEMPLATES.values():
        assert T.template_from_slug(tpl.slug) is tpl
    with pytest.raises(AccimgError):
        T.template_from_slug("no_such_template")


def test_style_lookup_accepts_slugs():
    assert T.style_from_name("digital_art").name == "Digital Art"
    assert T.style_from_name("3drendered").name == "3D Rendered"
    assert T.style_from_name("Retro").name == "Retro"
    with pytest.raises(AccimgError):
        T.style_from_name("impressionist")


def test_meta_prompt_contains_every_instruction_line_verbatim():
    for tpl in T.TEMPLATES.values():
        for style in T.STYLES.values():
            system = T.build_meta_prompt(PAIR, tpl, style)[0]["content"]
            for line in tpl.instruction_lines:
                assert line in system


def test_meta_prompt_examples():
    bof = T.get_template("BasicObjectFocus", "v1")
    system = T.build_meta_prompt(PAIR, bof, T.STYLES["Minimalistic"])[0]["content"]
    assert "Background must be uniform and simple" in system

    grid = T.get_template("GridLayout")
    system = T.build_meta_prompt(PAIR, grid, T.STYLES["Geometric"])[0]["content"]
    assert "at least 25% margin around each object" in system

    v2 = T.get_template("BasicObjectFocus", "v2")
    system = T.build_meta_prompt(PAIR, v2, T.STYLES["Retro"])[0]["content"]
    assert "exactly four" in system
    assert "30% spacing" in system
    assert "10%" in system


def test_meta_prompt_structure():
    tpl = T.get_template("ContextualScene")
    messages = T.build_meta_prompt(PAIR, tpl, T.STYLES["Cartoon"])
    assert [m["role"] for m in messages] == ["system", "user"]
    assert messages[1]["content"] == PAIR.simplified
    assert "which objects and relations to depict" in messages[0]["content"]
    assert "only the final image prompt" in messages[0]["content"]


def test_educational_meta_prompt_relaxes_no_numbers_rule():
    edu = T.get_template("EducationalLayout")
    system = T.build_meta_prompt(PAIR, edu, T.STYLES["Cartoon"])[0]["content"]
    assert "Do not render text, numbers, or motion effects." not in system
    assert "numeric markers required by this layout are allowed" in system


def test_validate_missing_spacing_clause_cites_requirement():
    tpl = T.get_template("ContextualScene")
    style = T.STYLES["Cartoon"]
    prompt = "Create a cartoon style image with four distinct objects on a plain background."
    violations = T.validate_prompt(prompt, tpl, style)
    hard = T.hard_violations(violations)
    assert any(
        v.rule == "spacing_clause" and v.excerpt == "at least 20% spacing between each object"
        for v in hard
    )


def test_validate_educational_allows_numeric_markers():
    edu = T.get_template("EducationalLayout")
    style = T.STYLES["Cartoon"]
    prompt = conforming(edu, style)
    assert "numeric marker (1, 2, 3...)" in prompt
    assert not any(v.rule == "banned_content" for v in T.validate_prompt(prompt, edu, style))


def test_only_educational_whitelists_numeric_markers():
    whitelisting = [t for t in T.TEMPLATES.values() if t.requires_numeric_markers]
    assert [t.name for t in whitelisting] == ["EducationalLayout"]


def test_validate_banned_content_elsewhere():
    tpl = T.get_template("MultiLevelDetail")
    style = T.STYLES["Retro"]
    prompt = conforming(tpl, style) + " Add text labels and numbers below."
    hard = T.hard_violations(T.validate_prompt(prompt, tpl, style))
    assert {v.excerpt for v in hard if v.rule == "banned_content"} == {"text", "numbers"}


def test_validate_banned_terms_are_word_bounded():
    tpl = T.get_template("MultiLevelDetail")
    style = T.STYLES["Retro"]
    prompt = conforming(tpl, style) + " Use rich textures for context."
    assert not any(
        v.rule == "banned_content" for v in T.validate_prompt(prompt, tpl, style)
    )


def test_validate_empty_prompt_triggers_every_required_clause():
    tpl = T.get_template("BasicObjectFocus", "v2")
    style = T.STYLES["Storybook"]
    hard = T.hard_violations(T.validate_prompt("", tpl, style))
    assert {v.rule for v in hard} == {"style_keyword", "spacing_clause", "background"}


def test_validate_soft_object_count():
    tpl = T.get_template("BasicObjectFocus", "v2")  # exactly four
    style = T.STYLES["Cartoon"]
    prompt = conforming(tpl, style).replace("four distinct objects", "seven distinct objects")
    soft = [v for v in T.validate_prompt(prompt, tpl, style) if v.severity == "soft"]
    assert any(v.rule == "object_count" for v in soft)
    assert not T.hard_violations(T.validate_prompt(conforming(tpl, style), tpl, style))


def test_all_template_style_combinations_have_conforming_fixture():
    for tpl in T.TEMPLATES.values():
        for style in T.STYLES.values():
            assert T.hard_violations(
                T.validate_prompt(conforming(tpl, style), tpl, style)
            ) == []


def test_generate_prompt_conforming_returned_unchanged():
    tpl = T.get_template("GridLayout")
    style = T.STYLES["Geometric"]
    good = conforming(tpl, style)
    client = ScriptedChat([good])
    assert T.generate_prompt(PAIR, tpl, style, client) == good
    assert len(client.calls) == 1


def test_generate_prompt_retries_once_with_feedback_then_fails():
    tpl = T.get_template("GridLayout")
    style = T.STYLES["Geometric"]
    bad = conforming(tpl, style).replace("geometric", "plain")  # missing style keyword
    client = ScriptedChat([bad, bad])
    with pytest.raises(ValidationFailed) as exc:
        T.generate_prompt(PAIR, tpl, style, client)
    assert len(client.calls) == 2
    # the second call appended the violation feedback
    feedback = client.calls[1][-1]["content"]
    assert "style_keyword" in feedback
    assert any(v.rule == "style_keyword" for v in exc.value.violations)


def test_generate_prompt_repair_round_can_succeed():
    tpl = T.get_template("ContextualScene")
    style = T.STYLES["Cartoon"]
    good = conforming(tpl, style)
    client = ScriptedChat([good.replace("cartoon", "plain"), good])
    assert T.generate_prompt(PAIR, tpl, style, client) == good


def test_generate_prompt_propagates_permanent_errors():
    class Failing:
        def send(self, messages, temperature, max_tokens):
            raise PermanentError("no quota")

    with pytest.raises(PermanentError):
        T.generate_prompt(PAIR, T.get_template("GridLayout"), T.STYLES["Retro"], Failing())


def test_assemble_bundle_ten_styles():
    tpl = T.get_template("BasicObjectFocus", "v2")
    styles = [T.STYLES[name] for name in T.STYLE_NAMES]
    bundle = T.assemble_bundle(PAIR, tpl, styles, OfflineChatClient(), index=3)
    assert len(bundle.template_prompts) == 10
    assert bundle.styles() == list(T.STYLE_NAMES)
    assert not bundle.partial


def test_assemble_bundle_singleton():
    tpl = T.get_template("GridLayout")
    bundle = T.assemble_bundle(PAIR, tpl, [T.STYLES["Retro"]], OfflineChatClient())
    assert len(bundle.template_prompts) == 1


def test_assemble_bundle_rejects_duplicates_and_empty():
    tpl = T.get_template("GridLayout")
    with pytest.raises(AccimgError):
        T.assemble_bundle(PAIR, tpl, [], OfflineChatClient())
    with pytest.raises(AccimgError):
        T.assemble_bundle(PAIR, tpl, [T.STYLES["Retro"], T.STYLES["Retro"]], OfflineChatClient())


def test_assemble_bundle_partial_on_failure():
    tpl = T.get_template("GridLayout")
    style = T.STYLES["Retro"]
    bad = conforming(tpl, style).replace("retro", "plain")
    client = ScriptedChat([bad, bad])
    bundle = T.assemble_bundle(PAIR, tpl, [style], client)
    assert bundle.partial
    assert "Retro" in bundle.failed_styles
    assert bundle.template_prompts == []


def test_bundle_serialization_round_trips():
    tpl = T.get_template("BasicObjectFocus", "v2")
    styles = [T.STYLES[n] for n in ("Retro", "Cartoon")]
    bundle = T.assemble_bundle(PAIR, tpl, styles, OfflineChatClient(), index=9)
    parsed = T.PromptBundle.from_record(json.loads(json.dumps(bundle.to_record())))
    assert parsed == bundle


def test_bundle_serialization_key_order():
    tpl = T.get_template("BasicObjectFocus", "v2")
    bundle = T.assemble_bundle(PAIR, tpl, [T.STYLES["Retro"]], OfflineChatClient())
    record = bundle.to_record()
    assert list(record) == [
        "index", "id", "simplified_text", "dataset_source", "template", "template_prompts",
    ]
    assert list(record["template_prompts"][0]) == ["style", "prompt"]


def test_golden_bundle_matches_key_for_key(golden_bundle_record):
    pair = make_pair(
        "Wikipedia", 387,
        "Originally, a pie made with any kind of meat and mashed potato was called a cottage pie.",
        "Originally, a pie made with any kind of meat and mashed potato was called a cottage pie.",
    )
    tpl = T.template_from_slug("basic_object_focus_v2")
    styles = [T.STYLES[n] for n in T.STYLE_NAMES]
    bundle = T.assemble_bundle(pair, tpl, styles, OfflineChatClient(), index=71)
    assert bundle.to_record() == golden_bundle_record


def test_write_read_bundles_roundtrip(tmp_path):
    tpl = T.get_template("ContextualScene")
    styles = [T.STYLES[n] for n in ("Retro", "Geometric")]
    bundles = [
        T.assemble_bundle(PAIR, tpl, styles, OfflineChatClient(), index=i)
        for i in range(3)
    ]
    path = tmp_path / "bundles.jsonl"
    T.write_bundles(bundles, path)
    assert T.read_bundles(path) == bundles
