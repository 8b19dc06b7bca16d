from __future__ import annotations

import pytest

from aspecteval.domain import AUX_SLOT, TaskType
from aspecteval.errors import TemplateError
from aspecteval.prompts import (
    InstructionTemplate,
    assemble_instruction,
    default_instruction_templates,
    render_boolean_prompt,
)

from conftest import toy_aspect

MINIMAL = InstructionTemplate("*", TaskType.BOOLEAN_QA, "Judge the $noun.", "Is it good in $aspect?", ("output",))


def test_parts_appear_in_order():
    aspect = toy_aspect("clarity")
    text = assemble_instruction(MINIMAL, aspect, {"output": "hello"})
    assert text == (
        "Judge the response.\n\n"
        "Definition of clarity: How clarity the text is.\n\n"
        "Is it good in clarity?\n\n"
        "Output:\nhello"
    )


def test_missing_slot_is_named():
    with pytest.raises(TemplateError, match="'output'"):
        assemble_instruction(MINIMAL, toy_aspect("a"), {})


def test_extra_slot_rejected():
    with pytest.raises(TemplateError, match="unexpected"):
        assemble_instruction(MINIMAL, toy_aspect("a"), {"output": "x", "reference": "y"})


def test_unresolved_placeholder():
    tpl = InstructionTemplate("*", TaskType.SCORING, "Scale 1-$levels", "p", ("output",))
    with pytest.raises(TemplateError, match="levels"):
        assemble_instruction(tpl, toy_aspect("a"), {"output": "x"})


def test_deterministic():
    tpl = default_instruction_templates().lookup("x", TaskType.COMPARISON)
    payload = {"source": "s", "candidate_1": "a", "candidate_2": "b"}
    variables = {"tie_option": ""}
    a = assemble_instruction(tpl, toy_aspect("a"), payload, variables)
    assert a == assemble_instruction(tpl, toy_aspect("a"), dict(payload), dict(variables))


def test_auxiliary_block_only_when_present():
    templates = default_instruction_templates()
    aspect = toy_aspect("clarity")
    bare = render_boolean_prompt(templates, aspect, "out", ["src"])
    rich = render_boolean_prompt(templates, aspect, "out", ["src"], ["It is fluent.", "It is natural."])
    assert "Auxiliary evaluations" not in bare
    assert "Auxiliary evaluations:\nIt is fluent. It is natural." in rich
    # auxiliary block sits between the source and the output
    assert rich.index("Source:") < rich.index("Auxiliary evaluations:") < rich.index("Output:")
    assert AUX_SLOT in default_instruction_templates().lookup("x", TaskType.BOOLEAN_QA).slots


def test_every_task_type_has_a_default_template():
    templates = default_instruction_templates()
    for tt in TaskType:
        assert templates.lookup("anything@other", tt).task_type is tt
