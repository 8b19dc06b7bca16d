"""Instruction templates and the unified instruction layout.

An instruction is: task description, aspect definition, evaluation protocol,
then one block per payload slot. Empty optional slots are left out, so a
prompt with no auxiliary evaluations is byte-identical to one rendered
without the slot at all.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from string import Template

from .domain import AUX_SLOT, Aspect, TaskType
from .errors import TemplateError
from .jsonl import iter_jsonl
from .verbalizer import output_noun

WILDCARD = "*"
OPTIONAL_SLOTS = ("source", AUX_SLOT)


@dataclass(frozen=True)
class InstructionTemplate:
    aspect_id: str
    task_type: TaskType
    task_description: str
    evaluation_protocol: str
    slots: tuple[str, ...]

    @property
    def required_slots(self) -> tuple[str, ...]:
        return tuple(s for s in self.slots if s not in OPTIONAL_SLOTS)


def slot_header(slot: str) -> str:
    return slot.replace("_", " ").capitalize()


def _substitute(text: str, variables: Mapping[str, str], where: str) -> str:
    try:
        return Template(text).substitute(variables)
    except KeyError as exc:
        raise TemplateError(f"unresolved placeholder ${exc.args[0]} in {where}") from exc
    except ValueError as exc:
        raise TemplateError(f"malformed placeholder in {where}: {exc}") from exc


def assemble_instruction(
    template: InstructionTemplate,
    aspect: Aspect,
    payload: Mapping[str, str],
    variables: Mapping[str, str] | None = None,
) -> str:
    extra = sorted(set(payload) - set(template.slots))
    if extra:
        raise TemplateError(f"unexpected payload slot(s) {extra} for {template.task_type.value} template")
    for slot in template.required_slots:
        if slot not in payload:
            raise TemplateError(f"payload is missing slot {slot!r}")
    subs = {"aspect": aspect.name, "noun": output_noun(aspect.nlg_task)}
    subs.update(variables or {})
    parts = [
        _substitute(template.task_description, subs, "task description"),
        f"Definition of {aspect.name}: {aspect.definition}",
        _substitute(template.evaluation_protocol, subs, "evaluation protocol"),
    ]
    for slot in template.slots:
        text = payload.get(slot)
        if slot in OPTIONAL_SLOTS and not text:
            continue
        parts.append(f"{slot_header(slot)}:\n{text}")
    return "\n\n".join(parts)


class TemplateSet:
    """Instruction templates keyed by (aspect id or ``*``, task type)."""

    def __init__(self, templates: Iterable[InstructionTemplate]):
        self._by_key: dict[tuple[str, TaskType], InstructionTemplate] = {}
        for t in templates:
            key = (t.aspect_id, t.task_type)
            if key in self._by_key:
                raise TemplateError(f"duplicate instruction template for {t.aspect_id!r}/{t.task_type.value}")
            self._by_key[key] = t

    def lookup(self, aspect_id: str, task_type: TaskType) -> InstructionTemplate:
        t = self._by_key.get((aspect_id, task_type)) or self._by_key.get((WILDCARD, task_type))
        if t is None:
            raise TemplateError(f"no {task_type.value} instruction template for {aspect_id!r}")
        return t

    def __len__(self) -> int:
        return len(self._by_key)


def load_instruction_templates(path: str | Path) -> TemplateSet:
    templates = []
    for lineno, rec in iter_jsonl(path):
        try:
            templates.append(
                InstructionTemplate(
                    aspect_id=str(rec.get("aspect_id", WILDCARD)),
                    task_type=TaskType(rec["task_type"]),
                    task_description=str(rec["task_description"]),
                    evaluation_protocol=str(rec["evaluation_protocol"]),
                    slots=tuple(rec["slots"]),
                )
            )
        except (KeyError, ValueError) as exc:
            raise TemplateError(f"{path}:{lineno}: bad instruction template ({exc})") from exc
    return TemplateSet(templates)


def default_instruction_templates_path() -> Path:
    return Path(str(resources.files("aspecteval") / "data" / "instruction_templates.jsonl"))


_DEFAULT: TemplateSet | None = None


def default_instruction_templates() -> TemplateSet:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = load_instruction_templates(default_instruction_templates_path())
    return _DEFAULT


def join_texts(texts: Sequence[str]) -> str:
    return "\n".join(texts)


def render_boolean_prompt(
    templates: TemplateSet,
    aspect: Aspect,
    output: str,
    sources: Sequence[str],
    auxiliary: Sequence[str] = (),
) -> str:
    """Boolean-QA prompt used at inference time.

    Auxiliary verbalizations go into their own block right after the
    source texts, the same place stage-2 training data puts them.
    """
    payload = {"source": join_texts(sources), "output": output}
    if auxiliary:
        payload[AUX_SLOT] = " ".join(auxiliary)
    return assemble_instruction(templates.lookup(aspect.id, TaskType.BOOLEAN_QA), aspect, payload)
