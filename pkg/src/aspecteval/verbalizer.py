"""Binary verbalizer: turns an (aspect, score) pair into a sentence."""

from __future__ import annotations

from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .domain import Aspect, UnitScore
from .errors import TemplateError
from .jsonl import iter_jsonl

DEFAULT_THRESHOLD = 0.5

_NOUNS = {
    "dialogue-turn": "response",
    "dialogue-level": "dialogue",
    "summarization": "summary",
    "data2text": "sentence",
}


def output_noun(nlg_task: str) -> str:
    return _NOUNS.get(nlg_task, "text")


@dataclass(frozen=True)
class VerbalizerTemplate:
    aspect_id: str
    pos_text: str
    neg_text: str

    def __post_init__(self) -> None:
        if not self.pos_text.strip() or not self.neg_text.strip():
            raise TemplateError(f"template for {self.aspect_id!r} has an empty statement")
        if self.pos_text == self.neg_text:
            raise TemplateError(f"template for {self.aspect_id!r}: positive and negative texts are identical")


class TemplateCatalog(Mapping[str, VerbalizerTemplate]):
    """Read-only mapping from aspect id to its verbalizer template."""

    def __init__(self, templates: Iterable[VerbalizerTemplate] = ()):
        self._templates: dict[str, VerbalizerTemplate] = {}
        for t in templates:
            if t.aspect_id in self._templates:
                raise TemplateError(f"duplicate verbalizer template for {t.aspect_id!r}")
            self._templates[t.aspect_id] = t

    def __getitem__(self, aspect_id: str) -> VerbalizerTemplate:
        return self._templates[aspect_id]

    def __iter__(self) -> Iterator[str]:
        return iter(self._templates)

    def __len__(self) -> int:
        return len(self._templates)

    def __repr__(self) -> str:
        return f"TemplateCatalog({len(self)} templates)"


def load_template_catalog(path: str | Path) -> TemplateCatalog:
    templates = []
    for lineno, rec in iter_jsonl(path):
        try:
            templates.append(
                VerbalizerTemplate(str(rec["aspect_id"]), str(rec["pos_text"]), str(rec["neg_text"]))
            )
        except KeyError as exc:
            raise TemplateError(f"{path}:{lineno}: missing field {exc.args[0]!r}") from exc
        except TemplateError as exc:
            raise TemplateError(f"{path}:{lineno}: {exc}") from exc
    return TemplateCatalog(templates)


def default_templates_path() -> Path:
    return Path(str(resources.files("aspecteval") / "data" / "verbalizer_templates.jsonl"))


def default_template_catalog() -> TemplateCatalog:
    return load_template_catalog(default_templates_path())


def generic_template(aspect: Aspect) -> VerbalizerTemplate:
    """Opt-in fallback for aspects that have no curated template."""
    noun = output_noun(aspect.nlg_task)
    return VerbalizerTemplate(
        aspect.id,
        f"The {noun} is good in terms of {aspect.name}.",
        f"The {noun} is bad in terms of {aspect.name}.",
    )


def is_positive(score: float, threshold: float = DEFAULT_THRESHOLD) -> bool:
    # the threshold itself counts as negative
    return float(score) > float(threshold)


def verbalize(
    aspect: Aspect,
    score: float,
    threshold: float = DEFAULT_THRESHOLD,
    catalog: Mapping[str, VerbalizerTemplate] | None = None,
    fallback: bool = False,
) -> str:
    """Return the positive statement when ``score > threshold``, else the negative one."""
    score = UnitScore(score)
    threshold = UnitScore(threshold)
    if catalog is None:
        catalog = _default()
    template = catalog.get(aspect.id)
    if template is None:
        if not fallback:
            raise TemplateError(f"no verbalizer template for aspect {aspect.id!r}")
        template = generic_template(aspect)
    return template.pos_text if is_positive(score, threshold) else template.neg_text


_DEFAULT: TemplateCatalog | None = None


def _default() -> TemplateCatalog:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = default_template_catalog()
    return _DEFAULT
