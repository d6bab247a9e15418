"""Versioned prompt templates and their builders.

Templates are plain-text assets with ``{placeholder}`` slots. Rendering is
literal token replacement (never str.format), so brace characters that are
part of the template text survive byte-for-byte — the judge prompts depend
on this and are pinned by golden-file tests.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

PROMPT_VERSION = "1"

_TEMPLATES = {
    "judge_entailment": "judge_entailment.txt",
    "judge_classification": "judge_classification.txt",
    "planner": "planner.txt",
    "note_agent": "note_agent.txt",
    "structured_agent": "structured_agent.txt",
    "composer": "composer.txt",
    "categorizer": "categorizer.txt",
}


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    filename = _TEMPLATES[name]
    return resources.files(__package__).joinpath(filename).read_text(encoding="utf-8")


def render(name: str, **substitutions: str) -> str:
    text = load_template(name)
    for key, value in substitutions.items():
        text = text.replace("{" + key + "}", value)
    return text


def build_entailment_prompt(ai_content: str, source_chunks: list[str]) -> str:
    """Entailment judge prompt; chunks are joined by blank lines."""
    return render("judge_entailment", ai_content=ai_content,
                  source_chunks="\n\n".join(source_chunks))


def build_classification_prompt(full_ai_output: str, explanations: list[str]) -> str:
    """Harm-classification prompt; explanations are passed as a JSON array."""
    return render("judge_classification", full_ai_output=full_ai_output,
                  expl_no_entail=json.dumps(explanations, ensure_ascii=False))


def build_planner_prompt(query: str, resource_summary: str) -> str:
    return render("planner", query=query, resource_summary=resource_summary)


def build_note_agent_prompt(query: str, documents: str) -> str:
    return render("note_agent", query=query, documents=documents)


def build_structured_agent_prompt(query: str, records: str) -> str:
    return render("structured_agent", query=query, records=records)


def build_composer_prompt(query: str, format_tag: str, evidence: str) -> str:
    return render("composer", query=query, format_tag=format_tag, evidence=evidence)


def build_categorizer_prompt(question: str) -> str:
    return render("categorizer", question=question)
