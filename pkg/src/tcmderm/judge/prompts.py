"""Rubric prompt assembly with retrieved reference context.

The system message is the rubric template verbatim; the user message fills
the documented placeholder slots.  An empty retrieval result fills the
reference slot with the sentinel "NO REFERENCE RETRIEVED".
"""

from __future__ import annotations

from typing import Sequence

from ..backends import ChatRequest, ImagePart, Message, TextPart
from ..kb import Chunk
from ..templates import load_judge_template

NO_REFERENCE = "NO REFERENCE RETRIEVED"


class JudgePromptError(Exception):
    """A required prompt slot is missing."""


def _rag_text(rag_chunks: Sequence[Chunk]) -> str:
    if not rag_chunks:
        return NO_REFERENCE
    return "\n\n".join(chunk.text for chunk in rag_chunks)


def build_rep_prompt(
    images: Sequence[ImagePart],
    rag_chunks: Sequence[Chunk],
    model_output: str,
    *,
    label: str | None = None,
    tag: str = "",
    temperature: float = 0.0,
) -> ChatRequest:
    """25-point rubric request: system rubric + images + reference + model output."""
    if not model_output:
        raise JudgePromptError("model_output must be non-empty")
    system = load_judge_template("rep_system")
    user_text = load_judge_template("rep_user").format(
        rag_knowledge=_rag_text(rag_chunks), model_output=model_output
    )
    if label:
        user_text += f"\n- Standard Answer (Label): {label}"
    return ChatRequest(
        messages=(
            Message(role="system", parts=(TextPart(system),)),
            Message(role="user", parts=(TextPart(user_text), *images)),
        ),
        request_tag=tag,
        temperature=temperature,
    )


def build_reason_prompt(
    case_text: str,
    rag_chunks: Sequence[Chunk],
    label: str,
    model_output: str,
    *,
    images: Sequence[ImagePart] = (),
    tag: str = "",
    temperature: float = 0.0,
) -> ChatRequest:
    """45-point rubric request; the gold label is mandatory for this rubric."""
    if not label:
        raise JudgePromptError("45-point rubric judging requires the gold label")
    for name, value in (("case_text", case_text), ("model_output", model_output)):
        if not value:
            raise JudgePromptError(f"{name} must be non-empty")
    system = load_judge_template("reason_system")
    user_text = load_judge_template("reason_user").format(
        text_case=case_text,
        rag_content=_rag_text(rag_chunks),
        label_content=label,
        model_output=model_output,
    )
    return ChatRequest(
        messages=(
            Message(role="system", parts=(TextPart(system),)),
            Message(role="user", parts=(TextPart(user_text), *images)),
        ),
        request_tag=tag,
        temperature=temperature,
    )
