"""Versioned prompt templates shipped as package data files."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

STAGE_TEMPLATES = (
    "rec_instruction",
    "rep_stage1",
    "rep_stage2",
    "reason_stage1",
    "reason_stage2",
)
JUDGE_TEMPLATES = ("rep_system", "rep_user", "reason_system", "reason_user")
LANGUAGES = ("en", "zh")


class TemplateError(Exception):
    """Requested template file is missing from the package data."""


@lru_cache(maxsize=None)
def load_stage_template(name: str, language: str = "en") -> str:
    if name not in STAGE_TEMPLATES:
        raise TemplateError(f"unknown stage template {name!r}")
    if language not in LANGUAGES:
        raise TemplateError(f"unknown template language {language!r}")
    return _read(f"templates/{language}/{name}.txt")


@lru_cache(maxsize=None)
def load_judge_template(name: str) -> str:
    if name not in JUDGE_TEMPLATES:
        raise TemplateError(f"unknown judge template {name!r}")
    return _read(f"templates/judge/{name}.txt")


def _read(relpath: str) -> str:
    ref = resources.files("tcmderm").joinpath("data", relpath)
    try:
        return ref.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise TemplateError(f"template data file missing: {relpath}") from exc
