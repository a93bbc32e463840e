"""Python access to the fata core: prompt rendering, question parsing and
the evaluation statistics."""

import json as _json

from . import _core
from ._core import (
    Error,
    batch_sizes,
    classify_dimension,
    coefficient_of_variation,
    component_anchors,
    effect_size_label,
    f1_prompt,
    kendall_tau,
    mean_improvement,
    paired_t_test,
    solicits_sensitive_data,
    stability_row,
    t_sf,
)

__all__ = [
    "Error",
    "batch_sizes",
    "classify_dimension",
    "coefficient_of_variation",
    "component_anchors",
    "effect_size_label",
    "f1_prompt",
    "f2_prompt",
    "kendall_tau",
    "mean_improvement",
    "paired_t_test",
    "parse_questions",
    "render_questions",
    "report",
    "solicits_sensitive_data",
    "stability_row",
    "t_sf",
]


def parse_questions(raw, case_ref="", max_questions=10):
    """Parse stage-one model output into a question-set dict."""
    return _json.loads(_core.parse_questions_json(raw, case_ref, max_questions))


def render_questions(question_set):
    """Canonical numbered list for a question-set dict."""
    return _core.render_questions_json(_json.dumps(question_set))


def f2_prompt(query, question_set, answers, declined=(), variant="standard"):
    """Stage-two prompt. `answers` maps question index to the user's text."""
    payload = {
        "case_ref": question_set.get("case_ref", ""),
        "entries": {str(k): v for k, v in answers.items()},
        "declined": sorted(declined),
    }
    return _core.f2_prompt_json(query, _json.dumps(question_set), _json.dumps(payload), variant)


def report(scores_path, grouping="industry"):
    """Statistics report for a score file, as a dict."""
    return _json.loads(_core.report_json(str(scores_path), grouping))
