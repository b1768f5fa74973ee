"""Prompt assembly from the versioned templates in ``agents/templates``."""

from functools import cache
from importlib.resources import files
from pathlib import Path
from string import Template
from typing import Sequence

from mats_sql.constants import (
    ELLIPSIS,
    PROMPT_MAX_COLUMNS,
    PROMPT_MAX_ROWS,
    TEMPLATE_VERSION,
    FeedbackKind,
    Status,
)
from mats_sql.models import ExecutionResponse, FrozenModel, QuestionSample


class AgentContext(FrozenModel):
    """What every agent sees of one sample; ``schema_prompt`` is the pruned schema."""

    sample: QuestionSample
    schema_prompt: str
    db_path: Path


@cache
def load_template(name: str) -> Template:
    path = files("mats_sql.agents") / "templates" / f"{name}.txt"
    return Template(path.read_text(encoding="utf-8"))


def render(name: str, ctx: AgentContext, **fields: str) -> str:
    return load_template(name).substitute(
        version=TEMPLATE_VERSION,
        schema=ctx.schema_prompt,
        question=ctx.sample.question,
        **fields,
    )


def format_response(response: ExecutionResponse) -> str:
    """Execution response as shown to agents, cut to 20 rows x 10 columns."""
    if response.status == Status.TIMEOUT:
        return "error: query timed out"
    if response.status == Status.SYNTAX_ERROR:
        return f"error: {response.error_text}"
    rows = response.rows or ()
    if not rows:
        return "empty result (0 rows)"
    lines = []
    for row in rows[:PROMPT_MAX_ROWS]:
        cells = [repr(v) for v in row[:PROMPT_MAX_COLUMNS]]
        if len(row) > PROMPT_MAX_COLUMNS:
            cells.append(ELLIPSIS)
        lines.append("(" + ", ".join(cells) + ")")
    if len(rows) > PROMPT_MAX_ROWS:
        lines.append(ELLIPSIS)
    lines.append(f"{len(rows)} row(s)")
    return "\n".join(lines)


def planner_prompt(ctx: AgentContext) -> str:
    return render("planner", ctx)


def validator_prompt(
    kind: FeedbackKind, ctx: AgentContext, sql: str, response: ExecutionResponse
) -> str:
    return render(
        f"validator_{kind}", ctx, sql=sql, response=format_response(response)
    )


def fix_prompt(
    ctx: AgentContext,
    sql: str,
    response: ExecutionResponse,
    feedback_texts: Sequence[str],
) -> str:
    return render(
        "fix",
        ctx,
        sql=sql,
        response=format_response(response),
        feedback="\n\n".join(text.strip() for text in feedback_texts),
    )


def selection_prompt(
    ctx: AgentContext, candidates: Sequence[tuple[str, ExecutionResponse]]
) -> str:
    blocks = [
        f"Candidate {i}:\n```sql\n{sql}\n```\nExecution response:\n"
        f"{format_response(response)}"
        for i, (sql, response) in enumerate(candidates, start=1)
    ]
    return render("selection", ctx, candidates="\n\n".join(blocks))


def editor_prompt(
    ctx: AgentContext, sql: str, response: ExecutionResponse, feedback_text: str
) -> str:
    return render(
        "feedback_editor",
        ctx,
        sql=sql,
        response=format_response(response),
        feedback=feedback_text.strip(),
    )
