from mats_sql.agents.fixer import edit_feedback, error_feedback, fix
from mats_sql.agents.parsing import extract_sql, parse_choice, parse_verdict
from mats_sql.agents.planner import plan_candidates
from mats_sql.agents.prompts import AgentContext, format_response
from mats_sql.agents.selector import dedup_candidates, select_best
from mats_sql.agents.validator import validate

__all__ = [
    "AgentContext",
    "dedup_candidates",
    "edit_feedback",
    "error_feedback",
    "extract_sql",
    "fix",
    "format_response",
    "parse_choice",
    "parse_verdict",
    "plan_candidates",
    "select_best",
    "validate",
]
