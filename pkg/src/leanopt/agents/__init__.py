"""Classification, workflow generation and model generation agents."""
from .formatting import MissingColumnError, as_tables, csv_schema_snapshot, format_retrieved_data
from .pipeline import (
    AGNOSTIC,
    TAILORED,
    Classification,
    GenerationResult,
    ModelParseError,
    NoDemoError,
    Pipeline,
    PipelineError,
    PipelineResult,
    WorkflowPrompt,
    build_agnostic_workflow,
    build_tailored_workflow,
    classify,
    csvqa_tool,
    generate_model,
    route,
    select_demo,
)
from .plan import AbstractPlan, PlanError, SchemaReader, compile_plan, parse_plan
from .prompts import PROMPT_SLOTS, PromptError, extract_slots, load_prompt, render

__all__ = [
    "MissingColumnError", "as_tables", "csv_schema_snapshot", "format_retrieved_data",
    "AGNOSTIC", "TAILORED", "Classification", "GenerationResult", "ModelParseError", "NoDemoError",
    "Pipeline", "PipelineError", "PipelineResult", "WorkflowPrompt", "build_agnostic_workflow",
    "build_tailored_workflow", "classify", "csvqa_tool", "generate_model", "route", "select_demo",
    "AbstractPlan", "PlanError", "SchemaReader", "compile_plan", "parse_plan",
    "PROMPT_SLOTS", "PromptError", "extract_slots", "load_prompt", "render",
]
