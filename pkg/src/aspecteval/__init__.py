"""Multi-aspect evaluation of generated text.

The package covers the whole loop: turn human rating datasets into
instruction-tuning tasks (``forge``), score outputs with auxiliary-aspect
help against a pluggable model backend (``engine``), and correlate the
scores with human judgements (``metaeval``).
"""

from __future__ import annotations

__version__ = "0.1.0"

from .domain import Aspect, AspectCatalog, InstructionTask, RatingRecord, TaskType, default_catalog, load_catalog
from .engine import Engine, EvaluationRequest, InjectionMode, evaluate_with_auxiliary, score_boolean
from .errors import AspectEvalError, BackendError, DataError, UsageError
from .metaeval import kendall_tau_b, pearson, run_metaeval, spearman
from .selector import PoolMode, select_top_k
from .verbalizer import verbalize

__all__ = [
    "Aspect",
    "AspectCatalog",
    "AspectEvalError",
    "BackendError",
    "DataError",
    "Engine",
    "EvaluationRequest",
    "InjectionMode",
    "InstructionTask",
    "PoolMode",
    "RatingRecord",
    "TaskType",
    "UsageError",
    "__version__",
    "default_catalog",
    "evaluate_with_auxiliary",
    "kendall_tau_b",
    "load_catalog",
    "pearson",
    "run_metaeval",
    "score_boolean",
    "select_top_k",
    "spearman",
    "verbalize",
]
