"""Tool-integrated table reasoning workflow engine.

Pipeline: parse -> preprocess -> sense -> tool-integrated reasoning -> decode,
plus corpus-quality filtering, QA synthesis, and group-relative policy
optimization math. See the README for the CLI and HTTP service surfaces.
"""

from .table import (
    MergeRegion,
    ProcessedTable,
    QualityReport,
    RawTable,
    check_collection_standards,
    parse_table,
    serialize_csv,
)
from .preprocess import (
    HeaderClass,
    NoBodyRows,
    PreprocessConfig,
    SplitTable,
    TooSparse,
    classify_header,
    clean_body,
    preprocess,
    resolve_missing,
    split_header_body,
    standardize_header,
)
from .sensing import (
    ColumnType,
    SensePolicy,
    TableMetadata,
    infer_column_type,
    render_metadata,
    sense,
)
from .orchestrator import (
    Answer,
    Mode,
    ReasoningTrace,
    SessionInput,
    Step,
    TableRef,
    ToolRegistry,
    TraceStatus,
    build_context,
    decode_answer,
    parse_model_output,
    run_session,
)
from .sandbox import ExecRequest, ExecStatus, SandboxConfig, SandboxExecutor, ToolResult
from .charttool import ChartAsset, ChartCall, RenderError, SchemaError, render, validate_call
from .backend import BackendError, HttpBackend, ModelBackend, ScriptedBackend
from .grpo import (
    GroupRollout,
    GrpoConfig,
    RewardBreakdown,
    compute_reward,
    group_advantages,
    grpo_objective,
    token_ratios,
)

__version__ = "0.1.0"
