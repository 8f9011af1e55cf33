from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field

from qkalman.analysis import BAEReport, ModeClassification, PassiveDFSReport, SpecialCaseFlags
from qkalman.decomposition import KalmanResult
from qkalman.matrix_core import DEFAULT_TOLERANCE, StructureTolerance
from qkalman.models.report import DecompositionReport
from qkalman.models.spec_file import SystemSpecFile
from qkalman.subspaces import KalmanSubspaces
from qkalman.system_model import PassiveQLSystem, QLSystem, RealizabilityReport, RealQLSystem


class Severity(str, Enum):
    INFO = "Info"
    WARNING = "Warning"
    ERROR = "Error"


class OutputFormat(str, Enum):
    JSON = "json"
    TEXT = "text"


class Finding(BaseModel):
    stage_id: str
    rule_id: str
    severity: Severity
    title: str
    message: str
    field_path: Optional[str] = None


class SystemContext(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    # Input data
    raw_spec: str
    spec_path: Optional[str] = None
    output_format: OutputFormat = OutputFormat.JSON
    check_only: bool = False

    # Tolerance sources below the spec file (config file) and above it (env, CLI)
    config_path: Optional[str] = None
    cli_overrides: Dict[str, Optional[float]] = Field(default_factory=dict)
    tolerance: StructureTolerance = DEFAULT_TOLERANCE

    # Parsed and built systems
    spec: Optional[SystemSpecFile] = None
    checksum: Optional[str] = None
    system: Optional[QLSystem] = None
    passive_system: Optional[PassiveQLSystem] = None
    real_system: Optional[RealQLSystem] = None
    realizability: List[RealizabilityReport] = Field(default_factory=list)

    # Decomposition results
    subspaces: Optional[KalmanSubspaces] = None
    result: Optional[KalmanResult] = None
    cross_check: Dict[str, Any] = Field(default_factory=dict)

    # Analysis results
    modes: Optional[ModeClassification] = None
    bae_reports: List[BAEReport] = Field(default_factory=list)
    special_cases: Optional[SpecialCaseFlags] = None
    passive_dfs: Optional[PassiveDFSReport] = None
    findings: List[Finding] = Field(default_factory=list)

    # Output
    report: Optional[DecompositionReport] = None
    responses: List[Dict[str, Any]] = Field(default_factory=list)

    # Tracing and debugging
    trace_log: List[Dict[str, Any]] = Field(default_factory=list)
