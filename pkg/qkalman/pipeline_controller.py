import sys
from typing import Dict, Optional

from qkalman.errors import QKalmanError
from qkalman.models.system_context import OutputFormat, SystemContext
from qkalman.stages.analysis_stage import AnalysisStage
from qkalman.stages.decomposition_stage import DecompositionStage
from qkalman.stages.model_stage import ModelStage
from qkalman.stages.parser_stage import ParserStage
from qkalman.stages.report_stage import ReportStage
from qkalman.stages.subspace_stage import SubspaceStage


def notice(message: str):
    print(f"[QKALMAN] {message}", file=sys.stderr)


class PipelineController:
    """
    Main pipeline controller that runs the stages in sequence on a shared SystemContext.

    Progress goes to stderr so that stdout carries only the report.
    """

    def __init__(
        self,
        output_format: OutputFormat = OutputFormat.JSON,
        cli_overrides: Optional[Dict[str, Optional[float]]] = None,
        config_path: Optional[str] = None,
        check_only: bool = False,
        quiet: bool = False,
    ):
        self.output_format = OutputFormat(output_format)
        self.cli_overrides = dict(cli_overrides or {})
        self.config_path = config_path
        self.check_only = check_only
        self.quiet = quiet
        self.last_context: Optional[SystemContext] = None

        self.stages = [ParserStage(), ModelStage()]
        if not check_only:
            self.stages.extend([SubspaceStage(), DecompositionStage(), AnalysisStage()])
        self.stages.append(ReportStage())

    def _progress(self, message: str):
        if not self.quiet:
            print(message, file=sys.stderr)

    def run_pipeline(self, spec_content: str, spec_path: Optional[str] = None) -> SystemContext:
        """
        Execute the full pipeline.

        Args:
            spec_content: The JSON spec document
            spec_path: Optional path to the spec file (for tracing)

        Returns:
            The final SystemContext with all results

        Raises:
            QKalmanError: from the first failing stage, tagged with its stage id
        """
        context = SystemContext(
            raw_spec=spec_content,
            spec_path=spec_path,
            output_format=self.output_format,
            check_only=self.check_only,
            config_path=self.config_path,
            cli_overrides=self.cli_overrides,
        )

        self._progress(f"Starting analysis with {len(self.stages)} stages...")

        for stage in self.stages:
            self._progress(f"Running {stage.stage_id}...")
            try:
                context = stage.run(context)
            except QKalmanError as e:
                if e.stage is None:
                    e.stage = stage.stage_id
                context.trace_log.append({"stage_id": stage.stage_id, "operation": "Stage failed", "details": e.to_dict()})
                self.last_context = context
                raise

        self.last_context = context
        self._progress("Analysis pipeline completed.")
        return context


def run_pipeline(spec_content: str, **options) -> SystemContext:
    """Run the full pipeline with default stages and return the final context."""
    return PipelineController(**options).run_pipeline(spec_content)
