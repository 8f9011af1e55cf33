from abc import ABC, abstractmethod
from typing import Any, Mapping, Optional

from qkalman.models.system_context import Finding, Severity, SystemContext


class BaseStage(ABC):
    """
    One step of the decomposition pipeline.

    A stage reads the systems, subspaces or canonical forms that earlier
    stages left on the SystemContext, adds its own, and records what it
    checked. Structural failures are raised as QKalmanError subclasses and
    tagged with the stage id by the controller.
    """

    def __init__(self, stage_id: str):
        self.stage_id = stage_id

    @abstractmethod
    def run(self, context: SystemContext) -> SystemContext:
        """
        Run this step of the decomposition on the context.

        Args:
            context: The SystemContext shared by all stages

        Returns:
            The same context with this stage's results filled in
        """
        pass

    def log_trace(self, context: SystemContext, operation: str, details: Any = None):
        """
        Append a {"stage_id", "operation", "details"} entry to the trace log.

        Args:
            context: The SystemContext to add the trace to
            operation: What the stage just did, e.g. "Kalman subspaces computed"
            details: Dimensions, residuals or verdicts produced by the operation
        """
        context.trace_log.append({
            "stage_id": self.stage_id,
            "operation": operation,
            "details": details,
        })

    def log_checks(self, context: SystemContext, operation: str, checks: Mapping[str, float], knob: str):
        """
        Trace a group of residuals against one tolerance knob.

        The entry records every residual, the worst one, the knob's value and
        whether the worst residual is within it.
        """
        limit = getattr(context.tolerance, knob)
        worst_name, worst = max(checks.items(), key=lambda item: item[1], default=(None, 0.0))
        self.log_trace(context, operation, {
            "residuals": {name: float(value) for name, value in checks.items()},
            "worst": worst_name,
            "worst_residual": float(worst),
            knob: limit,
            "within_tolerance": bool(worst <= limit),
        })

    def add_finding(
        self,
        context: SystemContext,
        rule_id: str,
        severity: Severity,
        title: str,
        message: str,
        field_path: Optional[str] = None,
    ):
        context.findings.append(
            Finding(stage_id=self.stage_id, rule_id=rule_id, severity=severity, title=title, message=message, field_path=field_path)
        )
