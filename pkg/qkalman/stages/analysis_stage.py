from qkalman.analysis import BAE_DIRECTIONS, bae_check, classify_modes, passive_dfs_report, special_case_flags
from qkalman.models.system_context import Severity, SystemContext
from qkalman.stages.base_stage import BaseStage


class AnalysisStage(BaseStage):
    """
    The Analysis Stage labels the canonical subsystems and runs the BAE and
    special-case checks on the finished decomposition.
    """

    def __init__(self):
        super().__init__(stage_id="Analysis Stage")

    def run(self, context: SystemContext) -> SystemContext:
        tol = context.tolerance
        result = context.result
        self.log_trace(context, "Starting analysis", result.dims())

        modes = classify_modes(result, tol)
        context.modes = modes
        if modes.df_modes:
            names = ", ".join(f"({q}, {p})" for q, p in modes.df_modes)
            self.add_finding(context, "DFS", Severity.INFO, "Decoherence-free subsystem", f"{len(modes.df_modes)} DF mode(s): {names}")
        if modes.qnd_variables:
            self.add_finding(
                context, "QMFS", Severity.INFO, "Quantum mechanics-free subsystem", f"QND variables: {', '.join(modes.qnd_variables)}"
            )
        if not modes.df_decoupled:
            self.add_finding(
                context, "DF_COUPLED", Severity.WARNING, "DF block not decoupled", "x_c̄ō rows of B̄ or columns of C̄ exceed zero_tol"
            )

        context.bae_reports = [bae_check(result, direction, tol) for direction in BAE_DIRECTIONS]
        for report in context.bae_reports:
            if not report.samples_agree:
                self.add_finding(
                    context,
                    "BAE_SAMPLES",
                    Severity.WARNING,
                    "BAE sample disagreement",
                    f"{report.direction}: Markov verdict {report.verdict} disagrees with sampled transfer function",
                )

        context.special_cases = special_case_flags(context.system, result, tol)
        context.passive_dfs = passive_dfs_report(result)
        if context.passive_dfs is not None and not context.passive_dfs.hurwitz_consistent:
            self.add_finding(
                context, "HURWITZ_DFS", Severity.WARNING, "Hurwitz/DFS mismatch", "Hurwitz verdict and DFS dimension are inconsistent"
            )

        self.log_trace(context, "Analysis completed", {
            "df_modes": len(modes.df_modes),
            "qnd_variables": len(modes.qnd_variables),
            "bae": {r.direction: r.verdict for r in context.bae_reports},
            "omega_invariant": context.special_cases.omega_invariant,
            "output_orthogonal": context.special_cases.output_orthogonal,
        })
        return context
