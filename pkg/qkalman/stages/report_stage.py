import json
from typing import Any, Dict, List, Sequence

import numpy as np

from qkalman.matrix_core import block_slices
from qkalman.models.report import DecompositionReport, decode_matrix, encode_matrix
from qkalman.models.spec_file import emit_spec
from qkalman.models.system_context import OutputFormat, SystemContext
from qkalman.stages.base_stage import BaseStage

SEVERITY_SYMBOLS = {"Info": "ℹ️", "Warning": "⚠️", "Error": "❌"}

# Coefficients below this are omitted when printing variables.
PRINT_FLOOR = 1e-12


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (complex, np.complexfloating)):
        return [float(value.real), float(value.imag)]
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    return value


def build_report(context: SystemContext) -> DecompositionReport:
    """Collect everything the pipeline produced into one serializable report."""
    spec = context.spec
    report = DecompositionReport(
        name=spec.name,
        representation=spec.representation,
        n=spec.n,
        m=spec.m,
        checksum=context.checksum,
        input=json.loads(emit_spec(spec)),
        tolerances=context.tolerance.model_dump(),
        realizability={r.representation: r.residuals for r in context.realizability},
        passed=all(r.passed for r in context.realizability),
        findings=[_jsonable(f.model_dump(mode="json")) for f in context.findings],
    )
    result = context.result
    if result is None:
        return report

    real = result.real_form
    update: Dict[str, Any] = {
        "dims": result.dims(),
        "transformations": {
            key: encode_matrix(value)
            for key, value in (("T_tilde", result.T_tilde), ("T", result.T), ("S_tilde", result.S_tilde), ("S", result.S), ("Pi", result.Pi))
        },
        "complex_blocks": {k: encode_matrix(v) for k, v in result.complex_form.blocks.items()},
        "real_blocks": {k: encode_matrix(v) for k, v in real.blocks.items()},
        "labels": list(real.labels),
        "rearranged": {"A": encode_matrix(real.rearranged_A), "B": encode_matrix(real.rearranged_B), "C": encode_matrix(real.rearranged_C)},
        "rearranged_labels": list(real.rearranged_labels),
        "variables": {k: [float(x) for x in v] for k, v in result.variables.items()},
        "mode_coefficients": {k: _jsonable(list(v)) for k, v in result.modes.items()},
        "cross_check": _jsonable(context.cross_check),
        "checks": {k: float(v) for k, v in result.checks.items()},
    }
    if result.passive_form is not None:
        p = result.passive_form
        update["passive_blocks"] = {
            "T_passive": encode_matrix(p.T),
            "A_co": encode_matrix(p.A_co),
            "A_df": encode_matrix(p.A_df),
            "B_co": encode_matrix(p.B_co),
            "C_co": encode_matrix(p.C_co),
        }
    if context.modes is not None:
        update["classification"] = _jsonable(context.modes.model_dump())
    update["bae"] = [_jsonable(r.model_dump()) for r in context.bae_reports]
    if context.special_cases is not None:
        update["special_cases"] = _jsonable(context.special_cases.model_dump())
    if context.passive_dfs is not None:
        update["passive_dfs"] = _jsonable(context.passive_dfs.model_dump())
    return report.model_copy(update=update)


def _format_number(x: float) -> str:
    return f"{x:>9.4f}"


def _format_matrix(X: np.ndarray, row_labels: Sequence[str], col_labels: Sequence[str], row_sizes: Sequence[int], col_sizes: Sequence[int]) -> List[str]:
    """Render a real matrix with labels and partition rules between blocks."""
    col_cuts = {s.stop for s in block_slices(list(col_sizes))[:-1] if s.stop}
    row_cuts = {s.stop for s in block_slices(list(row_sizes))[:-1] if s.stop}
    width = max([len(label) for label in row_labels] + [4])

    def cells(values: Sequence[str]) -> str:
        out = ""
        for j, value in enumerate(values):
            if j in col_cuts:
                out += " |"
            out += f" {value:>9}"
        return out

    header = " " * width + cells(list(col_labels))
    lines = [header]
    for i, label in enumerate(row_labels):
        if i in row_cuts:
            lines.append("-" * len(header))
        lines.append(f"{label:<{width}}" + cells([_format_number(x) for x in X[i]]))
    return lines


def _format_variable(coefficients: Sequence[float], n: int) -> str:
    names = [f"q{i + 1}" for i in range(n)] + [f"p{i + 1}" for i in range(n)]
    terms = []
    for c, name in zip(coefficients, names):
        if abs(c) <= PRINT_FLOOR:
            continue
        sign = "-" if c < 0 else "+"
        terms.append(f"{sign} {abs(c):.4f} {name}")
    if not terms:
        return "0"
    text = " ".join(terms)
    return text[2:] if text.startswith("+ ") else text


def render_text(report: DecompositionReport) -> str:
    report_lines = ["qkalman - Kalman Decomposition Report", "=" * 45, ""]
    report_lines.append(f"System: {report.name or '(unnamed)'} ({report.representation}, n={report.n}, m={report.m})")
    report_lines.append(f"Checksum: {report.checksum}")
    report_lines.append("")

    report_lines.append("Realizability Residuals:")
    report_lines.append("-" * 24)
    for representation, residuals in report.realizability.items():
        details = ", ".join(f"{k}={v:.3e}" for k, v in residuals.items())
        report_lines.append(f"• {representation}: {details}")
    report_lines.append(f"• Verdict: {'PASS' if report.passed else 'FAIL'}")
    report_lines.append("")

    if report.dims:
        d = report.dims
        report_lines.append("Dimensions:")
        report_lines.append("-" * 11)
        report_lines.append(f"• co modes (n1): {d['n1']}")
        report_lines.append(f"• decoherence-free modes (n2): {d['n2']}")
        report_lines.append(f"• h-sector (n3): {d['n3']} (n_a={d['na']}, n_b={d['nb']})")
        report_lines.append("")

        report_lines.append("Canonical Variables:")
        report_lines.append("-" * 20)
        for name in report.labels:
            report_lines.append(f"• {name} = {_format_variable(report.variables[name], report.n)}")
        report_lines.append("")

        n3, n1, n2 = d["n3"], d["n1"], d["n2"]
        sizes = [n3, 2 * n1, 2 * n2, n3]
        labels = report.rearranged_labels
        outputs = [f"q_out{i + 1}" for i in range(report.m)] + [f"p_out{i + 1}" for i in range(report.m)]
        inputs = [f"q_in{i + 1}" for i in range(report.m)] + [f"p_in{i + 1}" for i in range(report.m)]
        report_lines.append("Real Canonical Form (q_h, x_co, x_c̄ō, p_h):")
        report_lines.append("-" * 44)
        report_lines.append("A =")
        report_lines.extend(_format_matrix(decode_matrix(report.rearranged["A"]), labels, labels, sizes, sizes))
        if report.m:
            report_lines.append("B =")
            report_lines.extend(_format_matrix(decode_matrix(report.rearranged["B"]), labels, inputs, sizes, [2 * report.m]))
            report_lines.append("C =")
            report_lines.extend(_format_matrix(decode_matrix(report.rearranged["C"]), outputs, labels, [2 * report.m], sizes))
        report_lines.append("")

    if report.classification:
        c = report.classification
        report_lines.append("Mode Classification:")
        report_lines.append("-" * 20)
        df = ", ".join(f"({q}, {p})" for q, p in c["df_modes"]) or "none"
        report_lines.append(f"• Decoherence-free modes: {df}")
        report_lines.append(f"• QND variables: {', '.join(c['qnd_variables']) or 'none'}")
        pairs = ", ".join(f"{q} <-> {p}" for q, p in c["conjugate_pairing"].items()) or "none"
        report_lines.append(f"• Conjugate pairs: {pairs}")
        report_lines.append(f"• DF block decoupled: {'yes' if c['df_decoupled'] else 'no'}")
        report_lines.append("")

    if report.bae:
        report_lines.append("BAE Verdicts:")
        report_lines.append("-" * 13)
        for bae in report.bae:
            order = bae["first_nonzero_order"]
            suffix = "" if order is None else f" (first nonzero Markov order {order})"
            report_lines.append(f"• {bae['direction']}: {'BAE' if bae['verdict'] else 'no BAE'}{suffix}")
        report_lines.append("")

    if report.special_cases:
        s = report.special_cases
        report_lines.append("Special Cases:")
        report_lines.append("-" * 14)
        report_lines.append(f"• Ker(O_s) invariant under Ω: {'yes' if s['omega_invariant'] else 'no'} (residual {s['omega_invariance_residual']:.3e})")
        report_lines.append(f"• Ker(C)⊥ orthogonal to Ker(O_s J): {'yes' if s['output_orthogonal'] else 'no'} (overlap {s['output_overlap']:.3e})")
        report_lines.append("")

    if report.passive_dfs:
        p = report.passive_dfs
        report_lines.append("Passive DFS Cross-check:")
        report_lines.append("-" * 24)
        report_lines.append(f"• Hurwitz: {'yes' if p['hurwitz'] else 'no'}; DFS dimension {p['dfs_dim']}")
        for cluster in p["clusters"]:
            re, im = cluster["eigenvalue"]
            report_lines.append(f"• λ = {re:.4f}{im:+.4f}i (algebraic {cluster['algebraic']}, geometric {cluster['geometric']})")
        report_lines.append("")

    if report.findings:
        report_lines.append("Findings:")
        report_lines.append("-" * 9)
        for i, finding in enumerate(report.findings, 1):
            symbol = SEVERITY_SYMBOLS.get(finding["severity"], "•")
            report_lines.append(f"{i}. {symbol} {finding['title']}")
            report_lines.append(f"   {finding['message']}")
        report_lines.append("")

    return "\n".join(report_lines)


def emit_report(report: DecompositionReport, output_format: OutputFormat = OutputFormat.JSON) -> bytes:
    """Serialize a report as canonical JSON or as the human-readable text layout."""
    if OutputFormat(output_format) == OutputFormat.TEXT:
        return render_text(report).encode("utf-8")
    return (json.dumps(report.model_dump(mode="json"), indent=2) + "\n").encode("utf-8")


class ReportStage(BaseStage):
    """
    The Report Stage assembles the DecompositionReport and renders it in the requested format.
    """

    def __init__(self):
        super().__init__(stage_id="Report Stage")

    def run(self, context: SystemContext) -> SystemContext:
        self.log_trace(context, "Starting report", {"format": context.output_format.value, "findings": len(context.findings)})

        report = build_report(context)
        context.report = report
        context.responses.append(
            {"type": "decomposition_report", "format": context.output_format.value, "content": emit_report(report, context.output_format).decode("utf-8")}
        )

        self.log_trace(context, "Report completed")
        return context
