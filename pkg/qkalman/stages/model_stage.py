import warnings

from qkalman.errors import InternalConsistencyError, SymmetrizationWarning
from qkalman.models.system_context import Severity, SystemContext
from qkalman.stages.base_stage import BaseStage
from qkalman.system_model import (
    build_general,
    build_passive,
    build_real,
    check_realizability,
    embed_passive,
    to_complex,
    to_real,
)


class ModelStage(BaseStage):
    """
    The Model Stage builds the linear quantum system described by the spec,
    in every representation the later stages need, and records the
    physical realizability residuals of each.
    """

    def __init__(self):
        super().__init__(stage_id="Model Stage")

    def run(self, context: SystemContext) -> SystemContext:
        spec = context.spec
        tol = context.tolerance
        self.log_trace(context, "Building system", {"representation": spec.representation})

        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", SymmetrizationWarning)
            if spec.representation == "passive":
                passive = build_passive(spec.matrix("Omega_minus"), spec.matrix("Cminus"), tol, name=spec.name)
                context.passive_system = passive
                context.system = embed_passive(passive, tol)
                context.real_system = to_real(context.system, tol)
            elif spec.representation == "complex":
                context.system = build_general(
                    spec.matrix("Omega_minus"), spec.matrix("Omega_plus"), spec.matrix("Cminus"), spec.matrix("Cplus"), tol, name=spec.name
                )
                context.real_system = to_real(context.system, tol)
            else:
                context.real_system = build_real(spec.matrix("H"), spec.matrix("C"), tol, name=spec.name)
                context.system = to_complex(context.real_system, tol)

        for warning in caught:
            if issubclass(warning.category, SymmetrizationWarning):
                warnings.warn(str(warning.message), SymmetrizationWarning)
                self.add_finding(context, "SYMMETRIZED", Severity.INFO, "Input symmetrized", str(warning.message))

        reports = []
        if context.passive_system is not None:
            p = context.passive_system
            reports.append(check_realizability(p.A, p.B, p.C, "passive", tol))
        reports.append(check_realizability(context.system.A, context.system.B, context.system.C, "complex", tol))
        r = context.real_system
        reports.append(check_realizability(r.A, r.B, r.C, "real", tol))
        context.realizability = reports

        self.log_trace(context, "System built", {
            "n": context.system.n,
            "m": context.system.m,
            "realizability": {rep.representation: rep.residuals for rep in reports},
        })

        failed = [rep for rep in reports if not rep.passed]
        if failed:
            residuals = {f"{rep.representation}_{k}": v for rep in failed for k, v in rep.residuals.items()}
            raise InternalConsistencyError("system is not physically realizable", residuals=residuals)
        return context
