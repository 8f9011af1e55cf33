from qkalman.models.system_context import SystemContext
from qkalman.stages.base_stage import BaseStage
from qkalman.subspaces import kalman_subspaces, passive_subspaces


class SubspaceStage(BaseStage):
    """
    The Subspace Stage computes the four Kalman subspaces of the general
    system, plus the controllable/DFS split for passive specs.
    """

    def __init__(self):
        super().__init__(stage_id="Subspace Stage")

    def run(self, context: SystemContext) -> SystemContext:
        tol = context.tolerance
        self.log_trace(context, "Computing Kalman subspaces", {"n": context.system.n})

        spaces = kalman_subspaces(context.system, tol)
        context.subspaces = spaces
        self.log_trace(context, "Kalman subspaces computed", {"n1": spaces.n1, "n2": spaces.n2, "n3": spaces.n3})
        orthogonality = {k: v for k, v in spaces.checks.items() if k.startswith("orth_")}
        self.log_checks(context, "Subspace orthogonality", orthogonality, "zero_tol")
        self.log_checks(context, "Subspace J-mapping and kernel identities", {k: v for k, v in spaces.checks.items() if k not in orthogonality}, "angle_tol")

        if context.passive_system is not None:
            controllable, uncontrollable = passive_subspaces(context.passive_system, tol)
            self.log_trace(context, "Passive subspaces computed", {
                "controllable": controllable.dim,
                "decoherence_free": uncontrollable.dim,
            })
        return context
