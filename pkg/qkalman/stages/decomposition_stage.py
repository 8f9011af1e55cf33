from qkalman.decomposition import decompose, decompose_passive
from qkalman.errors import ToleranceError
from qkalman.models.system_context import SystemContext
from qkalman.stages.base_stage import BaseStage


class DecompositionStage(BaseStage):
    """
    The Decomposition Stage builds the transformations and canonical forms.

    Passive specs go through the passive path and, as a cross-check, through
    the general path on the embedded system; the two must agree on every
    subsystem dimension.
    """

    def __init__(self):
        super().__init__(stage_id="Decomposition Stage")

    def run(self, context: SystemContext) -> SystemContext:
        tol = context.tolerance
        general = decompose(context.system, tol, subspaces=context.subspaces)
        self.log_trace(context, "General decomposition completed", general.dims())
        self.log_checks(
            context,
            "Canonical form residuals",
            {k: v for k, v in general.checks.items() if k.startswith(("zero_", "realizability_", "gram_", "markov_"))},
            "zero_tol",
        )

        if context.passive_system is None:
            context.result = general
            return context

        passive = decompose_passive(context.passive_system, tol)
        self.log_trace(context, "Passive decomposition completed", passive.dims())
        context.cross_check = {
            "general_dims": general.dims(),
            "passive_dims": passive.dims(),
            "agree": general.dims() == passive.dims(),
        }
        if not context.cross_check["agree"]:
            raise ToleranceError(
                "passive and general decompositions disagree",
                residuals={**{f"general_{k}": v for k, v in general.dims().items()}, **{f"passive_{k}": v for k, v in passive.dims().items()}},
            )
        context.result = passive.model_copy(update={"subspaces": general.subspaces})
        return context
