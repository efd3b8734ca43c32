"""Self-supervised learning with von Mises-Fisher kernel entropy estimates on the hypersphere."""

from .objective import EmbeddingBatch, LossWeights, global_entropy, local_entropy, mi_gradient, mi_objective
from .sphere import KernelParams, log_vmf_kernel, log_vmf_normalizer, project_to_sphere

__all__ = [
    "EmbeddingBatch",
    "KernelParams",
    "LossWeights",
    "global_entropy",
    "local_entropy",
    "log_vmf_kernel",
    "log_vmf_normalizer",
    "mi_gradient",
    "mi_objective",
    "project_to_sphere",
]
__version__ = "0.1.0"
