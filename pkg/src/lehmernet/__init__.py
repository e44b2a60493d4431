"""Neural networks built on weighted Lehmer-mean activation units.

The public surface:

* :mod:`lehmernet.transforms` — real/complex weighted Lehmer means with
  trainable-friendly parameterizations (softplus weights, range squashing).
* :mod:`lehmernet.gradients` — closed-form derivatives plus the
  finite-difference oracle used to verify them.
* :mod:`lehmernet.layers` — hand-backpropagated layers (LAU banks, dense,
  conv/batchnorm/pool) and binary checkpoints.
* :mod:`lehmernet.training` — optimizers, the training loop, stratified
  cross-validation and JSONL metrics files.
* :mod:`lehmernet.estimators` — scikit-learn compatible wrappers.
* :mod:`lehmernet.cli` — the ``lehmernet`` command.
"""

from .estimators import (
    LehmerConvNetClassifier,
    LehmerNetClassifier,
    LehmerRangeScaler,
)
from .gradients import (
    ComplexGradients,
    finite_diff_check,
    grad2_s_real,
    grad_complex,
    grad_relau,
    grad_s_real,
    grad_softplus,
    grad_w_real,
    grad_x_real,
)
from .transforms import (
    DomainError,
    RangeStats,
    euler_form_equivalence_check,
    lehmer_complex,
    lehmer_real,
    relau,
    softplus_weights,
    squash_to_lehmer_range,
    standardize_apply,
    standardize_fit,
)

__version__ = "0.1.0"

__all__ = [
    "ComplexGradients",
    "DomainError",
    "LehmerConvNetClassifier",
    "LehmerNetClassifier",
    "LehmerRangeScaler",
    "RangeStats",
    "euler_form_equivalence_check",
    "finite_diff_check",
    "grad2_s_real",
    "grad_complex",
    "grad_relau",
    "grad_s_real",
    "grad_softplus",
    "grad_w_real",
    "grad_x_real",
    "lehmer_complex",
    "lehmer_real",
    "relau",
    "softplus_weights",
    "squash_to_lehmer_range",
    "standardize_apply",
    "standardize_fit",
    "__version__",
]
