"""soundmatch: benchmark framework for differentiable, iterative sound matching.

Four two-parameter synthesizers are matched to in-domain targets by gradient
descent under four interchangeable differentiable loss functions; outcomes
are scored automatically and by blinded listening tests, then ranked by a
bootstrap + Kruskal-Wallis + Scott-Knott pipeline.
"""

__version__ = "0.1.0"

from .dual import Dual, lift  # noqa: F401
from .kernels import SAMPLE_RATE, SIGNAL_LENGTH  # noqa: F401
