"""Style-conditioned trajectory dataset construction and evaluation.

Sampling planner with per-style cost weights, robust per-style conformance
filtering, instruction-dataset emission, hybrid training losses and
open-loop metrics.
"""

__version__ = "0.1.0"
