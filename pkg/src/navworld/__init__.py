"""Goal-driven maze navigation agents with self-supervised auxiliary losses.

Subpackages:

- ``autodiff``: minimal reverse-mode differentiation, shared flat parameters,
  RMSProp, checkpoints.
- ``world``: the raycast maze simulator (layouts, physics, rendering).
- ``targets``: ground-truth generators for the auxiliary losses.
- ``agent``: the agent architecture family and forward evaluation.
- ``trainer``: asynchronous advantage actor-critic training.
- ``analysis``: position decoding, goal latency, loop F1, learning-curve AUC.
- ``runner``: CLI, config files, and the environment wire protocol.
"""

__version__ = "0.1.0"
