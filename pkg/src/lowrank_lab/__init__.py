"""Desk-scale laboratory for low-rank structure in gradient training.

Subsystems: deterministic dense linear algebra (``linalg``), deep linear
networks and tiny MLPs with manual gradients (``network``), low-rank adapter
families (``adapters``), projected low-rank optimizers (``optim``),
regularization-equivalence certificates (``regeq``), and the experiment
runner behind the ``lowrank-lab`` CLI (``runner``).
"""

from lowrank_lab._backend import HAVE_COMPILED

__version__ = "0.1.0"

__all__ = ["HAVE_COMPILED", "__version__"]
