"""Reduced-order modeling for parametrized distributed optimal control.

Subpackages are imported explicitly (``socrom.fem``, ``socrom.ddrom``, ...)
so that the data-driven fitter can be used without the finite element stack.
"""

__version__ = "0.1.0"
