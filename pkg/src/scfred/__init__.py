"""Desk-scale laboratory for scale calculus, gluing, contraction germs,
Morse moduli and degeneration algebra.

Submodules: ``scspace``, ``splicing``, ``germ``, ``morse``, ``degen``,
``sftsym``, ``algebra`` and the ``cli`` driver.
"""

from ._kernels import BACKEND
from .errors import ScfredError

__version__ = "0.1.0"

__all__ = ["BACKEND", "ScfredError", "__version__"]
