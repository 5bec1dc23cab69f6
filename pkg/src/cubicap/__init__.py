"""Descendant trees of finite 3-groups, Artin transfer patterns, and the
genus-field combinatorics of cyclic cubic number fields."""

from ._kernels import IMPLEMENTATION as kernel_implementation

__version__ = "0.1.0"
__all__ = ["kernel_implementation", "__version__"]
