"""wslkit: a wide-spectrum-language transformation toolkit.

The package turns IBM 370 assembler modules into tree-structured programs,
restructures them with a catalog of proven rewrite rules, and supports
interactive migration of the result towards an executable specification.
"""

__version__ = "0.1.0"

from .nodes import Program  # noqa: F401
