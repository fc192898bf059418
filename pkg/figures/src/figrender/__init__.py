"""Figure rendering for the experiment CSV outputs.

Consumes only the published CSV schemas (comment header, named columns);
it has no dependency on the simulation package itself.
"""

from figrender.figures import DEFAULT_LABELS, SCHEMAS, FigureSpec, render
from figrender.tables import InputError, Table, read_table

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_LABELS",
    "FigureSpec",
    "InputError",
    "SCHEMAS",
    "Table",
    "read_table",
    "render",
    "__version__",
]
