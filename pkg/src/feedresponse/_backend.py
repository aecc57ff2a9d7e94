"""Kernel backend selection.

Imports the compiled extension when present, otherwise the pure-Python
reference kernels. ``FEEDRESPONSE_BACKEND=python`` forces the fallback
(useful for benchmarking and for debugging kernel discrepancies);
``FEEDRESPONSE_BACKEND=compiled`` makes a missing extension an error
instead of a silent fallback.
"""

import os

_choice = os.environ.get("FEEDRESPONSE_BACKEND", "").strip().lower()

if _choice == "python":
    from . import _kernels_py as kernels
    BACKEND = "python"
elif _choice == "compiled":
    from . import _kernels as kernels  # noqa: F401  (ImportError is the point)
    BACKEND = "compiled"
elif _choice == "":
    try:
        from . import _kernels as kernels
        BACKEND = "compiled"
    except ImportError:
        from . import _kernels_py as kernels
        BACKEND = "python"
else:
    raise ImportError(
        f"FEEDRESPONSE_BACKEND={_choice!r} not recognized; "
        "use 'python' or 'compiled'"
    )
