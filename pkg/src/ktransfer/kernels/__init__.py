"""Training-kernel backend selection.

Prefers the compiled Cython extension; falls back to the numpy reference
implementation when the extension is missing or KTRANSFER_PURE_PYTHON=1.
Both backends implement the same contract (see pyref.adam_epoch).
"""

import os

from . import pyref

if os.environ.get("KTRANSFER_PURE_PYTHON", "") == "1":
    adam_epoch = pyref.adam_epoch
    BACKEND = "python"
else:
    try:
        from . import _ckernels

        adam_epoch = _ckernels.adam_epoch
        BACKEND = "cython"
    except ImportError:
        adam_epoch = pyref.adam_epoch
        BACKEND = "python"

__all__ = ["adam_epoch", "BACKEND", "pyref"]
