"""Hot-loop kernels: the compiled extension when importable, else pure Python.

Set ``CFSAMPLING_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _pykernels as python

compiled = None
if not os.environ.get("CFSAMPLING_PURE_PYTHON"):
    try:
        from . import _kernels as compiled
    except ImportError:  # extension not built
        compiled = None

backend = compiled if compiled is not None else python
BACKEND_NAME = "compiled" if compiled is not None else "python"

mse_epoch = backend.mse_epoch
bpr_epoch = backend.bpr_epoch
neumf_mse_epoch = backend.neumf_mse_epoch
neumf_bpr_epoch = backend.neumf_bpr_epoch
pairwise_auc = backend.pairwise_auc
