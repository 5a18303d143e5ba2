"""Kernel backend selection.

The compiled ``_kernels`` extension is used when it imports; otherwise the
pure-Python twin in ``_pykernels`` is used. Setting ``WIGNERLAB_PURE=1``
forces the Python backend. ``BACKEND`` names the active choice.
"""

import os

from . import _pykernels as python_backend

compiled_backend = None
if os.environ.get("WIGNERLAB_PURE") != "1":
    try:
        from . import _kernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

_active = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

mix64 = _active.mix64
derive_state = _active.derive_state
next_u64 = _active.next_u64
u64_to_uniform = _active.u64_to_uniform
pick = _active.pick
walk_batch = _active.walk_batch
