"""Backend selection for the numeric kernels.

Set FEDWSM_BACKEND=numpy to force the pure-numpy path, FEDWSM_BACKEND=numba
to require the jitted path (ImportError if numba is missing). The default is
numba when importable, numpy otherwise. See benchmarks/bench_backends.py for
a speed comparison.
"""

import os

_requested = os.environ.get("FEDWSM_BACKEND", "auto").lower()

if _requested == "numpy":
    from . import _numpy as _impl
elif _requested == "numba":
    from . import _numba as _impl
elif _requested == "auto":
    try:
        from . import _numba as _impl
    except ImportError:
        from . import _numpy as _impl
else:
    raise RuntimeError(f"unknown FEDWSM_BACKEND value: {_requested!r}")

BACKEND = _impl.NAME

dense_forward = _impl.dense_forward
relu = _impl.relu
dense_backward = _impl.dense_backward
softmax_ce = _impl.softmax_ce
softmax_wsm = _impl.softmax_wsm
sgd_update = _impl.sgd_update
accuracy = _impl.accuracy
