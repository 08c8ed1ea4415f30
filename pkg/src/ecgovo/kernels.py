"""Filter kernel dispatch.

The compiled extension ``ecgovo._kernels`` is used when it was built and
importable; otherwise the numpy versions in ``ecgovo._kernels_py`` are used.
Setting ``ECGOVO_PURE_PYTHON=1`` before import forces the fallback.
"""

import os

from . import _kernels_py

if os.environ.get("ECGOVO_PURE_PYTHON") == "1":
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = "compiled" if _impl is not _kernels_py else "python"

low_pass = _impl.low_pass
high_pass = _impl.high_pass
derivative = _impl.derivative
moving_window_integrate = _impl.moving_window_integrate
# vectorized numpy already beats a compiled loop here
local_maxima = _kernels_py.local_maxima
