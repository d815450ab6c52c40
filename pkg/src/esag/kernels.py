"""Backend selection for the numerical kernels.

The compiled extension ``esag._core`` is used when it imports; otherwise
the NumPy port in ``esag._fallback`` takes over. Setting the environment
variable ``ESAG_PURE_PYTHON=1`` forces the fallback. Both backends expose
``logpdf``, ``logpdf_grad``, ``vpower``, ``objective_grad`` and ``bfgs``.

The compiled kernels handle ``3 <= d <= 32``; larger dimensions are routed
to the fallback transparently.
"""

from __future__ import annotations

import os

import numpy as np

from . import _fallback

_compiled = None
if os.environ.get("ESAG_PURE_PYTHON", "").strip() not in {"1", "true", "yes"}:
    try:
        from . import _core as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = _compiled.BACKEND if _compiled is not None else _fallback.BACKEND

#: BFGS exit codes, identical for both backends.
STATUS = {0: "gradient", 1: "stalled", 2: "maxiter", 3: "linesearch", 4: "nonfinite"}


def available_backends() -> list[str]:
    return ["compiled", "python"] if _compiled is not None else ["python"]


def get_backend(name: str | None = None, d: int | None = None):
    """Module implementing the kernels.

    Parameters
    ----------
    name : {"compiled", "python"} or None
        ``None`` picks the active default.
    d : int, optional
        Ambient dimension; dimensions the compiled core cannot hold fall
        back to NumPy.
    """
    if name is None:
        name = BACKEND
    if name == "python" or _compiled is None:
        if name == "compiled":
            raise RuntimeError("compiled backend requested but esag._core is not built")
        return _fallback
    if name != "compiled":
        raise ValueError(f"unknown backend {name!r}")
    if d is not None and d > _compiled.MAX_DIM:
        return _fallback
    return _compiled


def logpdf(Y, MU, G, backend: str | None = None):
    Y = np.ascontiguousarray(Y, dtype=float)
    return get_backend(backend, Y.shape[1]).logpdf(
        Y, np.ascontiguousarray(MU, dtype=float), np.ascontiguousarray(G, dtype=float)
    )


def logpdf_grad(Y, MU, G, backend: str | None = None):
    Y = np.ascontiguousarray(Y, dtype=float)
    return get_backend(backend, Y.shape[1]).logpdf_grad(
        Y, np.ascontiguousarray(MU, dtype=float), np.ascontiguousarray(G, dtype=float)
    )


def vpower(MU, G, power: float, backend: str | None = None):
    MU = np.ascontiguousarray(MU, dtype=float)
    return get_backend(backend, MU.shape[1]).vpower(
        MU, np.ascontiguousarray(G, dtype=float), float(power)
    )
