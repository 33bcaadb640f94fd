"""Shared numba decorator: cached, with IEEE float semantics (x/0 -> inf)."""

from functools import partial

from numba import config, njit

jit = partial(njit, cache=True, error_model="numpy")

# The bundled TBB is too old for numba and only produces a warning; skip it.
if config.THREADING_LAYER == "default":
    config.THREADING_LAYER = "workqueue"
