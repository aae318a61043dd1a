"""Kernel backend selection.

The compiled extension ``cipt._ckernels`` is used when importable; otherwise
the numpy implementations in ``cipt._pykernels`` are used.  Batches of
states are ``(2**L, B)`` arrays holding one trajectory per column.  Setting the
environment variable ``CIPT_BACKEND=python`` forces the fallback.
"""
from __future__ import annotations

import os

from . import _pykernels

if os.environ.get("CIPT_BACKEND", "").lower() == "python":
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"
    else:
        BACKEND = "cython"

bernoulli_step = _impl.bernoulli_step
control_step = _impl.control_step
pair_gate = _impl.pair_gate
block_gate = _impl.block_gate
measure_reset = _impl.measure_reset
classical_evolve = _impl.classical_evolve

__all__ = [
    "BACKEND",
    "bernoulli_step",
    "control_step",
    "pair_gate",
    "block_gate",
    "measure_reset",
    "classical_evolve",
]
