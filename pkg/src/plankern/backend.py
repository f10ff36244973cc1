"""Selects the compiled scoring kernel when available, numpy otherwise.

`score_pair` is the hot loop of index queries and the pairwise benchmark;
everything else in the package calls it through this module so the two
implementations stay interchangeable. `available_backends()` exposes both
for the benchmark's compiled-vs-fallback comparison.
"""

from __future__ import annotations

from . import _score_py

try:
    from . import _score  # compiled extension, built by setup.py when Cython is present
except ImportError:
    _score = None

_active = _score if _score is not None else _score_py

score_pair = _active.score_pair
BACKEND_NAME = "compiled" if getattr(_active, "COMPILED", False) else "python"


def available_backends() -> dict[str, object]:
    """Name -> score_pair callable, for every backend importable here."""
    out = {"python": _score_py.score_pair}
    if _score is not None:
        out["compiled"] = _score.score_pair
    return out
