"""Pure-numpy pairwise kernel scoring (fallback for the compiled module)."""

from __future__ import annotations

import numpy as np

COMPILED = False


def score_pair(
    h1: np.ndarray,
    w1: np.ndarray,
    sq1: np.ndarray,
    h2: np.ndarray,
    w2: np.ndarray,
    sq2: np.ndarray,
    mu: float,
) -> float:
    """Weighted sum over node pairs: sum_uv <W1[u], W2[v]> * exp(-mu*||h1[u]-h2[v]||^2).

    h*: (n, d) node embeddings; w*: (n, m) flattened histogram rows (float);
    sq*: (n,) cached squared row norms of h*.
    """
    d2 = sq1[:, None] + sq2[None, :] - 2.0 * (h1 @ h2.T)
    np.maximum(d2, 0.0, out=d2)  # BLAS rounding can push tiny negatives
    weights = w1 @ w2.T
    return float(np.einsum("uv,uv->", weights, np.exp(-mu * d2)))
