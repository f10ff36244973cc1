"""Shortest-path-weighted node-kernel similarity between embedded graphs.

The graph kernel is a double sum over node pairs: the Frobenius inner
product of the two nodes' path-position histograms times a Gaussian kernel
on their embeddings. Histogram inner products are integers by construction,
so the weight matrix is exact; everything float happens in the Gaussian.

Two evaluation paths share the math: `graph_kernel` (plain floats, hot loop
delegated to the compiled backend when built) for retrieval and scoring, and
`graph_kernel_t` (autodiff tensors) for training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import backend
from .graphs import CATEGORIES, FloorPlanGraph
from .hist import shortest_path_histograms

RAW_FEATURE_DIM = len(CATEGORIES) + 6


@dataclass(frozen=True)
class KernelConfig:
    """Gaussian bandwidth and the histogram size it must agree with."""

    mu: float
    delta: int = 4

    def __post_init__(self):
        if not (self.mu > 0.0):
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.delta < 1:
            raise ValueError(f"delta must be >= 1, got {self.delta}")

    @classmethod
    def for_dim(cls, d: int, delta: int = 4) -> "KernelConfig":
        # default bandwidth 1/d
        return cls(mu=1.0 / d, delta=delta)


@dataclass
class EmbeddedGraph:
    """Per-graph precomputation: embeddings, histograms, cached norms.

    hist_flat and sq_norms are derived caches; self_norm is √k(G,G), the
    denominator of the normalized similarity, fixed at build time.
    """

    graph_id: str
    H: np.ndarray  # (n, d) float64, C-contiguous
    histograms: np.ndarray  # (n, delta, delta) int64
    self_norm: float
    hist_flat: np.ndarray  # (n, delta*delta) float64
    sq_norms: np.ndarray  # (n,) float64

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def d(self) -> int:
        return self.H.shape[1]

    @property
    def delta(self) -> int:
        return self.histograms.shape[1]

    @classmethod
    def create(
        cls,
        graph_id: str,
        H: np.ndarray,
        histograms: np.ndarray,
        cfg: KernelConfig | None = None,
    ) -> "EmbeddedGraph":
        H = np.ascontiguousarray(H, dtype=np.float64)
        histograms = np.asarray(histograms, dtype=np.int64)
        if H.ndim != 2 or histograms.ndim != 3 or H.shape[0] != histograms.shape[0]:
            raise ValueError(
                f"need (n,d) embeddings and (n,delta,delta) histograms, "
                f"got {H.shape} and {histograms.shape}"
            )
        if cfg is None:
            cfg = KernelConfig.for_dim(H.shape[1], delta=histograms.shape[1])
        if cfg.delta != histograms.shape[1]:
            raise ValueError(f"config delta {cfg.delta} != histogram delta {histograms.shape[1]}")
        n = H.shape[0]
        hist_flat = np.ascontiguousarray(histograms.reshape(n, -1), dtype=np.float64)
        sq_norms = np.einsum("ij,ij->i", H, H)
        e = cls(graph_id, H, histograms, 0.0, hist_flat, sq_norms)
        k_self = backend.score_pair(H, hist_flat, sq_norms, H, hist_flat, sq_norms, cfg.mu)
        e.self_norm = float(np.sqrt(k_self))
        return e


def raw_features(graph: FloorPlanGraph) -> np.ndarray:
    """Untrained node features [one-hot category; shape vector], (n, 14)."""
    return np.concatenate([graph.category_onehot(), graph.shape_matrix()], axis=1)


def embed_raw(graph: FloorPlanGraph, delta: int = 4) -> EmbeddedGraph:
    """Kernel baseline without any learned encoder."""
    feats = raw_features(graph)
    hists = shortest_path_histograms(graph, delta=delta)
    return EmbeddedGraph.create(graph.id, feats, hists, KernelConfig.for_dim(feats.shape[1], delta))


def node_kernel(hu: np.ndarray, hv: np.ndarray, cfg: KernelConfig) -> float:
    hu = np.asarray(hu, dtype=np.float64).ravel()
    hv = np.asarray(hv, dtype=np.float64).ravel()
    if hu.shape != hv.shape:
        raise ValueError(f"dimension mismatch: {hu.shape} vs {hv.shape}")
    diff = hu - hv
    return float(np.exp(-cfg.mu * np.dot(diff, diff)))


def _check_compatible(e1: EmbeddedGraph, e2: EmbeddedGraph) -> None:
    if e1.d != e2.d:
        raise ValueError(f"embedding dims differ: {e1.d} vs {e2.d}")
    if e1.delta != e2.delta:
        raise ValueError(f"histogram deltas differ: {e1.delta} vs {e2.delta}")


def graph_kernel(e1: EmbeddedGraph, e2: EmbeddedGraph, cfg: KernelConfig) -> float:
    _check_compatible(e1, e2)
    return float(
        backend.score_pair(
            e1.H, e1.hist_flat, e1.sq_norms, e2.H, e2.hist_flat, e2.sq_norms, cfg.mu
        )
    )


def normalized_similarity(e1: EmbeddedGraph, e2: EmbeddedGraph, cfg: KernelConfig) -> float:
    return graph_kernel(e1, e2, cfg) / (e1.self_norm * e2.self_norm)


def hist_weight_matrix(e1: EmbeddedGraph, e2: EmbeddedGraph) -> np.ndarray:
    """Integer-exact pairwise histogram inner products as float64, (n1, n2)."""
    w = e1.histograms.reshape(e1.n, -1) @ e2.histograms.reshape(e2.n, -1).T
    return w.astype(np.float64)


def graph_kernel_t(h1: ad.Tensor, h2: ad.Tensor, weights: np.ndarray, mu: float) -> ad.Tensor:
    """Differentiable kernel value; `weights` is the constant histogram dot matrix."""
    if weights.shape != (h1.shape[0], h2.shape[0]):
        raise ad.ShapeError(
            f"weights shape {weights.shape} does not match node counts "
            f"({h1.shape[0]}, {h2.shape[0]})"
        )
    gauss = ad.exp(ad.scalar_mul(ad.sqdist(h1, h2), -mu))
    return ad.frobenius_dot(ad.Tensor(weights), gauss)
