"""Graph similarity learning and retrieval for attributed floor plans.

Rooms are nodes carrying a category and a shape vector; doors and walls are
typed edges. The package learns node embeddings with a message-passing
network, compares graphs with a shortest-path-weighted node kernel, mines
training triplets from exact edit-distance and layout-overlap oracles, and
serves retrieval from a precomputed embedding index.

Submodules are imported lazily so the command-line front end can configure
threading environment variables before numpy loads.
"""

__version__ = "0.1.0"

_EXPORTS = {
    "FloorPlanGraph": "graphs",
    "Room": "graphs",
    "RoomShape": "graphs",
    "EdgeKind": "graphs",
    "read_graphs": "graphs",
    "write_graphs": "graphs",
    "validate": "graphs",
    "shortest_path_histograms": "hist",
    "ged": "metrics",
    "sged": "metrics",
    "miou": "metrics",
    "precision_at_k": "metrics",
    "triplet_accuracy": "metrics",
    "KernelConfig": "kernel",
    "EmbeddedGraph": "kernel",
    "graph_kernel": "kernel",
    "normalized_similarity": "kernel",
    "GenConfig": "synth",
    "synth_generate": "synth",
}


def __getattr__(name: str):
    if name in _EXPORTS:
        import importlib

        module = importlib.import_module(f".{_EXPORTS[name]}", __name__)
        return getattr(module, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(set(globals()) | set(_EXPORTS))
