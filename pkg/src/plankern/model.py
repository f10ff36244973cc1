"""Node encoder and message-passing network over floor-plan graphs.

Three operating modes share the same encoder and per-layer machinery:

- GKN: node embeddings feed the graph kernel directly (no pooling head).
- GEN: adds a gated-sum pooling head producing one vector per graph.
- GMN: like GEN but each message-passing layer additionally attends across
  a partner graph, so a graph can only be embedded jointly with its partner.

All math runs through the autodiff module so the same code path serves
training (under a Tape) and inference (forward only).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .graphs import FloorPlanGraph
from .hist import shortest_path_histograms
from .kernel import EmbeddedGraph, KernelConfig

MODES = ("GKN", "GEN", "GMN")

# ekind codes for directed message edges
_EK_DOOR, _EK_WALL, _EK_SELF = 0, 1, 2


class ModeError(ValueError):
    pass


def _mlp_sizes(n_in: int, n_out: int) -> list[tuple[str, tuple[int, int]]]:
    # hidden width equals the output width
    return [
        ("w1", (n_in, n_out)),
        ("b1", (1, n_out)),
        ("w2", (n_out, n_out)),
        ("b2", (1, n_out)),
    ]


def mlp_param_count(n_in: int, n_out: int) -> int:
    return n_in * n_out + n_out + n_out * n_out + n_out


def expected_param_count(mode: str, d: int, L: int, d_g: int | None = None) -> int:
    """Closed-form learnable parameter count; must match init_params exactly."""
    if d_g is None:
        d_g = 2 * d
    total = (
        mlp_param_count(8, d)
        + mlp_param_count(6, d)
        + mlp_param_count(2, d)
        + mlp_param_count(2 * d, d)
        + 2  # learned self-edge feature
    )
    gru_in = 2 * d if mode == "GMN" else d
    per_layer = (
        mlp_param_count(3 * d, d)
        + 2 * d  # batchnorm gain and bias
        + 3 * (gru_in * d + d * d + d)
    )
    total += L * per_layer
    if mode in ("GEN", "GMN"):
        total += 2 * mlp_param_count(d, d_g)
    return total


@dataclass
class ModelParams:
    mode: str
    d: int
    L: int
    d_g: int
    use_norm: bool
    seed: int
    tensors: dict[str, ad.Tensor] = field(default_factory=dict)
    bn_states: dict[str, ad.BatchNormState] = field(default_factory=dict)

    def param_count(self) -> int:
        return sum(t.data.size for t in self.tensors.values())

    def trainable(self) -> list[ad.Tensor]:
        return [self.tensors[k] for k in sorted(self.tensors)]

    def zero_grads(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()


def _tensor_spec(mode: str, d: int, L: int, d_g: int) -> list[tuple[str, tuple[int, int]]]:
    """Canonical creation order; init determinism depends on it."""
    spec: list[tuple[str, tuple[int, int]]] = []
    for enc, n_in in (("f_cat", 8), ("f_shape", 6), ("f_edge", 2), ("f_node", 2 * d)):
        spec.extend((f"{enc}.{part}", shape) for part, shape in _mlp_sizes(n_in, d))
    spec.append(("self_edge", (1, 2)))
    gru_in = 2 * d if mode == "GMN" else d
    for l in range(1, L + 1):
        spec.extend((f"intra{l}.{part}", shape) for part, shape in _mlp_sizes(3 * d, d))
        spec.append((f"bn{l}.gamma", (1, d)))
        spec.append((f"bn{l}.beta", (1, d)))
        for gate in ("z", "r", "h"):
            spec.append((f"gru{l}.w{gate}", (gru_in, d)))
            spec.append((f"gru{l}.u{gate}", (d, d)))
            spec.append((f"gru{l}.b{gate}", (1, d)))
    if mode in ("GEN", "GMN"):
        for head in ("pool_gate", "pool_transform"):
            spec.extend((f"{head}.{part}", shape) for part, shape in _mlp_sizes(d, d_g))
    return spec


def init_params(
    mode: str,
    d: int,
    L: int,
    d_g: int | None = None,
    use_norm: bool = True,
    seed: int = 0,
) -> ModelParams:
    if mode not in MODES:
        raise ModeError(f"unknown mode {mode!r}; expected one of {MODES}")
    if d < 1 or L < 1:
        raise ValueError(f"need d >= 1 and L >= 1, got d={d}, L={L}")
    if d_g is None:
        d_g = 2 * d
    rng = np.random.default_rng(seed)
    params = ModelParams(mode, d, L, d_g, use_norm, seed)
    for name, shape in _tensor_spec(mode, d, L, d_g):
        if name.endswith((".b1", ".b2", ".beta")) or name.endswith(
            (".bz", ".br", ".bh")
        ):
            data = np.zeros(shape)
        elif name.endswith(".gamma"):
            data = np.ones(shape)
        else:
            fan_in = shape[0]
            bound = np.sqrt(6.0 / fan_in)
            data = rng.uniform(-bound, bound, size=shape)
        params.tensors[name] = ad.Tensor(data, requires_grad=True)
    for l in range(1, L + 1):
        params.bn_states[f"bn{l}"] = ad.BatchNormState.create(d)
    assert params.param_count() == expected_param_count(mode, d, L, d_g)
    return params


@dataclass
class GraphStruct:
    """Flattened message-passing arrays for one graph or a batch union.

    Directed edges cover both directions of every undirected edge plus one
    self-loop per node; `dst` doubles as the segment id for mean aggregation.
    """

    n: int
    cat: np.ndarray  # (n, 8)
    shape_feats: np.ndarray  # (n, 6)
    src: np.ndarray  # (E,) intp
    dst: np.ndarray  # (E,) intp
    ekind: np.ndarray  # (E,) intp, 0 door / 1 wall / 2 self
    offsets: list[tuple[int, int]]  # node span per member graph

    @classmethod
    def single(cls, g: FloorPlanGraph) -> "GraphStruct":
        n = g.n_nodes
        src = []
        dst = []
        ekind = []
        for u, v, kind in g.edges:
            code = _EK_DOOR if kind.vector()[0] == 1 else _EK_WALL
            src.extend((v, u))
            dst.extend((u, v))
            ekind.extend((code, code))
        src.extend(range(n))
        dst.extend(range(n))
        ekind.extend([_EK_SELF] * n)
        return cls(
            n=n,
            cat=g.category_onehot(),
            shape_feats=g.shape_matrix(),
            src=np.array(src, dtype=np.intp),
            dst=np.array(dst, dtype=np.intp),
            ekind=np.array(ekind, dtype=np.intp),
            offsets=[(0, n)],
        )

    @classmethod
    def merge(cls, parts: list["GraphStruct"]) -> "GraphStruct":
        if not parts:
            raise ValueError("cannot merge zero structs")
        if len(parts) == 1:
            return parts[0]
        offsets = []
        base = 0
        src = []
        dst = []
        ekind = []
        for p in parts:
            for a, b in p.offsets:
                offsets.append((base + a, base + b))
            src.append(p.src + base)
            dst.append(p.dst + base)
            ekind.append(p.ekind)
            base += p.n
        return cls(
            n=base,
            cat=np.concatenate([p.cat for p in parts], axis=0),
            shape_feats=np.concatenate([p.shape_feats for p in parts], axis=0),
            src=np.concatenate(src),
            dst=np.concatenate(dst),
            ekind=np.concatenate(ekind),
            offsets=offsets,
        )

    @classmethod
    def from_graphs(cls, graphs: list[FloorPlanGraph]) -> "GraphStruct":
        return cls.merge([cls.single(g) for g in graphs])


def _mlp(params: ModelParams, name: str, x: ad.Tensor) -> ad.Tensor:
    t = params.tensors
    hidden = ad.relu(ad.add(ad.matmul(x, t[f"{name}.w1"]), t[f"{name}.b1"]))
    return ad.add(ad.matmul(hidden, t[f"{name}.w2"]), t[f"{name}.b2"])


def _maybe_ln(params: ModelParams, x: ad.Tensor) -> ad.Tensor:
    return ad.layernorm_rows(x) if params.use_norm else x


def encode_nodes_t(struct: GraphStruct, params: ModelParams) -> ad.Tensor:
    c = _maybe_ln(params, _mlp(params, "f_cat", ad.Tensor(struct.cat)))
    s = _maybe_ln(params, _mlp(params, "f_shape", ad.Tensor(struct.shape_feats)))
    return _maybe_ln(params, _mlp(params, "f_node", ad.concat_cols(c, s)))


_EDGE_CONST = np.array([[1.0, 0.0], [0.0, 1.0]])  # door, wall feature rows


def _edge_encodings(params: ModelParams) -> ad.Tensor:
    inputs = ad.concat_rows(ad.Tensor(_EDGE_CONST), params.tensors["self_edge"])
    return _maybe_ln(params, _mlp(params, "f_edge", inputs))


def _gru(params: ModelParams, l: int, x: ad.Tensor, h: ad.Tensor) -> ad.Tensor:
    t = params.tensors
    z = ad.sigmoid(
        ad.add(ad.add(ad.matmul(x, t[f"gru{l}.wz"]), ad.matmul(h, t[f"gru{l}.uz"])), t[f"gru{l}.bz"])
    )
    r = ad.sigmoid(
        ad.add(ad.add(ad.matmul(x, t[f"gru{l}.wr"]), ad.matmul(h, t[f"gru{l}.ur"])), t[f"gru{l}.br"])
    )
    cand = ad.tanh(
        ad.add(
            ad.add(ad.matmul(x, t[f"gru{l}.wh"]), ad.matmul(ad.mul(r, h), t[f"gru{l}.uh"])),
            t[f"gru{l}.bh"],
        )
    )
    keep = ad.add_scalar(ad.scalar_mul(z, -1.0), 1.0)
    return ad.add(ad.mul(keep, h), ad.mul(z, cand))


def cross_message(h1: ad.Tensor, h2: ad.Tensor) -> tuple[ad.Tensor, ad.Tensor]:
    """Attention-weighted difference messages between two embedding blocks."""
    scores = ad.matmul(h1, ad.transpose(h2))
    a1 = ad.softmax_rows(scores)
    mc1 = ad.sub(h1, ad.matmul(a1, h2))
    a2 = ad.softmax_rows(ad.transpose(scores))
    mc2 = ad.sub(h2, ad.matmul(a2, h1))
    return mc1, mc2


def message_pass_t(
    struct: GraphStruct,
    h: ad.Tensor,
    params: ModelParams,
    l: int,
    training: bool,
    edge_enc: ad.Tensor | None = None,
    cross_pair: tuple[np.ndarray, np.ndarray] | None = None,
) -> ad.Tensor:
    """One round: intra messages, mean aggregation, optional cross term, GRU."""
    if edge_enc is None:
        edge_enc = _edge_encodings(params)
    h_dst = ad.gather_rows(h, struct.dst)
    h_src = ad.gather_rows(h, struct.src)
    e_rows = ad.gather_rows(edge_enc, struct.ekind)
    intra = _mlp(params, f"intra{l}", ad.concat_cols(ad.concat_cols(h_dst, h_src), e_rows))
    m = ad.segment_mean(intra, struct.dst, struct.n)
    if params.use_norm:
        m = ad.batchnorm_cols(
            m,
            params.tensors[f"bn{l}.gamma"],
            params.tensors[f"bn{l}.beta"],
            params.bn_states[f"bn{l}"],
            training,
        )
    if params.mode == "GMN":
        if cross_pair is None:
            raise ModeError("GMN message passing needs the partner block indices")
        idx1, idx2 = cross_pair
        mc1, mc2 = cross_message(ad.gather_rows(h, idx1), ad.gather_rows(h, idx2))
        x = ad.concat_cols(m, ad.concat_rows(mc1, mc2))
    else:
        x = m
    return _gru(params, l, x, h)


def embed_batch_t(
    struct: GraphStruct,
    params: ModelParams,
    training: bool,
    cross_pair: tuple[np.ndarray, np.ndarray] | None = None,
) -> ad.Tensor:
    """Final node embeddings for all graphs in `struct`, as one (N, d) tensor."""
    if params.mode == "GMN" and cross_pair is None:
        raise ModeError("cross-graph mode cannot embed graphs in isolation")
    edge_enc = _edge_encodings(params)
    h = encode_nodes_t(struct, params)
    for l in range(1, params.L + 1):
        h = message_pass_t(struct, h, params, l, training, edge_enc, cross_pair)
    return h


def embed(
    graph: FloorPlanGraph,
    params: ModelParams,
    cfg: KernelConfig | None = None,
    delta: int = 4,
) -> EmbeddedGraph:
    """Inference-mode embedding of a single graph (GKN or GEN checkpoints)."""
    struct = GraphStruct.single(graph)
    h = embed_batch_t(struct, params, training=False)
    hists = shortest_path_histograms(graph, delta=delta)
    if cfg is None:
        cfg = KernelConfig.for_dim(params.d, delta=delta)
    return EmbeddedGraph.create(graph.id, h.data, hists, cfg)


def embed_pair_t(
    g1: FloorPlanGraph,
    g2: FloorPlanGraph,
    params: ModelParams,
    training: bool,
    structs: tuple[GraphStruct, GraphStruct] | None = None,
) -> tuple[ad.Tensor, ad.Tensor]:
    """Joint embedding of two graphs (the only way to run a GMN)."""
    if structs is None:
        structs = (GraphStruct.single(g1), GraphStruct.single(g2))
    s1, s2 = structs
    union = GraphStruct.merge([s1, s2])
    idx1 = np.arange(0, s1.n, dtype=np.intp)
    idx2 = np.arange(s1.n, s1.n + s2.n, dtype=np.intp)
    h = embed_batch_t(union, params, training, cross_pair=(idx1, idx2))
    return ad.gather_rows(h, idx1), ad.gather_rows(h, idx2)


def pool_t(h: ad.Tensor, params: ModelParams) -> ad.Tensor:
    """Gated-sum readout: sum_u sigmoid(gate(h_u)) * transform(h_u), (1, d_g)."""
    if "pool_gate.w1" not in params.tensors:
        raise ModeError(f"{params.mode} checkpoint has no pooling head")
    gate = ad.sigmoid(_mlp(params, "pool_gate", h))
    body = _mlp(params, "pool_transform", h)
    return ad.sum_over_rows(ad.mul(gate, body))


def pool_vector(H: np.ndarray, params: ModelParams) -> np.ndarray:
    return pool_t(ad.Tensor(H), params).data[0]


def save_checkpoint(params: ModelParams, path: str) -> None:
    doc = {
        "header": {
            "format": 1,
            "mode": params.mode,
            "d": params.d,
            "L": params.L,
            "d_g": params.d_g,
            "use_norm": params.use_norm,
            "seed": params.seed,
        },
        "tensors": {
            name: {"shape": list(t.data.shape), "data": t.data.ravel().tolist()}
            for name, t in sorted(params.tensors.items())
        },
        "bn": {
            name: {
                "mean": st.running_mean.tolist(),
                "var": st.running_var.tolist(),
                "num_batches": st.num_batches,
            }
            for name, st in sorted(params.bn_states.items())
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, separators=(",", ":"), sort_keys=True)
        fh.write("\n")


def load_checkpoint(path: str) -> ModelParams:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    hd = doc["header"]
    params = ModelParams(
        mode=hd["mode"],
        d=int(hd["d"]),
        L=int(hd["L"]),
        d_g=int(hd["d_g"]),
        use_norm=bool(hd["use_norm"]),
        seed=int(hd["seed"]),
    )
    expected = dict(_tensor_spec(params.mode, params.d, params.L, params.d_g))
    for name, entry in doc["tensors"].items():
        shape = tuple(entry["shape"])
        if expected.get(name) != shape:
            raise ValueError(f"checkpoint tensor {name} has shape {shape}, expected {expected.get(name)}")
        data = np.array(entry["data"], dtype=np.float64).reshape(shape)
        params.tensors[name] = ad.Tensor(data, requires_grad=True)
    missing = set(expected) - set(params.tensors)
    if missing:
        raise ValueError(f"checkpoint missing tensors: {sorted(missing)}")
    for name, entry in doc["bn"].items():
        params.bn_states[name] = ad.BatchNormState(
            np.array(entry["mean"], dtype=np.float64),
            np.array(entry["var"], dtype=np.float64),
            int(entry["num_batches"]),
        )
    return params


def checkpoint_hash(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
