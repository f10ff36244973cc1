"""Triplet mining, losses, and the optimization loop.

Mining follows a two-stage protocol: rank every other plan by rasterized
layout overlap (cheap), keep the best 50, then re-rank those by exact
normalized edit similarity and pick anchor/positive/negative combinations
inside fixed similarity bands so negatives stay hard.

Training supports three modes. GKN optimizes a log-ratio hinge on the graph
kernel (the anchor's self-kernel cancels and is never computed); GEN and GMN
use the conventional Euclidean triplet margin on pooled graph vectors.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import model as mdl
from .graphs import FloorPlanGraph
from .hist import shortest_path_histograms
from .kernel import EmbeddedGraph, KernelConfig, embed_raw, graph_kernel_t, normalized_similarity
from .metrics import RasterConfig, category_label_map, miou_from_labels, sged


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class Triplet:
    a: str
    p: str
    n: str
    sged_ap: float
    sged_an: float

    def __post_init__(self):
        if not (0.6 < self.sged_ap < 0.9):
            raise ValueError(f"positive similarity {self.sged_ap} outside (0.6, 0.9)")
        ratio = self.sged_an / self.sged_ap
        if not (0.7 < ratio < 0.9):
            raise ValueError(f"negative/positive ratio {ratio} outside (0.7, 0.9)")


def write_triplets(triplets: list[Triplet], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in triplets:
            fh.write(
                json.dumps(
                    {"a": t.a, "p": t.p, "n": t.n, "sged_ap": t.sged_ap, "sged_an": t.sged_an},
                    separators=(",", ":"),
                )
            )
            fh.write("\n")


def read_triplets(path: str) -> list[Triplet]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            out.append(
                Triplet(rec["a"], rec["p"], rec["n"], float(rec["sged_ap"]), float(rec["sged_an"]))
            )
    return out


def mine_triplets(
    dataset: list[FloorPlanGraph],
    per_anchor: int = 4,
    seed: int = 0,
    top: int = 50,
    resolution: int = 64,
    anchor_limit: int | None = None,
) -> list[Triplet]:
    """Two-stage hard-triplet mining over a dataset with geometry.

    Anchors are taken in dataset order (optionally capped at anchor_limit);
    candidate ranking ties break on graph id so the output is a pure
    function of (dataset, per_anchor, seed).
    """
    if len(dataset) < top + 1:
        raise ValueError(f"mining needs at least {top + 1} graphs, got {len(dataset)}")
    raster = RasterConfig(resolution=resolution)
    labels = [category_label_map(g, raster) for g in dataset]
    ids = [g.id for g in dataset]
    rng = np.random.default_rng(seed)
    triplets: list[Triplet] = []
    n_anchors = len(dataset) if anchor_limit is None else min(anchor_limit, len(dataset))
    sged_cache: dict[tuple[str, str], float] = {}
    for ai in range(n_anchors):
        overlaps = [
            (-miou_from_labels(labels[ai], labels[j]), ids[j], j)
            for j in range(len(dataset))
            if j != ai
        ]
        overlaps.sort()
        shortlist = [j for _, _, j in overlaps[:top]]
        sims = {}
        for j in shortlist:
            key = (min(ids[ai], ids[j]), max(ids[ai], ids[j]))
            if key not in sged_cache:
                sged_cache[key] = sged(dataset[ai], dataset[j])
            sims[j] = sged_cache[key]
        positives = [j for j in shortlist if 0.6 < sims[j] < 0.9]
        candidates = []
        for p in positives:
            for n in shortlist:
                if n == p:
                    continue
                ratio = sims[n] / sims[p]
                if 0.7 < ratio < 0.9:
                    candidates.append((p, n))
        rng.shuffle(candidates)
        for p, n in candidates[:per_anchor]:
            triplets.append(Triplet(ids[ai], ids[p], ids[n], sims[p], sims[n]))
    return triplets


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "GKN"
    d: int = 64
    L: int = 5
    d_g: int | None = None
    lr: float = 1e-4
    batch_size: int = 64
    max_epochs: int = 200
    patience: int = 10
    margin: float = 0.1
    weight_decay: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    use_norm: bool = True
    val_fraction: float = 0.1
    delta: int = 4

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.margin < 0:
            raise ValueError("margin must be >= 0")
        if self.mode not in mdl.MODES:
            raise ValueError(f"mode must be one of {mdl.MODES}")


def gkn_loss_t(
    k_ap: ad.Tensor, k_an: ad.Tensor, k_pp: ad.Tensor, k_nn: ad.Tensor, margin: float
) -> ad.Tensor:
    """Hinge on the log similarity ratio; the anchor self-kernel cancels."""
    ratio = ad.sub(ad.log(k_an), ad.log(k_ap))
    norm_fix = ad.scalar_mul(ad.sub(ad.log(k_pp), ad.log(k_nn)), 0.5)
    return ad.relu(ad.add_scalar(ad.add(ratio, norm_fix), margin))


def _euclid(a: ad.Tensor, b: ad.Tensor) -> ad.Tensor:
    # tiny floor keeps sqrt differentiable when the two vectors coincide
    return ad.sqrt(ad.add_scalar(ad.row_sum(ad.square(ad.sub(a, b))), 1e-24))


def margin_loss_t(va: ad.Tensor, vp: ad.Tensor, vn: ad.Tensor, margin: float) -> ad.Tensor:
    return ad.relu(ad.add_scalar(ad.sub(_euclid(va, vp), _euclid(va, vn)), margin))


class AdamW:
    """Decoupled weight decay Adam; state arrays keyed by parameter order."""

    def __init__(
        self,
        params: list[ad.Tensor],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 1e-2,
    ):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]

    def step(self) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / b1c) / (np.sqrt(v / b2c) + self.eps)
            p.data -= self.lr * (update + self.weight_decay * p.data)


@dataclass
class TrainReport:
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val_accuracy: float = 0.0
    diverged: bool = False
    n_train: int = 0
    n_val: int = 0

    def to_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epoch,train_loss,val_loss,val_triplet_accuracy\n")
            for row in self.epochs:
                fh.write(
                    f"{row['epoch']},{row['train_loss']!r},{row['val_loss']!r},"
                    f"{row['val_triplet_accuracy']!r}\n"
                )


class _Workspace:
    """Per-dataset caches shared across batches and epochs."""

    def __init__(self, graphs_by_id: dict[str, FloorPlanGraph], delta: int):
        self.graphs = graphs_by_id
        self.delta = delta
        self.structs: dict[str, mdl.GraphStruct] = {}
        self.hist_flat: dict[str, np.ndarray] = {}

    def struct(self, gid: str) -> mdl.GraphStruct:
        if gid not in self.structs:
            self.structs[gid] = mdl.GraphStruct.single(self.graphs[gid])
        return self.structs[gid]

    def hists(self, gid: str) -> np.ndarray:
        if gid not in self.hist_flat:
            h = shortest_path_histograms(self.graphs[gid], delta=self.delta)
            self.hist_flat[gid] = np.ascontiguousarray(
                h.reshape(h.shape[0], -1), dtype=np.float64
            )
        return self.hist_flat[gid]

    def weight(self, g1: str, g2: str) -> np.ndarray:
        return self.hists(g1) @ self.hists(g2).T


def _batch_embed_slices(
    ws: _Workspace, params: mdl.ModelParams, ids: list[str], training: bool
) -> dict[str, ad.Tensor]:
    """Embed the union of `ids` (sorted, deduplicated) and slice per graph."""
    unique = sorted(set(ids))
    union = mdl.GraphStruct.merge([ws.struct(g) for g in unique])
    h = mdl.embed_batch_t(union, params, training)
    out = {}
    for gid, (a, b) in zip(unique, union.offsets):
        out[gid] = ad.gather_rows(h, np.arange(a, b, dtype=np.intp))
    return out


def _check_kernel_value(value: float, triplet: Triplet) -> None:
    if not (math.isfinite(value) and value > 0.0):
        raise TrainingError(
            f"non-finite or non-positive kernel value {value} for triplet "
            f"({triplet.a}, {triplet.p}, {triplet.n})"
        )


def _batch_loss_t(
    ws: _Workspace,
    params: mdl.ModelParams,
    batch: list[Triplet],
    cfg: TrainConfig,
    training: bool,
) -> ad.Tensor:
    mu = 1.0 / params.d
    terms: list[ad.Tensor] = []
    if cfg.mode == "GKN":
        ids = [g for t in batch for g in (t.a, t.p, t.n)]
        slices = _batch_embed_slices(ws, params, ids, training)
        for t in batch:
            k_ap = graph_kernel_t(slices[t.a], slices[t.p], ws.weight(t.a, t.p), mu)
            k_an = graph_kernel_t(slices[t.a], slices[t.n], ws.weight(t.a, t.n), mu)
            k_pp = graph_kernel_t(slices[t.p], slices[t.p], ws.weight(t.p, t.p), mu)
            k_nn = graph_kernel_t(slices[t.n], slices[t.n], ws.weight(t.n, t.n), mu)
            for k in (k_ap, k_an, k_pp, k_nn):
                _check_kernel_value(k.item(), t)
            terms.append(gkn_loss_t(k_ap, k_an, k_pp, k_nn, cfg.margin))
    elif cfg.mode == "GEN":
        ids = [g for t in batch for g in (t.a, t.p, t.n)]
        slices = _batch_embed_slices(ws, params, ids, training)
        pooled = {gid: mdl.pool_t(h, params) for gid, h in slices.items()}
        for t in batch:
            terms.append(margin_loss_t(pooled[t.a], pooled[t.p], pooled[t.n], cfg.margin))
    else:  # GMN: joint forward per pair, anchor embeds depend on the partner
        for t in batch:
            ha_p, hp = mdl.embed_pair_t(
                ws.graphs[t.a], ws.graphs[t.p], params, training,
                structs=(ws.struct(t.a), ws.struct(t.p)),
            )
            ha_n, hn = mdl.embed_pair_t(
                ws.graphs[t.a], ws.graphs[t.n], params, training,
                structs=(ws.struct(t.a), ws.struct(t.n)),
            )
            d_ap = _euclid(mdl.pool_t(ha_p, params), mdl.pool_t(hp, params))
            d_an = _euclid(mdl.pool_t(ha_n, params), mdl.pool_t(hn, params))
            terms.append(ad.relu(ad.add_scalar(ad.sub(d_ap, d_an), cfg.margin)))
    total = terms[0]
    for term in terms[1:]:
        total = ad.add(total, term)
    return ad.scalar_mul(total, 1.0 / len(terms))


def score_triplets(
    params: mdl.ModelParams | None,
    mode: str,
    graphs_by_id: dict[str, FloorPlanGraph],
    triplets: list[Triplet],
    delta: int = 4,
) -> list[tuple[float, float]]:
    """(model similarity to positive, to negative) per triplet, eval mode.

    mode "GK" scores with the kernel on raw node features and needs no params.
    """
    pairs: list[tuple[float, float]] = []
    if mode in ("GK", "GKN"):
        cache: dict[str, EmbeddedGraph] = {}

        def emb(gid: str) -> EmbeddedGraph:
            if gid not in cache:
                g = graphs_by_id[gid]
                cache[gid] = embed_raw(g, delta) if mode == "GK" else mdl.embed(g, params, delta=delta)
            return cache[gid]

        cfg = (
            KernelConfig.for_dim(14, delta)
            if mode == "GK"
            else KernelConfig.for_dim(params.d, delta)
        )
        for t in triplets:
            s_ap = normalized_similarity(emb(t.a), emb(t.p), cfg)
            s_an = normalized_similarity(emb(t.a), emb(t.n), cfg)
            pairs.append((s_ap, s_an))
    elif mode == "GEN":
        vcache: dict[str, np.ndarray] = {}

        def vec(gid: str) -> np.ndarray:
            if gid not in vcache:
                e = mdl.embed(graphs_by_id[gid], params, delta=delta)
                vcache[gid] = mdl.pool_vector(e.H, params)
            return vcache[gid]

        for t in triplets:
            s_ap = -float(np.linalg.norm(vec(t.a) - vec(t.p)))
            s_an = -float(np.linalg.norm(vec(t.a) - vec(t.n)))
            pairs.append((s_ap, s_an))
    elif mode == "GMN":
        for t in triplets:
            ha_p, hp = mdl.embed_pair_t(graphs_by_id[t.a], graphs_by_id[t.p], params, False)
            ha_n, hn = mdl.embed_pair_t(graphs_by_id[t.a], graphs_by_id[t.n], params, False)
            va_p = mdl.pool_vector(ha_p.data, params)
            va_n = mdl.pool_vector(ha_n.data, params)
            vp = mdl.pool_vector(hp.data, params)
            vn = mdl.pool_vector(hn.data, params)
            s_ap = -float(np.linalg.norm(va_p - vp))
            s_an = -float(np.linalg.norm(va_n - vn))
            pairs.append((s_ap, s_an))
    else:
        raise ValueError(f"unknown scoring mode {mode!r}")
    return pairs


def _accuracy(pairs: list[tuple[float, float]]) -> float:
    if not pairs:
        return 0.0
    return sum(1 for s_ap, s_an in pairs if s_ap > s_an) / len(pairs)


def _snapshot(params: mdl.ModelParams) -> mdl.ModelParams:
    copy = mdl.ModelParams(
        params.mode, params.d, params.L, params.d_g, params.use_norm, params.seed
    )
    copy.tensors = {
        k: ad.Tensor(t.data.copy(), requires_grad=True) for k, t in params.tensors.items()
    }
    copy.bn_states = {k: st.copy() for k, st in params.bn_states.items()}
    return copy


def train(
    graphs_by_id: dict[str, FloorPlanGraph],
    triplets: list[Triplet],
    cfg: TrainConfig,
) -> tuple[mdl.ModelParams, TrainReport]:
    """Optimize a fresh model on mined triplets with early stopping.

    A fixed fraction of the triplets is held out; the returned params are the
    snapshot with the best validation triplet accuracy (first occurrence wins
    ties). Divergence aborts and returns the last finite-epoch snapshot.
    """
    if not triplets:
        raise ValueError("no triplets to train on")
    for t in triplets:
        for gid in (t.a, t.p, t.n):
            if gid not in graphs_by_id:
                raise ValueError(f"triplet references unknown graph id {gid!r}")
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(triplets))
    n_val = int(round(cfg.val_fraction * len(triplets))) if len(triplets) >= 2 else 0
    val = [triplets[i] for i in order[:n_val]]
    tr = [triplets[i] for i in order[n_val:]]
    if not tr:
        tr, val = val, []

    params = mdl.init_params(cfg.mode, cfg.d, cfg.L, cfg.d_g, cfg.use_norm, cfg.seed)
    ws = _Workspace(graphs_by_id, cfg.delta)
    opt = AdamW(
        params.trainable(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay
    )
    report = TrainReport(n_train=len(tr), n_val=len(val))
    best = _snapshot(params)
    best_acc = -1.0
    best_epoch = 0
    last_finite = _snapshot(params)
    stale = 0

    for epoch in range(1, cfg.max_epochs + 1):
        perm = rng.permutation(len(tr))
        epoch_losses = []
        diverged = False
        for start in range(0, len(tr), cfg.batch_size):
            batch = [tr[i] for i in perm[start : start + cfg.batch_size]]
            params.zero_grads()
            try:
                with ad.Tape() as tape:
                    loss = _batch_loss_t(ws, params, batch, cfg, training=True)
                value = loss.item()
                if not math.isfinite(value):
                    raise TrainingError(f"non-finite loss {value}")
                tape.backward(loss)
            except TrainingError:
                diverged = True
                break
            epoch_losses.append(value)
            opt.step()
            if any(not np.all(np.isfinite(p.data)) for p in params.trainable()):
                diverged = True
                break
        if diverged:
            report.diverged = True
            break
        train_loss = float(np.mean(epoch_losses)) if epoch_losses else 0.0
        try:
            val_pairs = score_triplets(params, cfg.mode, graphs_by_id, val, cfg.delta)
            val_acc = _accuracy(val_pairs)
            val_loss = _eval_loss(ws, params, val, cfg)
        except TrainingError:
            report.diverged = True
            break
        report.epochs.append(
            {
                "epoch": epoch,
                "train_loss": train_loss,
                "val_loss": val_loss,
                "val_triplet_accuracy": val_acc,
            }
        )
        last_finite = _snapshot(params)
        if val_acc > best_acc:
            best_acc = val_acc
            best = _snapshot(params)
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break

    if report.diverged:
        report.best_epoch = best_epoch if best_acc >= 0 else 0
        report.best_val_accuracy = max(best_acc, 0.0)
        return (best if best_acc > -1.0 else last_finite), report
    report.best_epoch = best_epoch
    report.best_val_accuracy = max(best_acc, 0.0)
    return best, report


def _eval_loss(
    ws: _Workspace, params: mdl.ModelParams, triplets: list[Triplet], cfg: TrainConfig
) -> float:
    if not triplets:
        return 0.0
    total = 0.0
    for start in range(0, len(triplets), cfg.batch_size):
        batch = triplets[start : start + cfg.batch_size]
        loss = _batch_loss_t(ws, params, batch, cfg, training=False)
        total += loss.item() * len(batch)
    return total / len(triplets)
