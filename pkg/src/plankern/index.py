"""Binary embedding index: precomputed per-graph state for fast querying.

Layout (all integers little-endian):

    magic   b"FPKI"
    version u32 (currently 1)
    hlen    u32, then hlen bytes of header JSON with sorted keys:
            {"checkpoint_sha256", "count", "d", "d_g", "delta", "mode", "mu"}
    then `count` records:
            id_len u32, id utf-8 bytes
            n      u32
            H           n*d        float64
            histograms  n*delta^2  int64
            self_norm   float64
            pooled      d_g float64   -- present only when mode == "GEN"

GKN queries need H, the histograms, and the cached self-kernel norm; GEN
queries need only the pooled vector (H is still stored so the index can be
verified against a recomputation). GMN checkpoints cannot be indexed at all
because their embeddings depend on the partner graph.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .kernel import EmbeddedGraph, KernelConfig, graph_kernel

MAGIC = b"FPKI"
VERSION = 1


class IndexFormatError(ValueError):
    pass


@dataclass
class IndexRecord:
    graph_id: str
    H: np.ndarray
    histograms: np.ndarray
    self_norm: float
    pooled: np.ndarray | None = None

    def embedded(self) -> EmbeddedGraph:
        """Rebuild the cached view without recomputing the self norm."""
        n = self.H.shape[0]
        return EmbeddedGraph(
            graph_id=self.graph_id,
            H=self.H,
            histograms=self.histograms,
            self_norm=self.self_norm,
            hist_flat=np.ascontiguousarray(
                self.histograms.reshape(n, -1), dtype=np.float64
            ),
            sq_norms=np.einsum("ij,ij->i", self.H, self.H),
        )


def write_index(
    path: str,
    mode: str,
    d: int,
    delta: int,
    d_g: int,
    mu: float,
    checkpoint_sha256: str,
    records: list[IndexRecord],
) -> None:
    if mode not in ("GKN", "GEN"):
        raise IndexFormatError(f"mode {mode!r} cannot be indexed")
    header = {
        "checkpoint_sha256": checkpoint_sha256,
        "count": len(records),
        "d": d,
        "d_g": d_g,
        "delta": delta,
        "mode": mode,
        "mu": mu,
    }
    blob = json.dumps(header, separators=(",", ":"), sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(blob)))
        fh.write(blob)
        for rec in records:
            if rec.H.shape[1] != d or rec.histograms.shape[1] != delta:
                raise IndexFormatError(f"record {rec.graph_id} shape mismatch with header")
            if mode == "GEN" and (rec.pooled is None or rec.pooled.shape != (d_g,)):
                raise IndexFormatError(f"record {rec.graph_id} is missing its pooled vector")
            ident = rec.graph_id.encode()
            fh.write(struct.pack("<I", len(ident)))
            fh.write(ident)
            fh.write(struct.pack("<I", rec.H.shape[0]))
            fh.write(np.ascontiguousarray(rec.H, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(rec.histograms, dtype="<i8").tobytes())
            fh.write(struct.pack("<d", rec.self_norm))
            if mode == "GEN":
                fh.write(np.ascontiguousarray(rec.pooled, dtype="<f8").tobytes())


def read_index(path: str) -> tuple[dict, list[IndexRecord]]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise IndexFormatError(f"{path} is not an embedding index (bad magic)")
    version, hlen = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise IndexFormatError(f"unsupported index version {version}")
    pos = 12
    header = json.loads(data[pos : pos + hlen].decode())
    pos += hlen
    d, delta, d_g, mode = header["d"], header["delta"], header["d_g"], header["mode"]
    records = []
    for _ in range(header["count"]):
        (id_len,) = struct.unpack_from("<I", data, pos)
        pos += 4
        graph_id = data[pos : pos + id_len].decode()
        pos += id_len
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        H = np.frombuffer(data, dtype="<f8", count=n * d, offset=pos).reshape(n, d).copy()
        pos += n * d * 8
        hists = (
            np.frombuffer(data, dtype="<i8", count=n * delta * delta, offset=pos)
            .reshape(n, delta, delta)
            .copy()
        )
        pos += n * delta * delta * 8
        (self_norm,) = struct.unpack_from("<d", data, pos)
        pos += 8
        pooled = None
        if mode == "GEN":
            pooled = np.frombuffer(data, dtype="<f8", count=d_g, offset=pos).copy()
            pos += d_g * 8
        records.append(IndexRecord(graph_id, H, hists, self_norm, pooled))
    if pos != len(data):
        raise IndexFormatError(f"{len(data) - pos} trailing bytes after the last record")
    return header, records


def verify_index(header: dict, records: list[IndexRecord]) -> list[str]:
    """Invariant check: self norms must match a recomputation within 1e-9."""
    problems = []
    if header["count"] != len(records):
        problems.append(f"header count {header['count']} != record count {len(records)}")
    cfg = KernelConfig(mu=header["mu"], delta=header["delta"])
    for rec in records:
        e = rec.embedded()
        recomputed = float(np.sqrt(graph_kernel(e, e, cfg)))
        if abs(recomputed - rec.self_norm) > 1e-9:
            problems.append(
                f"record {rec.graph_id}: stored self_norm {rec.self_norm!r} "
                f"!= recomputed {recomputed!r}"
            )
    return problems


@dataclass
class RankResult:
    query_id: str
    ranking: list[tuple[str, float]]  # (gallery id, score), scores non-increasing


def rank_records(
    header: dict,
    records: list[IndexRecord],
    query: EmbeddedGraph,
    query_pooled: np.ndarray | None,
    k: int,
    cfg: KernelConfig | None = None,
) -> RankResult:
    """Score a query against every record; ties break on ascending gallery id."""
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    mode = header["mode"]
    scored: list[tuple[str, float]] = []
    if mode == "GKN":
        if cfg is None:
            cfg = KernelConfig(mu=header["mu"], delta=header["delta"])
        for rec in records:
            # same expression as normalized_similarity so index and offline
            # scores agree bit for bit
            e = rec.embedded()
            s = graph_kernel(query, e, cfg) / (query.self_norm * e.self_norm)
            scored.append((rec.graph_id, s))
    elif mode == "GEN":
        if query_pooled is None:
            raise ValueError("GEN ranking needs the query's pooled vector")
        for rec in records:
            s = -float(np.linalg.norm(query_pooled - rec.pooled))
            scored.append((rec.graph_id, s))
    else:
        raise IndexFormatError(f"cannot rank against a {mode!r} index")
    scored.sort(key=lambda item: (-item[1], item[0]))
    return RankResult(query.graph_id, scored[: min(k, len(scored))])


def write_rankings(results: list[RankResult], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in results:
            doc = {"query": r.query_id, "ranking": [[gid, s] for gid, s in r.ranking]}
            fh.write(json.dumps(doc, separators=(",", ":")))
            fh.write("\n")
