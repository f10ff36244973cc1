"""Command-line front end: gen, mine, train, embed, query, eval, bench, sweep.

All randomness flows from one seed (config `seed`, overridable with --seed),
and every artifact-writing verb is byte-reproducible given identical inputs.
Heavy imports happen inside main() so --threads can pin BLAS pools first.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import statistics
import sys
import time


def _build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="flat key=value config file")
    shared.add_argument("--seed", type=int, help="override the config seed")
    shared.add_argument("--out", help="output path")
    shared.add_argument("--threads", type=int, default=1, help="BLAS thread cap (default 1)")

    parser = argparse.ArgumentParser(
        prog="plankern",
        description="Floor-plan graph similarity: train, index, retrieve, benchmark.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("gen", parents=[shared], help="generate a synthetic dataset")

    p = sub.add_parser("mine", parents=[shared], help="mine training triplets")
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", choices=["all", "train", "test"], default="train")

    p = sub.add_parser("train", parents=[shared], help="train a model on triplets")
    p.add_argument("--dataset", required=True)
    p.add_argument("--triplets", required=True)
    p.add_argument("--report", help="per-epoch CSV (default: <out>.report.csv)")

    p = sub.add_parser("embed", parents=[shared], help="build an embedding index")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=["all", "train", "test"], default="all")

    p = sub.add_parser("query", parents=[shared], help="rank gallery plans per query")
    p.add_argument("--index", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--k", type=int, default=10)

    p = sub.add_parser("eval", parents=[shared], help="retrieval metrics on the test split")
    p.add_argument("--index", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--triplets", help="held-out triplets for triplet accuracy")
    p.add_argument("--gt", choices=["sged", "miou"])

    p = sub.add_parser("bench", parents=[shared], help="pairwise scoring speed benchmark")
    p.add_argument("--dataset", required=True)
    p.add_argument("--gkn", required=True, help="GKN checkpoint")
    p.add_argument("--gmn", required=True, help="GMN checkpoint")
    p.add_argument("--gen", help="GEN checkpoint (optional)")

    p = sub.add_parser("sweep", parents=[shared], help="accuracy vs model size grid")
    p.add_argument("--dataset", required=True)
    p.add_argument("--triplets", required=True)
    return parser


class CommandError(RuntimeError):
    pass


def _require_out(args) -> str:
    if not args.out:
        raise CommandError("--out is required for this command")
    return args.out


def _load_values(args) -> dict:
    from .config import load_config

    values = load_config(args.config)
    if args.seed is not None:
        values["seed"] = args.seed
    return values


def _sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _meta_path(dataset: str) -> str:
    return dataset + ".meta.json"


def _load_meta(dataset: str) -> dict:
    path = _meta_path(dataset)
    if not os.path.exists(path):
        raise CommandError(f"no split metadata at {path}; run gen first")
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _split_graphs(graphs, dataset: str, split: str):
    if split == "all":
        return graphs
    meta = _load_meta(dataset)
    wanted = set(meta["train_ids" if split == "train" else "test_ids"])
    return [g for g in graphs if g.id in wanted]


def cmd_gen(args) -> int:
    import numpy as np

    from .config import gen_config
    from .graphs import write_graphs
    from .synth import synth_generate

    values = _load_values(args)
    out = _require_out(args)
    cfg = gen_config(values)
    plans = synth_generate(cfg)
    write_graphs(plans, out)

    rng = np.random.default_rng(values["seed"])
    perm = rng.permutation(len(plans))
    n_train = int(round(values["train_fraction"] * len(plans)))
    train_ids = [plans[i].id for i in perm[:n_train]]
    test_ids = [plans[i].id for i in perm[n_train:]]
    n_folds = max(1, values["folds"])
    folds = [test_ids[f::n_folds] for f in range(n_folds)]
    meta = {
        "count": len(plans),
        "dataset_sha256": _sha256_file(out),
        "folds": folds,
        "seed": values["seed"],
        "test_ids": test_ids,
        "train_fraction": values["train_fraction"],
        "train_ids": train_ids,
    }
    with open(_meta_path(out), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, separators=(",", ":"), sort_keys=True)
        fh.write("\n")
    print(f"gen: wrote {len(plans)} plans to {out} ({len(train_ids)} train / {len(test_ids)} test)")
    return 0


def cmd_mine(args) -> int:
    from .graphs import read_graphs
    from .training import mine_triplets, write_triplets

    values = _load_values(args)
    out = _require_out(args)
    graphs = _split_graphs(read_graphs(args.dataset), args.dataset, args.split)
    triplets = mine_triplets(
        graphs,
        per_anchor=values["per_anchor"],
        seed=values["seed"],
        top=values["mine_top"],
        resolution=values["mine_resolution"],
        anchor_limit=values["anchor_limit"],
    )
    write_triplets(triplets, out)
    print(f"mine: wrote {len(triplets)} triplets to {out}")
    return 0


def cmd_train(args) -> int:
    from .config import train_config
    from .graphs import read_graphs
    from .model import save_checkpoint
    from .training import read_triplets, train

    values = _load_values(args)
    out = _require_out(args)
    graphs = {g.id: g for g in read_graphs(args.dataset)}
    triplets = read_triplets(args.triplets)
    if not triplets:
        raise CommandError(f"no triplets in {args.triplets}; nothing to train on")
    cfg = train_config(values)
    params, report = train(graphs, triplets, cfg)
    save_checkpoint(params, out)
    report_path = args.report or out + ".report.csv"
    report.to_csv(report_path)
    status = "diverged" if report.diverged else "ok"
    print(
        f"train[{cfg.mode} d={cfg.d} L={cfg.L}]: {status}, "
        f"best epoch {report.best_epoch}, val accuracy {report.best_val_accuracy:.4f}, "
        f"checkpoint {out}, report {report_path}"
    )
    return 0


def cmd_embed(args) -> int:
    from .graphs import read_graphs
    from .index import IndexRecord, write_index
    from .kernel import KernelConfig
    from .model import ModeError, checkpoint_hash, embed, load_checkpoint, pool_vector

    values = _load_values(args)
    out = _require_out(args)
    params = load_checkpoint(args.checkpoint)
    if params.mode == "GMN":
        raise CommandError(
            "cross-graph mode cannot precompute: a GMN embedding is a function of "
            "the query-gallery pair, so per-graph records do not exist"
        )
    graphs = _split_graphs(read_graphs(args.dataset), args.dataset, args.split)
    delta = values["delta"]
    mu = values["mu"] if values["mu"] is not None else 1.0 / params.d
    cfg = KernelConfig(mu=mu, delta=delta)
    records = []
    for g in graphs:
        try:
            e = embed(g, params, cfg=cfg, delta=delta)
        except ModeError as exc:
            raise CommandError(str(exc)) from exc
        pooled = pool_vector(e.H, params) if params.mode == "GEN" else None
        records.append(IndexRecord(e.graph_id, e.H, e.histograms, e.self_norm, pooled))
    write_index(
        out, params.mode, params.d, delta, params.d_g, mu,
        checkpoint_hash(args.checkpoint), records,
    )
    print(f"embed: indexed {len(records)} graphs ({params.mode}, d={params.d}) into {out}")
    return 0


def _check_index_matches(header: dict, checkpoint_path: str, params) -> None:
    from .model import checkpoint_hash

    if header["checkpoint_sha256"] != checkpoint_hash(checkpoint_path):
        raise CommandError(
            "stale index: checkpoint hash does not match the index header; re-run embed"
        )
    if header["d"] != params.d or header["mode"] != params.mode:
        raise CommandError(
            f"index built for mode={header['mode']} d={header['d']}, "
            f"checkpoint is mode={params.mode} d={params.d}"
        )


def _embed_query(g, params, header):
    from .kernel import KernelConfig
    from .model import embed, pool_vector

    cfg = KernelConfig(mu=header["mu"], delta=header["delta"])
    e = embed(g, params, cfg=cfg, delta=header["delta"])
    pooled = pool_vector(e.H, params) if params.mode == "GEN" else None
    return e, pooled


def cmd_query(args) -> int:
    from .graphs import read_graphs
    from .index import rank_records, read_index, write_rankings
    from .model import load_checkpoint

    _load_values(args)
    out = _require_out(args)
    header, records = read_index(args.index)
    params = load_checkpoint(args.checkpoint)
    _check_index_matches(header, args.checkpoint, params)
    results = []
    for g in read_graphs(args.queries):
        e, pooled = _embed_query(g, params, header)
        results.append(rank_records(header, records, e, pooled, args.k))
    write_rankings(results, out)
    print(f"query: ranked {len(results)} queries against {len(records)} records into {out}")
    return 0


def cmd_eval(args) -> int:
    import numpy as np

    from .graphs import read_graphs
    from .index import rank_records, read_index
    from .metrics import RasterConfig, miou, precision_at_k, sged, triplet_accuracy
    from .model import load_checkpoint
    from .training import read_triplets, score_triplets

    values = _load_values(args)
    out = _require_out(args)
    gt_kind = args.gt or values["gt"]
    header, records = read_index(args.index)
    params = load_checkpoint(args.checkpoint)
    _check_index_matches(header, args.checkpoint, params)

    graphs = read_graphs(args.dataset)
    by_id = {g.id: g for g in graphs}
    meta = _load_meta(args.dataset)
    if meta["dataset_sha256"] != _sha256_file(args.dataset):
        raise CommandError("dataset file does not match the hash recorded in its metadata")
    gallery_ids = {r.graph_id for r in records}
    test_ids = set(meta["test_ids"])
    overlap = gallery_ids & test_ids
    if overlap:
        raise CommandError(
            f"overlapping splits: {len(overlap)} test plans are in the gallery index"
        )

    top = values["eval_top"]
    raster = RasterConfig(resolution=values["raster_resolution"])

    def gt_score(qid: str, cid: str) -> float:
        if gt_kind == "sged":
            return sged(by_id[qid], by_id[cid])
        return miou(by_id[qid], by_id[cid], raster)

    fold_rows = []
    for fold_idx, fold in enumerate(meta["folds"]):
        p5s, p10s = [], []
        for qid in fold:
            e, pooled = _embed_query(by_id[qid], params, header)
            ranked = rank_records(header, records, e, pooled, top)
            candidate_ids = [gid for gid, _ in ranked.ranking]
            gts = {cid: gt_score(qid, cid) for cid in candidate_ids}
            p5s.append(precision_at_k(candidate_ids, gts, 5))
            p10s.append(precision_at_k(candidate_ids, gts, 10))
        if p5s:
            fold_rows.append((fold_idx, len(p5s), float(np.mean(p5s)), float(np.mean(p10s))))
    if not fold_rows:
        raise CommandError("no test queries in any fold; check the dataset metadata")

    trip_acc = None
    if args.triplets:
        held = read_triplets(args.triplets)
        pairs = score_triplets(params, params.mode, by_id, held, header["delta"])
        trip_acc = triplet_accuracy(pairs)

    with open(out, "w", encoding="utf-8") as fh:
        fh.write("fold,n_queries,p_at_5,p_at_10\n")
        for fold_idx, n, p5, p10 in fold_rows:
            fh.write(f"{fold_idx},{n},{p5!r},{p10!r}\n")
        p5_mean = float(np.mean([r[2] for r in fold_rows]))
        p10_mean = float(np.mean([r[3] for r in fold_rows]))
        p5_std = float(np.std([r[2] for r in fold_rows]))
        p10_std = float(np.std([r[3] for r in fold_rows]))
        fh.write(f"mean,{sum(r[1] for r in fold_rows)},{p5_mean!r},{p10_mean!r}\n")
        fh.write(f"std,,{p5_std!r},{p10_std!r}\n")
        if trip_acc is not None:
            fh.write(f"triplet_accuracy,{len(held)},{trip_acc!r},\n")
    msg = (
        f"eval[{gt_kind}]: P@5 {p5_mean:.4f} ± {p5_std:.4f}, "
        f"P@10 {p10_mean:.4f} ± {p10_std:.4f} over {len(fold_rows)} folds"
    )
    if trip_acc is not None:
        msg += f", triplet accuracy {trip_acc:.4f}"
    print(msg + f" -> {out}")
    return 0


def _forward_flops(params, n_nodes: int, n_directed: int, cross: bool) -> int:
    """Rough multiply-add count for one joint forward at the given sizes."""

    def mlp(rows: int, n_in: int, n_out: int) -> int:
        return rows * 2 * (n_in * n_out + n_out * n_out)

    d, L = params.d, params.L
    total = mlp(n_nodes, 8, d) + mlp(n_nodes, 6, d) + mlp(n_nodes, 2 * d, d) + mlp(3, 2, d)
    gru_in = 2 * d if cross else d
    per_layer = (
        mlp(n_directed, 3 * d, d)
        + n_nodes * 3 * 2 * (gru_in * d + d * d)  # three gates
        + n_nodes * 10 * d  # norms, gates, blends
    )
    if cross:
        half = n_nodes // 2
        per_layer += 3 * 2 * half * half * d  # scores + two attention products
    total += L * per_layer
    if params.mode in ("GEN", "GMN"):
        total += 2 * mlp(n_nodes, d, params.d_g)
    return total


def cmd_bench(args) -> int:
    import numpy as np

    from .backend import BACKEND_NAME, available_backends
    from .graphs import read_graphs
    from .kernel import KernelConfig
    from .model import embed, embed_pair_t, load_checkpoint, pool_vector

    values = _load_values(args)
    out = _require_out(args)
    graphs = read_graphs(args.dataset)
    if len(graphs) < 2:
        raise CommandError("benchmark needs at least two graphs")
    rng = np.random.default_rng(values["seed"])
    n_pairs = values["bench_pairs"]
    runs = values["bench_runs"]
    warmup = values["bench_warmup"]
    idx_a = rng.integers(0, len(graphs), size=n_pairs)
    idx_b = rng.integers(0, len(graphs), size=n_pairs)
    idx_b = np.where(idx_b == idx_a, (idx_b + 1) % len(graphs), idx_b)

    avg_nodes = float(np.mean([g.n_nodes for g in graphs]))
    avg_directed = float(np.mean([2 * len(g.edges) + g.n_nodes for g in graphs]))
    report: dict = {
        "pairs": n_pairs,
        "runs": runs,
        "active_backend": BACKEND_NAME,
        "modes": {},
    }

    def timed(fn) -> tuple[float, float, list[float]]:
        for _ in range(warmup):
            fn()
        samples = []
        for _ in range(runs):
            t0 = time.perf_counter()
            fn()
            samples.append(time.perf_counter() - t0)
        return statistics.mean(samples), statistics.pstdev(samples), samples

    # GKN: index precomputation is free; only pair scoring is timed
    gkn_params = load_checkpoint(args.gkn)
    if gkn_params.mode != "GKN":
        raise CommandError(f"--gkn checkpoint has mode {gkn_params.mode}")
    delta = values["delta"]
    cfg = KernelConfig(mu=1.0 / gkn_params.d, delta=delta)
    embedded = [embed(g, gkn_params, cfg=cfg, delta=delta) for g in graphs]
    per_backend = {}
    for name, score in sorted(available_backends().items()):

        def run_gkn(score=score):
            total = 0.0
            for i, j in zip(idx_a, idx_b):
                a, b = embedded[i], embedded[j]
                total += score(
                    a.H, a.hist_flat, a.sq_norms, b.H, b.hist_flat, b.sq_norms, cfg.mu
                ) / (a.self_norm * b.self_norm)
            return total

        mean, std, samples = timed(run_gkn)
        per_backend[name] = {"seconds_mean": mean, "seconds_std": std, "samples": samples}
    gkn_mean = per_backend[BACKEND_NAME]["seconds_mean"]
    nn = avg_nodes * avg_nodes
    report["modes"]["GKN"] = {
        "seconds_mean": gkn_mean,
        "seconds_std": per_backend[BACKEND_NAME]["seconds_std"],
        "per_backend": per_backend,
        "flops_per_pair": nn * (2 * gkn_params.d + 2 * delta * delta + 5),
    }

    # GEN: pooled vectors precomputed, scoring is one small vector distance
    if args.gen:
        gen_params = load_checkpoint(args.gen)
        if gen_params.mode != "GEN":
            raise CommandError(f"--gen checkpoint has mode {gen_params.mode}")
        pooled = np.stack(
            [pool_vector(embed(g, gen_params, delta=delta).H, gen_params) for g in graphs]
        )

        def run_gen():
            total = 0.0
            for i, j in zip(idx_a, idx_b):
                diff = pooled[i] - pooled[j]
                total += -math.sqrt(float(diff @ diff))
            return total

        mean, std, samples = timed(run_gen)
        report["modes"]["GEN"] = {
            "seconds_mean": mean,
            "seconds_std": std,
            "samples": samples,
            "flops_per_pair": 3 * gen_params.d_g,
        }

    # GMN: nothing can be precomputed; each pair runs the joint network
    gmn_params = load_checkpoint(args.gmn)
    if gmn_params.mode != "GMN":
        raise CommandError(f"--gmn checkpoint has mode {gmn_params.mode}")
    if gmn_params.d != gkn_params.d or gmn_params.L != gkn_params.L:
        raise CommandError("bench expects all checkpoints at the same (d, L)")

    def run_gmn():
        total = 0.0
        for i, j in zip(idx_a, idx_b):
            h1, h2 = embed_pair_t(graphs[i], graphs[j], gmn_params, training=False)
            diff = pool_vector(h1.data, gmn_params) - pool_vector(h2.data, gmn_params)
            total += -math.sqrt(float(diff @ diff))
        return total

    mean, std, samples = timed(run_gmn)
    report["modes"]["GMN"] = {
        "seconds_mean": mean,
        "seconds_std": std,
        "samples": samples,
        "flops_per_pair": _forward_flops(
            gmn_params, int(2 * avg_nodes), int(2 * avg_directed), cross=True
        ),
    }
    report["speedup_gmn_over_gkn"] = report["modes"]["GMN"]["seconds_mean"] / gkn_mean

    with open(out, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"bench: GKN {gkn_mean:.3f}s vs GMN {mean:.3f}s per {n_pairs} pairs "
        f"(speedup {report['speedup_gmn_over_gkn']:.1f}x, backend {BACKEND_NAME}) -> {out}"
    )
    return 0


def cmd_sweep(args) -> int:
    from dataclasses import replace

    from .config import train_config
    from .graphs import read_graphs
    from .model import expected_param_count
    from .training import read_triplets, train

    values = _load_values(args)
    out = _require_out(args)
    graphs = {g.id: g for g in read_graphs(args.dataset)}
    triplets = read_triplets(args.triplets)
    if not triplets:
        raise CommandError(f"no triplets in {args.triplets}")
    base = train_config(values)
    rows = []
    for mode in values["sweep_modes"]:
        for d in sorted(values["sweep_d"]):
            for L in sorted(values["sweep_L"]):
                cfg = replace(base, mode=mode, d=d, L=L, d_g=None)
                params, report = train(graphs, triplets, cfg)
                rows.append(
                    (mode, d, L, expected_param_count(mode, d, L), report.best_val_accuracy)
                )
                print(
                    f"sweep: {mode} d={d} L={L} params={rows[-1][3]} "
                    f"accuracy={report.best_val_accuracy:.4f}"
                )
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("mode,d,L,param_count,triplet_accuracy\n")
        for mode, d, L, count, acc in rows:
            fh.write(f"{mode},{d},{L},{count},{acc!r}\n")
    print(f"sweep: wrote {len(rows)} rows to {out}")
    return 0


_VERBS = {
    "gen": cmd_gen,
    "mine": cmd_mine,
    "train": cmd_train,
    "embed": cmd_embed,
    "query": cmd_query,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "sweep": cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    threads = str(max(1, args.threads))
    for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, threads)
    try:
        return _VERBS[args.verb](args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
