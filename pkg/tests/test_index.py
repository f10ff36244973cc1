"""Index file format, verification, and ranking semantics."""

import json
import struct

import numpy as np
import pytest

from plankern import index as ix
from plankern import model as mdl
from plankern.kernel import KernelConfig, embed_raw, normalized_similarity


@pytest.fixture(scope="module")
def gkn_index(small_plans, tmp_path_factory):
    graphs = small_plans[:15]
    embedded = [embed_raw(g) for g in graphs]
    records = [
        ix.IndexRecord(e.graph_id, e.H, e.histograms, e.self_norm) for e in embedded
    ]
    path = tmp_path_factory.mktemp("idx") / "raw.fpki"
    mu = KernelConfig.for_dim(14).mu
    ix.write_index(str(path), "GKN", 14, 4, 0, mu, "0" * 64, records)
    return path, graphs, embedded


def test_round_trip_preserves_everything(gkn_index):
    path, graphs, embedded = gkn_index
    header, records = ix.read_index(str(path))
    assert header["mode"] == "GKN" and header["count"] == 15
    assert header["checkpoint_sha256"] == "0" * 64
    for e, rec in zip(embedded, records):
        assert rec.graph_id == e.graph_id
        assert np.array_equal(rec.H, e.H)
        assert np.array_equal(rec.histograms, e.histograms)
        assert rec.self_norm == e.self_norm
        assert rec.pooled is None


def test_writes_are_byte_stable(gkn_index, tmp_path):
    path, _, embedded = gkn_index
    header, records = ix.read_index(str(path))
    again = tmp_path / "again.fpki"
    ix.write_index(
        str(again),
        header["mode"],
        header["d"],
        header["delta"],
        header["d_g"],
        header["mu"],
        header["checkpoint_sha256"],
        records,
    )
    assert again.read_bytes() == path.read_bytes()


def test_verify_index_passes_and_detects_corruption(gkn_index):
    path, _, _ = gkn_index
    header, records = ix.read_index(str(path))
    assert ix.verify_index(header, records) == []
    records[3].self_norm += 1e-6
    problems = ix.verify_index(header, records)
    assert len(problems) == 1 and records[3].graph_id in problems[0]
    header["count"] = 99
    assert len(ix.verify_index(header, records)) == 2


def test_gmn_mode_refused(tmp_path):
    with pytest.raises(ix.IndexFormatError, match="cannot be indexed"):
        ix.write_index(str(tmp_path / "x.fpki"), "GMN", 4, 4, 8, 0.25, "", [])


def test_bad_magic_version_and_trailing_bytes(gkn_index, tmp_path):
    path, _, _ = gkn_index
    data = path.read_bytes()

    bad_magic = tmp_path / "magic.fpki"
    bad_magic.write_bytes(b"XXXX" + data[4:])
    with pytest.raises(ix.IndexFormatError, match="magic"):
        ix.read_index(str(bad_magic))

    bad_version = tmp_path / "version.fpki"
    bad_version.write_bytes(data[:4] + struct.pack("<I", 9) + data[8:])
    with pytest.raises(ix.IndexFormatError, match="version"):
        ix.read_index(str(bad_version))

    trailing = tmp_path / "trailing.fpki"
    trailing.write_bytes(data + b"\x00")
    with pytest.raises(ix.IndexFormatError, match="trailing"):
        ix.read_index(str(trailing))


def test_gen_records_require_pooled_vector(tmp_path):
    rec = ix.IndexRecord("g", np.ones((2, 4)), np.ones((2, 4, 4), dtype=np.int64), 1.0)
    with pytest.raises(ix.IndexFormatError, match="pooled"):
        ix.write_index(str(tmp_path / "gen.fpki"), "GEN", 4, 4, 8, 0.25, "", [rec])


def test_shape_mismatch_rejected_at_write(tmp_path):
    rec = ix.IndexRecord("g", np.ones((2, 5)), np.ones((2, 4, 4), dtype=np.int64), 1.0)
    with pytest.raises(ix.IndexFormatError, match="shape mismatch"):
        ix.write_index(str(tmp_path / "bad.fpki"), "GKN", 4, 4, 0, 0.25, "", [rec])


def test_ranking_matches_offline_similarity(gkn_index):
    path, graphs, embedded = gkn_index
    header, records = ix.read_index(str(path))
    cfg = KernelConfig(mu=header["mu"], delta=header["delta"])
    query = embedded[4]
    result = ix.rank_records(header, records, query, None, k=15)
    assert result.query_id == query.graph_id
    scores = dict(result.ranking)
    for e in embedded:
        assert scores[e.graph_id] == normalized_similarity(query, e, cfg)
    # self-retrieval at rank 1, scores non-increasing
    assert result.ranking[0][0] == query.graph_id
    assert result.ranking[0][1] == pytest.approx(1.0, abs=1e-12)
    vals = [s for _, s in result.ranking]
    assert vals == sorted(vals, reverse=True)


def test_ranking_k_truncates_and_validates(gkn_index):
    path, _, embedded = gkn_index
    header, records = ix.read_index(str(path))
    result = ix.rank_records(header, records, embedded[0], None, k=3)
    assert len(result.ranking) == 3
    with pytest.raises(ValueError, match="k must be positive"):
        ix.rank_records(header, records, embedded[0], None, k=0)


def test_ranking_ties_break_on_ascending_id():
    H = np.ones((1, 2))
    hists = np.zeros((1, 4, 4), dtype=np.int64)
    hists[0, 0, 0] = 1
    records = [
        ix.IndexRecord(gid, H.copy(), hists.copy(), 1.0) for gid in ("b", "a", "c")
    ]
    header = {"mode": "GKN", "mu": 0.5, "delta": 4, "count": 3, "d": 2, "d_g": 0}
    query = records[0].embedded()
    result = ix.rank_records(header, records, query, None, k=3)
    assert [gid for gid, _ in result.ranking] == ["a", "b", "c"]


def test_gen_index_round_trip_and_ranking(small_plans, tmp_path):
    params = mdl.init_params("GEN", d=8, L=1, seed=0)
    graphs = small_plans[:6]
    records = []
    for g in graphs:
        e = mdl.embed(g, params)
        records.append(
            ix.IndexRecord(
                e.graph_id, e.H, e.histograms, e.self_norm, mdl.pool_vector(e.H, params)
            )
        )
    path = tmp_path / "gen.fpki"
    ix.write_index(str(path), "GEN", 8, 4, 16, 1.0 / 8, "f" * 64, records)
    header, back = ix.read_index(str(path))
    assert all(np.array_equal(r.pooled, s.pooled) for r, s in zip(back, records))

    query = back[2].embedded()
    result = ix.rank_records(header, back, query, back[2].pooled, k=6)
    assert result.ranking[0] == (query.graph_id, pytest.approx(0.0, abs=1e-12))
    with pytest.raises(ValueError, match="pooled"):
        ix.rank_records(header, back, query, None, k=6)


def test_rankings_file_format(tmp_path):
    results = [ix.RankResult("q1", [("g2", 0.5), ("g1", 0.25)])]
    path = tmp_path / "ranks.jsonl"
    ix.write_rankings(results, str(path))
    doc = json.loads(path.read_text().splitlines()[0])
    assert doc == {"query": "q1", "ranking": [["g2", 0.5], ["g1", 0.25]]}
