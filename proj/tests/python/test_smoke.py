import json
import math

import numpy as np
import pytest

import notesearch as ns


def unit_rows(n, dim, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, dim)).astype(np.float32)
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def test_chunks_cover_text_with_overlap():
    text = " ".join(f"w{i}" for i in range(1000))
    chunks = ns.chunk_note(text, note_id=9, chunk_tokens=100, overlap_tokens=20, boundary_window_tokens=10)
    assert len(chunks) == ns.count_chunks(1000, 100, 20)
    assert chunks[0]["first_token"] == 0
    assert chunks[-1]["last_token"] == 999
    for a, b in zip(chunks, chunks[1:]):
        assert a["last_token"] - b["first_token"] + 1 == 20
    for c in chunks:
        assert text[c["char_start"] : c["char_end"]] == c["text"]


def test_bad_chunking_config_raises():
    with pytest.raises(ns.InvalidArgument):
        ns.chunk_note("a b c", chunk_tokens=10, overlap_tokens=10)


def test_tokenize_offsets():
    assert ns.tokenize("Hi, there") == [(0, 2), (2, 3), (4, 9)]


def test_reference_embedding_is_unit_and_deterministic():
    a = ns.reference_embed("seizure onset at age three", 64)
    b = ns.reference_embed("seizure onset at age three", 64)
    assert a.shape == (64,)
    assert math.isclose(float(np.dot(a, a)), 1.0, rel_tol=1e-5)
    assert np.array_equal(a, b)


def test_row_key_example_and_round_trip():
    assert ns.make_row_key(12345) == "39#54321000000000000000"
    for i in [0, 1, 255, 256, 10**12, 2**63 - 1]:
        assert ns.decode_row_key(ns.make_row_key(i)) == i


def test_index_matches_brute_force_when_probing_everything(tmp_path):
    dim = 24
    data = unit_rows(2000, dim, 1)
    idx = ns.AnnIndex(dim, num_partitions=16, nprobe=16, spill=1, rescore_budget=2000, quantization="none")
    idx.train(data[:800], seed=5)
    notes = list(range(1, 2001))
    idx.insert(data, notes)
    assert len(idx) == 2000
    queries = unit_rows(20, dim, 2)
    for q in queries:
        hits = idx.search(q, 10)
        oracle = np.argsort(-(data @ q), kind="stable")[:10] + 1
        assert [h[1] for h in hits] == list(oracle)
    path = tmp_path / "i.idx"
    idx.save(str(path))
    again = ns.AnnIndex.load(str(path))
    assert again.generation == idx.generation
    assert again.search(queries[0], 10) == idx.search(queries[0], 10)


def test_index_filter_and_vocabulary():
    dim = 8
    data = unit_rows(50, dim, 3)
    idx = ns.AnnIndex(dim, num_partitions=4, nprobe=4)
    idx.train(data, seed=1)
    attrs = [{"specialty": "Oncology" if i % 2 else "Neurology", "age_days": float(i)} for i in range(50)]
    idx.insert(data, list(range(50)), attributes=attrs)
    hits = idx.search(data[0], 50, filter={"specialty": {"include": ["Oncology"]}})
    assert hits and all(h[1] % 2 == 1 for h in hits)
    vocab = idx.vocabulary()
    assert json.dumps(vocab)
    with pytest.raises(ns.Error):
        idx.search(data[0], 5, filter={"not_a_field": {}})


def test_corrupt_index_file_raises(tmp_path):
    path = tmp_path / "bad.idx"
    path.write_bytes(b"not an index at all")
    with pytest.raises(ns.FormatError):
        ns.AnnIndex.load(str(path))


def test_statistics():
    low, high = ns.wilson_ci(319, 334)
    assert abs(low - 0.927) < 0.001 and abs(high - 0.973) < 0.001
    assert ns.cohens_kappa(["a", "b", "a", "b"], ["a", "b", "a", "b"]) == 1.0
    u, p, method = ns.mann_whitney_u([1.0, 2.0, 3.0], [4.0, 5.0, 6.0])
    assert u == 0.0 and method == "exact"
    assert math.isclose(p, 0.1, rel_tol=1e-9)
    assert ns.majority_vote([2, 1, 1, 2]) == 1
    with pytest.raises(ns.UndefinedStatistic):
        ns.cohens_kappa(["a", "a"], ["a", "a"])


def test_engine_searches_stored_notes(tmp_path):
    notes = [
        {
            "note_id": i,
            "text": text,
            "patient": {"mrn": f"M{i:03d}", "birth_date": "2010-01-01"},
            "note_category": "Progress Note",
            "encounter_type": "Office Visit",
            "department": "Clinic",
            "specialty": spec,
            "author": {"name": "Dr. A", "role": "Physician"},
            "filed_time": "2020-01-02T00:00:00Z",
            "creation_time": "2020-01-02T00:00:00Z",
        }
        for i, (text, spec) in enumerate(
            [
                ("Seizure onset at age three with focal features.", "Neurology"),
                ("Started chemotherapy for osteosarcoma.", "Oncology"),
                ("Asthma controlled on inhaled steroids.", "Pulmonology"),
            ],
            start=1,
        )
    ]
    store = ns.NoteStore(str(tmp_path / "notes.log"))
    assert store.put_notes(notes) == 3
    assert store.get_note(2)["specialty"] == "Oncology"
    assert store.get_note(99) is None

    dim = 32
    vecs = np.stack([ns.reference_embed(n["text"], dim) for n in notes])
    idx = ns.AnnIndex(dim, num_partitions=1, nprobe=1, spill=1)
    idx.train(vecs, seed=1)
    idx.insert(vecs, [1, 2, 3], chunk_ids=[ns.make_chunk_id(i, 0) for i in (1, 2, 3)],
               attributes=[{"specialty": n["specialty"]} for n in notes])
    idx.save(str(tmp_path / "index.idx"))

    engine = ns.Engine(str(tmp_path / "index.idx"), str(tmp_path / "notes.log"), dim)
    resp = engine.search({"question": "seizure onset", "notes_to_retrieve": 3}, "alice", allowlist=[1, 3])
    ids = [h["note_id"] for h in resp["hits"]]
    assert 2 not in ids and ids
    assert engine.audit_count == 1
