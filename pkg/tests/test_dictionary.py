import numpy as np
import pytest

from mrfmap.dictionary import (
    Dictionary,
    GridSpec,
    build_dictionary,
    expand_grid,
    load_dictionary,
    match,
    match_batch,
    save_dictionary,
)
from mrfmap.epg import TissueParams, simulate_fingerprint
from mrfmap.schedule import default_schedule


@pytest.fixture(scope="module")
def toy_dictionary():
    spec = GridSpec(
        t1_segments=((200.0, 1000.0, 200.0),),
        t2_segments=((50.0, 250.0, 50.0),),
    )
    schedule = default_schedule(80)
    return build_dictionary(spec, schedule), schedule


def brute_force_pairs(t1_segments, t2_segments):
    """Independent enumeration oracle using integer segment arithmetic."""
    def seg_values(segments):
        vals = set()
        for start, stop, step in segments:
            k = 0
            while start + k * step <= stop + 1e-9:
                vals.add(round(start + k * step, 9))
                k += 1
        return sorted(v for v in vals if v > 0)

    t1s = seg_values(t1_segments)
    t2s = seg_values(t2_segments)
    return [(t1, t2) for t1 in t1s for t2 in t2s if t2 <= t1]


def naive_match(dictionary, query):
    """O(M*N) double-loop reference matcher."""
    q = np.asarray(query, dtype=np.float64)
    q = q / np.linalg.norm(q)
    best_idx, best_score = 0, -np.inf
    for i in range(dictionary.n_atoms):
        s = 0.0
        row = dictionary.atoms[i]
        for j in range(dictionary.n_samples):
            s += row[j] * q[j]
        if s > best_score:
            best_idx, best_score = i, s
    return dictionary.labels[best_idx], best_score


class TestExpandGrid:
    def test_small_enumeration(self):
        spec = GridSpec(t1_segments=((100.0, 300.0, 100.0),),
                        t2_segments=((50.0, 100.0, 50.0),))
        pairs = {(p.t1_ms, p.t2_ms) for p in expand_grid(spec)}
        assert pairs == {(100, 50), (100, 100), (200, 50), (200, 100),
                         (300, 50), (300, 100)}

    def test_zero_removal_and_filter(self):
        spec = GridSpec(t1_segments=((0.0, 2.0, 2.0),),
                        t2_segments=((0.0, 2.0, 1.0),))
        pairs = {(p.t1_ms, p.t2_ms) for p in expand_grid(spec)}
        assert pairs == {(2, 1), (2, 2)}

    def test_zero_only_values_dropped(self):
        spec = GridSpec(t1_segments=((0.0, 2.0, 2.0),),
                        t2_segments=((0.0, 1.0, 1.0),))
        pairs = {(p.t1_ms, p.t2_ms) for p in expand_grid(spec)}
        assert pairs == {(2, 1)}

    def test_paper_grid_matches_enumeration_oracle(self):
        spec = GridSpec.paper_grid()
        # Raw per-segment T1 counts before dedup/zero-removal.
        raw = [int(round((stop - start) / step)) + 1
               for start, stop, step in spec.t1_segments]
        assert raw == [251, 101, 101, 41]
        expected = brute_force_pairs(spec.t1_segments, spec.t2_segments)
        got = [(p.t1_ms, p.t2_ms) for p in expand_grid(spec)]
        assert got == expected

    def test_lexicographic_order(self):
        spec = GridSpec(t1_segments=((100.0, 400.0, 100.0),),
                        t2_segments=((20.0, 60.0, 20.0),))
        pairs = [(p.t1_ms, p.t2_ms) for p in expand_grid(spec)]
        assert pairs == sorted(pairs)

    def test_empty_after_filter_is_error(self):
        spec = GridSpec(t1_segments=((0.0, 0.0, 1.0),),
                        t2_segments=((10.0, 20.0, 10.0),))
        with pytest.raises(ValueError):
            expand_grid(spec)

    def test_invalid_segment_rejected(self):
        with pytest.raises(ValueError):
            GridSpec(t1_segments=((100.0, 50.0, 10.0),), t2_segments=((1, 2, 1),))
        with pytest.raises(ValueError):
            GridSpec(t1_segments=((0.0, 10.0, 0.0),), t2_segments=((1, 2, 1),))


class TestBuildDictionary:
    def test_rows_normalized(self, toy_dictionary):
        d, _ = toy_dictionary
        norms = np.linalg.norm(d.atoms, axis=1)
        assert np.all(np.abs(norms - 1.0) < 1e-6)

    def test_labels_physical(self, toy_dictionary):
        d, _ = toy_dictionary
        for p in d.labels:
            assert p.t2_ms <= p.t1_ms and p.t1_ms > 0 and p.t2_ms > 0

    def test_deterministic_rebuild(self, toy_dictionary, tmp_path):
        d, schedule = toy_dictionary
        d2 = build_dictionary(d.grid, schedule)
        p1 = save_dictionary(d, tmp_path / "a")[0]
        p2 = save_dictionary(d2, tmp_path / "b")[0]
        assert p1.read_bytes() == p2.read_bytes()

    def test_resimulation_spot_check(self, toy_dictionary):
        d, schedule = toy_dictionary
        rng = np.random.default_rng(5)
        for i in rng.integers(0, d.n_atoms, size=10):
            mag = simulate_fingerprint(d.labels[i], schedule).magnitude()
            expected = mag / np.linalg.norm(mag)
            # Rows are quantized to float32 at build time.
            np.testing.assert_allclose(d.atoms[i], expected, atol=1e-6)

    def test_batching_does_not_change_atoms(self, toy_dictionary):
        d, schedule = toy_dictionary
        d2 = build_dictionary(d.grid, schedule, batch_size=3)
        np.testing.assert_array_equal(d.atoms, d2.atoms)


class TestMatch:
    def test_self_match(self, toy_dictionary):
        d, schedule = toy_dictionary
        raw = simulate_fingerprint(d.labels[7], schedule).magnitude()
        label, score = match(d, raw)
        assert label == d.labels[7]
        assert score >= 1.0 - 1e-6

    def test_scale_invariance(self, toy_dictionary):
        d, _ = toy_dictionary
        q = d.atoms[3] * 1.7 + 0.0
        l1, s1 = match(d, q)
        l2, s2 = match(d, 3.7 * q)
        assert l1 == l2
        assert abs(s1 - s2) < 1e-9

    def test_matches_naive_reference_on_noisy_queries(self, toy_dictionary):
        d, _ = toy_dictionary
        rng = np.random.default_rng(42)
        for _ in range(100):
            base = d.atoms[rng.integers(0, d.n_atoms)]
            noisy = base + rng.normal(0.0, 0.01 * base.max(), size=base.size)
            got_label, got_score = match(d, noisy)
            ref_label, ref_score = naive_match(d, noisy)
            assert got_label == ref_label
            assert abs(got_score - ref_score) < 1e-9

    def test_zero_query_rejected(self, toy_dictionary):
        d, _ = toy_dictionary
        with pytest.raises(ValueError):
            match(d, np.zeros(d.n_samples))

    def test_length_mismatch_rejected(self, toy_dictionary):
        d, _ = toy_dictionary
        with pytest.raises(ValueError, match="length"):
            match(d, np.ones(d.n_samples + 3))


class TestMatchBatch:
    def test_single_query_equals_match(self, toy_dictionary):
        d, _ = toy_dictionary
        q = d.atoms[4] + 0.001
        (label_b, score_b), = match_batch(d, q[None, :])
        label_s, score_s = match(d, q)
        assert label_b == label_s and abs(score_b - score_s) < 1e-12

    def test_permutation_equivariance(self, toy_dictionary):
        d, _ = toy_dictionary
        rng = np.random.default_rng(9)
        queries = d.atoms[:8] + rng.normal(0, 0.005, size=(8, d.n_samples))
        perm = rng.permutation(8)
        out = match_batch(d, queries)
        out_perm = match_batch(d, queries[perm])
        for k, p in enumerate(perm):
            assert out_perm[k] == out[p]

    def test_self_match_sweep(self, toy_dictionary):
        d, _ = toy_dictionary
        results = match_batch(d, d.atoms)
        for (label, score), expected in zip(results, d.labels):
            assert label == expected
            assert score >= 1.0 - 1e-6

    def test_zero_rows_reported_per_query(self, toy_dictionary):
        d, _ = toy_dictionary
        queries = np.ones((4, d.n_samples))
        queries[1] = 0.0
        queries[3] = 0.0
        with pytest.raises(ValueError, match=r"\[1, 3\]"):
            match_batch(d, queries)


class TestSerialization:
    def test_round_trip_bit_identical(self, toy_dictionary, tmp_path):
        d, _ = toy_dictionary
        dict_path, json_path = save_dictionary(d, tmp_path / "dict_a")
        loaded = load_dictionary(tmp_path / "dict_a")
        np.testing.assert_array_equal(loaded.atoms, d.atoms)
        assert loaded.labels == d.labels
        assert loaded.schedule_digest == d.schedule_digest
        assert loaded.grid == d.grid
        p2, _ = save_dictionary(loaded, tmp_path / "dict_b")
        assert p2.read_bytes() == dict_path.read_bytes()

    def test_bad_magic_rejected(self, toy_dictionary, tmp_path):
        d, _ = toy_dictionary
        dict_path, _ = save_dictionary(d, tmp_path / "dict_c")
        blob = bytearray(dict_path.read_bytes())
        blob[:4] = b"XXXX"
        dict_path.write_bytes(bytes(blob))
        with pytest.raises(ValueError, match="magic"):
            load_dictionary(tmp_path / "dict_c")

    def test_truncated_file_rejected(self, toy_dictionary, tmp_path):
        d, _ = toy_dictionary
        dict_path, _ = save_dictionary(d, tmp_path / "dict_d")
        dict_path.write_bytes(dict_path.read_bytes()[:-8])
        with pytest.raises(ValueError, match="bytes"):
            load_dictionary(tmp_path / "dict_d")
