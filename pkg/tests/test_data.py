import json

import numpy as np
import pytest

from panconv.data import (
    GraphDataset,
    canonical_edge_list,
    load_dataset,
    row_normalize_features,
    save_dataset,
    validate_dataset,
)
from panconv.errors import (
    ChecksumError,
    DataFormatError,
    GraphIndexError,
    MaskOverlapError,
    VersionMismatchError,
)
from panconv.graph import Graph, SparseMatrix, build_csr


def small_dataset():
    graph = build_csr(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
    return GraphDataset(
        graph=graph,
        features=np.array([[1.0, 3.0], [0.0, 0.0], [2.0, 2.0], [5.0, 0.0]]),
        labels=np.array([0, 1, 0, 1]),
        train_mask=np.array([True, False, False, False]),
        val_mask=np.array([False, True, False, False]),
        test_mask=np.array([False, False, True, True]),
        n_classes=2,
    )


class TestRowNormalize:
    def test_mixed_rows(self):
        out = row_normalize_features(np.array([[1.0, 3.0], [0.0, 0.0]]))
        assert np.array_equal(out, [[0.25, 0.75], [0.0, 0.0]])

    def test_identity_unchanged(self):
        assert np.array_equal(row_normalize_features(np.eye(3)), np.eye(3))

    def test_idempotent(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(0, 5, size=(6, 4))
        once = row_normalize_features(x)
        twice = row_normalize_features(once)
        assert np.abs(once - twice).max() <= 1e-15

    def test_negative_rejected(self):
        with pytest.raises(DataFormatError):
            row_normalize_features(np.array([[1.0, -1.0]]))


class TestRoundTrip:
    def test_bitwise_roundtrip(self, tmp_path):
        ds = small_dataset()
        p1 = tmp_path / "a.pands"
        p2 = tmp_path / "b.pands"
        save_dataset(p1, ds)
        loaded = load_dataset(p1, normalize_features=False)
        save_dataset(p2, loaded)
        assert p1.read_bytes() == p2.read_bytes()
        assert np.array_equal(loaded.features, ds.features)
        assert np.array_equal(loaded.labels, ds.labels)
        assert np.array_equal(loaded.train_mask, ds.train_mask)
        assert np.array_equal(loaded.val_mask, ds.val_mask)
        assert np.array_equal(loaded.test_mask, ds.test_mask)
        assert np.array_equal(
            canonical_edge_list(loaded.graph), canonical_edge_list(ds.graph)
        )

    def test_save_is_deterministic(self, tmp_path):
        ds = small_dataset()
        p1 = tmp_path / "a.pands"
        p2 = tmp_path / "b.pands"
        save_dataset(p1, ds)
        save_dataset(p2, ds)
        assert p1.read_bytes() == p2.read_bytes()

    def test_normalization_applied_on_load(self, tmp_path):
        ds = small_dataset()
        path = tmp_path / "a.pands"
        save_dataset(path, ds)
        loaded = load_dataset(path)
        assert np.abs(loaded.features[0] - [0.25, 0.75]).max() <= 1e-15

    def test_loaded_dataset_always_validates(self, tmp_path):
        path = tmp_path / "a.pands"
        save_dataset(path, small_dataset())
        assert validate_dataset(load_dataset(path)).passed


class TestLoadErrors:
    def _write(self, tmp_path, mutate):
        path = tmp_path / "ds.pands"
        save_dataset(path, small_dataset())
        raw = bytearray(path.read_bytes())
        mutate(raw, path)
        return path

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "ds.pands"
        save_dataset(path, small_dataset())
        header, _, body = path.read_bytes().partition(b"\n")
        h = json.loads(header)
        h["version"] = 99
        path.write_bytes(json.dumps(h, sort_keys=True).encode() + b"\n" + body)
        with pytest.raises(VersionMismatchError):
            load_dataset(path)

    def test_truncated_file_fails_checksum(self, tmp_path):
        path = tmp_path / "ds.pands"
        save_dataset(path, small_dataset())
        data = path.read_bytes()
        path.write_bytes(data[: len(data) - 5])
        with pytest.raises(ChecksumError):
            load_dataset(path)

    def test_corrupt_section_fails_checksum(self, tmp_path):
        path = tmp_path / "ds.pands"
        save_dataset(path, small_dataset())
        raw = bytearray(path.read_bytes())
        raw[-1] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(ChecksumError):
            load_dataset(path)

    def test_overlapping_masks(self, tmp_path):
        ds = small_dataset()
        ds.val_mask = ds.train_mask.copy()  # overlap train/val
        path = tmp_path / "ds.pands"
        save_dataset(path, ds)
        with pytest.raises(MaskOverlapError):
            load_dataset(path)

    def test_out_of_range_edge(self, tmp_path):
        path = tmp_path / "ds.pands"
        save_dataset(path, small_dataset())
        header, _, body = path.read_bytes().partition(b"\n")
        h = json.loads(header)
        sec = h["sections"]["edges"]
        body = bytearray(body)
        edges = np.frombuffer(
            bytes(body[sec["offset"]:sec["offset"] + sec["nbytes"]]), dtype="<u4"
        ).copy()
        edges[0] = 77
        blob = edges.tobytes()
        body[sec["offset"]:sec["offset"] + sec["nbytes"]] = blob
        import zlib

        sec["crc32"] = zlib.crc32(blob)
        path.write_bytes(json.dumps(h, sort_keys=True).encode() + b"\n" + bytes(body))
        with pytest.raises(GraphIndexError):
            load_dataset(path)

    def test_garbage_header(self, tmp_path):
        path = tmp_path / "ds.pands"
        path.write_bytes(b"\x00\x01\x02 not json\n1234")
        with pytest.raises(DataFormatError):
            load_dataset(path)


class TestValidateDataset:
    def test_passes_on_good_dataset(self):
        report = validate_dataset(small_dataset())
        assert report.passed
        assert report.stats["mask_sizes"] == {"train": 1, "val": 1, "test": 2}
        assert report.stats["n_edges"] == 4
        assert report.stats["isolated_nodes"] == 0

    def test_unlabeled_masked_node_fails(self):
        ds = small_dataset()
        ds.labels = ds.labels.copy()
        ds.labels[0] = -1  # node 0 is in the train mask
        report = validate_dataset(ds)
        assert not report.passed
        assert any("unlabeled masked node" in msg for msg in report.issues)

    def test_asymmetric_adjacency_fails(self):
        ds = small_dataset()
        asym = np.triu(ds.graph.adjacency.to_dense())
        ds.graph = Graph(n_nodes=4, adjacency=SparseMatrix.from_dense(asym))
        report = validate_dataset(ds)
        assert not report.passed
        assert any("symmetric" in msg for msg in report.issues)

    def test_overlap_reported(self):
        ds = small_dataset()
        ds.test_mask = ds.test_mask.copy()
        ds.test_mask[0] = True  # overlaps train
        report = validate_dataset(ds)
        assert not report.passed

    def test_isolated_node_counted(self):
        graph = build_csr(3, [(0, 1)])
        ds = GraphDataset(
            graph=graph,
            features=np.eye(3),
            labels=np.array([0, 1, 0]),
            train_mask=np.array([True, False, False]),
            val_mask=np.array([False, True, False]),
            test_mask=np.array([False, False, True]),
            n_classes=2,
        )
        assert validate_dataset(ds).stats["isolated_nodes"] == 1

    def test_report_serializes(self):
        d = validate_dataset(small_dataset()).to_dict()
        json.dumps(d)
        assert d["passed"] is True
