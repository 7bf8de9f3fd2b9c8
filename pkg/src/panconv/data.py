"""Dataset container and the PANDS v1 on-disk format.

A PANDS file is a single binary file: a JSON header line (format tag,
version, counts, and per-section byte offset/length/CRC32), then binary
sections in header order. All integers little-endian. Sections:

  edges       u32 pairs (i, j), canonical i < j, sorted
  features    (u32 row, u32 col, f64 value) triplets, row-major sorted
  labels      i32 per node, -1 = unlabeled
  train_idx / val_idx / test_idx   u32 node index lists, sorted

Section offsets are relative to the first byte after the header newline.
Loading verifies every CRC before constructing anything, so a truncated or
corrupt file never yields a partial dataset.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ChecksumError,
    DataFormatError,
    GraphIndexError,
    MaskOverlapError,
    VersionMismatchError,
)
from .graph import Graph, build_csr, row_sums

FORMAT_TAG = "PANDS"
FORMAT_VERSION = 1
_SECTIONS = ("edges", "features", "labels", "train_idx", "val_idx", "test_idx")
_TRIPLET_DTYPE = np.dtype([("row", "<u4"), ("col", "<u4"), ("value", "<f8")])


@dataclass
class GraphDataset:
    """Node-classification dataset: graph, dense features, integer labels
    (-1 = unlabeled), and disjoint train/val/test boolean masks."""

    graph: Graph
    features: np.ndarray
    labels: np.ndarray
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray
    n_classes: int

    @property
    def n_nodes(self) -> int:
        return self.graph.n_nodes

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


def row_normalize_features(x: np.ndarray) -> np.ndarray:
    """Divide each nonzero row by its sum; zero rows pass through."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0.0):
        raise DataFormatError("row_normalize_features requires nonnegative entries")
    sums = x.sum(axis=1)
    out = x.copy()
    nz = sums != 0.0
    out[nz] /= sums[nz, None]
    return out


def canonical_edge_list(g: Graph) -> np.ndarray:
    """Edges as sorted (i, j) pairs with i < j."""
    coo = g.adjacency.to_scipy().tocoo()
    pairs = np.stack([coo.row, coo.col], axis=1)
    pairs = pairs[pairs[:, 0] < pairs[:, 1]]
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return pairs[order].astype(np.uint32)


def save_dataset(path, ds: GraphDataset) -> None:
    """Write a PANDS v1 file. Deterministic: identical datasets produce
    byte-identical files."""
    edges = canonical_edge_list(ds.graph)
    rows, cols = np.nonzero(ds.features)
    triplets = np.empty(rows.shape[0], dtype=_TRIPLET_DTYPE)
    triplets["row"] = rows
    triplets["col"] = cols
    triplets["value"] = ds.features[rows, cols]

    blobs = {
        "edges": np.ascontiguousarray(edges, dtype="<u4").tobytes(),
        "features": triplets.tobytes(),
        "labels": np.ascontiguousarray(ds.labels, dtype="<i4").tobytes(),
        "train_idx": _mask_bytes(ds.train_mask),
        "val_idx": _mask_bytes(ds.val_mask),
        "test_idx": _mask_bytes(ds.test_mask),
    }
    counts = {
        "edges": edges.shape[0],
        "features": triplets.shape[0],
        "labels": ds.labels.shape[0],
        "train_idx": int(ds.train_mask.sum()),
        "val_idx": int(ds.val_mask.sum()),
        "test_idx": int(ds.test_mask.sum()),
    }
    sections, offset = {}, 0
    for name in _SECTIONS:
        b = blobs[name]
        sections[name] = {
            "offset": offset,
            "nbytes": len(b),
            "count": counts[name],
            "crc32": zlib.crc32(b),
        }
        offset += len(b)
    header = {
        "format": FORMAT_TAG,
        "version": FORMAT_VERSION,
        "n_nodes": ds.n_nodes,
        "n_features": ds.n_features,
        "n_classes": ds.n_classes,
        "sections": sections,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for name in _SECTIONS:
            fh.write(blobs[name])


def _mask_bytes(mask: np.ndarray) -> bytes:
    idx = np.flatnonzero(np.asarray(mask, dtype=bool)).astype("<u4")
    return idx.tobytes()


def load_dataset(path, normalize_features: bool = True) -> GraphDataset:
    """Load and fully validate a PANDS v1 file.

    Feature rows are sum-normalized by default (flag-controlled) to match
    the usual citation-benchmark preprocessing; loaders that need the raw
    values pass normalize_features=False.
    """
    with open(path, "rb") as fh:
        header_line = fh.readline()
        body = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"unreadable PANDS header: {exc}") from exc
    if header.get("format") != FORMAT_TAG or header.get("version") != FORMAT_VERSION:
        raise VersionMismatchError(
            f"expected {FORMAT_TAG} v{FORMAT_VERSION}, "
            f"got {header.get('format')!r} v{header.get('version')!r}"
        )
    n_nodes = int(header["n_nodes"])
    n_features = int(header["n_features"])
    n_classes = int(header["n_classes"])

    raw = {}
    for name in _SECTIONS:
        sec = header["sections"][name]
        b = body[sec["offset"]:sec["offset"] + sec["nbytes"]]
        if zlib.crc32(b) != sec["crc32"] or len(b) != sec["nbytes"]:
            raise ChecksumError(f"section {name!r} failed its CRC32 check")
        raw[name] = b

    edges = np.frombuffer(raw["edges"], dtype="<u4").reshape(-1, 2)
    triplets = np.frombuffer(raw["features"], dtype=_TRIPLET_DTYPE)
    labels = np.frombuffer(raw["labels"], dtype="<i4").astype(np.int64)
    if labels.shape[0] != n_nodes:
        raise DataFormatError(
            f"label section has {labels.shape[0]} entries for {n_nodes} nodes"
        )

    if edges.size and int(edges.max()) >= n_nodes:
        raise GraphIndexError("edge endpoint out of range")
    if triplets.size and (int(triplets["row"].max()) >= n_nodes
                          or int(triplets["col"].max()) >= n_features):
        raise GraphIndexError("feature triplet index out of range")

    masks = {}
    for name in ("train_idx", "val_idx", "test_idx"):
        idx = np.frombuffer(raw[name], dtype="<u4").astype(np.int64)
        if idx.size and int(idx.max()) >= n_nodes:
            raise GraphIndexError(f"{name} contains an out-of-range node index")
        mask = np.zeros(n_nodes, dtype=bool)
        mask[idx] = True
        masks[name] = mask
    if (
        np.any(masks["train_idx"] & masks["val_idx"])
        or np.any(masks["train_idx"] & masks["test_idx"])
        or np.any(masks["val_idx"] & masks["test_idx"])
    ):
        raise MaskOverlapError("train/val/test masks overlap")

    features = np.zeros((n_nodes, n_features), dtype=np.float64)
    features[triplets["row"], triplets["col"]] = triplets["value"]
    if normalize_features:
        features = row_normalize_features(features)

    graph = build_csr(n_nodes, edges.tolist())
    ds = GraphDataset(
        graph=graph,
        features=features,
        labels=labels,
        train_mask=masks["train_idx"],
        val_mask=masks["val_idx"],
        test_mask=masks["test_idx"],
        n_classes=n_classes,
    )
    for name, mask in (("train", ds.train_mask), ("val", ds.val_mask),
                       ("test", ds.test_mask)):
        lab = labels[mask]
        if lab.size and (np.any(lab < 0) or np.any(lab >= n_classes)):
            raise DataFormatError(f"unlabeled or out-of-range label in {name} mask")
    return ds


@dataclass
class ValidationReport:
    passed: bool
    issues: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "issues": self.issues, "stats": self.stats}


def validate_dataset(ds: GraphDataset) -> ValidationReport:
    """Structural audit of a dataset; returns a report instead of raising."""
    issues = []
    a = ds.graph.adjacency.to_scipy()
    if (a != a.T).nnz != 0:
        issues.append("adjacency is not symmetric")
    if a.nnz and not np.all(np.isin(a.data, (1.0,))):
        issues.append("adjacency is not binary")
    if a.diagonal().any():
        issues.append("adjacency has nonzero diagonal entries")
    if ds.features.shape[0] != ds.n_nodes or ds.labels.shape[0] != ds.n_nodes:
        issues.append("feature/label row count does not match node count")
    if not np.all(np.isfinite(ds.features)):
        issues.append("features contain non-finite values")

    masks = {"train": ds.train_mask, "val": ds.val_mask, "test": ds.test_mask}
    names = list(masks)
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            if np.any(masks[names[i]] & masks[names[j]]):
                issues.append(f"{names[i]} and {names[j]} masks overlap")
    label_coverage = {}
    for name, mask in masks.items():
        lab = ds.labels[mask]
        if lab.size and (np.any(lab < 0) or np.any(lab >= ds.n_classes)):
            issues.append(f"unlabeled masked node in {name} mask")
        label_coverage[name] = sorted(int(c) for c in np.unique(lab[lab >= 0]))

    degrees = row_sums(ds.graph.adjacency)
    stats = {
        "n_nodes": ds.n_nodes,
        "n_edges": int(ds.graph.adjacency.nnz // 2),
        "n_features": ds.n_features,
        "n_classes": ds.n_classes,
        "mask_sizes": {k: int(v.sum()) for k, v in masks.items()},
        "isolated_nodes": int(np.count_nonzero(degrees == 0)),
        "label_coverage": label_coverage,
    }
    return ValidationReport(passed=not issues, issues=issues, stats=stats)
