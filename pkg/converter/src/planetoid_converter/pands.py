"""Standalone PANDS v1 writer.

PANDS v1 is a single binary file: a JSON header line carrying the format
tag, version, counts and per-section byte offset/length/CRC32, followed by
binary sections in header order (all integers little-endian):

  edges       u32 pairs (i, j), canonical i < j, sorted
  features    (u32 row, u32 col, f64 value) triplets, row-major sorted
  labels      i32 per node, -1 = unlabeled
  train_idx / val_idx / test_idx   u32 node index lists, sorted

Offsets are relative to the first byte after the header newline. The writer
is deterministic: equal inputs produce byte-identical files.
"""

import json
import zlib

import numpy as np

FORMAT_TAG = "PANDS"
FORMAT_VERSION = 1
_SECTIONS = ("edges", "features", "labels", "train_idx", "val_idx", "test_idx")
_TRIPLET_DTYPE = np.dtype([("row", "<u4"), ("col", "<u4"), ("value", "<f8")])


def write_pands(path, *, n_nodes, n_features, n_classes, edges,
                feature_triplets, labels, train_idx, val_idx, test_idx):
    """Write one PANDS v1 file.

    edges: (m, 2) array with i < j, sorted lexicographically.
    feature_triplets: (rows, cols, values) arrays sorted row-major.
    labels: length n_nodes, -1 for unlabeled nodes.
    *_idx: sorted node index lists.
    """
    edges = np.ascontiguousarray(np.asarray(edges, dtype="<u4").reshape(-1, 2))
    rows, cols, values = feature_triplets
    triplets = np.empty(len(rows), dtype=_TRIPLET_DTYPE)
    triplets["row"] = rows
    triplets["col"] = cols
    triplets["value"] = values

    blobs = {
        "edges": edges.tobytes(),
        "features": triplets.tobytes(),
        "labels": np.ascontiguousarray(labels, dtype="<i4").tobytes(),
        "train_idx": np.ascontiguousarray(train_idx, dtype="<u4").tobytes(),
        "val_idx": np.ascontiguousarray(val_idx, dtype="<u4").tobytes(),
        "test_idx": np.ascontiguousarray(test_idx, dtype="<u4").tobytes(),
    }
    counts = {
        "edges": edges.shape[0],
        "features": len(rows),
        "labels": len(labels),
        "train_idx": len(train_idx),
        "val_idx": len(val_idx),
        "test_idx": len(test_idx),
    }
    sections, offset = {}, 0
    for name in _SECTIONS:
        b = blobs[name]
        sections[name] = {
            "offset": offset,
            "nbytes": len(b),
            "count": int(counts[name]),
            "crc32": zlib.crc32(b),
        }
        offset += len(b)
    header = {
        "format": FORMAT_TAG,
        "version": FORMAT_VERSION,
        "n_nodes": int(n_nodes),
        "n_features": int(n_features),
        "n_classes": int(n_classes),
        "sections": sections,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for name in _SECTIONS:
            fh.write(blobs[name])
