"""Reassemble a Planetoid pickle bundle into one PANDS v1 file.

The public distribution ships eight files per dataset,
ind.{name}.{x,tx,allx,y,ty,ally,graph,test.index}: pickled scipy sparse
feature blocks and one-hot label blocks for the training pool (allx/ally)
and the test instances (tx/ty), a neighbor-dict for the graph, and the
positions of the test instances in the full node order. Test rows are
stored in test.index order and have to be permuted back into node order;
the citeseer files additionally skip some indices inside the test range
(isolated nodes without features or labels), which are filled with zero
rows here and left out of every mask.
"""

from __future__ import annotations

import pickle
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .pands import write_pands

PIECES = ("x", "y", "tx", "ty", "allx", "ally", "graph", "test.index")
DATASET_NAMES = ("cora", "citeseer", "pubmed")
VAL_SIZE = 500


class ConverterError(Exception):
    """Base class for conversion failures."""


class MissingFileError(ConverterError):
    pass


class ParseError(ConverterError):
    pass


class IndexLayoutError(ConverterError):
    """test.index deviates from the known layout (beyond the citeseer
    zero-fill quirk)."""


@dataclass(frozen=True)
class PlanetoidBundle:
    name: str
    paths: dict

    @classmethod
    def locate(cls, name: str, in_dir) -> "PlanetoidBundle":
        if name not in DATASET_NAMES:
            raise ConverterError(f"unknown dataset name {name!r}")
        in_dir = Path(in_dir)
        paths = {p: in_dir / f"ind.{name}.{p}" for p in PIECES}
        missing = [str(p) for p in paths.values() if not p.exists()]
        if missing:
            raise MissingFileError("missing bundle files: " + ", ".join(missing))
        return cls(name=name, paths=paths)


@dataclass
class ConversionStats:
    n_nodes: int
    n_edges: int
    n_features: int
    n_classes: int
    mask_sizes: dict
    zero_filled_test_gaps: int
    unlabeled_nodes: int
    dropped_self_loops: int

    def lines(self):
        yield f"nodes:            {self.n_nodes}"
        yield f"edges:            {self.n_edges}"
        yield f"features:         {self.n_features}"
        yield f"classes:          {self.n_classes}"
        yield ("masks:            train {train} / val {val} / test {test}"
               .format(**self.mask_sizes))
        yield f"test index gaps:  {self.zero_filled_test_gaps} (zero-filled)"
        yield f"unlabeled nodes:  {self.unlabeled_nodes}"
        yield f"self-loops drop:  {self.dropped_self_loops}"


def _load_pickle(path: Path):
    try:
        with open(path, "rb") as fh:
            return pickle.load(fh, encoding="latin1")
    except Exception as exc:  # pickle raises a zoo of types
        raise ParseError(f"could not unpickle {path}: {exc}") from exc


def _parse_test_index(path: Path) -> np.ndarray:
    try:
        values = [int(line) for line in path.read_text().split()]
    except ValueError as exc:
        raise ParseError(f"could not parse {path}: {exc}") from exc
    return np.asarray(values, dtype=np.int64)


def _as_dense(x) -> np.ndarray:
    if sp.issparse(x):
        return np.asarray(x.todense())
    return np.asarray(x)


def convert(bundle: PlanetoidBundle, out_path) -> ConversionStats:
    """Stitch the bundle into canonical node order and write PANDS v1.

    Deterministic: re-running over the same inputs produces a byte-identical
    output file.
    """
    x = _load_pickle(bundle.paths["x"])
    y = _as_dense(_load_pickle(bundle.paths["y"]))
    tx = _load_pickle(bundle.paths["tx"])
    ty = _as_dense(_load_pickle(bundle.paths["ty"]))
    allx = _load_pickle(bundle.paths["allx"])
    ally = _as_dense(_load_pickle(bundle.paths["ally"]))
    graph = _load_pickle(bundle.paths["graph"])
    test_idx = _parse_test_index(bundle.paths["test.index"])

    for mat, label in ((x, "x"), (tx, "tx"), (allx, "allx")):
        if not sp.issparse(mat):
            raise ParseError(f"ind.*.{label} is not a scipy sparse matrix")
    n_allx = allx.shape[0]
    n_nodes = len(graph)
    if sorted(graph.keys()) != list(range(n_nodes)):
        raise ParseError("graph dict keys are not a contiguous 0..n-1 range")

    if np.unique(test_idx).shape[0] != test_idx.shape[0]:
        raise IndexLayoutError("duplicate entries in test.index")
    lo, hi = int(test_idx.min()), int(test_idx.max())
    if lo != n_allx or hi != n_nodes - 1:
        raise IndexLayoutError(
            f"test.index spans [{lo}, {hi}], expected [{n_allx}, {n_nodes - 1}]"
        )
    full_span = hi - lo + 1
    gaps = full_span - test_idx.shape[0]
    if tx.shape[0] != test_idx.shape[0]:
        raise IndexLayoutError("tx row count does not match test.index")

    test_sorted = np.sort(test_idx)
    if gaps:
        # citeseer quirk: some in-range indices have no test instance; give
        # them zero feature rows and all-zero (= unlabeled) one-hot rows
        tx_ext = sp.lil_matrix((full_span, x.shape[1]), dtype=np.float64)
        tx_ext[test_sorted - lo] = tx
        tx = tx_ext.tocsr()
        ty_ext = np.zeros((full_span, y.shape[1]))
        ty_ext[test_sorted - lo] = ty
        ty = ty_ext

    features = sp.vstack([allx.tocsr().astype(np.float64),
                          tx.tocsr().astype(np.float64)]).tolil()
    features[test_idx] = features[test_sorted]
    features = features.tocsr()
    features.sum_duplicates()
    features.sort_indices()
    features.eliminate_zeros()

    onehot = np.vstack([ally, ty]).astype(np.float64)
    onehot[test_idx] = onehot[test_sorted]
    labeled = onehot.sum(axis=1) > 0
    labels = np.where(labeled, onehot.argmax(axis=1), -1).astype(np.int64)

    edges = set()
    dropped_self_loops = 0
    for node, neighbors in graph.items():
        for nb in neighbors:
            nb = int(nb)
            if not 0 <= nb < n_nodes:
                raise ParseError(f"neighbor {nb} of node {node} out of range")
            if nb == node:
                dropped_self_loops += 1
                continue
            edges.add((min(node, nb), max(node, nb)))
    edge_arr = np.asarray(sorted(edges), dtype=np.int64).reshape(-1, 2)

    n_train = y.shape[0]
    if n_train + VAL_SIZE > n_allx:
        raise ConverterError(
            f"bundle too small for the fixed split: {n_allx} pool rows, "
            f"need {n_train} train + {VAL_SIZE} val"
        )
    train_idx = np.arange(n_train, dtype=np.int64)
    val_idx = np.arange(n_train, n_train + VAL_SIZE, dtype=np.int64)

    coo = features.tocoo()
    order = np.lexsort((coo.col, coo.row))
    write_pands(
        out_path,
        n_nodes=n_nodes,
        n_features=features.shape[1],
        n_classes=onehot.shape[1],
        edges=edge_arr,
        feature_triplets=(coo.row[order], coo.col[order], coo.data[order]),
        labels=labels,
        train_idx=train_idx,
        val_idx=val_idx,
        test_idx=test_sorted,
    )
    return ConversionStats(
        n_nodes=n_nodes,
        n_edges=edge_arr.shape[0],
        n_features=features.shape[1],
        n_classes=onehot.shape[1],
        mask_sizes={"train": int(n_train), "val": VAL_SIZE,
                    "test": int(test_sorted.shape[0])},
        zero_filled_test_gaps=int(gaps),
        unlabeled_nodes=int((~labeled).sum()),
        dropped_self_loops=dropped_self_loops,
    )
