import os
from pathlib import Path

import numpy as np
import pytest

from panconv.data import load_dataset
from panconv.graph import Graph, build_csr

DATA_DIR = Path(__file__).parent / "data"


def grid_graph(rows: int, cols: int) -> Graph:
    """Finite 4-connected grid, nodes numbered row-major."""
    edges = []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                edges.append((i, i + 1))
            if r + 1 < rows:
                edges.append((i, i + cols))
    return build_csr(rows * cols, edges)


def cycle_graph(n: int) -> Graph:
    return build_csr(n, [(i, (i + 1) % n) for i in range(n)])


def path_graph(n: int) -> Graph:
    return build_csr(n, [(i, i + 1) for i in range(n - 1)])


def complete_graph(n: int) -> Graph:
    return build_csr(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def star_graph(n_leaves: int) -> Graph:
    return build_csr(n_leaves + 1, [(0, i + 1) for i in range(n_leaves)])


def random_connected_graph(n: int, rng: np.random.Generator, p: float = 0.35) -> Graph:
    """Random spanning tree plus independent extra edges: always connected."""
    edges = set()
    order = rng.permutation(n)
    for idx in range(1, n):
        a = int(order[idx])
        b = int(order[rng.integers(0, idx)])
        edges.add((min(a, b), max(a, b)))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                edges.add((i, j))
    return build_csr(n, sorted(edges))


def oracle_graph_suite(min_count: int = 50):
    """Named connected graphs of at most 12 nodes for oracle cross-checks."""
    suite = []
    for n in range(2, 9):
        suite.append((f"path{n}", path_graph(n)))
    for n in range(3, 11):
        suite.append((f"cycle{n}", cycle_graph(n)))
    for n in range(2, 8):
        suite.append((f"complete{n}", complete_graph(n)))
    for n in range(3, 9):
        suite.append((f"star{n}", star_graph(n)))
    for r, c in [(2, 2), (2, 3), (2, 4), (2, 5), (3, 3), (3, 4)]:
        suite.append((f"grid{r}x{c}", grid_graph(r, c)))
    rng = np.random.default_rng(97)
    for i in range(20):
        n = int(rng.integers(5, 13))
        suite.append((f"random{i}n{n}", random_connected_graph(n, rng)))
    assert len(suite) >= min_count
    return suite


@pytest.fixture
def k3():
    return complete_graph(3)


@pytest.fixture
def p3():
    return path_graph(3)


@pytest.fixture
def toy_clusters():
    return load_dataset(DATA_DIR / "toy_clusters.pands")


@pytest.fixture
def toy_clusters_path():
    return DATA_DIR / "toy_clusters.pands"


@pytest.fixture
def toy_k3_path():
    return DATA_DIR / "toy_k3.pands"


def find_benchmark(name: str):
    """Locate a converted citation benchmark ({name}.pands); None if absent.

    Searched locations: $PAN_DATA_DIR, then tests/data/."""
    candidates = []
    env = os.environ.get("PAN_DATA_DIR")
    if env:
        candidates.append(Path(env) / f"{name}.pands")
    candidates.append(DATA_DIR / f"{name}.pands")
    for c in candidates:
        if c.exists():
            return c
    return None


def require_benchmark(name: str) -> Path:
    path = find_benchmark(name)
    if path is None:
        pytest.skip(
            f"{name}.pands not found; convert the public {name} files with "
            "planetoid-convert and point PAN_DATA_DIR at them"
        )
    return path
