import numpy as np
import pytest

from airway_hmm import _kernels
from airway_hmm.inference import CostModel, apply_boundary, data_term
from airway_hmm.tree import AirwayTree, distance_matrix, load_tree, regularization_matrix

ACCEPTANCE_LOG: list[str] = []


def random_tree(rng: np.random.Generator, n: int) -> AirwayTree:
    """Random recursive tree with shuffled node ids."""
    perm = rng.permutation(n)
    edges = [(int(perm[i]), int(perm[rng.integers(i)])) for i in range(1, n)]
    return AirwayTree(labels=tuple(f"n{i}" for i in range(n)), root=int(perm[0]), edges=tuple(edges))


def random_cost_model(rng: np.random.Generator, n_max: int = 8, k_max: int = 5) -> CostModel:
    """Small random instance: Dirichlet likelihoods, a random tree penalty, random weight and boundary."""
    n = int(rng.integers(2, n_max + 1))
    k = int(rng.integers(2, k_max + 1))
    tree = random_tree(rng, k)
    p = rng.dirichlet(np.full(k, 0.7), size=n)
    boundary = ["both", "start", "none"][int(rng.integers(3))]
    hard = bool(rng.integers(2))
    data = apply_boundary(data_term(p), tree.root, boundary)
    reg = regularization_matrix(distance_matrix(tree))
    lam = float(rng.choice([0.0, rng.uniform(0, 2), rng.uniform(0, 30)]))
    return CostModel(data, reg, lam, boundary, hard)


@pytest.fixture(scope="session")
def phantom():
    return load_tree()


@pytest.fixture(params=["python", "cython"])
def backend(request, monkeypatch):
    """Run a test once per min-sum backend (skipping the compiled one when unbuilt)."""
    if request.param == "cython":
        if _kernels.minsum_pass_compiled is None:
            pytest.skip("compiled kernel not built")
    else:
        monkeypatch.setattr(_kernels, "minsum_pass_compiled", None)
    return request.param


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LOG:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LOG:
            terminalreporter.write_line(line)
