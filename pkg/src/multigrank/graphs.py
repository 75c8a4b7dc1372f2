"""k-NN graphs over a dataset under five weighting schemes.

Each graph stores a sparse symmetric weight matrix W with zero diagonal, its
degree vector, and exposes the Laplacian L = D - W on demand.  Edges follow
the union rule: (i, j) is an edge iff j is among i's k nearest or vice versa.
Negative similarities (possible for dot_product and cosine) are clamped to 0
at assembly time so L stays positive semi-definite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .dataset import Dataset, dataset_fingerprint

SCHEMES = ("gaussian", "dot_product", "cosine", "jaccard", "tanimoto")


@dataclass(frozen=True)
class GraphSpec:
    """A weighting scheme plus its parameters; realized against a dataset."""

    scheme: str
    k: int
    sigma: float | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.scheme == "gaussian":
            if self.sigma is None or not self.sigma > 0:
                raise ValueError("gaussian scheme requires sigma > 0")
        elif self.sigma is not None:
            raise ValueError(f"sigma does not apply to the {self.scheme!r} scheme")


@dataclass(eq=False)
class BaseGraph:
    """One realized kNN graph: sparse symmetric weights and degree vector."""

    spec: GraphSpec
    weights: sp.csr_matrix
    degrees: np.ndarray

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def laplacian(self) -> sp.csr_matrix:
        """L = D - W, materialized on demand."""
        return (sp.diags(self.degrees) - self.weights).tocsr()

    @classmethod
    def from_weights(cls, spec: GraphSpec, weights) -> "BaseGraph":
        """Wrap an explicit (sparse or dense) symmetric weight matrix."""
        w = sp.csr_matrix(weights)
        return cls(spec=spec, weights=w, degrees=w @ np.ones(w.shape[0]))


@dataclass(eq=False)
class GraphPool:
    """Ordered candidate graphs over one dataset, bound by its fingerprint."""

    graphs: tuple[BaseGraph, ...]
    fingerprint: str
    dim: int

    @property
    def m(self) -> int:
        return len(self.graphs)

    @property
    def n(self) -> int:
        return self.graphs[0].n


def edge_weight(x_i, x_j, spec: GraphSpec) -> float:
    """Similarity of two vectors under the spec's weighting scheme."""
    x_i = np.asarray(x_i, dtype=np.float64)
    x_j = np.asarray(x_j, dtype=np.float64)
    if x_i.shape != x_j.shape:
        raise ValueError("edge_weight: vectors have different dimensions")
    if spec.scheme == "gaussian":
        diff = x_i - x_j
        return float(np.exp(-(diff @ diff) / (2.0 * spec.sigma**2)))
    if spec.scheme == "dot_product":
        return float(x_i @ x_j)
    if spec.scheme == "cosine":
        ni = np.linalg.norm(x_i)
        nj = np.linalg.norm(x_j)
        if ni == 0.0 or nj == 0.0:
            raise ValueError("zero vector under cosine similarity")
        return float((x_i @ x_j) / (ni * nj))
    if spec.scheme == "jaccard":
        if (x_i < 0).any() or (x_j < 0).any():
            raise ValueError("jaccard requires nonnegative features")
        denom = np.maximum(x_i, x_j).sum()
        return float(np.minimum(x_i, x_j).sum() / denom) if denom > 0 else 0.0
    # tanimoto; denominator is 0 only when both vectors are 0
    dot = float(x_i @ x_j)
    denom = float(x_i @ x_i) + float(x_j @ x_j) - dot
    return dot / denom if denom != 0.0 else 0.0


def _sq_distances(X: np.ndarray) -> np.ndarray:
    # row-wise differences rather than the gram trick: exact zeros for
    # duplicate points, so ties resolve by index as promised
    n = X.shape[0]
    out = np.empty((n, n))
    for i in range(n):
        diff = X - X[i]
        out[i] = np.einsum("ij,ij->i", diff, diff)
    return out


def _similarity_matrix(X: np.ndarray, spec: GraphSpec) -> np.ndarray:
    """Dense pairwise weights under the scheme (diagonal included)."""
    if spec.scheme == "gaussian":
        return np.exp(-_sq_distances(X) / (2.0 * spec.sigma**2))
    if spec.scheme == "dot_product":
        return X @ X.T
    if spec.scheme == "cosine":
        norms = np.linalg.norm(X, axis=1)
        if (norms == 0.0).any():
            raise ValueError("zero vector under cosine similarity")
        return (X @ X.T) / np.outer(norms, norms)
    if spec.scheme == "jaccard":
        if (X < 0).any():
            raise ValueError("jaccard requires nonnegative features")
        n = X.shape[0]
        out = np.empty((n, n))
        for i in range(n):
            mins = np.minimum(X, X[i]).sum(axis=1)
            maxs = np.maximum(X, X[i]).sum(axis=1)
            out[i] = np.divide(mins, maxs, out=np.zeros(n), where=maxs > 0)
        return out
    gram = X @ X.T
    sq = np.einsum("ij,ij->i", X, X)
    denom = sq[:, None] + sq[None, :] - gram
    return np.divide(gram, denom, out=np.zeros_like(gram), where=denom != 0)


def _selection_scores(X: np.ndarray, spec: GraphSpec) -> np.ndarray:
    """Pairwise closeness for neighbor selection; larger means closer."""
    if spec.scheme in ("gaussian", "dot_product"):
        return -_sq_distances(X)
    return _similarity_matrix(X, spec)


def _point_selection_scores(X: np.ndarray, x0: np.ndarray, spec: GraphSpec) -> np.ndarray:
    if spec.scheme in ("gaussian", "dot_product"):
        diff = X - x0
        return -np.einsum("ij,ij->i", diff, diff)
    return np.array([edge_weight(x0, X[j], spec) for j in range(X.shape[0])])


def knn_neighbors(ds: Dataset, spec: GraphSpec) -> np.ndarray:
    """Indices of each node's k nearest neighbors under the spec's measure.

    Returns an (N, k) array, closest first, self excluded, ties broken by
    lower node index.
    """
    X = ds.feature_matrix
    n = X.shape[0]
    if spec.k > n - 1:
        raise ValueError(f"k={spec.k} out of range for {n} nodes")
    closeness = _selection_scores(X, spec)
    np.fill_diagonal(closeness, -np.inf)
    order = np.argsort(-closeness, axis=1, kind="stable")
    return order[:, : spec.k]


def build_graph(ds: Dataset, spec: GraphSpec) -> BaseGraph:
    """Realize a spec against a dataset: union-symmetrized kNN weight matrix."""
    X = ds.feature_matrix
    n = X.shape[0]
    nbrs = knn_neighbors(ds, spec)
    rows = np.repeat(np.arange(n), spec.k)
    cols = nbrs.ravel()
    directed = sp.csr_matrix((np.ones(rows.size, dtype=np.int8), (rows, cols)), shape=(n, n))
    edges = (directed + directed.T).tocoo()
    full = _similarity_matrix(X, spec)
    # index every edge by its upper-triangle orientation: W comes out exactly
    # symmetric whatever the dense kernel rounding did
    vals = np.maximum(
        full[np.minimum(edges.row, edges.col), np.maximum(edges.row, edges.col)], 0.0
    )
    weights = sp.csr_matrix((vals, (edges.row, edges.col)), shape=(n, n))
    return BaseGraph(spec=spec, weights=weights, degrees=weights @ np.ones(n))


def build_pool(ds: Dataset, specs) -> GraphPool:
    """Build all candidate graphs, in spec order, bound to the dataset."""
    specs = list(specs)
    if not specs:
        raise ValueError("cannot build a pool from an empty spec list")
    graphs = tuple(build_graph(ds, spec) for spec in specs)
    return GraphPool(graphs=graphs, fingerprint=dataset_fingerprint(ds), dim=ds.dim)


def extend_graph(graph: BaseGraph, ds: Dataset, x0) -> BaseGraph:
    """Extend a database graph with a query as node 0.

    The database block of W is frozen by contract: only row/column 0 is new,
    holding weights between the query and its k nearest database nodes under
    the graph's own spec.  Database indices shift up by one.
    """
    X = ds.feature_matrix
    x0 = np.asarray(x0, dtype=np.float64).ravel()
    if x0.shape[0] != X.shape[1]:
        raise ValueError(
            f"query has dimension {x0.shape[0]}, dataset has dimension {X.shape[1]}"
        )
    if graph.n != X.shape[0]:
        raise ValueError("graph and dataset have different node counts")
    closeness = _point_selection_scores(X, x0, graph.spec)
    nbrs = np.argsort(-closeness, kind="stable")[: graph.spec.k]
    w = np.array([max(edge_weight(x0, X[j], graph.spec), 0.0) for j in nbrs])
    base = graph.weights.tocoo()
    n1 = graph.n + 1
    rows = np.concatenate([np.zeros(len(nbrs), dtype=int), nbrs + 1, base.row + 1])
    cols = np.concatenate([nbrs + 1, np.zeros(len(nbrs), dtype=int), base.col + 1])
    vals = np.concatenate([w, w, base.data])
    weights = sp.csr_matrix((vals, (rows, cols)), shape=(n1, n1))
    return BaseGraph(spec=graph.spec, weights=weights, degrees=weights @ np.ones(n1))


def median_pairwise_distance(X: np.ndarray) -> float:
    """Median Euclidean distance over all point pairs (data-driven kernel scale)."""
    n = X.shape[0]
    iu = np.triu_indices(n, k=1)
    d2 = _sq_distances(X)[iu]
    return float(np.median(np.sqrt(d2)))


def default_spec_grid(
    ds: Dataset,
    schemes=SCHEMES,
    k_values=(5, 10),
    sigma_multipliers=(0.5, 1.0, 2.0),
) -> list[GraphSpec]:
    """Candidate grid: every scheme crossed with k; gaussian also crossed with
    a sigma grid scaled by the dataset's median pairwise distance."""
    scale = median_pairwise_distance(ds.feature_matrix)
    if scale <= 0:
        scale = 1.0
    specs = []
    for scheme in schemes:
        for k in k_values:
            if scheme == "gaussian":
                specs.extend(
                    GraphSpec(scheme, k, mult * scale) for mult in sigma_multipliers
                )
            else:
                specs.append(GraphSpec(scheme, k))
    return specs


def save_pool(pool: GraphPool, path) -> None:
    """Persist a pool: header plus per-graph upper-triangle weight triplets."""
    graphs = []
    for graph in pool.graphs:
        coo = sp.triu(graph.weights, k=1).tocoo()
        triplets = [
            [int(i), int(j), float(v)] for i, j, v in zip(coo.row, coo.col, coo.data)
        ]
        graphs.append(
            {
                "spec": {
                    "scheme": graph.spec.scheme,
                    "k": graph.spec.k,
                    "sigma": graph.spec.sigma,
                },
                "nnz": len(triplets),
                "triplets": triplets,
            }
        )
    doc = {
        "version": 1,
        "M": pool.m,
        "N": pool.n,
        "d": pool.dim,
        "fingerprint": pool.fingerprint,
        "graphs": graphs,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_pool(path) -> GraphPool:
    """Inverse of save_pool."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("version") != 1:
        raise ValueError(f"unsupported pool file version: {doc.get('version')!r}")
    n = int(doc["N"])
    graphs = []
    for entry in doc["graphs"]:
        spec = GraphSpec(
            scheme=entry["spec"]["scheme"],
            k=int(entry["spec"]["k"]),
            sigma=entry["spec"]["sigma"],
        )
        trip = entry["triplets"]
        if len(trip) != entry["nnz"]:
            raise ValueError("pool file corrupt: triplet count differs from nnz")
        rows = np.array([t[0] for t in trip], dtype=int)
        cols = np.array([t[1] for t in trip], dtype=int)
        vals = np.array([t[2] for t in trip], dtype=np.float64)
        weights = sp.csr_matrix(
            (np.concatenate([vals, vals]), (np.concatenate([rows, cols]), np.concatenate([cols, rows]))),
            shape=(n, n),
        )
        graphs.append(BaseGraph(spec=spec, weights=weights, degrees=weights @ np.ones(n)))
    return GraphPool(graphs=tuple(graphs), fingerprint=doc["fingerprint"], dim=int(doc["d"]))
