"""Small builders shared across test modules."""

import numpy as np

from multigrank.dataset import Dataset, DomainRecord


def dataset_from_arrays(points, labels=None) -> Dataset:
    """Dataset with ids r0, r1, ... from a point array and optional label strings."""
    points = np.asarray(points, dtype=np.float64)
    if labels is None:
        labels = ["x"] * len(points)
    records = [
        DomainRecord(f"r{i}", tuple(str(lab).split("/")), points[i].copy())
        for i, lab in enumerate(labels)
    ]
    return Dataset.from_records(records)


def random_labels(rng, n, n_classes) -> list:
    """Random class labels guaranteeing at least two distinct classes."""
    labels = [f"g{rng.integers(n_classes)}" for _ in range(n)]
    if len(set(labels)) < 2:
        labels[0] = "g_extra"
    return labels
