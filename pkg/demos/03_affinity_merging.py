"""Cluster item profiles with affinity propagation and merge within types.

Two types with two items each; items 0 and 1 look alike, and so do items
1 and 2 even though they belong to different types.

    python demos/03_affinity_merging.py
"""

import numpy as np

from hiermerge.clustering import (
    affinity_propagation,
    compute_profiles,
    davies_bouldin,
    merge_within_type,
    silhouette_score,
    similarity_matrix,
)

rng = np.random.default_rng(0)
parent = [0, 0, 1, 1]
centers = np.array([[0.0, 0.0], [0.3, 0.0], [0.5, 0.2], [8.0, 8.0]])
items = np.repeat(np.arange(4), 25)
emb = centers[items] + 0.3 * rng.standard_normal((100, 2))

profiles = compute_profiles(emb, items)
S = similarity_matrix(profiles)
ap = affinity_propagation(S)
print("exemplars:", ap.exemplars, "assignment:", ap.assignment.tolist(), f"({ap.sweeps} sweeps)")

mm = merge_within_type(ap.assignment, parent)
print(f"K = {mm.K} merged items from N = 4; item -> merged:", mm.assignment)
print("merged parents:", mm.parent_of_merged, "(no merged item spans two types)")

F = np.stack([p.f for p in profiles])
labels = mm.assignment
print(f"silhouette {silhouette_score(F, labels):.3f}  Davies-Bouldin {davies_bouldin(F, labels):.3f}")
