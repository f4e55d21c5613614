"""Item profiles, affinity propagation, and hierarchy-respecting merges."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

DAMPING = 0.9
MAX_SWEEPS = 500
STABILITY_WINDOW = 100


@dataclass
class ClassProfile:
    item_label: int
    m: np.ndarray
    v: np.ndarray
    sample_count: int

    @property
    def f(self) -> np.ndarray:
        return np.concatenate([self.m, self.v])


def compute_profiles(embeddings, item_labels, items=None) -> list[ClassProfile]:
    """Mean and population variance of each item's embeddings.

    ``items`` fixes which labels get a profile (default: those present);
    asking for an item with no samples is an error.
    """
    E = np.asarray(embeddings, dtype=np.float64)
    lab = np.asarray(item_labels, dtype=np.int64)
    if len(lab) != len(E):
        raise ValueError(f"{len(E)} embeddings but {len(lab)} labels")
    items = sorted(set(lab.tolist())) if items is None else list(items)
    profiles = []
    for item in items:
        rows = E[lab == item]
        if len(rows) == 0:
            raise ValueError(f"item {item} has no training samples")
        profiles.append(ClassProfile(int(item), rows.mean(axis=0), rows.var(axis=0), len(rows)))
    return profiles


def profile_matrix(profiles) -> np.ndarray:
    return np.stack([p.f for p in profiles])


def pairwise_distances(F: np.ndarray, squared: bool = False) -> np.ndarray:
    diff = F[:, None, :] - F[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    return d2 if squared else np.sqrt(d2)


def similarity_matrix(profiles, preference="median", squared: bool = False) -> np.ndarray:
    """Negative Euclidean distance between profiles, preference on the diagonal.

    ``profiles`` may be ClassProfile objects or a 2-D array of feature rows.
    ``preference`` is ``"median"`` (of the off-diagonal entries) or a number.
    """
    F = profiles if isinstance(profiles, np.ndarray) else profile_matrix(profiles)
    F = np.atleast_2d(np.asarray(F, dtype=np.float64))
    if not np.all(np.isfinite(F)):
        raise ValueError("profile features must be finite")
    n = len(F)
    S = -pairwise_distances(F, squared=squared)
    if preference == "median":
        off = S[~np.eye(n, dtype=bool)]
        pref = float(np.median(off)) if off.size else 0.0
    else:
        pref = float(preference)
    np.fill_diagonal(S, pref)
    return S


@dataclass
class APResult:
    exemplars: list[int]
    assignment: np.ndarray  # index -> exemplar index
    sweeps: int
    converged: bool


def _assign(S: np.ndarray, exemplars: np.ndarray) -> np.ndarray:
    # argmax picks the lowest index among ties since exemplars is sorted
    assignment = exemplars[np.argmax(S[:, exemplars], axis=1)]
    assignment[exemplars] = exemplars
    return assignment


def affinity_propagation(S, damping: float = DAMPING, max_sweeps: int = MAX_SWEEPS,
                         stability_window: int = STABILITY_WINDOW) -> APResult:
    """Damped responsibility/availability message passing.

    A point is an exemplar when its self-responsibility plus
    self-availability is positive.  Stops once the exemplar set is nonempty
    and unchanged for ``stability_window`` sweeps, or after ``max_sweeps``.
    """
    S = np.asarray(S, dtype=np.float64)
    n = S.shape[0]
    if S.shape != (n, n) or not np.all(np.isfinite(S)):
        raise ValueError("similarity matrix must be square and finite")
    if not 0.0 <= damping < 1.0:
        raise ValueError("damping must lie in [0, 1)")
    if max_sweeps < 1:
        raise ValueError("max_sweeps must be >= 1")
    if n == 1:
        return APResult([0], np.zeros(1, dtype=np.int64), 0, True)

    R = np.zeros((n, n))
    A = np.zeros((n, n))
    rows = np.arange(n)
    eye = np.eye(n, dtype=bool)
    prev = None
    stable = 0
    converged = False
    sweep = 0
    for sweep in range(1, max_sweeps + 1):
        # responsibilities: s(x,y) - max_{y' != y} [a(x,y') + s(x,y')]
        AS = A + S
        top = AS.argmax(axis=1)
        first = AS[rows, top]
        AS[rows, top] = -np.inf
        second = AS.max(axis=1)
        competitor = np.repeat(first[:, None], n, axis=1)
        competitor[rows, top] = second
        R = damping * R + (1.0 - damping) * (S - competitor)

        # availabilities
        Rp = np.maximum(R, 0.0)
        Rp[eye] = R[eye]
        col = Rp.sum(axis=0)
        A_new = col[None, :] - Rp
        self_avail = A_new[eye].copy()
        A_new = np.minimum(A_new, 0.0)
        A_new[eye] = self_avail
        A = damping * A + (1.0 - damping) * A_new

        ex = np.flatnonzero(np.diag(R) + np.diag(A) > 0)
        if prev is not None and np.array_equal(ex, prev):
            stable += 1
        else:
            stable = 1
        prev = ex
        if ex.size > 0 and stable >= stability_window:
            converged = True
            break

    decision = np.diag(R) + np.diag(A)
    ex = np.flatnonzero(decision > 0)
    if ex.size == 0:
        best = int(np.argmax(decision))
        return APResult([best], np.full(n, best, dtype=np.int64), sweep, converged)
    return APResult(ex.tolist(), _assign(S, ex), sweep, converged)


def net_similarity(S: np.ndarray, assignment) -> float:
    """Sum of s(x, exemplar(x)); exemplars contribute their preference."""
    assignment = np.asarray(assignment)
    return float(S[np.arange(len(assignment)), assignment].sum())


def exhaustive_exemplars(S: np.ndarray):
    """Best exemplar set by brute force over all nonempty subsets (small n only)."""
    S = np.asarray(S, dtype=np.float64)
    n = len(S)
    if n > 12:
        raise ValueError("exhaustive search is limited to n <= 12")
    best_val, best_set = -np.inf, None
    for k in range(1, n + 1):
        for subset in itertools.combinations(range(n), k):
            ex = np.array(subset)
            val = net_similarity(S, _assign(S, ex))
            if val > best_val + 1e-12:
                best_val, best_set = val, list(subset)
    return best_set, best_val


@dataclass
class MergeMap:
    assignment: list[int]  # item -> merged label
    num_merged: int
    parent_of_merged: list[int]
    exemplar_of_merged: list[int] | None = None

    @property
    def K(self) -> int:
        return self.num_merged

    @classmethod
    def identity(cls, parent) -> "MergeMap":
        n = len(parent)
        return cls(list(range(n)), n, list(parent), list(range(n)))

    def members(self, merged: int) -> list[int]:
        return [i for i, m in enumerate(self.assignment) if m == merged]

    def check(self, parent) -> None:
        if sorted(set(self.assignment)) != list(range(self.num_merged)):
            raise AssertionError("merge map is not surjective onto [0, K)")
        for item, m in enumerate(self.assignment):
            if self.parent_of_merged[m] != parent[item]:
                raise AssertionError(f"merged label {m} spans more than one food type")

    def to_json(self) -> dict:
        return {
            "assignment": list(self.assignment),
            "K": self.num_merged,
            "parent_of_merged": list(self.parent_of_merged),
            "exemplar_of_merged": self.exemplar_of_merged,
        }


def merge_within_type(clusters, parent) -> MergeMap:
    """Merge items sharing an AP cluster and a parent type.

    ``clusters`` maps each item (by position) to its exemplar; ``parent``
    is a list or a LabelHierarchy.  Merged labels are numbered in
    (type, exemplar) order.
    """
    parent = list(getattr(parent, "parent", parent))
    clusters = [int(c) for c in clusters]
    if len(clusters) != len(parent):
        raise ValueError("clusters must assign every item")
    keys = sorted({(parent[i], clusters[i]) for i in range(len(parent))})
    index = {key: k for k, key in enumerate(keys)}
    assignment = [index[(parent[i], clusters[i])] for i in range(len(parent))]
    exemplar_of = []
    for t, ex in keys:
        members = [i for i in range(len(parent)) if parent[i] == t and clusters[i] == ex]
        # the AP exemplar may sit in another type; fall back to the first member
        exemplar_of.append(ex if ex in members else members[0])
    return MergeMap(assignment, len(keys), [t for t, _ in keys], exemplar_of)


def cluster_and_merge(profiles, parent, preference="median", squared=False, damping=DAMPING,
                      max_sweeps=MAX_SWEEPS, stability_window=STABILITY_WINDOW):
    """Profiles -> similarity -> AP -> within-type merge.  Returns (MergeMap, APResult)."""
    S = similarity_matrix(profiles, preference=preference, squared=squared)
    ap = affinity_propagation(S, damping, max_sweeps, stability_window)
    return merge_within_type(ap.assignment, parent), ap


def silhouette_score(points, labels) -> float:
    X = np.atleast_2d(np.asarray(points, dtype=np.float64))
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    if len(uniq) < 2:
        raise ValueError("silhouette needs at least 2 clusters")
    D = pairwise_distances(X)
    s = np.zeros(len(X))
    for i in range(len(X)):
        same = labels == labels[i]
        if same.sum() == 1:
            continue
        a = D[i, same].sum() / (same.sum() - 1)
        b = min(D[i, labels == c].mean() for c in uniq if c != labels[i])
        denom = max(a, b)
        s[i] = 0.0 if denom == 0 else (b - a) / denom
    return float(s.mean())


def davies_bouldin(points, labels) -> float:
    X = np.atleast_2d(np.asarray(points, dtype=np.float64))
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    if len(uniq) < 2:
        raise ValueError("Davies-Bouldin needs at least 2 clusters")
    cents = np.stack([X[labels == c].mean(axis=0) for c in uniq])
    sigma = np.array([np.linalg.norm(X[labels == c] - cents[k], axis=1).mean() for k, c in enumerate(uniq)])
    gaps = pairwise_distances(cents)
    worst = np.empty(len(uniq))
    for i in range(len(uniq)):
        ratios = []
        for j in range(len(uniq)):
            if i == j:
                continue
            # coincident centroids count as infinitely bad
            ratios.append(np.inf if gaps[i, j] == 0 else (sigma[i] + sigma[j]) / gaps[i, j])
        worst[i] = max(ratios)
    return float(worst.mean())
