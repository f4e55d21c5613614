"""Feature-vector datasets with a two-level food-type / food-item hierarchy.

Records live on disk as a CSV feature file next to a JSON hierarchy file.
Synthetic datasets are drawn from a Gaussian mixture in which several
food items of one type share a visual mode, so they cannot be told apart
from their features alone.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SPLITS = ("train", "val", "test")
NUTRIENT_FIELDS = ("energy_kcal", "protein_g", "carbohydrate_g", "fat_g")
# per-100g ranges used for synthetic items
NUTRIENT_RANGES = ((50.0, 600.0), (0.0, 40.0), (0.0, 80.0), (0.0, 40.0))
MIN_STRATIFIED = 3


class DatasetError(ValueError):
    """Raised for malformed or inconsistent dataset files."""


@dataclass(frozen=True)
class NutrientEntry:
    energy_kcal: float
    protein_g: float
    carbohydrate_g: float
    fat_g: float

    def __post_init__(self):
        for name in NUTRIENT_FIELDS:
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise DatasetError(f"nutrient {name}={value!r} must be finite and >= 0")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.energy_kcal, self.protein_g, self.carbohydrate_g, self.fat_g)


@dataclass(frozen=True)
class FeatureRecord:
    sample_id: str
    type_label: int
    item_label: int
    features: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, FeatureRecord):
            return NotImplemented
        return (
            self.sample_id == other.sample_id
            and self.type_label == other.type_label
            and self.item_label == other.item_label
            and np.array_equal(self.features, other.features)
        )

    __hash__ = None


@dataclass
class LabelHierarchy:
    num_types: int
    num_items: int
    parent: list[int]
    item_codes: list[str]
    nutrients: list[NutrientEntry]

    def __post_init__(self):
        if self.num_types < 1 or self.num_items < 1:
            raise DatasetError("num_types and num_items must be positive")
        if len(self.parent) != self.num_items:
            raise DatasetError(f"parent has {len(self.parent)} entries, expected {self.num_items}")
        if len(self.item_codes) != self.num_items:
            raise DatasetError("item_codes must have one entry per item")
        if len(self.nutrients) != self.num_items:
            raise DatasetError("missing nutrient entry: nutrients must have one entry per item")
        for item, t in enumerate(self.parent):
            if not 0 <= t < self.num_types:
                raise DatasetError(f"item {item}: parent type {t} out of range")
        childless = set(range(self.num_types)) - set(self.parent)
        if childless:
            raise DatasetError(f"types without items: {sorted(childless)}")

    @property
    def parent_array(self) -> np.ndarray:
        return np.asarray(self.parent, dtype=np.int64)

    def nutrient_array(self) -> np.ndarray:
        """(num_items, 4) array of per-100g values."""
        return np.array([n.as_tuple() for n in self.nutrients], dtype=np.float64)

    def children(self, type_label: int) -> list[int]:
        return [i for i, t in enumerate(self.parent) if t == type_label]

    def to_json(self) -> dict:
        return {
            "num_types": self.num_types,
            "num_items": self.num_items,
            "parent": list(self.parent),
            "item_codes": list(self.item_codes),
            "nutrients": [list(n.as_tuple()) for n in self.nutrients],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LabelHierarchy":
        try:
            nutrients = [NutrientEntry(*map(float, row)) for row in obj["nutrients"]]
            return cls(
                num_types=int(obj["num_types"]),
                num_items=int(obj["num_items"]),
                parent=[int(p) for p in obj["parent"]],
                item_codes=[str(c) for c in obj["item_codes"]],
                nutrients=nutrients,
            )
        except (KeyError, TypeError) as exc:
            raise DatasetError(f"malformed hierarchy: {exc}") from exc


@dataclass
class SplitAssignment:
    partition: dict[str, str]
    ratios: tuple[float, float, float]
    seed: int
    stratified: bool = True

    def ids(self, split: str) -> list[str]:
        return [sid for sid, s in self.partition.items() if s == split]

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "ratios": list(self.ratios),
            "stratified": self.stratified,
            "min_per_item_for_stratification": MIN_STRATIFIED,
            "partition": self.partition,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SplitAssignment":
        bad = {v for v in obj["partition"].values() if v not in SPLITS}
        if bad:
            raise DatasetError(f"unknown split names {sorted(bad)}")
        return cls(
            partition=dict(obj["partition"]),
            ratios=tuple(float(r) for r in obj["ratios"]),
            seed=int(obj["seed"]),
            stratified=bool(obj.get("stratified", True)),
        )


@dataclass
class SyntheticSpec:
    num_types: int = 8
    items_per_type_range: tuple[int, int] = (8, 8)
    modes_per_type: int = 2
    d_in: int = 40
    # power-law exponent, min count, max count
    samples_per_item_distribution: tuple[float, int, int] = (0.7, 3, 200)
    intra_mode_stddev: float = 1.0
    inter_mode_separation: float = 3.0
    inter_type_separation: float = 3.0
    nutrient_noise_scale: float = 0.15
    seed: int = 0

    def __post_init__(self):
        self.items_per_type_range = tuple(self.items_per_type_range)
        self.samples_per_item_distribution = tuple(self.samples_per_item_distribution)
        lo, hi = self.items_per_type_range
        _, cmin, cmax = self.samples_per_item_distribution
        if self.num_types < 1 or self.modes_per_type < 1 or self.d_in < 1:
            raise ValueError("num_types, modes_per_type and d_in must be >= 1")
        if not 1 <= lo <= hi:
            raise ValueError("items_per_type_range must satisfy 1 <= min <= max")
        if not 1 <= cmin <= cmax:
            raise ValueError("sample counts must satisfy 1 <= min <= max")
        for name in ("intra_mode_stddev", "inter_mode_separation", "inter_type_separation"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.nutrient_noise_scale < 0:
            raise ValueError("nutrient_noise_scale must be >= 0")


def records_to_arrays(records):
    """Stack records into (ids, type_labels, item_labels, features)."""
    if not records:
        return [], np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros((0, 0))
    ids = [r.sample_id for r in records]
    types = np.array([r.type_label for r in records], dtype=np.int64)
    items = np.array([r.item_label for r in records], dtype=np.int64)
    X = np.stack([np.asarray(r.features, dtype=np.float64) for r in records])
    return ids, types, items, X


def validate_records(records, hierarchy: LabelHierarchy) -> None:
    dims = {len(r.features) for r in records}
    if len(dims) > 1:
        raise DatasetError(f"inconsistent feature dimension: {sorted(dims)}")
    seen = set()
    for r in records:
        if r.sample_id in seen:
            raise DatasetError(f"duplicate sample_id {r.sample_id!r}")
        seen.add(r.sample_id)
        _check_labels(r.type_label, r.item_label, hierarchy, r.sample_id)


def _check_labels(type_label, item_label, hierarchy, where):
    if not 0 <= item_label < hierarchy.num_items:
        raise DatasetError(f"{where}: item label {item_label} out of range [0, {hierarchy.num_items})")
    if not 0 <= type_label < hierarchy.num_types:
        raise DatasetError(f"{where}: type label {type_label} out of range [0, {hierarchy.num_types})")
    if hierarchy.parent[item_label] != type_label:
        raise DatasetError(
            f"{where}: item {item_label} recorded under type {type_label} "
            f"but hierarchy says type {hierarchy.parent[item_label]}"
        )


def _feature_path(path: Path) -> Path:
    path = Path(path)
    return path / "features.csv" if path.is_dir() or not path.suffix else path


def hierarchy_path_for(feature_path: Path) -> Path:
    feature_path = Path(feature_path)
    return feature_path.with_name("hierarchy.json")


def load_dataset(path, hierarchy_path=None):
    """Read a feature CSV and its hierarchy JSON.

    ``path`` may be a directory holding ``features.csv`` and ``hierarchy.json``
    or the feature file itself; the hierarchy is looked up next to it unless
    given explicitly.
    """
    fpath = _feature_path(path)
    hpath = Path(hierarchy_path) if hierarchy_path else hierarchy_path_for(fpath)
    try:
        hierarchy = LabelHierarchy.from_json(json.loads(hpath.read_text(encoding="utf-8")))
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{hpath}: invalid JSON: {exc}") from exc

    records = []
    with open(fpath, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        if header[:3] != ["sample_id", "type_label", "item_label"]:
            raise DatasetError(f"{fpath}:1: bad header {header[:3]}")
        d = len(header) - 3
        if header[3:] != [f"f{j}" for j in range(d)]:
            raise DatasetError(f"{fpath}:1: feature columns must be f0..f{d - 1}")
        seen = set()
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split(",")
            if len(cols) != d + 3:
                raise DatasetError(
                    f"{fpath}:{lineno}: inconsistent feature dimension "
                    f"({len(cols) - 3} values, header has {d})"
                )
            try:
                t, i = int(cols[1]), int(cols[2])
                feats = np.array([float(c) for c in cols[3:]], dtype=np.float64)
            except ValueError as exc:
                raise DatasetError(f"{fpath}:{lineno}: malformed row: {exc}") from exc
            if cols[0] in seen:
                raise DatasetError(f"{fpath}:{lineno}: duplicate sample_id {cols[0]!r}")
            seen.add(cols[0])
            _check_labels(t, i, hierarchy, f"{fpath}:{lineno}")
            records.append(FeatureRecord(cols[0], t, i, feats))
    return records, hierarchy


def save_dataset(records, hierarchy: LabelHierarchy, path, d_in: int | None = None) -> Path:
    """Write ``features.csv`` and ``hierarchy.json``; returns the feature path.

    Floats are written with ``repr`` so a load/save cycle is byte-identical.
    ``d_in`` sets the header width for an empty record list.
    """
    fpath = _feature_path(path)
    fpath.parent.mkdir(parents=True, exist_ok=True)
    if records:
        d_in = len(records[0].features)
    d_in = d_in or 0
    with open(fpath, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(["sample_id", "type_label", "item_label"] + [f"f{j}" for j in range(d_in)]))
        fh.write("\n")
        for r in records:
            vals = ",".join(repr(float(v)) for v in r.features)
            fh.write(f"{r.sample_id},{r.type_label},{r.item_label},{vals}\n")
    hierarchy_path_for(fpath).write_text(json.dumps(hierarchy.to_json(), indent=1) + "\n", encoding="utf-8")
    return fpath


def save_split(split: SplitAssignment, path) -> None:
    Path(path).write_text(json.dumps(split.to_json(), indent=1) + "\n", encoding="utf-8")


def load_split(path) -> SplitAssignment:
    try:
        return SplitAssignment.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
    except (json.JSONDecodeError, KeyError) as exc:
        raise DatasetError(f"{path}: malformed split file: {exc}") from exc


def largest_remainder(n: int, ratios) -> list[int]:
    """Apportion ``n`` by ``ratios`` with the largest-remainder method.

    Ties in the fractional part go to the earlier split.
    """
    raw = [n * r for r in ratios]
    counts = [math.floor(x) for x in raw]
    short = n - sum(counts)
    order = sorted(range(len(raw)), key=lambda k: (-(raw[k] - counts[k]), k))
    for k in order[:short]:
        counts[k] += 1
    return counts


def _stratified_counts(n: int, ratios) -> list[int]:
    if n < MIN_STRATIFIED:
        return [n, 0, 0]
    counts = largest_remainder(n, ratios)
    # every split needs one sample; borrow from the largest split
    for k in range(3):
        if counts[k] == 0:
            donor = max(range(3), key=lambda j: (counts[j], -j))
            counts[donor] -= 1
            counts[k] += 1
    return counts


def split_dataset(records, ratios=(0.7, 0.1, 0.2), seed: int = 0) -> SplitAssignment:
    """Per-item stratified train/val/test split."""
    if not records:
        raise ValueError("cannot split an empty record list")
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three non-negative values summing to 1, got {ratios}")
    by_item: dict[int, list[str]] = {}
    for r in records:
        by_item.setdefault(r.item_label, []).append(r.sample_id)
    rng = np.random.default_rng(seed)
    partition = {}
    for item in sorted(by_item):
        ids = sorted(by_item[item])
        order = rng.permutation(len(ids))
        counts = _stratified_counts(len(ids), ratios)
        names = [s for s, c in zip(SPLITS, counts) for _ in range(c)]
        for pos, name in zip(order, names):
            partition[ids[pos]] = name
    # keep the file order equal to the record order
    partition = {r.sample_id: partition[r.sample_id] for r in records}
    return SplitAssignment(partition=partition, ratios=ratios, seed=seed)


def select(records, split: SplitAssignment, name: str):
    return [r for r in records if split.partition[r.sample_id] == name]


def power_law_counts(rng, n: int, exponent: float, cmin: int, cmax: int) -> np.ndarray:
    """Draw ``n`` integer counts with P(c) proportional to c**-exponent on [cmin, cmax]."""
    support = np.arange(cmin, cmax + 1)
    p = support.astype(np.float64) ** -exponent
    p /= p.sum()
    return rng.choice(support, size=n, p=p)


def _random_directions(rng, k: int, d: int) -> np.ndarray:
    """``k`` unit vectors, mutually orthogonal when ``k <= d``."""
    v = rng.standard_normal((k, d))
    if k <= d:
        q, r = np.linalg.qr(v.T)
        return (q * np.sign(np.diag(r))).T
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def generate_synthetic(spec: SyntheticSpec):
    """Draw a planted hierarchical dataset.

    Returns ``(records, hierarchy, ground_truth_modes)`` where the last maps
    every item label to a global mode id (``type * modes_per_type + k``).
    Items of a type are dealt round-robin over its modes in shuffled order,
    so mode sizes differ by at most one.
    """
    rng = np.random.default_rng(spec.seed)
    d = spec.d_in
    lo, hi = spec.items_per_type_range
    exponent, cmin, cmax = spec.samples_per_item_distribution

    mode_centers = _mode_centers(rng, spec)

    parent, modes = [], {}
    for t in range(spec.num_types):
        n_items = int(rng.integers(lo, hi + 1))
        slots = rng.permutation(n_items)
        for pos in range(n_items):
            item = len(parent)
            parent.append(t)
            modes[item] = t * spec.modes_per_type + int(slots[pos] % spec.modes_per_type)
    n_items = len(parent)

    type_base = np.array([[rng.uniform(a, b) for a, b in NUTRIENT_RANGES] for _ in range(spec.num_types)])
    widths = np.array([b - a for a, b in NUTRIENT_RANGES])
    lows = np.array([a for a, _ in NUTRIENT_RANGES])
    highs = lows + widths
    nutrients = []
    for item in range(n_items):
        jitter = spec.nutrient_noise_scale * widths * rng.uniform(-1.0, 1.0, size=4)
        vals = np.clip(type_base[parent[item]] + jitter, lows, highs)
        nutrients.append(NutrientEntry(*(float(v) for v in vals)))

    hierarchy = LabelHierarchy(
        num_types=spec.num_types,
        num_items=n_items,
        parent=parent,
        item_codes=[f"{10000000 + 1000 * parent[i] + i}" for i in range(n_items)],
        nutrients=nutrients,
    )

    counts = power_law_counts(rng, n_items, exponent, cmin, cmax)
    records = []
    for item in range(n_items):
        center = mode_centers[modes[item]]
        X = center + spec.intra_mode_stddev * rng.standard_normal((int(counts[item]), d))
        for j, x in enumerate(X):
            records.append(FeatureRecord(f"s{item:04d}_{j:04d}", parent[item], item, x))
    return records, hierarchy, modes


def _mode_centers(rng, spec: SyntheticSpec) -> np.ndarray:
    d = spec.d_in
    type_centers = spec.inter_type_separation * _random_directions(rng, spec.num_types, d)
    return np.concatenate([
        type_centers[t] + spec.inter_mode_separation * _random_directions(rng, spec.modes_per_type, d)
        for t in range(spec.num_types)
    ])


def mode_centers_for(spec: SyntheticSpec) -> np.ndarray:
    """Re-derive the generator's visual-mode centers, row ``m`` for mode id ``m``."""
    return _mode_centers(np.random.default_rng(spec.seed), spec)
