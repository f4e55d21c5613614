import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hiermerge.dataset import (
    DatasetError,
    FeatureRecord,
    LabelHierarchy,
    NutrientEntry,
    SyntheticSpec,
    generate_synthetic,
    largest_remainder,
    load_dataset,
    load_split,
    mode_centers_for,
    power_law_counts,
    save_dataset,
    save_split,
    split_dataset,
)


def _hierarchy(parent, num_types=None):
    n = len(parent)
    return LabelHierarchy(num_types or max(parent) + 1, n, list(parent), [str(i) for i in range(n)],
                          [NutrientEntry(100.0, 1.0, 2.0, 3.0)] * n)


def _write(tmp_path, header, rows, parent=(0, 0, 1)):
    (tmp_path / "hierarchy.json").write_text(json.dumps(_hierarchy(parent).to_json()))
    lines = [header] + rows
    (tmp_path / "features.csv").write_text("\n".join(lines) + "\n")
    return tmp_path


HEADER4 = "sample_id,type_label,item_label,f0,f1,f2,f3"


def test_load_three_rows(tmp_path):
    _write(tmp_path, HEADER4, ["a,0,0,1,2,3,4", "b,0,1,0.5,0,0,0", "c,1,2,-1,-2,-3,-4"])
    records, hierarchy = load_dataset(tmp_path)
    assert len(records) == 3
    assert all(len(r.features) == 4 for r in records)
    assert records[2].features.tolist() == [-1, -2, -3, -4]
    assert hierarchy.num_items == 3


def test_item_label_out_of_range(tmp_path):
    _write(tmp_path, HEADER4, ["a,0,0,1,2,3,4", "b,1,3,1,2,3,4"])
    with pytest.raises(DatasetError, match="out of range") as err:
        load_dataset(tmp_path)
    assert ":3:" in str(err.value)


def test_type_item_inconsistency(tmp_path):
    parent = [0, 0, 1, 1, 2, 3]
    (tmp_path / "hierarchy.json").write_text(json.dumps(_hierarchy(parent).to_json()))
    (tmp_path / "features.csv").write_text("sample_id,type_label,item_label,f0\nx,2,5,0.0\n")
    with pytest.raises(DatasetError, match="hierarchy says type 3"):
        load_dataset(tmp_path)


def test_inconsistent_dimension(tmp_path):
    _write(tmp_path, HEADER4, ["a,0,0,1,2,3,4", "b,0,1,1,2,3"])
    with pytest.raises(DatasetError, match="inconsistent feature dimension"):
        load_dataset(tmp_path)


def test_missing_nutrients_rejected():
    with pytest.raises(DatasetError, match="nutrient"):
        LabelHierarchy(1, 2, [0, 0], ["a", "b"], [NutrientEntry(1, 1, 1, 1)])
    with pytest.raises(DatasetError):
        NutrientEntry(-1.0, 0, 0, 0)


def _records(counts):
    recs = []
    for item, n in enumerate(counts):
        recs += [FeatureRecord(f"i{item}_{j}", 0, item, np.zeros(2)) for j in range(n)]
    return recs


def _split_counts(split, records, item):
    names = [split.partition[r.sample_id] for r in records if r.item_label == item]
    return [names.count(s) for s in ("train", "val", "test")]


@pytest.mark.parametrize("n,expected", [(10, [7, 1, 2]), (2, [2, 0, 0]), (9, [6, 1, 2])])
def test_split_counts(n, expected):
    recs = _records([n])
    assert _split_counts(split_dataset(recs, seed=5), recs, 0) == expected


def test_largest_remainder_nine_by_hand():
    # raw 6.3 / 0.9 / 1.8: floors 6/0/1, one seat left, biggest remainder is val (0.9)
    assert largest_remainder(9, (0.7, 0.1, 0.2)) == [6, 1, 2]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 40), min_size=1, max_size=6), st.integers(0, 2**31 - 1))
def test_split_is_stratified_partition(counts, seed):
    recs = _records(counts)
    split = split_dataset(recs, seed=seed)
    assert set(split.partition) == {r.sample_id for r in recs}
    for item, n in enumerate(counts):
        c = _split_counts(split, recs, item)
        assert sum(c) == n
        if n >= 3:
            assert min(c) >= 1
            assert abs(c[0] - 0.7 * n) <= 1.0 + 1e-9 or n < 10
        else:
            assert c == [n, 0, 0]
    assert split_dataset(recs, seed=seed) == split


def test_save_load_roundtrip_byte_identical(tmp_path):
    records, hierarchy, _ = generate_synthetic(SyntheticSpec(num_types=2, items_per_type_range=(2, 3), d_in=5, seed=9,
                                                             samples_per_item_distribution=(1.0, 3, 8)))
    p1 = save_dataset(records, hierarchy, tmp_path / "a")
    loaded, h2 = load_dataset(tmp_path / "a")
    assert loaded == records
    assert h2 == hierarchy
    p2 = save_dataset(loaded, h2, tmp_path / "b")
    assert p1.read_bytes() == p2.read_bytes()
    assert (tmp_path / "a" / "hierarchy.json").read_bytes() == (tmp_path / "b" / "hierarchy.json").read_bytes()


def test_empty_record_list_header_only(tmp_path):
    path = save_dataset([], _hierarchy([0]), tmp_path, d_in=3)
    assert path.read_text() == "sample_id,type_label,item_label,f0,f1,f2\n"
    records, _ = load_dataset(tmp_path)
    assert records == []


def test_split_file_roundtrip(tmp_path):
    recs = _records([5, 4])
    split = split_dataset(recs, seed=2)
    save_split(split, tmp_path / "split.json")
    assert load_split(tmp_path / "split.json") == split


def test_degenerate_generator_spec():
    spec = SyntheticSpec(num_types=1, items_per_type_range=(2, 2), modes_per_type=1,
                         samples_per_item_distribution=(1.0, 5, 5))
    records, hierarchy, modes = generate_synthetic(spec)
    assert len(records) == 10
    assert modes == {0: 0, 1: 0}
    assert hierarchy.parent == [0, 0]


def test_nearest_mode_center_accuracy_at_wide_separation():
    spec = SyntheticSpec(num_types=4, items_per_type_range=(3, 3), modes_per_type=2, d_in=10,
                         samples_per_item_distribution=(0.0, 84, 84), intra_mode_stddev=1.0,
                         inter_mode_separation=10.0, inter_type_separation=10.0, seed=11)
    records, _, modes = generate_synthetic(spec)
    centers = mode_centers_for(spec)
    X = np.stack([r.features for r in records])[:1000]
    truth = np.array([modes[r.item_label] for r in records])[:1000]
    nearest = np.argmin(((X[:, None, :] - centers[None]) ** 2).sum(-1), axis=1)
    assert len(X) == 1000
    assert np.mean(nearest == truth) > 0.99


def test_power_law_spread():
    hits = 0
    for seed in range(100):
        c = power_law_counts(np.random.default_rng(seed), 60, 1.5, 2, 100)
        assert c.min() >= 2 and c.max() <= 100
        hits += c.max() / c.min() >= 10
    assert hits >= 90


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(1, 5), st.integers(1, 3), st.integers(0, 10_000))
def test_generator_labels_and_modes(num_types, max_items, modes_per_type, seed):
    spec = SyntheticSpec(num_types=num_types, items_per_type_range=(1, max_items), modes_per_type=modes_per_type,
                         d_in=3, samples_per_item_distribution=(1.0, 1, 4), seed=seed)
    records, hierarchy, modes = generate_synthetic(spec)
    for r in records:
        assert hierarchy.parent[r.item_label] == r.type_label
    for t in range(num_types):
        kids = hierarchy.children(t)
        assert kids
        used = [modes[i] for i in kids]
        assert all(m // modes_per_type == t for m in used)
        # pigeonhole: more items than modes forces a shared mode
        if len(kids) > modes_per_type:
            assert len(set(used)) < len(kids)
        sizes = [used.count(m) for m in set(used)]
        assert max(sizes) - min(sizes) <= 1
    again, _, _ = generate_synthetic(spec)
    assert again == records


def test_generator_nutrients_in_range():
    _, hierarchy, _ = generate_synthetic(SyntheticSpec(seed=4))
    arr = hierarchy.nutrient_array()
    assert arr.shape == (64, 4)
    assert np.all(arr[:, 0] >= 50) and np.all(arr[:, 0] <= 600)
    assert np.all(arr[:, 1:] >= 0)
