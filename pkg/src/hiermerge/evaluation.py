"""Accuracy at both hierarchy levels, nutrient MAE, and the report bundle."""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import encoder
from .dataset import NUTRIENT_FIELDS, LabelHierarchy

TOP_CONFUSIONS = 10


@dataclass
class PredictionSet:
    sample_ids: list[str]
    true_item: np.ndarray
    pred_item: np.ndarray
    true_type: np.ndarray
    pred_type: np.ndarray  # parent of pred_item unless a type classifier was used

    def __len__(self):
        return len(self.sample_ids)

    @classmethod
    def from_items(cls, sample_ids, true_item, pred_item, hierarchy: LabelHierarchy, true_type=None):
        true_item = np.asarray(true_item, dtype=np.int64)
        pred_item = np.asarray(pred_item, dtype=np.int64)
        parent = hierarchy.parent_array
        true_type = parent[true_item] if true_type is None else np.asarray(true_type, dtype=np.int64)
        return cls(list(sample_ids), true_item, pred_item, true_type, parent[pred_item])

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sample_id", "true_item", "pred_item", "true_type", "pred_type"])
            for row in zip(self.sample_ids, self.true_item, self.pred_item, self.true_type, self.pred_type):
                w.writerow([row[0], *(int(v) for v in row[1:])])

    @classmethod
    def read_csv(cls, path) -> "PredictionSet":
        with open(path, encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        col = lambda k: np.array([int(r[k]) for r in rows], dtype=np.int64)
        return cls([r["sample_id"] for r in rows], col("true_item"), col("pred_item"), col("true_type"), col("pred_type"))


def _per_class(true, pred):
    classes = np.unique(true)
    return {int(c): float(np.mean(pred[true == c] == c)) for c in classes}


def accuracy(true, pred, mode: str = "micro") -> float:
    """Micro: fraction of correct samples.  Macro: mean per-class accuracy
    over classes that occur in ``true``."""
    true = np.asarray(true)
    pred = np.asarray(pred)
    if true.size == 0:
        raise ValueError("accuracy of an empty prediction set")
    if mode == "micro":
        return float(np.mean(true == pred))
    if mode == "macro":
        return float(np.mean(list(_per_class(true, pred).values())))
    raise ValueError(f"unknown accuracy mode {mode!r}")


def item_accuracy(predictions: PredictionSet, mode: str = "micro") -> float:
    return accuracy(predictions.true_item, predictions.pred_item, mode)


def nutrient_mae(predictions: PredictionSet, nutrients) -> dict[str, float]:
    """Mean absolute per-100g difference between predicted and true items,
    averaged over every sample (correct ones contribute zero)."""
    if isinstance(nutrients, LabelHierarchy):
        nutrients = nutrients.nutrient_array()
    table = np.asarray(nutrients, dtype=np.float64)
    if len(predictions) == 0:
        raise ValueError("MAE of an empty prediction set")
    used = max(int(predictions.true_item.max()), int(predictions.pred_item.max()))
    if used >= len(table):
        raise ValueError(f"missing nutrient entry for item {used}")
    err = np.abs(table[predictions.pred_item] - table[predictions.true_item]).mean(axis=0)
    return {name: float(v) for name, v in zip(NUTRIENT_FIELDS, err)}


def type_level_eval(predictions: PredictionSet, hierarchy: LabelHierarchy, source: str = "derived_from_items",
                    type_model=None, X=None) -> dict[str, float]:
    """Food-type micro/macro accuracy.

    ``source="stage1_head"`` classifies ``X`` with ``type_model`` (a
    backbone/head pair from the first stage); ``"derived_from_items"`` maps
    each predicted item to its parent type.
    """
    if source == "stage1_head":
        if type_model is None or X is None:
            raise ValueError("stage1_head evaluation needs a stage-1 model and test features")
        pred = encoder.predict(type_model.backbone, type_model.head, X)
    elif source == "derived_from_items":
        pred = hierarchy.parent_array[predictions.pred_item]
    else:
        raise ValueError(f"unknown type-evaluation source {source!r}")
    return {"micro": accuracy(predictions.true_type, pred, "micro"),
            "macro": accuracy(predictions.true_type, pred, "macro")}


@dataclass
class EvalReport:
    split: str
    num_samples: int
    item_accuracy_micro: float
    item_accuracy_macro: float
    type_accuracy_derived: dict
    type_accuracy_stage1: dict | None
    nutrient_mae: dict
    per_class: list[dict]
    top_confusions: list[dict]
    num_misclassified: int
    confused_pairs: list[dict]  # every (true, predicted) pair, most frequent first

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "EvalReport":
        return cls(**obj)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "EvalReport":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def build_report(predictions: PredictionSet, hierarchy: LabelHierarchy, split: str = "test",
                 type_model=None, X=None) -> EvalReport:
    parent = hierarchy.parent_array
    per_class = []
    for item, acc in _per_class(predictions.true_item, predictions.pred_item).items():
        per_class.append({
            "item": item, "code": hierarchy.item_codes[item], "type": int(parent[item]),
            "count": int(np.sum(predictions.true_item == item)), "accuracy": acc,
        })
    wrong = predictions.true_item != predictions.pred_item
    pairs = Counter(zip(predictions.true_item[wrong].tolist(), predictions.pred_item[wrong].tolist()))
    confusions = [
        {"true_item": t, "pred_item": p, "count": c, "same_type": bool(parent[t] == parent[p])}
        for (t, p), c in sorted(pairs.items(), key=lambda kv: (-kv[1], kv[0]))
    ]
    stage1 = None
    if type_model is not None:
        stage1 = type_level_eval(predictions, hierarchy, "stage1_head", type_model, X)
    return EvalReport(
        split=split,
        num_samples=len(predictions),
        item_accuracy_micro=item_accuracy(predictions, "micro"),
        item_accuracy_macro=item_accuracy(predictions, "macro"),
        type_accuracy_derived=type_level_eval(predictions, hierarchy, "derived_from_items"),
        type_accuracy_stage1=stage1,
        nutrient_mae=nutrient_mae(predictions, hierarchy),
        per_class=per_class,
        top_confusions=confusions[:TOP_CONFUSIONS],
        num_misclassified=int(wrong.sum()),
        confused_pairs=confusions,
    )


def evaluate_model(item_model, split, hierarchy: LabelHierarchy, split_name: str = "test", type_model=None):
    """Predict ``split`` (a pipeline Split) with ``item_model``; returns (PredictionSet, EvalReport)."""
    pred = encoder.predict(item_model.backbone, item_model.head, split.X)
    preds = PredictionSet.from_items(split.ids, split.items, pred, hierarchy, true_type=split.types)
    return preds, build_report(preds, hierarchy, split_name, type_model, split.X)
