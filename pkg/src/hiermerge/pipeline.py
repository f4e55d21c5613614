"""Iterative merge-and-train loop plus the flat and HTL baselines.

One iteration trains three heads in sequence on a shared backbone: food
types, merged food items, food items.  The stage-3 backbone then embeds
the training set, items are re-clustered, and the new merge map feeds the
next iteration's second stage.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import clustering, encoder
from .dataset import LabelHierarchy, SplitAssignment, records_to_arrays

log = logging.getLogger(__name__)

MODES = ("full", "flat", "htl")


@dataclass
class Split:
    ids: list[str]
    X: np.ndarray
    types: np.ndarray
    items: np.ndarray

    def __len__(self):
        return len(self.ids)


@dataclass
class DataSplits:
    train: Split
    val: Split
    test: Split

    @classmethod
    def from_records(cls, records, split: SplitAssignment) -> "DataSplits":
        parts = {}
        for name in ("train", "val", "test"):
            chosen = [r for r in records if split.partition[r.sample_id] == name]
            ids, types, items, X = records_to_arrays(chosen)
            if not chosen and records:
                X = np.zeros((0, len(records[0].features)))
            parts[name] = Split(ids, X, types, items)
        return cls(**parts)

    @property
    def d_in(self) -> int:
        return self.train.X.shape[1]


@dataclass
class PipelineConfig:
    max_iterations: int = 5
    epochs_per_stage: int = 15
    base_lr: float = 1e-4
    lr_iteration_decay: float = 0.8
    batch_size: int = 32
    hidden_widths: tuple[int, ...] = (64,)
    embedding_dim: int = 32
    damping: float = clustering.DAMPING
    max_sweeps: int = clustering.MAX_SWEEPS
    stability_window: int = clustering.STABILITY_WINDOW
    preference: str | float = "median"
    squared_distance: bool = False
    merge_before_first_iteration: bool = False
    warm_start: str | None = None
    seed: int = 0
    mode: str = "full"

    def __post_init__(self):
        self.hidden_widths = tuple(int(w) for w in self.hidden_widths)
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0 < self.lr_iteration_decay <= 1:
            raise ValueError("lr_iteration_decay must lie in (0, 1]")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.epochs_per_stage < 1 or self.batch_size < 1:
            raise ValueError("epochs_per_stage and batch_size must be >= 1")

    def widths(self, d_in: int) -> list[int]:
        return [d_in, *self.hidden_widths, self.embedding_dim]

    def to_json(self) -> dict:
        out = asdict(self)
        out["hidden_widths"] = list(self.hidden_widths)
        return out


def stage_seed(seed: int, iteration: int, stage: int) -> int:
    return int(np.random.SeedSequence([seed, iteration, stage]).generate_state(1)[0])


@dataclass
class IterationRecord:
    iteration: int
    K: int
    head_dims: list[int]
    stage_losses: dict  # "stage1" -> {"train": x, "val": y}, ...
    # clustering quality of the backbone entering this iteration
    silhouette: float | None
    davies_bouldin: float | None
    next_K: int
    # clustering quality of the stage-3 backbone leaving it
    next_silhouette: float | None
    next_davies_bouldin: float | None
    base_lr: float
    duration_s: float = 0.0

    @property
    def val_loss(self) -> float:
        return self.stage_losses["stage3"]["val"]

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class Model:
    backbone: encoder.BackboneParams
    head: encoder.HeadParams


@dataclass
class PipelineState:
    iteration: int
    backbone: encoder.BackboneParams
    merge_map: clustering.MergeMap
    lr: float
    entry_scores: tuple | None = None  # (silhouette, davies_bouldin) of ``backbone``
    records: list[IterationRecord] = field(default_factory=list)
    metrics: list[dict] = field(default_factory=list)
    merge_maps: list[clustering.MergeMap] = field(default_factory=list)  # merge map used in each iteration
    produced_maps: list[clustering.MergeMap] = field(default_factory=list)  # merge map produced by each iteration
    item_models: list[Model] = field(default_factory=list)
    type_models: list[Model] = field(default_factory=list)
    stage_backbones: list[list[encoder.BackboneParams]] = field(default_factory=list)


@dataclass
class RunResult:
    mode: str
    item_model: Model
    type_model: Model | None
    records: list[IterationRecord]
    stop_reason: str
    best_iteration: int | None
    metrics: list[dict]
    merge_maps: list[clustering.MergeMap] = field(default_factory=list)
    gradient_steps: dict = field(default_factory=dict)
    stages: dict = field(default_factory=dict)  # baselines: stage -> final losses
    iteration_models: list[Model] = field(default_factory=list)  # stage-3 model of each iteration


def _log_history(metrics, iteration, stage, history):
    for h in history:
        metrics.append({"iteration": iteration, "stage": stage, "epoch": h["epoch"], "split": "train", "loss": h["train_loss"]})
        if h["val_loss"] is not None:
            metrics.append({"iteration": iteration, "stage": stage, "epoch": h["epoch"], "split": "val", "loss": h["val_loss"]})


def _final_losses(history):
    if not history:
        return {"train": None, "val": None}
    return {"train": history[-1]["train_loss"], "val": history[-1]["val_loss"]}


def initial_backbone(d_in: int, config: PipelineConfig) -> encoder.BackboneParams:
    if config.warm_start:
        backbone, _, _ = encoder.load_checkpoint(config.warm_start)
        if backbone.d_in != d_in:
            raise encoder.ShapeError(f"warm-start backbone expects d_in={backbone.d_in}, data has {d_in}")
        return backbone
    return encoder.init_backbone(config.widths(d_in), seed=stage_seed(config.seed, 0, 0))


def merge_from_backbone(backbone, splits: DataSplits, hierarchy: LabelHierarchy, config: PipelineConfig):
    """Profile every item on its training samples and cluster.

    Returns ``(merge_map, profile_matrix, ap_result)``.  Items with no
    training sample keep a singleton merged label.
    """
    emb = encoder.embed(backbone, splits.train.X)
    present = sorted(set(splits.train.items.tolist()))
    profiles = clustering.compute_profiles(emb, splits.train.items, items=present)
    F = clustering.profile_matrix(profiles)
    S = clustering.similarity_matrix(F, preference=config.preference, squared=config.squared_distance)
    ap = clustering.affinity_propagation(S, config.damping, config.max_sweeps, config.stability_window)
    # map back to all items; absent items become their own cluster
    clusters = list(range(hierarchy.num_items))
    for pos, item in enumerate(present):
        clusters[item] = present[int(ap.assignment[pos])]
    merge_map = clustering.merge_within_type(clusters, hierarchy.parent)
    return merge_map, F, present, ap


def _cluster_scores(F, labels):
    if len(set(labels)) < 2 or len(set(labels)) >= len(labels):
        return None, None
    return clustering.silhouette_score(F, labels), clustering.davies_bouldin(F, labels)


def clustering_quality(backbone, splits, hierarchy, config):
    """``(merge_map, silhouette, davies_bouldin)`` of the merge computed from ``backbone``."""
    merge_map, F, present, _ = merge_from_backbone(backbone, splits, hierarchy, config)
    sil, db = _cluster_scores(F, [merge_map.assignment[i] for i in present])
    return merge_map, sil, db


def run_iteration(state: PipelineState, splits: DataSplits, hierarchy: LabelHierarchy, config: PipelineConfig):
    """One three-stage pass followed by re-clustering.  Mutates and returns ``state``."""
    t0 = time.perf_counter()
    t = state.iteration + 1
    mm = state.merge_map
    tr, va = splits.train, splits.val
    lr = state.lr
    head_dims, losses, backbones = [], {}, [state.backbone]
    if state.entry_scores is None:
        state.entry_scores = clustering_quality(state.backbone, splits, hierarchy, config)[1:]

    def stage(idx, y_train, y_val, C, backbone):
        cfg = encoder.StageConfig(stage=idx, num_classes=C, epochs=config.epochs_per_stage,
                                  batch_size=config.batch_size, base_lr=lr, seed=stage_seed(config.seed, t, idx))
        bb, head, hist = encoder.train_stage(backbone, cfg, tr.X, y_train, va.X, y_val)
        _log_history(state.metrics, t, idx, hist)
        head_dims.append(C)
        losses[f"stage{idx}"] = _final_losses(hist)
        backbones.append(bb)
        return bb, head

    merged = np.asarray(mm.assignment, dtype=np.int64)
    bb1, head1 = stage(1, tr.types, va.types, hierarchy.num_types, state.backbone)
    backbone = bb1
    if 1 < mm.K < hierarchy.num_items:
        backbone, _ = stage(2, merged[tr.items], merged[va.items], mm.K, backbone)
    else:
        losses["stage2"] = {"train": None, "val": None}
    bb3, head3 = stage(3, tr.items, va.items, hierarchy.num_items, backbone)

    next_map, sil, db = clustering_quality(bb3, splits, hierarchy, config)
    record = IterationRecord(
        iteration=t, K=mm.K, head_dims=head_dims, stage_losses=losses,
        silhouette=state.entry_scores[0], davies_bouldin=state.entry_scores[1],
        next_K=next_map.K, next_silhouette=sil, next_davies_bouldin=db, base_lr=lr,
    )
    state.merge_maps.append(mm)
    state.produced_maps.append(next_map)
    state.item_models.append(Model(bb3, head3))
    state.type_models.append(Model(bb1, head1))
    state.stage_backbones.append(backbones)
    state.iteration = t
    state.backbone = bb3
    state.merge_map = next_map
    state.entry_scores = (sil, db)
    state.lr = lr * config.lr_iteration_decay
    record.duration_s = time.perf_counter() - t0
    state.records.append(record)
    log.info("iteration %d: K=%d next_K=%d val=%.4f silhouette=%s", t, mm.K, next_map.K, record.val_loss, sil)
    return state, record


def _check_splits(splits: DataSplits):
    if len(splits.train) == 0 or len(splits.val) == 0:
        raise ValueError("training and validation splits must be nonempty")


def run_pipeline(splits: DataSplits, hierarchy: LabelHierarchy, config: PipelineConfig,
                 iteration_fn=run_iteration) -> RunResult:
    """Iterate until stage-3 validation loss stops decreasing or the budget runs out."""
    _check_splits(splits)
    backbone = initial_backbone(splits.d_in, config)
    first_map, sil, db = clustering_quality(backbone, splits, hierarchy, config)
    if not config.merge_before_first_iteration:
        # no trained features yet: iteration 1 runs on the identity map
        first_map = clustering.MergeMap.identity(hierarchy.parent)
    state = PipelineState(iteration=0, backbone=backbone, merge_map=first_map, lr=config.base_lr,
                          entry_scores=(sil, db))

    stop_reason = "max_iterations"
    best = None
    while state.iteration < config.max_iterations:
        state, record = iteration_fn(state, splits, hierarchy, config)
        val = record.val_loss
        if best is None or val < state.records[best].val_loss:
            best = len(state.records) - 1
        if len(state.records) >= 2 and val >= state.records[-2].val_loss:
            stop_reason = "val_plateau"
            break

    steps_per_stage = config.epochs_per_stage * math.ceil(len(splits.train) / config.batch_size)
    return RunResult(
        mode="full",
        item_model=state.item_models[best],
        # types come from the first stage of the last completed iteration
        type_model=state.type_models[-1],
        records=state.records,
        stop_reason=stop_reason,
        best_iteration=state.records[best].iteration,
        metrics=state.metrics,
        merge_maps=state.produced_maps,
        gradient_steps={"item_stage": steps_per_stage * len(state.records)},
        iteration_models=state.item_models,
    )


def run_flat_baseline(splits: DataSplits, hierarchy: LabelHierarchy, config: PipelineConfig,
                      budget_iterations: int | None = None) -> RunResult:
    """Single item head trained for ``epochs_per_stage * budget_iterations`` epochs."""
    _check_splits(splits)
    iters = budget_iterations or config.max_iterations
    tr, va = splits.train, splits.val
    cfg = encoder.StageConfig(stage=3, num_classes=hierarchy.num_items, epochs=config.epochs_per_stage * iters,
                              batch_size=config.batch_size, base_lr=config.base_lr, seed=stage_seed(config.seed, 1, 3))
    bb, head, hist = encoder.train_stage(initial_backbone(splits.d_in, config), cfg, tr.X, tr.items, va.X, va.items)
    metrics = []
    _log_history(metrics, 1, 3, hist)
    steps = cfg.epochs * math.ceil(len(tr) / cfg.batch_size)
    return RunResult("flat", Model(bb, head), None, [], "max_iterations", None, metrics,
                     gradient_steps={"item_stage": steps}, stages={"stage3": _final_losses(hist)})


def run_htl_baseline(splits: DataSplits, hierarchy: LabelHierarchy, config: PipelineConfig,
                     budget_iterations: int | None = None) -> RunResult:
    """Types first, then items on the transferred backbone; no merging, no iteration."""
    _check_splits(splits)
    iters = budget_iterations or config.max_iterations
    tr, va = splits.train, splits.val
    cfg1 = encoder.StageConfig(stage=1, num_classes=hierarchy.num_types, epochs=config.epochs_per_stage,
                               batch_size=config.batch_size, base_lr=config.base_lr, seed=stage_seed(config.seed, 1, 1))
    bb1, head1, hist1 = encoder.train_stage(initial_backbone(splits.d_in, config), cfg1, tr.X, tr.types, va.X, va.types)
    cfg3 = encoder.StageConfig(stage=3, num_classes=hierarchy.num_items, epochs=config.epochs_per_stage * iters,
                               batch_size=config.batch_size, base_lr=config.base_lr, seed=stage_seed(config.seed, 1, 3))
    bb3, head3, hist3 = encoder.train_stage(bb1, cfg3, tr.X, tr.items, va.X, va.items)
    metrics = []
    _log_history(metrics, 1, 1, hist1)
    _log_history(metrics, 1, 3, hist3)
    steps = cfg3.epochs * math.ceil(len(tr) / cfg3.batch_size)
    return RunResult("htl", Model(bb3, head3), Model(bb1, head1), [], "max_iterations", None, metrics,
                     gradient_steps={"item_stage": steps},
                     stages={"stage1": _final_losses(hist1), "stage3": _final_losses(hist3)})
