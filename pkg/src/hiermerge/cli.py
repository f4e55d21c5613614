"""Command-line entry point: ``hiermerge gen|run|eval|inspect``.

Exit codes: 0 success, 2 config error, 3 data error, 4 runtime error.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, fields
from pathlib import Path

from . import encoder
from .clustering import MergeMap
from .dataset import (
    DatasetError,
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    load_split,
    save_dataset,
    save_split,
    split_dataset,
)
from .evaluation import EvalReport, PredictionSet, evaluate_model
from .pipeline import (
    DataSplits,
    Model,
    PipelineConfig,
    run_flat_baseline,
    run_htl_baseline,
    run_pipeline,
)

log = logging.getLogger("hiermerge")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


DEFAULT_CONFIG = {
    "seed": 0,
    "data": {"synthetic": {}},
    "split": {"ratios": [0.7, 0.1, 0.2], "seed": None},
    "pipeline": {},
    "eval": {"split": "test"},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "data":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _dataclass_kwargs(cls, obj: dict, where: str) -> dict:
    names = {f.name for f in fields(cls)}
    unknown = set(obj) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    return dict(obj)


def resolve_config(raw: dict, seed=None, mode=None) -> dict:
    """Materialize every default so the saved config reproduces the run."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - set(DEFAULT_CONFIG)
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    cfg = _merge(DEFAULT_CONFIG, raw)
    if seed is not None:
        cfg["seed"] = int(seed)
    if mode is not None:
        cfg["pipeline"]["mode"] = mode
    g = int(cfg["seed"])

    data = cfg["data"]
    sources = [k for k in ("synthetic", "path", "features") if k in data]
    if len(sources) != 1:
        raise ConfigError("data must name exactly one source: synthetic, path, or features/hierarchy")
    try:
        if "synthetic" in data:
            syn = _dataclass_kwargs(SyntheticSpec, data["synthetic"], "data.synthetic")
            syn.setdefault("seed", g)
            data["synthetic"] = asdict(SyntheticSpec(**syn))
        split = cfg["split"]
        if split.get("seed") is None:
            split["seed"] = g
        pipe = _dataclass_kwargs(PipelineConfig, cfg["pipeline"], "pipeline")
        pipe.setdefault("seed", g)
        cfg["pipeline"] = PipelineConfig(**pipe).to_json()
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    if cfg["eval"].get("split") not in ("train", "val", "test"):
        raise ConfigError("eval.split must be train, val or test")
    return cfg


def _to_jsonable(obj):
    if isinstance(obj, tuple):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, list):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    return obj


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_to_jsonable(obj), indent=1) + "\n", encoding="utf-8")


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc


def materialize_data(cfg: dict, data_dir: Path | None):
    """Build or load (records, hierarchy, split, modes); writes files when ``data_dir`` is given."""
    data = cfg["data"]
    modes = None
    if "synthetic" in data:
        records, hierarchy, modes = generate_synthetic(SyntheticSpec(**data["synthetic"]))
        split = split_dataset(records, cfg["split"]["ratios"], cfg["split"]["seed"])
    else:
        if "path" in data:
            root = Path(data["path"])
            fpath, hpath, spath = root / "features.csv", root / "hierarchy.json", root / "split.json"
        else:
            fpath, hpath = Path(data["features"]), Path(data["hierarchy"])
            spath = Path(data["split"]) if data.get("split") else None
        try:
            records, hierarchy = load_dataset(fpath, hpath)
        except FileNotFoundError as exc:
            raise DatasetError(f"data file not found: {exc.filename}") from exc
        if spath is not None and spath.exists():
            split = load_split(spath)
        else:
            split = split_dataset(records, cfg["split"]["ratios"], cfg["split"]["seed"])
        missing = {r.sample_id for r in records} - set(split.partition)
        if missing:
            raise DatasetError(f"split file does not cover {len(missing)} samples")
    if data_dir is not None:
        fpath = save_dataset(records, hierarchy, data_dir)
        save_split(split, data_dir / "split.json")
        if modes is not None:
            _write_json(data_dir / "modes.json", {str(k): v for k, v in sorted(modes.items())})
    return records, hierarchy, split, modes


def cmd_gen(cfg: dict, out: Path) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    if "synthetic" not in cfg["data"]:
        raise ConfigError("gen needs a synthetic data source")
    materialize_data(cfg, out)
    _write_json(out / "config.json", cfg)
    return out


def merge_report(merge_map: MergeMap, hierarchy, train_items, iteration: int) -> dict:
    counts = [0] * hierarchy.num_items
    for i in train_items:
        counts[int(i)] += 1
    merged = []
    for m in range(merge_map.K):
        members = merge_map.members(m)
        ex = merge_map.exemplar_of_merged[m] if merge_map.exemplar_of_merged else members[0]
        merged.append({
            "merged_label": m,
            "parent_type": merge_map.parent_of_merged[m],
            "exemplar_item": ex,
            "exemplar_code": hierarchy.item_codes[ex],
            "members": [{"item": i, "code": hierarchy.item_codes[i], "train_count": counts[i]} for i in members],
            "total_train_count": sum(counts[i] for i in members),
        })
    return {"produced_by_iteration": iteration, "used_in_iteration": iteration + 1,
            "K": merge_map.K, "num_items": hierarchy.num_items, "merged_items": merged}


def _checkpoint_json(result, cfg) -> dict:
    item = result.item_model
    obj = encoder.model_to_json(item.backbone, item.head, seed=cfg["pipeline"]["seed"], mode=result.mode)
    obj["type_model"] = None
    if result.type_model is not None:
        obj["type_model"] = encoder.model_to_json(result.type_model.backbone, result.type_model.head)
    return obj


def write_evaluation(out: Path, item_model, type_model, splits: DataSplits, hierarchy, split_name: str):
    part = getattr(splits, split_name)
    if len(part) == 0:
        raise DatasetError(f"{split_name} split is empty")
    preds, report = evaluate_model(item_model, part, hierarchy, split_name, type_model)
    suffix = "" if split_name == "test" else f"_{split_name}"
    preds.write_csv(out / f"predictions{suffix}.csv")
    report.save(out / f"report{suffix}.json")
    return report


def cmd_run(cfg: dict, out: Path) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", cfg)
    records, hierarchy, split, _ = materialize_data(cfg, out / "data")
    splits = DataSplits.from_records(records, split)
    pcfg = PipelineConfig(**cfg["pipeline"])
    if splits.d_in == 0:
        raise DatasetError("dataset has no feature columns")
    if pcfg.mode == "full":
        result = run_pipeline(splits, hierarchy, pcfg)
    elif pcfg.mode == "flat":
        result = run_flat_baseline(splits, hierarchy, pcfg)
    else:
        result = run_htl_baseline(splits, hierarchy, pcfg)

    with open(out / "metrics.jsonl", "w", encoding="utf-8") as fh:
        for row in result.metrics:
            fh.write(json.dumps(row) + "\n")
    ckpt = out / "checkpoints"
    ckpt.mkdir(exist_ok=True)
    for k, rec in enumerate(result.records):
        _write_json(out / f"iter_{rec.iteration}" / "record.json", rec.to_json())
        _write_json(out / f"iter_{rec.iteration}" / "merge_report.json",
                    merge_report(result.merge_maps[k], hierarchy, splits.train.items, rec.iteration))
        model = result.iteration_models[k]
        encoder.save_checkpoint(ckpt / f"iter_{rec.iteration}.json", model.backbone, model.head,
                                seed=cfg["pipeline"]["seed"], iteration=rec.iteration)
    (ckpt / "final.json").write_text(json.dumps(_checkpoint_json(result, cfg)) + "\n", encoding="utf-8")
    _write_json(out / "summary.json", {
        "mode": result.mode,
        "stop_reason": result.stop_reason,
        "best_iteration": result.best_iteration,
        "iterations": len(result.records),
        "gradient_steps": result.gradient_steps,
        "stages": result.stages,
    })
    write_evaluation(out, result.item_model, result.type_model, splits, hierarchy, cfg["eval"]["split"])
    return out


def cmd_eval(checkpoint, data_dir, out: Path, split_name: str = "test") -> EvalReport:
    try:
        obj = json.loads(Path(checkpoint).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise DatasetError(f"checkpoint not found: {checkpoint}") from exc
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{checkpoint}: corrupt checkpoint: {exc}") from exc
    backbone, head = encoder.model_from_json(obj)
    type_model = None
    if obj.get("type_model"):
        type_model = Model(*encoder.model_from_json(obj["type_model"]))
    data_dir = Path(data_dir)
    try:
        records, hierarchy = load_dataset(data_dir / "features.csv", data_dir / "hierarchy.json")
    except FileNotFoundError as exc:
        raise DatasetError(f"data file not found: {exc.filename}") from exc
    split = load_split(data_dir / "split.json")
    splits = DataSplits.from_records(records, split)
    if splits.d_in != backbone.d_in:
        raise DatasetError(f"dimension mismatch: checkpoint expects d_in={backbone.d_in}, data has {splits.d_in}")
    if head.num_classes != hierarchy.num_items:
        raise DatasetError(f"checkpoint head has {head.num_classes} classes, hierarchy has {hierarchy.num_items} items")
    out.mkdir(parents=True, exist_ok=True)
    return write_evaluation(out, Model(backbone, head), type_model, splits, hierarchy, split_name)


def _read_json(path: Path):
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise DatasetError(f"missing run file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DatasetError(f"corrupt run file {path}: {exc}") from exc


def _fmt(x, spec=".4f"):
    return "-" if x is None else format(x, spec)


def cmd_inspect(run_dir, iteration=None, file=None) -> None:
    file = file or sys.stdout
    run_dir = Path(run_dir)
    summary = _read_json(run_dir / "summary.json")
    print(f"run: {run_dir}  mode={summary['mode']}  stop_reason={summary['stop_reason']}  "
          f"best_iteration={summary['best_iteration']}", file=file)
    if summary["mode"] != "full":
        print("no merge stages (baseline run)", file=file)
        for name, losses in summary.get("stages", {}).items():
            print(f"  {name}: train={_fmt(losses['train'])} val={_fmt(losses['val'])}", file=file)
    else:
        iters = sorted(int(p.name.split("_")[1]) for p in run_dir.glob("iter_*") if p.is_dir())
        print(f"{'iter':>4} {'K':>5} {'nextK':>5} {'silhouette':>10} {'DB':>8} "
              f"{'s1 val':>8} {'s2 val':>8} {'s3 val':>8}", file=file)
        for t in iters:
            rec = _read_json(run_dir / f"iter_{t}" / "record.json")
            sl = rec["stage_losses"]
            print(f"{t:>4} {rec['K']:>5} {rec['next_K']:>5} {_fmt(rec['silhouette']):>10} "
                  f"{_fmt(rec['davies_bouldin']):>8} {_fmt(sl['stage1']['val']):>8} "
                  f"{_fmt(sl['stage2']['val']):>8} {_fmt(sl['stage3']['val']):>8}", file=file)
        if iters:
            t = iteration if iteration is not None else iters[-1]
            rep = _read_json(run_dir / f"iter_{t}" / "merge_report.json")
            multi = [m for m in rep["merged_items"] if len(m["members"]) > 1]
            print(f"\nmerge report after iteration {t}: K={rep['K']} of N={rep['num_items']} items, "
                  f"{len(multi)} merged items with more than one member", file=file)
            for m in multi:
                members = ", ".join(f"{x['code']} ({x['train_count']})" for x in m["members"])
                print(f"  merged {m['merged_label']} [type {m['parent_type']}]: {members}  "
                      f"total {m['total_train_count']}", file=file)
    report_path = run_dir / "report.json"
    if report_path.exists():
        rep = _read_json(report_path)
        mae = rep["nutrient_mae"]
        print(f"\ntest: item acc micro={rep['item_accuracy_micro']:.4f} macro={rep['item_accuracy_macro']:.4f}  "
              f"energy MAE={mae['energy_kcal']:.2f} kcal", file=file)


def _run_one(args):
    cfg, out = args
    cmd_run(cfg, Path(out))
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hiermerge", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a synthetic dataset")
    g.add_argument("--config")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)

    r = sub.add_parser("run", help="train and evaluate one configuration")
    r.add_argument("--config")
    r.add_argument("--seed", help="integer, or comma-separated list for several runs")
    r.add_argument("--mode", choices=["full", "flat", "htl"])
    r.add_argument("--out", required=True)
    r.add_argument("--jobs", type=int, default=1)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset directory")
    e.add_argument("checkpoint")
    e.add_argument("--data", required=True, help="directory with features.csv, hierarchy.json, split.json")
    e.add_argument("--split", default="test", choices=["train", "val", "test"])
    e.add_argument("--out", required=True)

    i = sub.add_parser("inspect", help="summarize a run directory")
    i.add_argument("run_dir")
    i.add_argument("--iteration", type=int)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "gen":
            cmd_gen(resolve_config(load_config(args.config), seed=args.seed), Path(args.out))
        elif args.command == "run":
            raw = load_config(args.config)
            seeds = [None] if args.seed is None else [int(s) for s in str(args.seed).split(",")]
            cfgs = [resolve_config(raw, seed=s, mode=args.mode) for s in seeds]
            out = Path(args.out)
            if len(cfgs) == 1:
                cmd_run(cfgs[0], out)
            else:
                jobs = [(c, str(out / f"seed_{c['seed']}")) for c in cfgs]
                with ProcessPoolExecutor(max_workers=max(1, args.jobs)) as pool:
                    list(pool.map(_run_one, jobs))
        elif args.command == "eval":
            cmd_eval(args.checkpoint, args.data, Path(args.out), args.split)
        else:
            cmd_inspect(args.run_dir, args.iteration)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, encoder.ShapeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
