"""Run the iterative three-stage pipeline and watch K and the losses move.

    python demos/04_iterative_pipeline.py
"""

from dataclasses import replace

from hiermerge.benchmark import BENCHMARK_CONFIG, BENCHMARK_SPEC, make_splits
from hiermerge.pipeline import run_pipeline

splits, hierarchy, _ = make_splits(BENCHMARK_SPEC, seed=0)
result = run_pipeline(splits, hierarchy, replace(BENCHMARK_CONFIG, seed=0))

print(f"{'iter':>4} {'K':>4} {'heads':>14} {'stage3 val':>10} {'silhouette':>10} {'next K':>6} {'lr':>8}")
for r in result.records:
    heads = "/".join(map(str, r.head_dims))
    print(f"{r.iteration:>4} {r.K:>4} {heads:>14} {r.val_loss:>10.4f} {r.silhouette:>10.3f} {r.next_K:>6} {r.base_lr:>8.2e}")
print(f"stop: {result.stop_reason}, returning the iteration-{result.best_iteration} model")

last = result.merge_maps[-1]
for m in range(last.K):
    members = last.members(m)
    if len(members) > 1:
        print(f"  merged {m} (type {last.parent_of_merged[m]}): items {members}")
