"""
Stratified splitting and the oversampling arithmetic
====================================================

A graded manifest is split per class with exact rounding, a validation
slice is carved from the training side, and the balance plan says how
many augmented copies each class needs to reach a common target.
"""

from gradebal.augment import PipelineConfig, generate_balanced
from gradebal.dataset import (
    ManifestEntry,
    balance_plan,
    binarize_label,
    carve_validation,
    stratified_split,
)

# Class sizes typical of a graded retinopathy manifest: a large healthy
# class and much rarer severe grades.  The imbalance is the whole problem.
class_sizes = {0: 1805, 1: 370, 2: 999, 3: 193, 4: 295}
entries = [ManifestEntry(f"img_{cls}_{i:05d}", cls)
           for cls, n in class_sizes.items() for i in range(n)]
print("manifest:", len(entries), "images,", class_sizes)


def counts(subset):
    table = {}
    for e in subset:
        table[e.grade] = table.get(e.grade, 0) + 1
    return dict(sorted(table.items()))


# 85/15 per class, exact rounding, then 10 percent of train to validation.
split = stratified_split(entries, train_frac=0.85, seed=20)
split = carve_validation(split, val_frac=0.10, seed=20)
print("train:", counts(split.train))
print("val:  ", counts(split.validation))
print("test: ", counts(split.test))

# The same counts come out for every seed; only the membership changes.
for seed in (1, 2, 3):
    other = stratified_split(entries, 0.85, seed)
    assert counts(other.test) == counts(split.test)
print("test counts identical across seeds 1, 2, 3")

# The binary variant collapses grades 1..4 into one positive class.
binary = [ManifestEntry(e.image_id, binarize_label(e.grade)) for e in entries]
bsplit = stratified_split(binary, 0.85, seed=20)
print("binary train:", counts(bsplit.train), " test:", counts(bsplit.test))

# How many augmented copies each class needs to reach 20,000 members.
# Balancing applies to the training side before the validation carve.
train_counts = {cls: counts(split.train).get(cls, 0) + counts(split.validation).get(cls, 0)
                for cls in class_sizes}
plan = balance_plan(train_counts, 20000)
print("balance plan to 20,000:", plan)

# A dry run enumerates the full work list without touching any images:
# sink=None returns one provenance record per would-be file.
sources = {cls: [(f"img_{cls}_{i:05d}", None) for i in range(n)]
           for cls, n in train_counts.items()}
records = generate_balanced(sources, 20000, PipelineConfig(), global_seed=20,
                            sink=None)
print("dry run plans", len(records), "augmented images",
      "(sum of the plan:", sum(plan.values()), ")")

# Round-robin assignment: the replica index counts full passes over the
# class, so the first few records of the rarest class look like this.
rare = [r for r in records if r.output_path.startswith("3/")]
for record in rare[:3]:
    print(" ", record.output_path, f"seed={record.seed:#x}")
print("highest replica index for class 3:",
      max(r.replica_index for r in rare))
