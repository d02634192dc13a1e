#!/usr/bin/env python3
"""Reconstructing confusion matrices from published percentage cells.

Evaluation tables often print a 2x2 confusion matrix as rounded
percentages plus a total.  Nearest-integer rounding of p * total / 100
recovers the unique underlying counts, and a consistency re-check
rejects cells that cannot reproduce the printed percentages.  All
derived metrics then follow from the counts.
"""

from aekit.metrics import f_beta, from_percentages, metric_set, render_confusion_table

# (description, total, (tp%, fp%, fn%, tn%)) as printed in evaluation tables.
TABLES = [
    ("combined pipeline vs manual study", 126, (7.14, 8.73, 19.05, 65.08)),
    ("rating stage vs manual study", 130, (40.77, 54.62, 2.31, 2.31)),
    ("preparation stage vs manual study", 311, (7.40, 14.79, 18.97, 58.84)),
]

for description, total, cells in TABLES:
    cm = from_percentages(total, cells)
    ms = metric_set(cm)
    print(f"=== {description} ===")
    print(f"reconstructed counts: tp={cm.tp} fp={cm.fp} fn={cm.fn} tn={cm.tn}")
    print(render_confusion_table(cm, system_label="System"))
    print(f"F1: {ms.f1:.4f}   F2: {ms.f2:.4f}")
    print()

print("F-beta behavior:")
print(f"  precision == recall == 0.8 -> f_beta = {f_beta(0.8, 0.8, 2.0)} for any beta")
print(f"  zero recall annihilates:      f1 = {f_beta(1.0, 0.0, 1.0)}")
print(f"  both zero is undefined:       f2 = {f_beta(0.0, 0.0, 2.0)}")
