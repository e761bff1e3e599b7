"""Metrics files: per-round CSV and the run summary JSON.

Formatting is pinned so a rerun with the same seeds produces byte-identical
files: fractions print with 6 decimal places, counts as plain ints, JSON
with sorted keys, and both files end with a single trailing newline.
"""

import json
import os

CSV_HEADER = "round,acc_composed,acc_avg_global,metadata_count,metadata_bytes,selection_fraction"


def emit_metrics(records, out_dir, config_dict=None):
    """Write rounds.csv and summary.json under out_dir. Returns their paths."""
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "rounds.csv")
    lines = [CSV_HEADER]
    for r in records:
        lines.append(
            f"{r.round},{r.acc_composed:.6f},{r.acc_avg_global:.6f},"
            f"{r.metadata_count},{r.metadata_bytes},{r.selection_fraction:.6f}"
        )
    with open(csv_path, "w", newline="") as f:
        f.write("\n".join(lines) + "\n")

    summary = {
        "rounds": len(records),
        "final_acc_composed": records[-1].acc_composed if records else None,
        "best_acc_composed": max(r.acc_composed for r in records) if records else None,
        "final_acc_avg_global": records[-1].acc_avg_global if records else None,
        "best_acc_avg_global": max(r.acc_avg_global for r in records) if records else None,
        "total_metadata_bytes": int(sum(r.metadata_bytes for r in records)),
        "config": config_dict,
    }
    json_path = os.path.join(out_dir, "summary.json")
    with open(json_path, "w", newline="") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    return csv_path, json_path
