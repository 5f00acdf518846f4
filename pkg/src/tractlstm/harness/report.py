"""Serializing evaluation reports: JSON records, plain-text report, loss-history
CSV and the protocol x brain summary table."""

from __future__ import annotations

import csv
import io
import json

from .protocols import EvalReport

HISTORY_FIELDS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc")
SUMMARY_FIELDS = ("protocol", "brain", "train_brain", "macro_accuracy", "micro_accuracy",
                  "macro_recall_white", "hierarchical_accuracy", "n_test")
PROTOCOL_TITLES = {
    "intra": "Intra: trained and tested on the same brain",
    "inter": "Inter: trained on one brain, tested on the others",
    "merged": "Merged: trained and tested on pooled brains",
}


def reports_to_json(reports: list[EvalReport]) -> str:
    return json.dumps({"reports": [r.to_dict() for r in reports]}, indent=1, sort_keys=True) + "\n"


def reports_from_json(text: str) -> list[EvalReport]:
    return [EvalReport.from_dict(d) for d in json.loads(text)["reports"]]


def format_report(reports: list[EvalReport]) -> str:
    lines = []
    for r in reports:
        lines.append(f"[{r.protocol} / {r.level} / test={r.brain} / train={r.train_brain}]")
        lines.append(f"  n_test       {r.n_test}")
        lines.append(f"  accuracy     {r.accuracy:.6f}")
        if r.recall_white is not None:
            lines.append(f"  recall_white {r.recall_white:.6f}")
        lines.append("  confusion (rows = true, cols = predicted)")
        for row in r.confusion:
            lines.append("    " + " ".join(f"{int(v):6d}" for v in row))
        lines.append("")
    return "\n".join(lines)


def history_csv(history: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=HISTORY_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in history:
        w.writerow({k: (f"{row[k]:.10g}" if isinstance(row[k], float) else row[k]) for k in HISTORY_FIELDS})
    return buf.getvalue()


def summary_rows(reports: list[EvalReport]) -> list[dict]:
    """One row per (protocol, test brain) with the metrics side by side."""
    rows: dict[tuple[str, str], dict] = {}
    for r in reports:
        row = rows.setdefault((r.protocol, r.brain), dict.fromkeys(SUMMARY_FIELDS))
        row.update(protocol=r.protocol, brain=r.brain, train_brain=r.train_brain)
        if r.level == "macro":
            row["macro_accuracy"] = r.accuracy
            row["macro_recall_white"] = r.recall_white
            row["n_test"] = r.n_test
        elif r.level == "micro":
            row["micro_accuracy"] = r.accuracy
        else:
            row["hierarchical_accuracy"] = r.accuracy
    order = {p: k for k, p in enumerate(PROTOCOL_TITLES)}
    return [rows[k] for k in sorted(rows, key=lambda k: (order.get(k[0], 99), k[1]))]


def summary_csv(reports: list[EvalReport]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SUMMARY_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in summary_rows(reports):
        w.writerow({k: ("" if v is None else (f"{v:.6f}" if isinstance(v, float) else v)) for k, v in row.items()})
    return buf.getvalue()


def summary_table(reports: list[EvalReport]) -> str:
    """Percentages laid out like the usual accuracy/recall results table."""

    def pct(v):
        return "---" if v is None else f"{100 * v:.2f}"

    header = f"{'Brain':<10}{'Macro acc':>12}{'Micro acc':>12}{'Macro recall':>14}{'Hier. acc':>12}"
    rule = "-" * len(header)
    lines = [rule, header, rule]
    current = None
    for row in summary_rows(reports):
        if row["protocol"] != current:
            current = row["protocol"]
            lines.append(PROTOCOL_TITLES.get(current, current))
            lines.append(rule)
        lines.append(f"{row['brain']:<10}{pct(row['macro_accuracy']):>12}{pct(row['micro_accuracy']):>12}"
                     f"{pct(row['macro_recall_white']):>14}{pct(row['hierarchical_accuracy']):>12}")
    lines.append(rule)
    return "\n".join(lines) + "\n"
