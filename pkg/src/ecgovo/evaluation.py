"""Accuracy reports and the two table layouts (pairwise grid, normal-vs-proposed)."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .hrv_features import DEFAULT_CLASS_NAMES, FeatureMatrix
from .neural import KINDS, Mlp, predict_classes
from .ovo_classifier import N_CLASSES, PAIRS, PairNetBank, classify_batch

KIND_HEADERS = {
    "cascade": "Cascade Net.",
    "feedforward": "Feed forward Net.",
    "fit": "Fit Net.",
    "pattern": "Pattern Net.",
}
COMPARISON_HEADERS = {
    "cascade": "Cascade Net",
    "feedforward": "Feed Forward Net",
    "fit": "Fit Net",
    "pattern": "Pattern Net",
}

# (first shown, second shown) per pairwise row block, by class index; Normal excluded
TABLE_IV_PAIRS = ((0, 3), (3, 1), (3, 2), (1, 2), (0, 1), (0, 2))
TABLE_III_ORDER = (0, 4, 3, 1, 2)


@dataclass
class EvalReport:
    per_class_accuracy: list
    overall_accuracy: float | None
    confusion: list
    counts: list
    tie_count: int = 0
    class_names: list = field(default_factory=lambda: list(DEFAULT_CLASS_NAMES))
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True) + "\n"


def confusion_matrix(true, pred, k: int = N_CLASSES) -> np.ndarray:
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (np.asarray(true, dtype=np.int64), np.asarray(pred, dtype=np.int64)), 1)
    return cm


def make_report(true, pred, class_names=DEFAULT_CLASS_NAMES, tie_count: int = 0,
                config: dict | None = None) -> EvalReport:
    true = np.asarray(true, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    cm = confusion_matrix(true, pred, len(class_names))
    counts = cm.sum(axis=1)
    per_class = [100.0 * cm[c, c] / counts[c] if counts[c] else None for c in range(len(class_names))]
    total = int(counts.sum())
    overall = 100.0 * float(np.trace(cm)) / total if total else None
    if total:
        direct = 100.0 * float(np.count_nonzero(true == pred)) / total
        assert abs(direct - overall) < 1e-9
    return EvalReport(per_class, overall, cm.tolist(), counts.tolist(), int(tie_count),
                      list(class_names), dict(config or {}))


def evaluate_multiclass(net: Mlp, test: FeatureMatrix, config: dict | None = None) -> EvalReport:
    pred = predict_classes(net, test.rows) if len(test) else np.empty(0, dtype=np.int64)
    return make_report(test.labels, pred, test.class_names, 0, config)


def evaluate_bank(bank: PairNetBank, test: FeatureMatrix, config: dict | None = None) -> EvalReport:
    decisions = classify_batch(bank, test.rows) if len(test) else []
    pred = [d.cls for d in decisions]
    ties = sum(d.tie_broken for d in decisions)
    return make_report(test.labels, pred, test.class_names, ties, config)


def format_accuracy(value) -> str:
    """Table cell text: ``-`` when undefined, ``<1`` below one percent, else up to 2 decimals."""
    if value is None:
        return "-"
    if value < 1.0:
        return "<1"
    text = f"{value:.2f}".rstrip("0").rstrip(".")
    return text


def pair_accuracy(net: Mlp, test: FeatureMatrix, cls: int):
    """Percent of *cls* test rows that the pair network assigns to *cls*."""
    rows = test.rows[test.labels == cls]
    if rows.shape[0] == 0:
        return None
    pred = predict_classes(net, rows)
    return 100.0 * float(np.count_nonzero(pred == cls)) / rows.shape[0]


def pairwise_grid(banks: dict, test: FeatureMatrix, include_normal: bool = False) -> dict:
    """``{(first, second, starred): {kind: accuracy}}`` for each table row."""
    grid = {}
    for first, second in table_iv_pairs(include_normal):
        r = PAIRS.index(tuple(sorted((first, second))))
        for starred in (first, second):
            grid[(first, second, starred)] = {
                kind: pair_accuracy(bank.nets[r], test, starred) for kind, bank in banks.items()
            }
    return grid


def table_iv_pairs(include_normal: bool = False):
    rows = list(TABLE_IV_PAIRS)
    if include_normal:
        rows += [(c, 4) for c in range(4)]
    return rows


def render_pairwise_table(grid: dict, class_names=DEFAULT_CLASS_NAMES, kinds=KINDS,
                          include_normal: bool = False) -> str:
    lines = ["\t".join(["Signal Classes"] + [KIND_HEADERS[k] for k in kinds])]
    for first, second in table_iv_pairs(include_normal):
        for starred in (first, second):
            a = class_names[first] + ("*" if starred == first else "")
            b = class_names[second] + ("*" if starred == second else "")
            cells = grid.get((first, second, starred), {})
            lines.append("\t".join([f"{a}, {b}"] + [format_accuracy(cells.get(k)) for k in kinds]))
    return "\n".join(lines) + "\n"


def comparison_grid(baselines: dict, banks: dict, test: FeatureMatrix) -> dict:
    """``{kind: {"normal": [per-class %], "proposed": [per-class %]}}``."""
    out = {}
    for kind in KINDS:
        if kind not in baselines and kind not in banks:
            continue
        entry = {}
        if kind in baselines:
            entry["normal"] = evaluate_multiclass(baselines[kind], test).per_class_accuracy
        if kind in banks:
            entry["proposed"] = evaluate_bank(banks[kind], test).per_class_accuracy
        out[kind] = entry
    return out


def render_comparison_table(grid: dict, class_names=DEFAULT_CLASS_NAMES, kinds=KINDS) -> str:
    head1 = ["Signal Classes"]
    head2 = [""]
    for k in kinds:
        head1 += [COMPARISON_HEADERS[k], ""]
        head2 += ["Normal", "Proposed"]
    lines = ["\t".join(head1), "\t".join(head2)]
    for c in TABLE_III_ORDER:
        cells = [class_names[c]]
        for k in kinds:
            entry = grid.get(k, {})
            for sub in ("normal", "proposed"):
                vals = entry.get(sub)
                cells.append(format_accuracy(vals[c] if vals is not None else None))
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"
