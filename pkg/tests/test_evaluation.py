import json
from pathlib import Path

import numpy as np
import pytest

from ecgovo.evaluation import (
    KIND_HEADERS,
    TABLE_III_ORDER,
    comparison_grid,
    confusion_matrix,
    evaluate_bank,
    format_accuracy,
    make_report,
    pair_accuracy,
    pairwise_grid,
    render_comparison_table,
    render_pairwise_table,
)
from ecgovo.neural import KINDS, ScgParams
from ecgovo.ovo_classifier import PAIRS, train_bank, train_multiclass_baseline

FIXTURES = Path(__file__).parent / "fixtures"


def load_grid():
    doc = json.loads((FIXTURES / "table_iv_grid.json").read_text())
    grid = {}
    for first, second, starred, *cells in doc["rows"]:
        grid[(first, second, starred)] = dict(zip(doc["kinds"], cells))
    return grid


@pytest.mark.parametrize("value,text", [
    (None, "-"), (0.0, "<1"), (0.99, "<1"), (1.0, "1"), (100.0, "100"), (62.5, "62.5"),
    (66.66666666666667, "66.67"), (93.61702127659575, "93.62"), (45.833333333333336, "45.83"),
])
def test_format_accuracy(value, text):
    assert format_accuracy(value) == text


def test_golden_table_iv():
    text = render_pairwise_table(load_grid())
    assert text == (FIXTURES / "table_iv_golden.txt").read_text()
    lines = text.splitlines()
    assert lines[0].split("\t")[1:] == [KIND_HEADERS[k] for k in KINDS]
    assert "Long Term AF*, Supraventricular Arrhythmia\t100\t100\t100\t100" in lines
    assert lines[11].split("\t")[1] == "<1"
    assert lines[11].split("\t")[3] == "<1"


def test_empty_grid_renders_dashes():
    lines = render_pairwise_table({}).splitlines()
    assert len(lines) == 13
    assert lines[1].endswith("\t-\t-\t-\t-")


def test_confusion_and_report():
    true = [0, 1, 2, 3, 4, 4]
    rep = make_report(true, true)
    assert rep.overall_accuracy == 100.0
    cm = np.array(rep.confusion)
    assert np.array_equal(cm, np.diag([1, 1, 1, 1, 2]))
    assert rep.counts == [1, 1, 1, 1, 2]

    rep = make_report([0, 0, 1, 1], [0, 1, 1, 1])
    assert rep.per_class_accuracy[:2] == [50.0, 100.0]
    assert rep.per_class_accuracy[2] is None
    assert rep.overall_accuracy == 75.0
    assert np.array_equal(np.array(rep.confusion).sum(axis=1), rep.counts)
    doc = json.loads(rep.to_json())
    assert doc["overall_accuracy"] == 75.0
    assert confusion_matrix([], []).sum() == 0


def test_trained_grids(blob_split):
    train, test = blob_split
    params = ScgParams(max_iter=100)
    banks = {k: train_bank(train, k, params, master_seed=1) for k in ("fit", "pattern")}
    grid = pairwise_grid(banks, test)
    assert len(grid) == 12
    for (first, second, starred), cells in grid.items():
        assert starred in (first, second)
        assert set(cells) == {"fit", "pattern"}
        assert all(v >= 95 for v in cells.values())
    assert len(pairwise_grid(banks, test, include_normal=True)) == 20

    net = banks["fit"].nets[PAIRS.index((0, 3))]
    assert pair_accuracy(net, test, 0) == grid[(0, 3, 0)]["fit"]
    assert pair_accuracy(net, test.subset(test.labels != 0), 0) is None

    baselines = {"fit": train_multiclass_baseline(train, "fit", params, seed=1)}
    comp = comparison_grid(baselines, banks, test)
    assert set(comp) == {"fit", "pattern"}
    assert "normal" not in comp["pattern"]
    text = render_comparison_table(comp, kinds=("fit", "pattern"))
    lines = text.splitlines()
    assert lines[0].split("\t") == ["Signal Classes", "Fit Net", "", "Pattern Net", ""]
    assert lines[1].split("\t") == ["", "Normal", "Proposed", "Normal", "Proposed"]
    assert [ln.split("\t")[0] for ln in lines[2:]] == [test.class_names[c] for c in TABLE_III_ORDER]
    assert all(len(ln.split("\t")) == 5 for ln in lines)
    assert lines[2].split("\t")[3] == "-"

    rep = evaluate_bank(banks["fit"], test)
    assert rep.overall_accuracy >= 95
    assert 0 <= rep.tie_count <= len(test)
