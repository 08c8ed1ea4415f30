"""Pairwise network bank with condition-table flag voting, plus the 5-class baseline.

Ten two-output networks are trained, one per class pair in the order
AB, AC, AD, AE, BC, BD, BE, CD, CE, DE.  Each network's winner (1 = first
class of its pair, 2 = second) is routed through the condition table into
per-class flag counts FA..FE; the class with the largest flag wins.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np

from .hrv_features import CLASS_LETTERS, DEFAULT_CLASS_NAMES, FEATURE_VERSION, FeatureMatrix
from .neural import (
    KINDS,
    ModelFormatError,
    Mlp,
    NetworkError,
    ScgParams,
    Topology,
    dumps_model,
    fit_network,
    load_model,
    predict_scores,
)

N_CLASSES = 5
PAIRS = tuple(combinations(range(N_CLASSES), 2))
BANK_FORMAT = "ecgovo-bank"
BANK_FORMAT_VERSION = 1


def enumerate_pairs():
    return PAIRS


def _build_condition_table():
    table = np.zeros((len(PAIRS), N_CLASSES), dtype=np.int64)
    for r, (a, b) in enumerate(PAIRS):
        table[r, a] = 1
        table[r, b] = 2
    # one 1, one 2, three 0s per row; every class in exactly four rows
    assert all(sorted(row) == [0, 0, 0, 1, 2] for row in table.tolist())
    assert ((table > 0).sum(axis=0) == N_CLASSES - 1).all()
    table.setflags(write=False)
    return table


CONDITION_TABLE = _build_condition_table()


def condition_lookup(net: int, cls) -> int:
    """Condition-table entry for network *net* (1..10) and class *cls* (letter or index)."""
    if not 1 <= net <= len(PAIRS):
        raise IndexError(f"network number must be 1..{len(PAIRS)}")
    c = CLASS_LETTERS.index(cls.upper()) if isinstance(cls, str) else int(cls)
    if not 0 <= c < N_CLASSES:
        raise IndexError("class must be A..E or 0..4")
    return int(CONDITION_TABLE[net - 1, c])


def pair_seed(master_seed: int, pair_index: int, kind: str = "") -> int:
    """Deterministic per-network seed, independent of training order."""
    ss = np.random.SeedSequence([int(master_seed), pair_index, KINDS.index(kind) if kind else 99])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class FlagVector:
    flags: tuple  # FA..FE
    scores: tuple  # per-class sum of winning-output scores

    @property
    def total(self):
        return sum(self.flags)


@dataclass(frozen=True)
class Decision:
    cls: int
    flags: FlagVector
    tie_broken: bool


def compute_flags(outcomes, scores=None) -> FlagVector:
    """Route ten winners (1 or 2, table order) through the condition table.

    *scores*, when given, is the winning output's score for each network and
    feeds the per-class tie-break sums.
    """
    outcomes = [int(o) for o in outcomes]
    if len(outcomes) != len(PAIRS) or any(o not in (1, 2) for o in outcomes):
        raise ValueError(f"expected {len(PAIRS)} outcomes each 1 or 2, got {outcomes}")
    if scores is None:
        scores = [0.0] * len(PAIRS)
    elif len(scores) != len(PAIRS):
        raise ValueError("one score per network required")
    flags = [0] * N_CLASSES
    sums = [0.0] * N_CLASSES
    for r, o in enumerate(outcomes):
        winner = int(np.flatnonzero(CONDITION_TABLE[r] == o)[0])
        flags[winner] += 1
        sums[winner] += float(scores[r])
    return FlagVector(tuple(flags), tuple(sums))


def decide(fv: FlagVector) -> Decision:
    """Argmax of flags; ties by larger score sum, then by lower class index."""
    top = max(fv.flags)
    tied = [c for c in range(N_CLASSES) if fv.flags[c] == top]
    best = min(tied, key=lambda c: (-fv.scores[c], c))
    return Decision(best, fv, len(tied) > 1)


@dataclass(frozen=True)
class PairNetBank:
    nets: tuple  # ten Mlps in PAIRS order
    kind: str
    master_seed: int
    class_names: tuple = DEFAULT_CLASS_NAMES
    feature_version: str = FEATURE_VERSION

    def __post_init__(self):
        if len(self.nets) != len(PAIRS):
            raise NetworkError(f"bank needs {len(PAIRS)} networks, got {len(self.nets)}")
        for net, pair in zip(self.nets, PAIRS):
            if net.classes != pair:
                raise NetworkError(f"network for pair {pair} serves classes {net.classes}")

    def net(self, number: int) -> Mlp:
        return self.nets[number - 1]


def train_bank(train: FeatureMatrix, kind: str = "feedforward", params: ScgParams = ScgParams(),
               master_seed: int = 0, hidden=(7,), jobs: int = 1, histories: list | None = None) -> PairNetBank:
    """Train the ten pair networks, each on the rows of its two classes only.

    Pass a list as *histories* to receive each network's ``TrainingHistory``.
    """
    counts = train.class_counts()
    missing = [train.class_names[c] for c in range(N_CLASSES) if counts[c] == 0]
    if missing:
        raise NetworkError(f"training data has no rows for: {', '.join(missing)}")
    topo = Topology(kind, train.rows.shape[1], tuple(hidden), 2)

    def one(r):
        a, b = PAIRS[r]
        sub = train.subset((train.labels == a) | (train.labels == b))
        return fit_network(topo, sub, pair_seed(master_seed, r, kind), params, classes=(a, b))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, range(len(PAIRS))))
    else:
        results = [one(r) for r in range(len(PAIRS))]
    nets = tuple(net for net, _ in results)
    if histories is not None:
        histories.extend(h for _, h in results)
    return PairNetBank(nets, kind, int(master_seed), train.class_names)


def bank_outcomes(bank: PairNetBank, raw_rows):
    """Winners (n, 10) in {1, 2} and winning scores (n, 10) for every row."""
    rows = np.atleast_2d(np.asarray(raw_rows, dtype=np.float64))
    winners = np.empty((rows.shape[0], len(PAIRS)), dtype=np.int64)
    wscores = np.empty((rows.shape[0], len(PAIRS)))
    for r, net in enumerate(bank.nets):
        s = predict_scores(net, rows)
        k = np.argmax(s, axis=1)
        winners[:, r] = k + 1
        wscores[:, r] = s[np.arange(rows.shape[0]), k]
    return winners, wscores


def classify(bank: PairNetBank, raw_features) -> Decision:
    winners, wscores = bank_outcomes(bank, raw_features)
    return decide(compute_flags(winners[0], wscores[0]))


def classify_batch(bank: PairNetBank, raw_rows):
    winners, wscores = bank_outcomes(bank, raw_rows)
    return [decide(compute_flags(w, s)) for w, s in zip(winners, wscores)]


def train_multiclass_baseline(train: FeatureMatrix, kind: str = "feedforward",
                              params: ScgParams = ScgParams(), seed: int = 0, hidden=(7,),
                              histories: list | None = None) -> Mlp:
    counts = train.class_counts()
    if (counts == 0).any():
        raise NetworkError("baseline training needs rows of all five classes")
    topo = Topology(kind, train.rows.shape[1], tuple(hidden), N_CLASSES)
    net, hist = fit_network(topo, train, pair_seed(seed, len(PAIRS), kind), params,
                            classes=tuple(range(N_CLASSES)))
    if histories is not None:
        histories.append(hist)
    return net


# ---------------------------------------------------------------- bank files


def save_bank(bank: PairNetBank, directory) -> Path:
    """Write ten model files plus ``manifest.json``; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for r, net in enumerate(bank.nets, start=1):
        name = f"net{r:02d}.json"
        (directory / name).write_text(dumps_model(net), encoding="utf-8")
        files.append(name)
    manifest = {
        "format": BANK_FORMAT,
        "format_version": BANK_FORMAT_VERSION,
        "feature_version": bank.feature_version,
        "kind": bank.kind,
        "master_seed": bank.master_seed,
        "classes": {CLASS_LETTERS[i]: name for i, name in enumerate(bank.class_names)},
        "pairs": ["".join(CLASS_LETTERS[c] for c in p) for p in PAIRS],
        "models": files,
    }
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_bank(path, expected_feature_version: str = FEATURE_VERSION) -> PairNetBank:
    path = Path(path)
    manifest_path = path / "manifest.json" if path.is_dir() else path
    try:
        doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{manifest_path}: {exc}") from None
    if doc.get("format") != BANK_FORMAT or doc.get("format_version") != BANK_FORMAT_VERSION:
        raise ModelFormatError(f"{manifest_path}: not a {BANK_FORMAT} v{BANK_FORMAT_VERSION} manifest")
    if doc.get("feature_version") != expected_feature_version:
        raise ModelFormatError(
            f"{manifest_path}: feature version {doc.get('feature_version')!r} "
            f"does not match {expected_feature_version!r}"
        )
    names = tuple(doc["classes"][CLASS_LETTERS[i]] for i in range(N_CLASSES))
    nets = []
    for name in doc["models"]:
        net = load_model(manifest_path.parent / name, expected_feature_version)
        if net.feature_version != doc["feature_version"]:
            raise ModelFormatError(f"{name}: feature version disagrees with the manifest")
        nets.append(net)
    return PairNetBank(tuple(nets), doc["kind"], int(doc["master_seed"]), names, doc["feature_version"])
