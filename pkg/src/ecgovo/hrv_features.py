"""RR intervals, the 15 time-domain HRV features, and labelled feature matrices.

Feature order (version ``hrv-td-v1``), all computed on cleaned RR in seconds
with population (n) denominators:

    f01 meanRR   f02 medianRR  f03 SDNN    f04 RMSSD   f05 SDSD
    f06 NN50     f07 pNN50     f08 minRR   f09 maxRR   f10 rangeRR
    f11 CV       f12 meanHR    f13 sdHR    f14 HRV triangular index
    f15 MAD (median absolute deviation, unscaled)
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

FEATURE_VERSION = "hrv-td-v1"
FEATURE_NAMES = (
    "meanRR", "medianRR", "SDNN", "RMSSD", "SDSD", "NN50", "pNN50", "minRR",
    "maxRR", "rangeRR", "CV", "meanHR", "sdHR", "HTI", "MAD",
)
N_FEATURES = len(FEATURE_NAMES)
CSV_COLUMNS = ("label",) + tuple(f"f{k:02d}" for k in range(1, N_FEATURES + 1))

RR_MIN = 0.2
RR_MAX = 4.0
BOUND_TOL = 1e-9
MIN_INTERVALS = 30
NN50_THRESHOLD = 0.05
HISTOGRAM_BINS_PER_S = 128  # 7.8125 ms bins

CLASS_LETTERS = ("A", "B", "C", "D", "E")
DEFAULT_CLASS_NAMES = (
    "Arrhythmia",
    "Sleep Apnea",
    "Supraventricular Arrhythmia",
    "Long Term AF",
    "Normal",
)


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class RrSeries:
    values: np.ndarray
    removed: int = 0

    def __len__(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class FeatureMatrix:
    rows: np.ndarray  # shape (n, 15)
    labels: np.ndarray  # shape (n,), ints in [0, 5)
    class_names: tuple = DEFAULT_CLASS_NAMES

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64).reshape(-1, N_FEATURES)
        labels = np.asarray(self.labels, dtype=np.int64).ravel()
        if rows.shape[0] != labels.shape[0]:
            raise FeatureError(f"{rows.shape[0]} rows but {labels.shape[0]} labels")
        if labels.size and (labels.min() < 0 or labels.max() >= len(self.class_names)):
            raise FeatureError("label out of range")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_names", tuple(self.class_names))

    def __len__(self):
        return self.rows.shape[0]

    def subset(self, mask_or_index) -> "FeatureMatrix":
        return FeatureMatrix(self.rows[mask_or_index], self.labels[mask_or_index], self.class_names)

    def class_counts(self):
        return np.bincount(self.labels, minlength=len(self.class_names))


@dataclass(frozen=True)
class Normalizer:
    mean: np.ndarray
    sd: np.ndarray

    def apply(self, rows):
        return (np.asarray(rows, dtype=np.float64) - self.mean) / self.sd


def rr_intervals(peak_times, rr_min: float = RR_MIN, rr_max: float = RR_MAX) -> RrSeries:
    """Successive differences of peak times, with out-of-range intervals removed.

    Accepts an ``RPeakSeries`` or a plain sequence of times in seconds.
    """
    times = getattr(peak_times, "times", peak_times)
    times = np.asarray(times, dtype=np.float64)
    if times.shape[0] < 2:
        raise FeatureError("need at least 2 peaks for an RR series")
    rr = np.diff(times)
    # closed bounds: the detector's refractory period allows exactly rr_min
    keep = (rr >= rr_min - BOUND_TOL) & (rr <= rr_max + BOUND_TOL)
    return RrSeries(rr[keep], int(rr.shape[0] - keep.sum()))


def raw_rr_intervals(peak_times) -> np.ndarray:
    times = np.asarray(getattr(peak_times, "times", peak_times), dtype=np.float64)
    if times.shape[0] < 2:
        raise FeatureError("need at least 2 peaks for an RR series")
    return np.diff(times)


def extract_features(rr) -> np.ndarray:
    rr = np.asarray(getattr(rr, "values", rr), dtype=np.float64)
    if rr.shape[0] < MIN_INTERVALS:
        raise FeatureError(f"{rr.shape[0]} RR intervals; need at least {MIN_INTERVALS}")
    diffs = np.diff(rr)
    mean_rr = rr.mean()
    median_rr = np.median(rr)
    sdnn = rr.std()
    rmssd = np.sqrt(np.mean(diffs ** 2))
    sdsd = diffs.std()
    nn50 = float(np.count_nonzero(np.abs(diffs) > NN50_THRESHOLD))
    pnn50 = 100.0 * nn50 / diffs.shape[0]
    lo, hi = rr.min(), rr.max()
    hr = 60.0 / rr
    bins = np.floor(rr * HISTOGRAM_BINS_PER_S).astype(np.int64)
    _, counts = np.unique(bins, return_counts=True)
    hti = rr.shape[0] / counts.max()
    mad = np.median(np.abs(rr - median_rr))
    return np.array([
        mean_rr, median_rr, sdnn, rmssd, sdsd, nn50, pnn50, lo, hi, hi - lo,
        sdnn / mean_rr, 60.0 / mean_rr, hr.std(), hti, mad,
    ])


def build_matrix(vectors, labels, class_names=DEFAULT_CLASS_NAMES) -> FeatureMatrix:
    vectors = list(vectors)
    labels = list(labels)
    if len(vectors) != len(labels):
        raise FeatureError(f"{len(vectors)} vectors but {len(labels)} labels")
    rows = np.asarray(vectors, dtype=np.float64).reshape(len(vectors), N_FEATURES)
    return FeatureMatrix(rows, np.asarray(labels, dtype=np.int64), class_names)


def fit_normalizer(train) -> Normalizer:
    rows = getattr(train, "rows", train)
    rows = np.asarray(rows, dtype=np.float64)
    if rows.shape[0] == 0:
        raise FeatureError("cannot fit a normalizer on zero rows")
    mean = rows.mean(axis=0)
    sd = rows.std(axis=0)
    constant = np.all(rows == rows[0], axis=0)
    # exact zeros for constant columns
    mean[constant] = rows[0, constant]
    sd[constant | (sd == 0)] = 1.0
    return Normalizer(mean, sd)


def apply_normalizer(nz: Normalizer, matrix: FeatureMatrix) -> FeatureMatrix:
    return FeatureMatrix(nz.apply(matrix.rows), matrix.labels, matrix.class_names)


# ---------------------------------------------------------------- CSV


def parse_label(text, class_names=DEFAULT_CLASS_NAMES) -> int:
    """Map a letter (A..E), an index (0..4) or a class name to its index."""
    t = str(text).strip()
    if t.upper() in CLASS_LETTERS[: len(class_names)] and len(t) == 1:
        return CLASS_LETTERS.index(t.upper())
    if t.isdigit() and int(t) < len(class_names):
        return int(t)
    lowered = [c.lower() for c in class_names]
    if t.lower() in lowered:
        return lowered.index(t.lower())
    raise FeatureError(f"unknown class label {text!r}")


def write_feature_csv(matrix: FeatureMatrix, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row, lab in zip(matrix.rows, matrix.labels):
            w.writerow([CLASS_LETTERS[lab]] + [repr(float(v)) for v in row])


def read_feature_csv(path, class_names=DEFAULT_CLASS_NAMES) -> FeatureMatrix:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_COLUMNS:
            raise FeatureError(f"{path}: expected header {','.join(CSV_COLUMNS)}")
        rows, labels = [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(CSV_COLUMNS):
                raise FeatureError(f"{path}:{lineno}: expected {len(CSV_COLUMNS)} fields")
            labels.append(parse_label(rec[0], class_names))
            try:
                rows.append([float(v) for v in rec[1:]])
            except ValueError:
                raise FeatureError(f"{path}:{lineno}: non-numeric feature") from None
    return build_matrix(rows, labels, class_names)


def synthetic_feature_matrix(n_rows: int = 500, seed: int = 0, spread: float = 4.0,
                             class_names=DEFAULT_CLASS_NAMES) -> FeatureMatrix:
    """Well-separated gaussian blobs in feature space, one per class.

    Columns get very different scales so that normalization matters.  Rows
    are assigned to classes round-robin, so counts differ by at most one.
    """
    rng = np.random.default_rng(seed)
    k = len(class_names)
    centres = rng.normal(0.0, spread, size=(k, N_FEATURES))
    scales = 10.0 ** rng.uniform(-2, 2, size=N_FEATURES)
    labels = np.arange(n_rows) % k
    rows = (centres[labels] + rng.normal(0.0, 1.0, size=(n_rows, N_FEATURES))) * scales
    return FeatureMatrix(rows, labels, class_names)
