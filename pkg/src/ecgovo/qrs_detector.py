"""Pan-Tompkins QRS detection at 200 Hz.

The filter cascade (band pass, five-point derivative, squaring, 150 ms moving
window integration) feeds an adaptive single-threshold search on the
integrated signal with T-wave rejection and search-back.  Every accepted
fiducial is mapped back to the raw-signal maximum near the group-delay
compensated position.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .signal_io import CANONICAL_FS, EcgRecord

MWI_WIDTH = 30  # 150 ms
REFRACTORY = 40  # 200 ms
T_WAVE_WINDOW = 72  # 360 ms
SEARCH_BACK_FACTOR = 1.66
LOCALIZE_HALF_WIDTH = 40
LEARNING_SAMPLES = 400  # 2 s
WARM_UP = 32
MIN_DURATION_S = 5.0

# group delay in samples contributed by each stage
STAGE_DELAYS = {
    "bandpassed": 5 + 16,
    "derivative": 2,
    "squared": 0,
    "integrated": MWI_WIDTH // 2,
}


class DetectorInputError(ValueError):
    pass


@dataclass(frozen=True)
class StageTrace:
    raw: np.ndarray
    bandpassed: np.ndarray
    derivative: np.ndarray
    squared: np.ndarray
    integrated: np.ndarray
    delays: dict

    def __len__(self):
        return self.raw.shape[0]

    def total_delay(self) -> int:
        return sum(self.delays.values())


@dataclass(frozen=True)
class RPeakSeries:
    times: np.ndarray
    indices: np.ndarray
    threshold_log: np.ndarray  # rows of (SPKI, NPKI, THRESHOLD_I1) after each accepted peak
    fs: float = CANONICAL_FS

    def __len__(self):
        return self.indices.shape[0]


def _require_200(fs):
    if fs != CANONICAL_FS:
        raise DetectorInputError(f"detector runs at {CANONICAL_FS:g} Hz, got {fs:g} Hz; resample first")


def _as_array(x):
    return np.ascontiguousarray(np.asarray(x, dtype=np.float64).ravel())


def low_pass(x):
    """y(n) = 2y(n-1) - y(n-2) + x(n) - 2x(n-6) + x(n-12), zero initial state."""
    return kernels.low_pass(_as_array(x))


def high_pass(x):
    """y(n) = 32x(n-16) - s(n) with running sum s(n) = s(n-1) + x(n) - x(n-32)."""
    return kernels.high_pass(_as_array(x))


def band_pass(x, fs: float = CANONICAL_FS):
    _require_200(fs)
    return high_pass(low_pass(x))


def derivative(x):
    x = _as_array(x)
    if x.shape[0] < 5:
        raise DetectorInputError("derivative needs at least 5 samples")
    return kernels.derivative(x)


def square(x):
    x = _as_array(x)
    return x * x


def moving_window_integrate(x, width: int = MWI_WIDTH):
    if width <= 0:
        raise DetectorInputError("integration width must be positive")
    return kernels.moving_window_integrate(_as_array(x), int(width))


def stage_trace(samples) -> StageTrace:
    raw = _as_array(samples)
    bp = band_pass(raw)
    d = derivative(bp)
    sq = square(d)
    mwi = moving_window_integrate(sq)
    return StageTrace(raw, bp, d, sq, mwi, dict(STAGE_DELAYS))


class _Thresholds:
    def __init__(self, spki, npki):
        self.spki = spki
        self.npki = npki

    @property
    def i1(self):
        return self.npki + 0.25 * (self.spki - self.npki)

    @property
    def i2(self):
        return 0.5 * self.i1

    def signal(self, peak, weight=0.125):
        self.spki = weight * peak + (1.0 - weight) * self.spki

    def noise(self, peak):
        self.npki = 0.125 * peak + 0.875 * self.npki

    def snapshot(self):
        return (self.spki, self.npki, self.i1)


def _search_integrated(mwi, deriv):
    """Adaptive threshold pass over integrated-signal local maxima.

    Returns accepted fiducial indices and the threshold snapshots.
    """
    n = mwi.shape[0]
    learn = mwi[WARM_UP:min(n, LEARNING_SAMPLES)]
    if learn.size == 0 or not np.any(mwi > 0):
        return [], []
    th = _Thresholds(0.6 * learn.max(), 0.3 * learn.mean())

    cand = kernels.local_maxima(mwi)
    accepted = []  # fiducial indices
    slopes = []
    log = []
    noise_cands = []  # (index, value) seen since the last accepted peak
    rr_recent = []

    def slope_at(i):
        return np.abs(deriv[max(0, i - MWI_WIDTH + 1): i + 1]).max()

    def accept(i, weight=0.125):
        th.signal(mwi[i], weight)
        if accepted:
            rr_recent.append(i - accepted[-1])
            del rr_recent[:-8]
        accepted.append(i)
        slopes.append(slope_at(i))
        log.append(th.snapshot())
        noise_cands.clear()

    for i in cand:
        i = int(i)
        v = mwi[i]
        if accepted and i - accepted[-1] < REFRACTORY:
            if v > mwi[accepted[-1]]:
                # larger candidate inside the refractory window replaces the last beat
                accepted[-1] = i
                slopes[-1] = slope_at(i)
            continue

        # search-back for a missed beat before handling the current candidate
        if rr_recent and accepted:
            rr_avg = sum(rr_recent) / len(rr_recent)
            if i - accepted[-1] > SEARCH_BACK_FACTOR * rr_avg:
                pool = [(j, u) for j, u in noise_cands
                        if j - accepted[-1] >= REFRACTORY and i - j >= REFRACTORY and u > th.i2]
                if pool:
                    j, u = max(pool, key=lambda p: (p[1], -p[0]))
                    accept(j, weight=0.25)

        if v > th.i1:
            if accepted and i - accepted[-1] < T_WAVE_WINDOW and slope_at(i) < 0.5 * slopes[-1]:
                th.noise(v)
                noise_cands.append((i, v))
                continue
            accept(i)
        else:
            th.noise(v)
            noise_cands.append((i, v))
    return accepted, log


def _localize(raw, fiducials, mwi, delay, n_valid):
    """Map fiducials to raw maxima and enforce the refractory spacing."""
    peaks = []
    amps = []
    for f in fiducials:
        centre = f - delay
        lo = max(0, centre - LOCALIZE_HALF_WIDTH)
        hi = min(n_valid, centre + LOCALIZE_HALF_WIDTH + 1)
        if hi <= lo:
            continue
        r = lo + int(np.argmax(raw[lo:hi]))
        if peaks and r - peaks[-1] < REFRACTORY:
            if mwi[f] > amps[-1]:
                peaks[-1] = r
                amps[-1] = mwi[f]
            continue
        peaks.append(r)
        amps.append(mwi[f])
    return peaks


def detect_r_peaks(record: EcgRecord):
    """Detect R peaks in a 200 Hz record.

    Returns ``(RPeakSeries, StageTrace)``.  The trace covers exactly the
    record's samples; detection internally runs on the record extended by a
    constant tail so that beats near the end still produce an integrated
    maximum.
    """
    _require_200(record.fs)
    if record.duration < MIN_DURATION_S:
        raise DetectorInputError(f"record is {record.duration:.2f} s; need at least {MIN_DURATION_S:g} s")
    raw = record.samples
    n = raw.shape[0]
    pad = sum(STAGE_DELAYS.values()) + MWI_WIDTH + LOCALIZE_HALF_WIDTH
    # constant history before the first sample avoids a start-up step transient
    ext = np.concatenate([raw, np.full(pad, raw[-1])]) - raw[0]
    full = stage_trace(ext)

    fiducials, log = _search_integrated(full.integrated, full.derivative)
    delay = sum(STAGE_DELAYS.values())
    kept = _localize(ext, fiducials, full.integrated, delay, n)
    idx = np.asarray(kept, dtype=np.int64)
    log_arr = np.asarray(log, dtype=np.float64).reshape(-1, 3)
    peaks = RPeakSeries(idx / record.fs, idx, log_arr, record.fs)
    trace = StageTrace(
        raw.copy(), full.bandpassed[:n], full.derivative[:n], full.squared[:n], full.integrated[:n],
        dict(STAGE_DELAYS),
    )
    return peaks, trace


def match_beats(detected, truth, tolerance: float = 0.04):
    """Greedy one-to-one matching of beat times within *tolerance* seconds.

    Returns ``(true_positives, false_positives, false_negatives)``.
    """
    detected = np.sort(np.asarray(detected, dtype=np.float64))
    truth = np.sort(np.asarray(truth, dtype=np.float64))
    i = j = tp = 0
    while i < detected.size and j < truth.size:
        d = detected[i] - truth[j]
        if abs(d) <= tolerance + 1e-12:
            tp += 1
            i += 1
            j += 1
        elif d < 0:
            i += 1
        else:
            j += 1
    return tp, detected.size - tp, truth.size - tp


def write_trace_csv(trace: StageTrace, peaks: RPeakSeries, path) -> None:
    is_peak = np.zeros(len(trace), dtype=np.int64)
    is_peak[peaks.indices] = 1
    cols = [trace.raw.tolist(), trace.bandpassed.tolist(), trace.derivative.tolist(),
            trace.squared.tolist(), trace.integrated.tolist(), is_peak.tolist()]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("n,raw,bandpassed,derivative,squared,integrated,is_peak\n")
        for k, row in enumerate(zip(*cols)):
            fh.write(f"{k},{row[0]!r},{row[1]!r},{row[2]!r},{row[3]!r},{row[4]!r},{row[5]}\n")
