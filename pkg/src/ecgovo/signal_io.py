"""ECG record loading, synthesis, resampling and segmentation.

Supported on-disk forms:

* CSV: optional first line ``# fs=<float>``, then one sample (mV) per line.
* WFDB: ``.hea`` text header plus a format-212 ``.dat`` file (first signal only).
* Annotation sidecar: one beat time in seconds per line.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CANONICAL_FS = 200.0


class RecordFormatError(ValueError):
    """Raised when a record file cannot be parsed."""


@dataclass(frozen=True)
class EcgRecord:
    samples: np.ndarray
    fs: float
    name: str = "record"
    annotations: np.ndarray | None = None

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64).ravel()
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        if not self.fs > 0:
            raise ValueError(f"sampling rate must be positive, got {self.fs}")
        object.__setattr__(self, "fs", float(self.fs))
        if self.annotations is not None:
            ann = np.array(self.annotations, dtype=np.float64).ravel()
            if ann.size > 1 and np.any(np.diff(ann) <= 0):
                raise ValueError("annotation times must be strictly increasing")
            if ann.size and (ann[0] < 0 or ann[-1] > self.duration):
                raise ValueError("annotation times must lie within the record")
            ann.setflags(write=False)
            object.__setattr__(self, "annotations", ann)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.fs


@dataclass(frozen=True)
class SegmentSet:
    segments: list = field(default_factory=list)
    window_s: float = 300.0
    hop_s: float = 300.0
    parent: str = ""

    def __len__(self):
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)


# ---------------------------------------------------------------- CSV


def read_csv_record(path, fs_override: float | None = None) -> EcgRecord:
    """Read a one-column CSV record.

    The sampling rate comes from a ``# fs=<float>`` first line or from
    *fs_override*; the override wins when both are present.
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    header_fs = None
    values = []
    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text:
            continue
        if text.startswith("#"):
            m = re.match(r"#\s*fs\s*=\s*(\S+)", text)
            if m:
                try:
                    header_fs = float(m.group(1))
                except ValueError:
                    raise RecordFormatError(f"{path}:{lineno}: bad fs header {text!r}") from None
            continue
        try:
            values.append(float(text))
        except ValueError:
            raise RecordFormatError(f"{path}:{lineno}: non-numeric sample {text!r}") from None
    if not values:
        raise RecordFormatError(f"{path}: no samples")
    fs = fs_override if fs_override is not None else header_fs
    if fs is None:
        raise RecordFormatError(f"{path}: sampling rate missing (no '# fs=' header and no override)")
    return EcgRecord(np.asarray(values), fs, name=path.stem)


def write_csv_record(record: EcgRecord, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# fs={record.fs!r}\n")
        for v in record.samples:
            fh.write(f"{float(v)!r}\n")


def read_annotations(path) -> np.ndarray:
    """Read a beat-time sidecar (seconds, one per line)."""
    times = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            try:
                times.append(float(text))
            except ValueError:
                if lineno == 1:
                    continue  # column header
                raise RecordFormatError(f"{path}:{lineno}: non-numeric time {text!r}") from None
    return np.asarray(times, dtype=np.float64)


def write_annotations(times, path, header: str | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if header:
            fh.write(header + "\n")
        for t in times:
            fh.write(f"{float(t)!r}\n")


# ---------------------------------------------------------------- WFDB 212


def decode_212(data: bytes, count: int | None = None) -> np.ndarray:
    """Unpack format-212 bytes into signed 12-bit integers.

    Every 3 bytes carry two samples: the first is byte0 plus the low nibble
    of byte1 as its high bits, the second is byte2 plus the high nibble of
    byte1.  A trailing 2-byte group carries one sample.
    """
    buf = np.frombuffer(bytes(data), dtype=np.uint8).astype(np.int32)
    full = buf.shape[0] // 3
    groups = buf[: full * 3].reshape(full, 3)
    out = np.empty(full * 2 + (1 if buf.shape[0] - full * 3 >= 2 else 0), dtype=np.int32)
    out[0 : full * 2 : 2] = groups[:, 0] | ((groups[:, 1] & 0x0F) << 8)
    out[1 : full * 2 : 2] = groups[:, 2] | ((groups[:, 1] & 0xF0) << 4)
    if out.shape[0] > full * 2:
        b0, b1 = buf[full * 3], buf[full * 3 + 1]
        out[-1] = b0 | ((b1 & 0x0F) << 8)
    out[out > 2047] -= 4096
    if count is not None:
        if out.shape[0] < count:
            raise RecordFormatError(f"format-212 data truncated: {out.shape[0]} samples, expected {count}")
        out = out[:count]
    return out


def encode_212(values) -> bytes:
    """Pack signed 12-bit integers into format-212 bytes (inverse of :func:`decode_212`)."""
    v = np.asarray(values, dtype=np.int64)
    if v.size and (v.min() < -2048 or v.max() > 2047):
        raise ValueError("format-212 samples must lie in [-2048, 2047]")
    u = (v & 0xFFF).astype(np.int64)
    odd = u.shape[0] % 2
    pairs = u[: u.shape[0] - odd].reshape(-1, 2)
    out = np.empty((pairs.shape[0], 3), dtype=np.uint8)
    out[:, 0] = pairs[:, 0] & 0xFF
    out[:, 1] = ((pairs[:, 0] >> 8) & 0x0F) | (((pairs[:, 1] >> 8) & 0x0F) << 4)
    out[:, 2] = pairs[:, 1] & 0xFF
    tail = b""
    if odd:
        last = int(u[-1])
        tail = bytes([last & 0xFF, (last >> 8) & 0x0F])
    return out.tobytes() + tail


@dataclass
class _SignalSpec:
    filename: str
    fmt: str
    gain: float
    baseline: int


def _parse_header(header_path: Path):
    lines = []
    with open(header_path, "r", encoding="utf-8") as fh:
        for line in fh:
            text = line.strip()
            if text and not text.startswith("#"):
                lines.append(text)
    if not lines:
        raise RecordFormatError(f"{header_path}: empty header")
    rec = lines[0].split()
    if len(rec) < 2:
        raise RecordFormatError(f"{header_path}: malformed record line {lines[0]!r}")
    name = rec[0].split("/")[0]
    nsig = int(rec[1])
    fs = float(rec[2].split("/")[0].split("(")[0]) if len(rec) > 2 else 250.0
    nsamp = int(rec[3]) if len(rec) > 3 else None
    if nsig < 1 or len(lines) < 1 + nsig:
        raise RecordFormatError(f"{header_path}: expected {nsig} signal lines")
    specs = []
    for text in lines[1 : 1 + nsig]:
        parts = text.split()
        if len(parts) < 2:
            raise RecordFormatError(f"{header_path}: malformed signal line {text!r}")
        fmt = parts[1].split("x")[0].split(":")[0].split("+")[0]
        gain, baseline = 200.0, None
        if len(parts) > 2:
            m = re.match(r"^([-+0-9.eE]+)(?:\(([-+0-9]+)\))?(?:/\S*)?$", parts[2])
            if not m:
                raise RecordFormatError(f"{header_path}: bad gain field {parts[2]!r}")
            gain = float(m.group(1))
            if m.group(2) is not None:
                baseline = int(m.group(2))
        if baseline is None:
            baseline = int(parts[4]) if len(parts) > 4 else 0
        specs.append(_SignalSpec(parts[0], fmt, gain, baseline))
    return name, nsig, fs, nsamp, specs


def read_wfdb_record(header_path) -> EcgRecord:
    """Read the first signal of a WFDB record stored in format 212."""
    header_path = Path(header_path)
    name, nsig, fs, nsamp, specs = _parse_header(header_path)
    sig = specs[0]
    if sig.fmt != "212":
        raise RecordFormatError(f"{header_path}: unsupported storage format {sig.fmt!r} (only 212)")
    if sig.gain == 0:
        raise RecordFormatError(f"{header_path}: gain of 0 is not usable")
    # signals sharing the .dat file are interleaved frame by frame
    group = [s for s in specs if s.filename == sig.filename]
    width = len(group)
    if any(s.fmt != "212" for s in group):
        raise RecordFormatError(f"{header_path}: mixed formats in {sig.filename}")
    dat = (header_path.parent / sig.filename).read_bytes()
    total = nsamp * width if nsamp is not None else None
    raw = decode_212(dat, total)
    if nsamp is None:
        raw = raw[: (raw.shape[0] // width) * width]
    first = raw[0::width]
    mv = (first.astype(np.float64) - sig.baseline) / sig.gain
    return EcgRecord(mv, fs, name=name)


def write_wfdb_record(record: EcgRecord, directory, gain: float = 200.0, baseline: int = 0) -> Path:
    """Write *record* as a single-signal format-212 WFDB record; returns the header path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    raw = np.round(record.samples * gain).astype(np.int64) + baseline
    raw = np.clip(raw, -2048, 2047)
    dat_name = f"{record.name}.dat"
    (directory / dat_name).write_bytes(encode_212(raw))
    fs_text = f"{record.fs:g}"
    header = (
        f"{record.name} 1 {fs_text} {raw.shape[0]}\n"
        f"{dat_name} 212 {gain:g}({baseline})/mV 12 0 {int(raw[0]) if raw.size else 0} 0 0 ECG\n"
    )
    path = directory / f"{record.name}.hea"
    path.write_text(header, encoding="utf-8")
    return path


def read_record(path, fs_override: float | None = None) -> EcgRecord:
    """Dispatch on file extension: ``.hea`` is WFDB, anything else CSV."""
    if os.fspath(path).endswith(".hea"):
        rec = read_wfdb_record(path)
        if fs_override is not None:
            rec = EcgRecord(rec.samples, fs_override, rec.name)
        return rec
    return read_csv_record(path, fs_override)


# ---------------------------------------------------------------- transforms


def resample(record: EcgRecord, target_fs: float) -> EcgRecord:
    """Linearly interpolate onto a uniform grid at *target_fs*.

    The grid starts at t=0 and includes the last original sample time when it
    falls on the grid.
    """
    if not target_fs > 0:
        raise ValueError(f"target rate must be positive, got {target_fs}")
    n = len(record)
    if n < 2:
        raise ValueError("resampling needs at least 2 samples")
    if target_fs == record.fs:
        return EcgRecord(record.samples.copy(), record.fs, record.name, record.annotations)
    t_last = (n - 1) / record.fs
    n_out = int(np.floor(t_last * target_fs + 1e-9)) + 1
    t_new = np.arange(n_out) / target_fs
    t_old = np.arange(n) / record.fs
    y = np.interp(t_new, t_old, record.samples)
    ann = record.annotations
    if ann is not None:
        ann = ann[ann <= n_out / target_fs]
    return EcgRecord(y, target_fs, record.name, ann)


def segment(record: EcgRecord, window_s: float = 300.0, hop_s: float = 300.0) -> SegmentSet:
    """Cut *record* into windows of *window_s* seconds every *hop_s* seconds.

    A tail shorter than one window is dropped.  Annotations falling inside a
    window are carried over, re-based to the window start.
    """
    if window_s < 30:
        raise ValueError("window must be at least 30 s")
    if not 0 < hop_s <= window_s:
        raise ValueError("hop must satisfy 0 < hop <= window")
    win = int(round(window_s * record.fs))
    hop = int(round(hop_s * record.fs))
    n = len(record)
    if n < win:
        raise ValueError(f"record of {record.duration:.1f} s is shorter than one {window_s} s window")
    segments = []
    start = 0
    k = 0
    while start + win <= n:
        ann = None
        if record.annotations is not None:
            t0 = start / record.fs
            t1 = (start + win) / record.fs
            sel = record.annotations[(record.annotations >= t0) & (record.annotations < t1)]
            ann = sel - t0
        segments.append(
            EcgRecord(record.samples[start : start + win], record.fs, f"{record.name}#{k}", ann)
        )
        start += hop
        k += 1
    return SegmentSet(segments, float(window_s), float(hop_s), record.name)


# ---------------------------------------------------------------- synthesis

# (amplitude mV, centre offset from R in s, gaussian width in s)
_QRS_WAVES = ((-0.12, -0.025, 0.008), (1.2, 0.0, 0.010), (-0.20, 0.027, 0.009))
_P_WAVE = (0.15, -0.16, 0.022)
_T_WAVE = (0.30, 0.28, 0.045)


def synthesize_ecg(bpm: float = 60.0, duration_s: float = 60.0, noise_sd: float = 0.0, seed: int = 0,
                   fs: float = CANONICAL_FS):
    """Generate a periodic synthetic ECG and its exact R-apex times.

    Beats sit at ``RR/2 + k*RR`` rounded to the sample grid.  P, QRS and T
    waves are gaussian bumps; P and T offsets scale with sqrt(RR) so high
    rates do not overlap consecutive beats.  Noise is white gaussian.
    """
    if not 30 <= bpm <= 220:
        raise ValueError("bpm must lie in [30, 220]")
    if not duration_s > 0:
        raise ValueError("duration must be positive")
    n = int(round(duration_s * fs))
    rr = 60.0 / bpm
    stretch = min(1.0, np.sqrt(rr))
    centres = np.arange(rr / 2.0, n / fs, rr)
    r_idx = np.round(centres * fs).astype(np.int64)
    r_idx = r_idx[r_idx < n]
    t = np.arange(n) / fs
    x = np.zeros(n)
    waves = list(_QRS_WAVES)
    waves.append((_P_WAVE[0], _P_WAVE[1] * stretch, _P_WAVE[2]))
    waves.append((_T_WAVE[0], _T_WAVE[1] * stretch, _T_WAVE[2] * stretch))
    span = int(fs)  # bumps are negligible beyond 1 s
    for i in r_idx:
        lo, hi = max(0, i - span), min(n, i + span)
        tr = t[lo:hi] - i / fs
        for amp, off, width in waves:
            x[lo:hi] += amp * np.exp(-0.5 * ((tr - off) / width) ** 2)
    if noise_sd > 0:
        rng = np.random.default_rng(seed)
        x = x + rng.normal(0.0, noise_sd, n)
    truth = r_idx / fs
    return EcgRecord(x, fs, name=f"synth_{bpm:g}bpm_s{seed}", annotations=truth), truth
