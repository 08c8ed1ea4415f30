import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecgovo.signal_io import (
    EcgRecord,
    RecordFormatError,
    decode_212,
    encode_212,
    read_annotations,
    read_csv_record,
    read_record,
    read_wfdb_record,
    resample,
    segment,
    synthesize_ecg,
    write_csv_record,
    write_wfdb_record,
)


def hand_decode_212(data):
    """Bit-string oracle: split each 3-byte group into two 12-bit fields."""
    out = []
    for k in range(0, len(data) - 2, 3):
        b0, b1, b2 = data[k], data[k + 1], data[k + 2]
        hi = format(b1, "08b")
        first = int(hi[4:] + format(b0, "08b"), 2)
        second = int(hi[:4] + format(b2, "08b"), 2)
        for v in (first, second):
            out.append(v - 4096 if v >= 2048 else v)
    return out


# ---------------------------------------------------------------- CSV


def test_csv_with_override(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("0.0\n1.0\n0.0")
    rec = read_csv_record(p, fs_override=200)
    assert rec.fs == 200
    assert rec.samples.tolist() == [0.0, 1.0, 0.0]


def test_csv_header_rate(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("# fs=360\n" + "0.5\n" * 360)
    rec = read_csv_record(p)
    assert len(rec) == 360
    assert rec.duration == 1.0


def test_csv_override_beats_header(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("# fs=360\n1\n2\n")
    assert read_csv_record(p, fs_override=250).fs == 250


def test_csv_bad_row_names_line(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("# fs=200\n1.0\nabc\n")
    with pytest.raises(RecordFormatError, match=":3:"):
        read_csv_record(p)


def test_csv_missing_rate(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("1\n2\n")
    with pytest.raises(RecordFormatError, match="sampling rate"):
        read_csv_record(p)


def test_csv_empty(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("# fs=200\n")
    with pytest.raises(RecordFormatError, match="no samples"):
        read_csv_record(p)


def test_csv_round_trip(tmp_path, rng):
    rec = EcgRecord(rng.normal(size=500), 360.0, "x")
    p = tmp_path / "x.csv"
    write_csv_record(rec, p)
    back = read_csv_record(p)
    assert back.fs == rec.fs
    assert np.array_equal(back.samples, rec.samples)


def test_annotation_sidecar(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("time_s\n0.5\n1.25\n")
    assert read_annotations(p).tolist() == [0.5, 1.25]


# ---------------------------------------------------------------- WFDB


def test_decode_212_examples():
    assert decode_212(bytes([0x01, 0x00, 0x00])).tolist() == [1, 0]
    assert decode_212(bytes([0xFF, 0xFF, 0xFF])).tolist() == [-1, -1]
    data = bytes([0x34, 0x72, 0x56])
    assert decode_212(data).tolist() == hand_decode_212(data)


def test_decode_truncated():
    with pytest.raises(RecordFormatError, match="truncated"):
        decode_212(bytes([1, 2, 3]), count=4)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(-2048, 2047), min_size=0, max_size=64).filter(lambda v: len(v) % 2 == 0))
def test_212_round_trip(values):
    data = encode_212(values)
    assert len(data) == 3 * len(values) // 2
    assert decode_212(data).tolist() == values
    assert hand_decode_212(data) == values
    assert encode_212(decode_212(data)) == data


@settings(max_examples=100, deadline=None)
@given(st.binary(min_size=0, max_size=60).filter(lambda b: len(b) % 3 == 0))
def test_212_bytes_round_trip(data):
    assert encode_212(decode_212(data)) == data


def test_wfdb_gain_and_baseline(tmp_path):
    (tmp_path / "r.dat").write_bytes(encode_212([400, 200, -200, 0]))
    (tmp_path / "r.hea").write_text("r 1 360 4\nr.dat 212 200(0)/mV 12 0 400 0 0 ECG\n")
    rec = read_wfdb_record(tmp_path / "r.hea")
    assert rec.fs == 360
    assert rec.samples.tolist() == [2.0, 1.0, -1.0, 0.0]

    (tmp_path / "s.dat").write_bytes(encode_212([1124, 1024]))
    (tmp_path / "s.hea").write_text("s 1 250 2\ns.dat 212 200(1024)/mV\n")
    assert read_wfdb_record(tmp_path / "s.hea").samples.tolist() == [0.5, 0.0]


def test_wfdb_interleaved_first_signal(tmp_path):
    frames = [10, -10, 20, -20, 30, -30]
    (tmp_path / "m.dat").write_bytes(encode_212(frames))
    (tmp_path / "m.hea").write_text(
        "m 2 360 3\nm.dat 212 10 11 0 0 0 0 MLII\nm.dat 212 10 11 0 0 0 0 V5\n"
    )
    rec = read_wfdb_record(tmp_path / "m.hea")
    assert rec.samples.tolist() == [1.0, 2.0, 3.0]


def test_wfdb_errors(tmp_path):
    (tmp_path / "r.dat").write_bytes(encode_212([1, 2]))
    (tmp_path / "a.hea").write_text("a 1 360 2\nr.dat 16 200\n")
    with pytest.raises(RecordFormatError, match="unsupported"):
        read_wfdb_record(tmp_path / "a.hea")
    (tmp_path / "b.hea").write_text("b 1 360 2\nr.dat 212 0(0)/mV\n")
    with pytest.raises(RecordFormatError, match="gain"):
        read_wfdb_record(tmp_path / "b.hea")
    (tmp_path / "c.hea").write_text("c 1 360 8\nr.dat 212 200\n")
    with pytest.raises(RecordFormatError, match="truncated"):
        read_wfdb_record(tmp_path / "c.hea")


def test_wfdb_write_read(tmp_path):
    rec, _ = synthesize_ecg(70, 10, 0.02, seed=3)
    hea = write_wfdb_record(rec, tmp_path, gain=200)
    back = read_record(hea)
    assert back.fs == rec.fs
    assert np.max(np.abs(back.samples - rec.samples)) <= 0.5 / 200 + 1e-12


# ---------------------------------------------------------------- resample


def test_resample_identity():
    rec = EcgRecord(np.arange(10.0), 200)
    assert np.array_equal(resample(rec, 200).samples, rec.samples)


def test_resample_midpoint():
    assert resample(EcgRecord([0.0, 1.0], 1.0), 2.0).samples.tolist() == [0.0, 0.5, 1.0]


def test_resample_sine_accuracy():
    n = 360 * 4
    t = np.arange(n) / 360
    rec = EcgRecord(np.sin(2 * np.pi * 5 * t), 360)
    out = resample(rec, 200)
    t2 = np.arange(len(out)) / 200
    assert np.max(np.abs(out.samples - np.sin(2 * np.pi * 5 * t2))) < 0.01
    assert abs(out.duration - rec.duration) <= 1 / 200 + 1e-12


@settings(max_examples=60, deadline=None)
@given(
    st.sampled_from([(200, 360), (360, 200), (250, 200), (200, 500), (360, 250), (128, 200)]),
    st.floats(0.0, 0.07),
    st.floats(0.0, 6.3),
)
def test_resample_round_trip(rates, ratio, phase):
    # linear interpolation keeps the 2% bound for sines under 0.07 * min(f1, f2)
    f1, f2 = rates
    freq = ratio * min(f1, f2)
    t = np.arange(f1 * 4) / f1
    x = np.sin(2 * np.pi * freq * t + phase)
    back = resample(resample(EcgRecord(x, f1), f2), f1)
    m = len(back)
    assert abs(m - len(x)) <= 1
    assert np.max(np.abs(back.samples - x[:m])) < 0.02 * max(np.ptp(x), 1e-12) + 1e-12


def test_resample_needs_two_samples():
    with pytest.raises(ValueError):
        resample(EcgRecord([1.0], 200), 100)


# ---------------------------------------------------------------- segment


def _flat(seconds, fs=10.0, annotations=None):
    return EcgRecord(np.zeros(int(seconds * fs)), fs, "flat", annotations)


def test_segment_counts():
    assert len(segment(_flat(600), 300, 300)) == 2
    segs = segment(_flat(650), 300, 300)
    assert len(segs) == 2
    assert sum(len(s) for s in segs) == 2 * 3000


def test_segment_annotation_rebase():
    segs = segment(_flat(650, annotations=[10.0, 310.0]), 300, 300)
    assert segs.segments[0].annotations.tolist() == [10.0]
    assert segs.segments[1].annotations.tolist() == [10.0]


def test_segment_overlap_and_errors():
    assert len(segment(_flat(600), 300, 150)) == 3
    with pytest.raises(ValueError):
        segment(_flat(20), 30, 30)
    with pytest.raises(ValueError):
        segment(_flat(600), 20, 20)
    with pytest.raises(ValueError):
        segment(_flat(600), 300, 400)


@settings(max_examples=50, deadline=None)
@given(st.floats(30, 200), st.floats(0.1, 1.0), st.integers(1, 5))
def test_segment_tiling(window, hop_frac, extra):
    fs = 10.0
    rec = _flat(window * extra + 7.3, fs)
    segs = segment(rec, window, window * hop_frac)
    win = int(round(window * fs))
    assert all(len(s) == win for s in segs)
    assert sum(len(s) for s in segs) == len(segs) * win


# ---------------------------------------------------------------- synthesis


def test_synth_maxima_at_truth():
    rec, truth = synthesize_ecg(bpm=75, duration_s=20, noise_sd=0, seed=0)
    idx = np.round(truth * rec.fs).astype(int)
    half = int(0.4 * rec.fs)
    for i in idx:
        lo, hi = max(0, i - half), min(len(rec), i + half)
        assert lo + np.argmax(rec.samples[lo:hi]) == i


def test_synth_beat_count_and_determinism():
    _, truth = synthesize_ecg(bpm=60, duration_s=10, seed=1)
    assert abs(len(truth) - 10) <= 1
    a, _ = synthesize_ecg(90, 30, 0.05, seed=9)
    b, _ = synthesize_ecg(90, 30, 0.05, seed=9)
    assert a.samples.tobytes() == b.samples.tobytes()
    c, _ = synthesize_ecg(90, 30, 0.05, seed=10)
    assert not np.array_equal(a.samples, c.samples)


def test_synth_wave_proportions():
    rec, truth = synthesize_ecg(bpm=60, duration_s=5, seed=0)
    i = int(round(truth[2] * rec.fs))
    r = rec.samples[i]
    t_region = rec.samples[i + 30 : i + 120]
    p_region = rec.samples[i - 60 : i - 15]
    assert r >= 3 * t_region.max()
    assert r >= 3 * p_region.max()


def test_synth_rejects_bad_rate():
    with pytest.raises(ValueError):
        synthesize_ecg(bpm=10)


def test_record_validation():
    with pytest.raises(ValueError):
        EcgRecord([1.0], 0)
    with pytest.raises(ValueError):
        EcgRecord([1.0, 2.0], 1.0, annotations=[1.0, 0.5])
