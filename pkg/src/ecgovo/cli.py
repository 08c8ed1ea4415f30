"""Command-line interface: detect, features, train, evaluate, classify, compare.

Every option can also come from a ``--config`` file of ``key=value`` lines
(keys are the long option names with dashes or underscores); command-line
flags win over the file.

Exit codes: 0 success, 2 usage, 3 I/O, 4 format or version mismatch,
5 insufficient or inconsistent data.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .evaluation import (
    comparison_grid,
    evaluate_bank,
    evaluate_multiclass,
    pairwise_grid,
    render_comparison_table,
    render_pairwise_table,
)
from .hrv_features import (
    CLASS_LETTERS,
    FEATURE_VERSION,
    FeatureError,
    build_matrix,
    extract_features,
    parse_label,
    read_feature_csv,
    rr_intervals,
    write_feature_csv,
)
from .neural import KINDS, ModelFormatError, NetworkError, ScgParams, TrainingError, load_model, save_model
from .ovo_classifier import (
    PAIRS,
    classify_batch,
    load_bank,
    save_bank,
    train_bank,
    train_multiclass_baseline,
)
from .qrs_detector import DetectorInputError, detect_r_peaks, write_trace_csv
from .signal_io import CANONICAL_FS, RecordFormatError, read_record, resample, segment, write_annotations

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_FORMAT = 4
EXIT_DATA = 5

log = logging.getLogger("ecgovo")


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------- helpers


def _load(path, fs):
    try:
        rec = read_record(path, fs)
    except FileNotFoundError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_IO) from None
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_IO) from None
    except RecordFormatError as exc:
        raise CliError(str(exc), EXIT_FORMAT) from None
    if rec.fs != CANONICAL_FS:
        rec = resample(rec, CANONICAL_FS)
    return rec


def _read_features(path):
    try:
        return read_feature_csv(path)
    except FileNotFoundError:
        raise CliError(f"cannot read {path}", EXIT_IO) from None
    except FeatureError as exc:
        raise CliError(str(exc), EXIT_FORMAT) from None


def _scg_params(args):
    try:
        return ScgParams(max_iter=args.max_iter, goal_loss=args.goal_loss)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None


def _hidden(text):
    try:
        sizes = tuple(int(h) for h in str(text).split(",") if h.strip())
    except ValueError:
        raise CliError(f"--hidden expects comma-separated integers, got {text!r}", EXIT_USAGE) from None
    if any(h < 1 for h in sizes):
        raise CliError("hidden layer sizes must be at least 1", EXIT_USAGE)
    return sizes


def _kinds(text):
    if text == "all":
        return KINDS
    kinds = tuple(k.strip() for k in text.split(",") if k.strip())
    bad = [k for k in kinds if k not in KINDS]
    if bad:
        raise CliError(f"unknown kind(s) {bad}; choose from {KINDS} or 'all'", EXIT_USAGE)
    return kinds


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_history(path, named_histories):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("model,iteration,loss\n")
        for name, hist in named_histories:
            for it, loss in enumerate(hist.loss):
                fh.write(f"{name},{it},{loss!r}\n")


def _config_echo(args, **extra):
    cfg = {"feature_version": FEATURE_VERSION, "version": __version__}
    for key in ("seed", "kind", "kinds", "hidden", "max_iter", "goal_loss", "mode"):
        if hasattr(args, key):
            cfg[key] = getattr(args, key)
    cfg.update(extra)
    return cfg


# ---------------------------------------------------------------- commands


def cmd_detect(args):
    out = _out_dir(args)
    trace_dir = Path(args.trace) if args.trace else None
    if trace_dir:
        trace_dir.mkdir(parents=True, exist_ok=True)
    for path in args.inputs:
        rec = _load(path, args.fs)
        try:
            peaks, trace = detect_r_peaks(rec)
        except DetectorInputError as exc:
            raise CliError(f"{path}: {exc}", EXIT_DATA) from None
        write_annotations(peaks.times, out / f"{rec.name}_peaks.csv", header="time_s")
        if trace_dir:
            write_trace_csv(trace, peaks, trace_dir / f"{rec.name}_trace.csv")
        print(f"{rec.name}\t{len(peaks)} peaks\t{rec.duration:.1f} s")
    return EXIT_OK


def _labelled_inputs(items):
    pairs = []
    for item in items:
        if "=" not in item:
            raise CliError(f"input {item!r} must be LABEL=PATH", EXIT_USAGE)
        label, path = item.split("=", 1)
        try:
            pairs.append((parse_label(label), path))
        except FeatureError as exc:
            raise CliError(str(exc), EXIT_USAGE) from None
    return pairs


def cmd_features(args):
    vectors, labels = [], []
    rejected = []
    hop = args.hop if args.hop is not None else args.window
    for label, path in _labelled_inputs(args.inputs):
        rec = _load(path, args.fs)
        try:
            segs = segment(rec, args.window, hop)
        except ValueError as exc:
            rejected.append((rec.name, str(exc)))
            continue
        for seg in segs:
            try:
                peaks, _ = detect_r_peaks(seg)
                rr = rr_intervals(peaks)
                vec = extract_features(rr)
            except (FeatureError, DetectorInputError) as exc:
                rejected.append((seg.name, str(exc)))
                continue
            vectors.append(vec)
            labels.append(label)
    for name, reason in rejected:
        log.warning("rejected %s: %s", name, reason)
    if not vectors:
        raise CliError("no segment produced a feature vector", EXIT_DATA)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_feature_csv(build_matrix(vectors, labels), out)
    with open(out.with_name(out.name + ".rejected.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("segment,reason\n")
        for name, reason in rejected:
            fh.write(f"{name},\"{reason}\"\n")
    print(f"{len(vectors)} rows written to {out}; {len(rejected)} rejected")
    return EXIT_OK


def _train_one(mode, kind, train, args, out):
    params = _scg_params(args)
    hidden = _hidden(args.hidden)
    hist = []
    try:
        if mode == "pairwise":
            bank = train_bank(train, kind, params, args.seed, hidden, histories=hist)
            save_bank(bank, out)
            names = ["net%02d_%s" % (r + 1, "".join(CLASS_LETTERS[c] for c in p)) for r, p in enumerate(PAIRS)]
            _write_history(out / "history.csv", zip(names, hist))
            return bank
        net = train_multiclass_baseline(train, kind, params, args.seed, hidden, histories=hist)
        out.mkdir(parents=True, exist_ok=True)
        save_model(net, out / "model.json")
        _write_history(out / "history.csv", [("multiclass", hist[0])])
        return net
    except NetworkError as exc:
        raise CliError(str(exc), EXIT_DATA) from None
    except TrainingError as exc:
        raise CliError(str(exc), EXIT_DATA) from None


def cmd_train(args):
    train = _read_features(args.features)
    out = _out_dir(args)
    _train_one(args.mode, args.kind, train, args, out)
    print(f"{args.mode} {args.kind} model written to {out}")
    return EXIT_OK


def _load_models(paths):
    """Sort loaded artifacts into ``{kind: bank}`` and ``{kind: baseline}``."""
    banks, baselines = {}, {}
    for p in paths:
        path = Path(p)
        try:
            if path.is_dir() or path.name == "manifest.json":
                if path.is_dir() and not (path / "manifest.json").exists():
                    path = path / "model.json"
                    net = load_model(path)
                    baselines[net.topology.kind] = net
                    continue
                bank = load_bank(path)
                banks[bank.kind] = bank
            else:
                net = load_model(path)
                baselines[net.topology.kind] = net
        except FileNotFoundError:
            raise CliError(f"cannot read model {p}", EXIT_IO) from None
        except (ModelFormatError, KeyError) as exc:
            raise CliError(f"{p}: {exc}", EXIT_FORMAT) from None
    return banks, baselines


def _reports(banks, baselines, test, args):
    reports = {}
    for kind, bank in banks.items():
        reports[f"proposed_{kind}"] = evaluate_bank(bank, test, _config_echo(args, kind=kind, method="proposed",
                                                                             master_seed=bank.master_seed))
    for kind, net in baselines.items():
        reports[f"normal_{kind}"] = evaluate_multiclass(net, test, _config_echo(args, kind=kind, method="normal",
                                                                                seed=net.seed))
    return reports


def _emit(args, table_name, table, reports):
    sys.stdout.write(table)
    if args.out:
        out = _out_dir(args)
        (out / table_name).write_text(table, encoding="utf-8")
        for name, rep in reports.items():
            (out / f"report_{name}.json").write_text(rep.to_json(), encoding="utf-8")


def cmd_evaluate(args):
    test = _read_features(args.test)
    banks, baselines = _load_models(args.models)
    if args.table == "pairwise":
        if not banks:
            raise CliError("pairwise table needs at least one pair-network bank", EXIT_DATA)
        grid = pairwise_grid(banks, test, args.include_normal)
        table = render_pairwise_table(grid, test.class_names, include_normal=args.include_normal)
        name = "table_pairwise.txt"
    else:
        grid = comparison_grid(baselines, banks, test)
        table = render_comparison_table(grid, test.class_names)
        name = "table_comparison.txt"
    _emit(args, name, table, _reports(banks, baselines, test, args))
    return EXIT_OK


def cmd_classify(args):
    try:
        bank = load_bank(args.bank)
    except FileNotFoundError:
        raise CliError(f"cannot read bank {args.bank}", EXIT_IO) from None
    except ModelFormatError as exc:
        raise CliError(str(exc), EXIT_FORMAT) from None
    data = _read_features(args.features)
    decisions = classify_batch(bank, data.rows) if len(data) else []
    lines = ["row,predicted,FA,FB,FC,FD,FE,tie_broken"]
    for i, d in enumerate(decisions):
        lines.append(",".join([str(i), CLASS_LETTERS[d.cls]] + [str(f) for f in d.flags.flags]
                              + [str(int(d.tie_broken))]))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_compare(args):
    train = _read_features(args.train)
    test = _read_features(args.test)
    kinds = _kinds(args.kinds)
    out = _out_dir(args)
    jobs = [(mode, kind) for kind in kinds for mode in ("multiclass", "pairwise")]

    def run(job):
        mode, kind = job
        return job, _train_one(mode, kind, train, args, out / f"{mode}_{kind}")

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    banks = {kind: m for (mode, kind), m in results if mode == "pairwise"}
    baselines = {kind: m for (mode, kind), m in results if mode == "multiclass"}

    comp = render_comparison_table(comparison_grid(baselines, banks, test), test.class_names, kinds)
    pair = render_pairwise_table(pairwise_grid(banks, test), test.class_names, kinds)
    (out / "table_pairwise.txt").write_text(pair, encoding="utf-8")
    (out / "table_comparison.txt").write_text(comp, encoding="utf-8")
    for name, rep in _reports(banks, baselines, test, args).items():
        (out / f"report_{name}.json").write_text(rep.to_json(), encoding="utf-8")
    sys.stdout.write(comp)
    return EXIT_OK


# ---------------------------------------------------------------- parsing


def _common(p):
    p.add_argument("--seed", type=int, default=0, help="master seed (u64)")
    p.add_argument("--config", help="key=value file supplying option defaults")
    p.add_argument("--out", help="output directory (or file for 'features'/'classify')")


def _training_opts(p):
    p.add_argument("--hidden", default="7", help="comma-separated hidden layer sizes")
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--goal-loss", type=float, default=1e-5)


def build_parser():
    parser = argparse.ArgumentParser(prog="ecgovo", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="detect R peaks; optionally export stage traces")
    p.add_argument("inputs", nargs="+", help=".csv or .hea records")
    p.add_argument("--fs", type=float, help="sampling rate override (Hz)")
    p.add_argument("--trace", help="directory for per-record stage-trace CSVs")
    _common(p)
    p.set_defaults(func=cmd_detect, out=".")

    p = sub.add_parser("features", help="segment records and extract HRV feature rows")
    p.add_argument("inputs", nargs="+", help="LABEL=PATH items; LABEL is A..E, 0..4 or a class name")
    p.add_argument("--fs", type=float)
    p.add_argument("--window", type=float, default=300.0, help="segment length (s)")
    p.add_argument("--hop", type=float, help="segment hop (s); defaults to the window")
    _common(p)
    p.set_defaults(func=cmd_features, out="features.csv")

    p = sub.add_parser("train", help="train a pair-network bank or a 5-class baseline")
    p.add_argument("features", help="feature CSV")
    p.add_argument("--mode", choices=("pairwise", "multiclass"), default="pairwise")
    p.add_argument("--kind", choices=KINDS, default="feedforward")
    _training_opts(p)
    _common(p)
    p.set_defaults(func=cmd_train, out="model")

    p = sub.add_parser("evaluate", help="score trained models on a test feature CSV")
    p.add_argument("--models", nargs="+", required=True, help="bank directories/manifests or model files")
    p.add_argument("--test", required=True, help="test feature CSV")
    p.add_argument("--table", choices=("pairwise", "comparison"), default="pairwise")
    p.add_argument("--include-normal", action="store_true", help="add Normal pairs to the pairwise table")
    _common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("classify", help="classify feature rows with a pair-network bank")
    p.add_argument("--bank", required=True)
    p.add_argument("features", help="feature CSV (labels are ignored)")
    _common(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("compare", help="train all kinds both ways and tabulate")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--kinds", default="all", help="'all' or comma-separated kinds")
    p.add_argument("--jobs", type=int, default=1, help="concurrent training jobs")
    _training_opts(p)
    _common(p)
    p.set_defaults(func=cmd_compare, out="compare_out")
    return parser


def read_config(path) -> dict:
    cfg = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                text = line.strip()
                if not text or text.startswith("#"):
                    continue
                if "=" not in text:
                    raise CliError(f"{path}:{lineno}: expected key=value", EXIT_FORMAT)
                key, value = (s.strip() for s in text.split("=", 1))
                cfg[key.replace("-", "_")] = value
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}", EXIT_IO) from None
    return cfg


def _apply_config(parser, argv, config_path):
    """Install config values as subcommand defaults so explicit flags still win."""
    command = next((a for a in argv if a in _SUBCOMMANDS), None)
    if command is None:
        return
    cfg = read_config(config_path)
    sub = parser._subparsers._group_actions[0].choices[command]
    known = {a.dest: a for a in sub._actions if a.option_strings}
    defaults = {}
    for key, value in cfg.items():
        if key not in known:
            raise CliError(f"{config_path}: unknown option {key!r} for {command}", EXIT_FORMAT)
        action = known[key]
        try:
            if action.nargs in ("+", "*"):
                defaults[key] = value.split()
            elif action.const is True and action.nargs == 0:
                defaults[key] = value.lower() in ("1", "true", "yes", "on")
            elif action.type is not None:
                defaults[key] = action.type(value)
            else:
                defaults[key] = value
        except ValueError:
            raise CliError(f"{config_path}: bad value {value!r} for {key}", EXIT_FORMAT) from None
        if action.choices is not None and defaults[key] not in action.choices:
            raise CliError(f"{config_path}: {key} must be one of {list(action.choices)}", EXIT_FORMAT)
        action.required = False
    sub.set_defaults(**defaults)


_SUBCOMMANDS = ("detect", "features", "train", "evaluate", "classify", "compare")


def main(argv=None):
    if argv is None:
        argv = sys.argv[1:]
    argv = list(argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    try:
        if known.config:
            _apply_config(parser, argv, known.config)
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
