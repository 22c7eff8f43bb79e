"""Command-line entry point: ``arrayliveness <subcommand> ...``.

Exit codes: 0 success (and "authentic" for detect), 1 "spoof" from detect,
2 configuration or usage error, 3 data or runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .audio_io import AudioFormatError, ManifestError, load_manifest, load_wav
from .classifier import (
    AUTHENTIC,
    SPOOF,
    ModelFormatError,
    TrainingError,
    dumps_model,
    evaluate,
    load_model,
    predict,
    train,
)
from .features import FeatureConfig, FeatureError, extract
from .geometry import sigma_sweep
from .synthesis import CorpusConfig, generate_corpus

EXIT_OK, EXIT_SPOOF, EXIT_CONFIG, EXIT_DATA = 0, 1, 2, 3


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


# --- plumbing ----------------------------------------------------------------

def _atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _stamp_path(out: Path) -> Path:
    return out / "run.json" if out.is_dir() else out.with_name(out.name + ".run.json")


def _write_stamp(out: Path, command: str, seed, resolved: dict) -> None:
    stamp = {"command": command, "seed": seed, "config": resolved, "version": __version__}
    _atomic_write(_stamp_path(out), _json_text(stamp))


def _load_config(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"config file {p} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {p} must hold a JSON object")
    return doc


def _resolve(args, cfg: dict, key: str, default=None):
    """Flag value if given, else the config file's, else ``default``."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    return cfg.get(key, default)


def _num(x) -> str:
    return format(float(x), ".17g")


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


# --- feature CSV -------------------------------------------------------------

FEATURE_KEYS = {
    "cutoff_sap": "f_sap_cutoff_hz",
    "cutoff_sdp": "f_sdp_cutoff_hz",
    "lpcc_order": "lpcc_order",
    "n_sap": "n_sap",
    "n_ch": "n_ch",
}


def _feature_config(args, cfg: dict) -> FeatureConfig:
    base = cfg.get("features", {})
    if not isinstance(base, dict):
        raise ConfigError("'features' in the config file must be an object")
    try:
        fc = FeatureConfig.from_dict(base)
        overrides = {field: getattr(args, flag) for flag, field in FEATURE_KEYS.items()
                     if getattr(args, flag, None) is not None}
        return FeatureConfig.from_dict({**fc.to_dict(), **overrides})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid feature configuration: {exc}") from exc


def read_features(path):
    """Read a feature CSV; returns (paths, labels as 1/0, X, column names)."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"feature file not found: {p}")
    with open(p, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:2] != ["path", "label"]:
        raise DataError(f"{p}: header must start with path,label")
    names = rows[0][2:]
    paths, labels, X = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(names) + 2:
            raise DataError(f"{p}:{lineno}: expected {len(names) + 2} fields, got {len(row)}")
        if row[1] not in ("authentic", "spoof"):
            raise DataError(f"{p}:{lineno}: unknown label {row[1]!r}")
        paths.append(row[0])
        labels.append(AUTHENTIC if row[1] == "authentic" else SPOOF)
        try:
            X.append([float(v) for v in row[2:]])
        except ValueError as exc:
            raise DataError(f"{p}:{lineno}: {exc}") from exc
    return paths, np.asarray(labels, dtype=int), np.asarray(X, dtype=np.float64).reshape(len(X), len(names)), names


def _feature_hash(features_path: Path, cfg: dict) -> str:
    """Config hash recorded by the extract run that produced ``features_path``."""
    stamp = _stamp_path(features_path)
    if stamp.is_file():
        try:
            return json.loads(stamp.read_text())["config"]["config_hash"]
        except (KeyError, json.JSONDecodeError, TypeError):
            pass
    return FeatureConfig.from_dict(cfg.get("features", {})).config_hash()


def _extract_row(item):
    path, cfg_dict = item
    cfg = FeatureConfig.from_dict(cfg_dict)
    try:
        return extract(load_wav(path), cfg).to_array()
    except (AudioFormatError, FeatureError, OSError) as exc:
        raise DataError(f"{path}: {exc}") from exc


# --- subcommands -------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = _load_config(args.config)
    corpus = dict(cfg.get("corpus", cfg))
    seed = _resolve(args, corpus, "seed", 0)
    corpus["seed"] = int(seed)
    try:
        cc = CorpusConfig.from_dict(corpus)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid corpus configuration: {exc}") from exc
    out = Path(args.out)
    generate_corpus(cc, out)
    manifest = out / "manifest.csv"
    _write_stamp(out, "synth", cc.seed, cc.to_dict())
    print(f"manifest={manifest} rows={sum(int(v) for v in cc.counts.values())} "
          f"sha256={_sha256_file(manifest)}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    mics = _resolve(args, cfg, "mics", [2, 4, 6, 8])
    radius = float(_resolve(args, cfg, "radius", 0.05))
    L_range = _resolve(args, cfg, "distance_range", [1.0, 3.0])
    th_range = _resolve(args, cfg, "angle_range", [0.0, 90.0])
    steps = int(_resolve(args, cfg, "steps", 50))
    if len(L_range) != 2 or len(th_range) != 2:
        raise ConfigError("ranges take exactly two values: lo,hi")
    if radius <= 0 or min(L_range) <= radius:
        raise ConfigError("radius must be positive and every distance must exceed it")
    try:
        sweep = sigma_sweep(mics, radius, tuple(L_range), tuple(th_range), steps)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(sweep.format_table())
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=out.parent, prefix=f".{out.name}.", suffix=".tmp")
        os.close(fd)
        sweep.to_csv(tmp)
        os.replace(tmp, out)
        resolved = {"mics": list(mics), "radius": radius, "distance_range": list(L_range),
                    "angle_range": list(th_range), "steps": steps}
        _write_stamp(out, "sweep", args.seed, resolved)
    return EXIT_OK


def cmd_extract(args) -> int:
    cfg = _load_config(args.config)
    fc = _feature_config(args, cfg)
    manifest_path = _resolve(args, cfg, "manifest")
    if manifest_path is None:
        raise ConfigError("--manifest is required")
    try:
        manifest = load_manifest(manifest_path)
    except FileNotFoundError as exc:
        raise ConfigError(f"manifest not found: {manifest_path}") from exc
    except ManifestError as exc:
        raise DataError(str(exc)) from exc
    jobs = max(1, int(_resolve(args, cfg, "jobs", 1)))
    items = [(e.path, fc.to_dict()) for e in manifest]
    if jobs == 1:
        rows = [_extract_row(it) for it in items]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_extract_row, items, chunksize=4))

    lines = [",".join(["path", "label", *fc.feature_names()])]
    base = Path(manifest_path).resolve().parent
    for entry, row in zip(manifest, rows):
        rel = os.path.relpath(entry.path, base).replace(os.sep, "/")
        lines.append(",".join([rel, entry.label, *(_num(v) for v in row)]))
    out = Path(args.out)
    _atomic_write(out, "\n".join(lines) + "\n")
    resolved = {"features": fc.to_dict(), "config_hash": fc.config_hash(),
                "manifest_sha256": _sha256_file(manifest_path)}
    _write_stamp(out, "extract", args.seed, resolved)
    print(f"features={out} rows={len(rows)} config_hash={fc.config_hash()}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    features = _resolve(args, cfg, "features")
    if features is None:
        raise ConfigError("--features is required")
    seed = int(_resolve(args, cfg, "seed", 0))
    val_fraction = float(_resolve(args, cfg, "val_fraction", 0.3))
    _, y, X, _ = read_features(features)
    config_hash = _feature_hash(Path(features), cfg)
    try:
        model, report = train(X, y, seed=seed, val_fraction=val_fraction, config_hash=config_hash)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    out = Path(args.out)
    _atomic_write(out, dumps_model(model))
    report_path = out.with_name(out.stem + ".validation.json")
    _atomic_write(report_path, _json_text(report.to_dict()))
    resolved = {"features": Path(features).name, "features_sha256": _sha256_file(features),
                "val_fraction": val_fraction, "config_hash": config_hash}
    _write_stamp(out, "train", seed, resolved)
    print(f"model={out} val_accuracy={report.accuracy:.4f} threshold={model.threshold:.6f}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _load_config(args.config)
    model_path = _resolve(args, cfg, "model")
    features = _resolve(args, cfg, "features")
    if model_path is None or features is None:
        raise ConfigError("--model and --features are required")
    model = _load_model_or_fail(model_path)
    _, y, X, _ = read_features(features)
    try:
        report = evaluate(model, X, y, _feature_hash(Path(features), cfg))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    doc = report.to_dict()
    doc["pooling"] = "single pass over every row of the feature file"
    out = Path(args.out)
    _atomic_write(out, _json_text(doc))
    roc = ["threshold,far,frr"] + [f"{_num(t)},{_num(a)},{_num(r)}" for t, a, r in report.roc]
    _atomic_write(out.with_name(out.stem + ".roc.csv"), "\n".join(roc) + "\n")
    _write_stamp(out, "evaluate", args.seed, {"model_sha256": _sha256_file(model_path),
                                              "features_sha256": _sha256_file(features)})
    print(f"accuracy={report.accuracy:.4f} far={report.far} frr={report.frr} eer={report.eer}")
    return EXIT_OK


def _load_model_or_fail(path):
    if not Path(path).is_file():
        raise ConfigError(f"model file not found: {path}")
    try:
        return load_model(path)
    except ModelFormatError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def cmd_detect(args) -> int:
    cfg = _load_config(args.config)
    model_path = _resolve(args, cfg, "model")
    wav = _resolve(args, cfg, "wav")
    if model_path is None or wav is None:
        raise ConfigError("--model and --wav are required")
    model = _load_model_or_fail(model_path)
    fc = _feature_config(args, cfg)
    try:
        fv = extract(load_wav(wav), fc)
    except FileNotFoundError as exc:
        raise ConfigError(f"audio file not found: {wav}") from exc
    except (AudioFormatError, FeatureError) as exc:
        raise DataError(f"{wav}: {exc}") from exc
    try:
        score, label = predict(model, fv.to_array(), fc.config_hash())
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(f"label={label} score={score:.2f}")
    return EXIT_OK if label == "authentic" else EXIT_SPOOF


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="arrayliveness",
                                     description="Microphone-array voice liveness toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--config", default=None, help="JSON file; explicit flags take precedence")
        p.set_defaults(func=fn)
        return p

    def feature_flags(p):
        p.add_argument("--cutoff-sap", dest="cutoff_sap", type=float, default=None)
        p.add_argument("--cutoff-sdp", dest="cutoff_sdp", type=float, default=None)
        p.add_argument("--lpcc-order", dest="lpcc_order", type=int, default=None)

    p = add("synth", cmd_synth, "render a labelled synthetic corpus")
    p.add_argument("--out", required=True, help="output directory")

    p = add("sweep", cmd_sweep, "sigma_d sweep over distance and angle")
    p.add_argument("--mics", type=_int_list, default=None)
    p.add_argument("--radius", type=float, default=None)
    p.add_argument("--distance-range", dest="distance_range", type=_float_list, default=None)
    p.add_argument("--angle-range", dest="angle_range", type=_float_list, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--out", default=None, help="CSV path for the full grid")

    p = add("extract", cmd_extract, "feature CSV from a manifest")
    p.add_argument("--manifest", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=None)
    feature_flags(p)

    p = add("train", cmd_train, "train the detector on a feature CSV")
    p.add_argument("--features", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--val-fraction", dest="val_fraction", type=float, default=None)

    p = add("evaluate", cmd_evaluate, "metrics and ROC for a model on a feature CSV")
    p.add_argument("--model", default=None)
    p.add_argument("--features", default=None)
    p.add_argument("--out", required=True)

    p = add("detect", cmd_detect, "classify one recording")
    p.add_argument("--model", default=None)
    p.add_argument("--wav", default=None)
    feature_flags(p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, TrainingError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
