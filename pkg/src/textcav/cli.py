"""Command-line entry point.

Configuration is a flat ``section.key = value`` file; any key can be
overridden on the command line as ``--section.key value``.  Each run writes to
``<run.out>/<command>-<hash>/`` where the hash covers the resolved settings of
the sections the command reads, and the resolved settings are saved there as
``config.resolved``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
Failures print a one-line JSON error object on stderr.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Callable

from . import augment as aug
from . import plots, vocab
from .classifier import (
    NumericError, TrainedClassifier, TrainingConfig, TrainingError, evaluate, load_classifier, save_classifier,
    train, train_head,
)
from .data import DataError, Dataset, LabelMap, load_concept, load_dataset
from .doe import DoeScorer, bin_analysis, confidence_scores, histogram, rank_scores
from .encoder import EmbeddingStore, EncoderError, import_embeddings
from .metrics import MetricError, MetricReport, fmt
from .synthcorpus import CorpusSpec, CorpusSpecError, generate, write_corpus
from .tcav import DegenerateHeadError, build_cavs, concept_significance, tcav_scores

log = logging.getLogger("textcav")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


# --- configuration ---------------------------------------------------------

def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in s.split(",") if x.strip())


def _strs(s: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in s.split(",") if x.strip())


def _pairs(s: str) -> tuple[tuple[str, str], ...]:
    """``name=path,name=path`` -> ordered pairs."""
    out = []
    for item in _strs(s):
        if "=" not in item:
            raise ValueError(f"expected name=path, got {item!r}")
        k, v = item.split("=", 1)
        out.append((k.strip(), v.strip()))
    return tuple(out)


_PARSERS: dict[type, Callable] = {int: int, float: float, bool: _bool, str: str}


def _dataclass_keys(section: str, cls) -> dict[str, tuple[Callable, object]]:
    keys = {}
    for f in dataclasses.fields(cls):
        default = f.default
        if isinstance(default, tuple):
            keys[f"{section}.{f.name}"] = (_ints, default)
        else:
            keys[f"{section}.{f.name}"] = (_PARSERS[type(default)], default)
    return keys


SCHEMA: dict[str, tuple[Callable, object]] = {
    "run.out": (str, "runs"),
    "run.dir": (str, ""),
    "data.train": (str, ""),
    "data.dev": (str, ""),
    "data.pool": (str, ""),
    "data.inputs": (str, ""),
    "data.eval": (_pairs, ()),
    "data.label_map": (str, ""),
    "data.embeddings": (str, ""),
    "model.path": (str, ""),
    "tcav.concepts": (_pairs, ()),
    "tcav.baseline": (str, ""),
    "tcav.P": (int, 1000),
    "tcav.n_v": (int, 5),
    "tcav.seed": (int, 0),
    "tcav.alpha": (float, 0.001),
    "tcav.allow_degenerate": (_bool, False),
    "doe.concept": (str, ""),
    "doe.P": (int, 100),
    "doe.n_v": (int, 3),
    "doe.seed": (int, 0),
    "doe.bin_n": (int, 100),
    "doe.hist_bins": (int, 20),
    "augment.strategies": (_strs, aug.STRATEGIES),
    "augment.N_values": (_ints, ()),
    "augment.seed": (int, 0),
    "augment.base_eval": (str, ""),
    "vocab.datasets": (_pairs, ()),
    "vocab.k": (int, 100),
    "vocab.stopwords": (str, ""),
    "vocab.lexicons": (_pairs, ()),
    "vocab.mask": (str, ""),
    "vocab.min_length": (int, 2),
    "report.inputs": (_strs, ()),
}
SCHEMA.update(_dataclass_keys("train", TrainingConfig))
SCHEMA.update(_dataclass_keys("corpus", CorpusSpec))

COMMAND_SECTIONS = {
    "synth": ("corpus",),
    "train": ("data", "train"),
    "eval": ("data", "model"),
    "tcav": ("data", "model", "tcav"),
    "doe": ("data", "model", "doe"),
    "augment": ("data", "train", "doe", "augment"),
    "vocab": ("data", "vocab"),
    "report": ("report",),
}


def _render(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(f"{v[0]}={v[1]}" if isinstance(v, tuple) else str(v) for v in value)
    return str(value)


def read_config_file(path: str | Path) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    raw = {}
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'section.key = value'")
        k, v = line.split("=", 1)
        raw[k.strip()] = v.strip()
    return raw


def resolve(raw: dict[str, str]) -> dict[str, object]:
    """Defaults overlaid with ``raw`` string values, parsed per key type."""
    cfg = {k: default for k, (_, default) in SCHEMA.items()}
    for k, v in raw.items():
        if k not in SCHEMA:
            raise ConfigError(f"unknown config key {k!r}")
        parse = SCHEMA[k][0]
        try:
            cfg[k] = parse(v)
        except ValueError as exc:
            raise ConfigError(f"bad value for {k}: {exc}") from None
    return cfg


def section(cfg: dict, name: str) -> dict[str, object]:
    prefix = name + "."
    return {k[len(prefix):]: v for k, v in cfg.items() if k.startswith(prefix)}


def resolved_text(cfg: dict, command: str) -> str:
    keys = sorted(k for k in cfg if k.split(".", 1)[0] in COMMAND_SECTIONS[command])
    return f"# textcav {command}\n" + "".join(f"{k} = {_render(cfg[k])}\n" for k in keys)


def output_dir(cfg: dict, command: str) -> Path:
    if cfg["run.dir"]:
        out = Path(cfg["run.dir"])
    else:
        digest = hashlib.sha256(resolved_text(cfg, command).encode("utf-8")).hexdigest()[:12]
        out = Path(cfg["run.out"]) / f"{command}-{digest}"
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved").write_text(resolved_text(cfg, command), encoding="utf-8")
    return out


# --- helpers ---------------------------------------------------------------

def _require(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if not cfg[k]]
    if missing:
        raise ConfigError(f"missing required setting(s): {', '.join(missing)}")


def _label_map(cfg: dict) -> LabelMap | None:
    return LabelMap.from_file(cfg["data.label_map"]) if cfg["data.label_map"] else None


def _load(cfg: dict, key: str, split: str, name: str | None = None) -> Dataset:
    return load_dataset(cfg[key], _label_map(cfg), split, name)


def _store(cfg: dict) -> EmbeddingStore | None:
    return import_embeddings(cfg["data.embeddings"]) if cfg["data.embeddings"] else None


def _training_config(cfg: dict) -> TrainingConfig:
    try:
        return TrainingConfig(**section(cfg, "train"))
    except TrainingError as exc:
        raise ConfigError(str(exc)) from None


def _model(cfg: dict) -> TrainedClassifier:
    _require(cfg, "model.path")
    path = Path(cfg["model.path"])
    if not path.exists():
        raise DataError(f"no such model file: {path}")
    return load_classifier(path)


def _write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _name_seed(seed: int, name: str) -> list[int]:
    """Seed that depends on the concept name, not on its position in a list."""
    return [seed, int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "little")]


METRIC_HEADER = ["dataset", "auc", "f1", "precision", "recall", "average_precision", "threshold", "n_positive", "n_negative"]


def _metric_row(name: str, m: MetricReport) -> list[str]:
    return [name, *(fmt(v) for v in (m.auc, m.f1, m.precision, m.recall, m.average_precision, m.threshold)),
            str(m.n_positive), str(m.n_negative)]


# --- commands --------------------------------------------------------------

def cmd_synth(cfg: dict, out: Path) -> dict:
    try:
        spec = CorpusSpec(**section(cfg, "corpus"))
    except CorpusSpecError as exc:
        raise ConfigError(str(exc)) from None
    written = write_corpus(generate(spec), out)
    return {name: str(p) for name, p in written.items()}


def cmd_train(cfg: dict, out: Path) -> dict:
    _require(cfg, "data.train")
    tcfg = _training_config(cfg)
    train_ds = _load(cfg, "data.train", "train")
    dev_ds = _load(cfg, "data.dev", "dev") if cfg["data.dev"] else None
    store = _store(cfg)
    clf = train_head(store, train_ds, dev_ds, tcfg) if store is not None else train(train_ds, dev_ds, tcfg)
    model = out / "model.clf"
    save_classifier(clf, model)
    files = {"model": str(model)}
    if clf.dev_metrics is not None:
        files["dev_metrics"] = str(_write_csv(out / "dev_metrics.csv", METRIC_HEADER, [_metric_row("dev", clf.dev_metrics)]))
    return files


def cmd_eval(cfg: dict, out: Path) -> dict:
    clf = _model(cfg)
    sets = list(cfg["data.eval"])
    if not sets:
        raise ConfigError("missing required setting: data.eval (name=path,...)")
    store = _store(cfg)
    rows = [_metric_row(name, evaluate(clf, load_dataset(path, _label_map(cfg), "test", name), store=store)) for name, path in sets]
    return {"metrics": str(_write_csv(out / "metrics.csv", METRIC_HEADER, rows))}


TCAV_HEADER = ["concept", "mean", "std", "p_value", "significant"]


def cmd_tcav(cfg: dict, out: Path) -> dict:
    concepts = list(cfg["tcav.concepts"])
    if len(concepts) < 2:
        raise ConfigError("tcav needs at least two concepts (tcav.concepts = name=path,...)")
    names = [n for n, _ in concepts]
    if not cfg["tcav.baseline"]:
        raise ConfigError("no random baseline concept flagged (set tcav.baseline)")
    if cfg["tcav.baseline"] not in names:
        raise ConfigError(f"baseline {cfg['tcav.baseline']!r} is not among the concepts {names}")
    _require(cfg, "data.inputs")
    clf = _model(cfg)
    store = _store(cfg)
    X = load_dataset(cfg["data.inputs"], _label_map(cfg), "pool").items
    reps = clf.represent(X, store)
    P, n_v, seed = cfg["tcav.P"], cfg["tcav.n_v"], cfg["tcav.seed"]
    dists = {}
    for name, path in concepts:
        cavs = build_cavs(clf, load_concept(path, name), P, n_v, _name_seed(seed, name), store)
        dists[name] = tcav_scores(clf, cavs, reps, allow_degenerate=cfg["tcav.allow_degenerate"])
    base = dists[cfg["tcav.baseline"]]
    rows = []
    for name in names:
        t = concept_significance(dists[name], base, cfg["tcav.alpha"])
        rows.append([name, fmt(dists[name].mean), fmt(dists[name].std), fmt(t.p_value), "true" if t.significant else "false"])
    score_rows = [[name, str(p), fmt(s)] for name in names for p, s in enumerate(dists[name].scores)]
    return {
        "tcav": str(_write_csv(out / "tcav.csv", TCAV_HEADER, rows)),
        "scores": str(_write_csv(out / "tcav_scores.csv", ["concept", "cav", "score"], score_rows)),
    }


DOE_HEADER = ["id", "text_sha1", "label", "explicitness", "doe", "confidence"]


def _doe_group(u) -> str:
    if u.label is None:
        return "unlabeled"
    return u.explicitness if u.label == 1 and u.explicitness != "unknown" else ("positive" if u.label == 1 else "negative")


def cmd_doe(cfg: dict, out: Path) -> dict:
    _require(cfg, "doe.concept", "data.inputs", "data.pool")
    clf = _model(cfg)
    store = _store(cfg)
    concept = load_concept(cfg["doe.concept"], "explicit")
    X = load_dataset(cfg["data.inputs"], _label_map(cfg), "pool").items
    pool = _load(cfg, "data.pool", "pool").items
    scorer = DoeScorer(clf, concept, clf.represent(X, store), cfg["doe.P"], cfg["doe.n_v"], cfg["doe.seed"], store=store)
    ranked = rank_scores(pool, scorer.score_many(pool))
    conf = dict(zip([u.id for u in pool], confidence_scores(clf, pool, store)))
    rows = [
        [u.id, hashlib.sha1(u.text.encode("utf-8")).hexdigest(), "" if u.label is None else str(u.label), u.explicitness,
         fmt(s.score), fmt(conf[u.id])]
        for u, s in ranked
    ]
    files = {"doe": str(_write_csv(out / "doe.csv", DOE_HEADER, rows))}

    groups: dict[str, dict[str, list[float]]] = {"doe": {}, "confidence": {}}
    for u, s in ranked:
        g = _doe_group(u)
        groups["doe"].setdefault(g, []).append(s.score)
        groups["confidence"].setdefault(g, []).append(conf[u.id])
    hist_rows = []
    for score, lo in (("doe", 0.0), ("confidence", 0.5)):
        edges, counts = histogram(groups[score], cfg["doe.hist_bins"], lo, 1.0)
        for g in sorted(counts):
            hist_rows += [[score, g, fmt(edges[j]), fmt(edges[j + 1]), str(int(c))] for j, c in enumerate(counts[g])]
    files["histogram"] = str(_write_csv(out / "histogram.csv", ["score", "group", "bin_low", "bin_high", "count"], hist_rows))

    if all(u.label is not None for u in pool):
        report = bin_analysis(clf, ranked, cfg["doe.bin_n"], store=store)
        bin_rows = [[str(b.label), str(b.index), str(b.n), fmt(b.doe_low), fmt(b.doe_high), fmt(b.doe_mean), fmt(b.recall)]
                    for b in report.bins]
        files["bins"] = str(_write_csv(out / "bins.csv", ["label", "bin", "n", "doe_low", "doe_high", "doe_mean", "recall"], bin_rows))
    return files


def cmd_augment(cfg: dict, out: Path) -> dict:
    _require(cfg, "data.train", "data.pool")
    if not cfg["data.eval"]:
        raise ConfigError("missing required setting: data.eval (name=path,...)")
    tcfg = _training_config(cfg)
    strategies = tuple(cfg["augment.strategies"])
    concept = X = None
    if "doe" in strategies:
        _require(cfg, "doe.concept", "data.inputs")
        concept = load_concept(cfg["doe.concept"], "explicit")
        X = load_dataset(cfg["data.inputs"], _label_map(cfg), "pool").items
    eval_sets = {name: load_dataset(path, _label_map(cfg), "test", name) for name, path in cfg["data.eval"]}
    try:
        plan = aug.AugmentationPlan(
            _load(cfg, "data.train", "train"), _load(cfg, "data.pool", "pool"), eval_sets, strategies,
            tuple(cfg["augment.N_values"]), tcfg, _load(cfg, "data.dev", "dev") if cfg["data.dev"] else None,
            concept, X if X is not None else (), cfg["doe.P"], cfg["doe.n_v"], cfg["augment.seed"],
            cfg["augment.base_eval"] or None,
        )
    except aug.AugmentError as exc:
        raise ConfigError(str(exc)) from None
    result = aug.run_sweep(plan, log=log.info)
    return {k: str(p) for k, p in aug.write_sweep(result, out).items()}


def cmd_vocab(cfg: dict, out: Path) -> dict:
    datasets = list(cfg["vocab.datasets"])
    if not datasets:
        raise ConfigError("missing required setting: vocab.datasets (name=path,...)")
    stop = vocab.read_word_list(cfg["vocab.stopwords"]) if cfg["vocab.stopwords"] else None
    lexicons = {name: vocab.read_word_list(path) for name, path in cfg["vocab.lexicons"]}
    profiles = [
        vocab.frequency_profile(load_dataset(path, _label_map(cfg), "train", name), cfg["vocab.k"], stop, cfg["vocab.min_length"])
        for name, path in datasets
    ]
    reports = vocab.pairwise_overlaps(profiles, lexicons)
    paths = {"table": out / "overlap.md", "overlap": out / "overlap.csv", "profiles": out / "profiles.csv"}
    paths["table"].write_text(vocab.markdown_table(reports, cfg["vocab.mask"] or None), encoding="utf-8")
    paths["overlap"].write_text(vocab.overlap_csv(reports), encoding="utf-8")
    paths["profiles"].write_text(vocab.profile_csv(profiles), encoding="utf-8")
    return {k: str(p) for k, p in paths.items()}


def _read_csv(path: Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def cmd_report(cfg: dict, out: Path) -> dict:
    """Render SVGs from the plot-data CSVs found in earlier run directories."""
    if not cfg["report.inputs"]:
        raise ConfigError("missing required setting: report.inputs (run directories)")
    files = {}
    for d in map(Path, cfg["report.inputs"]):
        if not d.is_dir():
            raise DataError(f"no such run directory: {d}")
        tag = d.name
        if (d / "plot_f1.csv").exists():
            rows = _read_csv(d / "plot_f1.csv")
            cols = [c for c in rows[0] if c != "N"]
            for eval_set in sorted({c.split(":", 1)[1] for c in cols}):
                series = {
                    c.split(":", 1)[0]: [(float(r["N"]), float(r[c])) for r in rows if r[c]]
                    for c in cols if c.endswith(":" + eval_set)
                }
                path = out / f"{tag}-f1-{eval_set}.svg"
                path.write_text(plots.line_chart(series, f"F1 on {eval_set}", "N added", "F1"), encoding="utf-8")
                files[path.stem] = str(path)
        if (d / "histogram.csv").exists():
            rows = _read_csv(d / "histogram.csv")
            for score in dict.fromkeys(r["score"] for r in rows):
                sub = [r for r in rows if r["score"] == score]
                groups = list(dict.fromkeys(r["group"] for r in sub))
                first = [r for r in sub if r["group"] == groups[0]]
                edges = [float(r["bin_low"]) for r in first] + [float(first[-1]["bin_high"])]
                counts = {g: [int(r["count"]) for r in sub if r["group"] == g] for g in groups}
                path = out / f"{tag}-hist-{score}.svg"
                path.write_text(plots.histogram_chart(edges, counts, f"{score} distribution", score), encoding="utf-8")
                files[path.stem] = str(path)
        if (d / "bins.csv").exists():
            rows = _read_csv(d / "bins.csv")
            series = {
                ("positive" if lab == "1" else "negative"): [(float(r["bin"]), float(r["recall"])) for r in rows if r["label"] == lab]
                for lab in ("1", "0")
            }
            path = out / f"{tag}-bins.svg"
            path.write_text(plots.line_chart(series, "recall over DoE-ascending bins", "bin", "recall"), encoding="utf-8")
            files[path.stem] = str(path)
    return files


COMMANDS = {
    "synth": (cmd_synth, "generate the synthetic two-domain corpus"),
    "train": (cmd_train, "train a classifier"),
    "eval": (cmd_eval, "evaluate a model on labeled datasets"),
    "tcav": (cmd_tcav, "TCAV score distributions per concept"),
    "doe": (cmd_doe, "DoE scores, histograms and bin analysis for a pool"),
    "augment": (cmd_augment, "augmentation sweep over N"),
    "vocab": (cmd_vocab, "positive-class vocabulary overlap"),
    "report": (cmd_report, "render SVG plots from earlier runs"),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="textcav", description=__doc__.split("\n\n")[0],
                                epilog="Any config key can be overridden with --section.key VALUE.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="key=value config file")
        sp.add_argument("--allow-degenerate", action="store_true", help="permit TCAV on a linear head")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def parse_overrides(extra: list[str]) -> dict[str, str]:
    out = {}
    i = 0
    while i < len(extra):
        arg = extra[i]
        if not arg.startswith("--") or "." not in arg:
            raise ConfigError(f"unrecognized argument {arg!r}")
        key = arg[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"missing value for {arg}")
            value = extra[i + 1]
            i += 2
        out[key] = value
    return out


def _fail(code: int, exc: BaseException) -> int:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        raw = read_config_file(args.config) if args.config else {}
        raw.update(parse_overrides(extra))
        if args.allow_degenerate:
            raw["tcav.allow_degenerate"] = "true"
        cfg = resolve(raw)
        out = output_dir(cfg, args.command)
        files = COMMANDS[args.command][0](cfg, out)
    except (ConfigError, DegenerateHeadError, CorpusSpecError) as exc:
        return _fail(EXIT_CONFIG, exc)
    except (NumericError, MetricError, FloatingPointError) as exc:
        return _fail(EXIT_NUMERIC, exc)
    except (DataError, EncoderError, TrainingError, vocab.VocabError, FileNotFoundError) as exc:
        return _fail(EXIT_DATA, exc)
    print(json.dumps({"status": "ok", "command": args.command, "out_dir": str(out), "files": files}, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
