"""Zero-shot experiment protocol: selection on val classes, one final test pass."""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import embeddings as emb
from .embeddings import InputEmbeddingSet, OutputEmbeddingTable, SplitSpec
from .ensemble import EnsembleModel, concatenate_embeddings, ensemble_predict_batch, grid_search_alpha
from .errors import ParseError, ValidationError, ZeroShotLeakError
from .model import CompatibilityModel, TrainConfig, evaluate, per_class_accuracy, train

log = logging.getLogger(__name__)

MODES = ("single", "cnc", "cmb")
DEFAULT_ETA_GRID = (1e-3, 1e-2, 1e-1, 1.0)


def _check_table_count(mode, n):
    if mode == "cmb" and n < 2:
        raise ValidationError("mode=cmb needs at least two embedding tables")
    if mode == "single" and n != 1:
        raise ValidationError("mode=single takes exactly one embedding table")
    if n < 1:
        raise ValidationError("at least one embedding table is required")


@dataclass(frozen=True)
class ExperimentConfig:
    features: str | None = None
    tables: tuple = ()
    split: str | None = None
    split_counts: tuple | None = None
    test_features: str | None = None
    mode: str = "single"
    eta_grid: tuple = DEFAULT_ETA_GRID
    alpha_step: float = 0.1
    alpha: tuple | None = None
    normalize: bool = True
    seed: int = 0
    max_epochs: int = 50
    patience: int = 5
    init_scale: float = 1e-3
    report: str | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}")
        if self.tables:
            _check_table_count(self.mode, len(self.tables))
        if not self.eta_grid:
            raise ValidationError("eta grid is empty")
        if self.split is not None and self.split_counts is not None:
            raise ValidationError("give either a split file or split counts, not both")
        if self.split_counts is not None and len(self.split_counts) != 3:
            raise ValidationError("split counts must be TRAIN,VAL,TEST")

    def train_config(self, eta):
        return TrainConfig(eta=eta, max_epochs=self.max_epochs, patience=self.patience,
                           seed=self.seed, init_scale=self.init_scale)


@dataclass(frozen=True)
class Report:
    mode: str
    seed: int
    normalize: bool = True
    classes: tuple = ()  # (n_train, n_val, n_test)
    eta: tuple = ()
    member_val_accuracy: tuple = ()
    cv: tuple = ()  # (member, eta, val accuracy)
    alpha: tuple | None = None
    val_accuracy: float | None = None
    test_accuracy: float | None = None
    per_class: tuple = ()  # (class name, n, correct)
    provenance: tuple = ()  # (selected quantity, source)
    wall_clock: float = field(default=0.0, compare=False)


@dataclass(frozen=True)
class EtaSelection:
    eta: float
    val_accuracy: float
    model: CompatibilityModel
    scores: tuple  # (eta, val accuracy) per grid point, grid order


def cross_validate_eta(data, table, split, grid, base: TrainConfig | None = None, on_update=None) -> EtaSelection:
    """Train once per step size; keep the best val accuracy, ties to the smaller step.

    Every grid point shares ``base`` (seed, epochs, patience) apart from eta.
    """
    if not len(grid):
        raise ValidationError("eta grid is empty")
    base = base or TrainConfig()
    scores, best = [], None
    for eta in sorted(grid):
        model = train(data, table, split, replace(base, eta=float(eta)), on_update=on_update)
        acc = model.val_accuracy if model.val_accuracy is not None else 0.0
        scores.append((float(eta), acc))
        log.info("eta=%g val_accuracy=%.4f best_epoch=%d", eta, acc, model.best_epoch)
        if best is None or acc > best.val_accuracy:
            best = EtaSelection(float(eta), acc, model, ())
    return replace(best, scores=tuple(scores))


def class_breakdown(pred, true, class_names):
    rows = []
    for c in np.unique(true):
        mask = true == c
        rows.append((class_names[c], int(mask.sum()), int((pred[mask] == c).sum())))
    return tuple(rows)


def holdout(data, split, test_data):
    trainval = data.select(split.train | split.val)
    if test_data is None:
        test = data.select(split.test)
    else:
        if np.isin(data.labels, sorted(split.test)).any():
            raise ZeroShotLeakError("training features contain samples of a test class")
        test = test_data.select(split.test)
    return trainval, test


def run_experiment(
    data: InputEmbeddingSet,
    tables: Sequence[OutputEmbeddingTable],
    split: SplitSpec,
    cfg: ExperimentConfig,
    test_data: InputEmbeddingSet | None = None,
    on_update: Callable | None = None,
) -> Report:
    """The protocol on in-memory inputs; class ids follow ``data.class_names``."""
    start = time.perf_counter()
    _check_table_count(cfg.mode, len(tables))
    tables = [t.reindex(data.class_names) if t.class_names != data.class_names else t for t in tables]
    if cfg.normalize:
        tables = [emb.l2_normalize_rows(t) for t in tables]
    trainval, test = holdout(data, split, test_data)
    test_ids = sorted(split.test)
    provenance = [("eta", "val-cv"), ("epoch", "val-early-stopping")]

    if cfg.mode in ("single", "cnc"):
        table = concatenate_embeddings(tables) if cfg.mode == "cnc" else tables[0]
        sel = cross_validate_eta(trainval, table, split, cfg.eta_grid, cfg.train_config(1.0), on_update)
        # the single test pass
        pred, true = evaluate(sel.model, test, table, test_ids)
        etas, member_acc = (sel.eta,), (sel.val_accuracy,)
        cv = tuple((0, e, a) for e, a in sel.scores)
        alpha, val_acc = None, sel.val_accuracy
    else:
        sels = [cross_validate_eta(trainval, t, split, cfg.eta_grid, cfg.train_config(1.0), on_update) for t in tables]
        members = [(s.model, t) for s, t in zip(sels, tables)]
        if cfg.alpha is not None:
            alpha = tuple(cfg.alpha)
            em = EnsembleModel(members, alpha)
            val = trainval.select(split.val)
            val_acc = per_class_accuracy(ensemble_predict_batch(val.features, em, sorted(split.val)), val.labels)
            provenance.append(("alpha", "fixed"))
        else:
            alpha, val_acc = grid_search_alpha(members, trainval, split, cfg.alpha_step)
            em = EnsembleModel(members, alpha)
            provenance.append(("alpha", "val-grid"))
        pred = ensemble_predict_batch(test.features, em, test_ids)
        true = test.labels
        etas = tuple(s.eta for s in sels)
        member_acc = tuple(s.val_accuracy for s in sels)
        cv = tuple((k, e, a) for k, s in enumerate(sels) for e, a in s.scores)

    return Report(
        mode=cfg.mode,
        seed=cfg.seed,
        normalize=cfg.normalize,
        classes=(len(split.train), len(split.val), len(split.test)),
        eta=etas,
        member_val_accuracy=member_acc,
        cv=cv,
        alpha=alpha,
        val_accuracy=val_acc,
        test_accuracy=per_class_accuracy(pred, true),
        per_class=class_breakdown(pred, true, data.class_names),
        provenance=tuple(provenance),
        wall_clock=time.perf_counter() - start,
    )


def load_inputs(cfg: ExperimentConfig):
    """Tables, features (labels aligned to the first table), split and optional test features."""
    if cfg.features is None or not cfg.tables:
        raise ValidationError("features and at least one embedding table are required")
    tables = [emb.load_output_table(p) for p in cfg.tables]
    names = tables[0].class_names
    data = emb.load_feature_matrix(cfg.features, names)
    test_data = emb.load_feature_matrix(cfg.test_features, names) if cfg.test_features else None
    if cfg.split is not None:
        split = emb.load_split(cfg.split, names)
    elif cfg.split_counts is not None:
        n_train, n_val, n_test = cfg.split_counts
        split = emb.make_split(range(len(names)), n_train=n_train, n_val=n_val, n_test=n_test, seed=cfg.seed)
    else:
        raise ValidationError("a split file or split counts are required")
    return data, tables, split, test_data


def run_zero_shot(cfg: ExperimentConfig, on_update=None) -> Report:
    data, tables, split, test_data = load_inputs(cfg)
    report = run_experiment(data, tables, split, cfg, test_data, on_update)
    if cfg.report is not None:
        emit_report(report, cfg.report)
    return report


# --------------------------------------------------------------------------
# Report file: key=value lines, then a [per_class] CSV block


def _fmt(v):
    return repr(float(v))


def _check_accuracy(name, v):
    if v is not None and not 0.0 <= v <= 1.0:
        raise ValidationError(f"{name}={v} outside [0, 1]")


def format_report(report: Report) -> str:
    _check_accuracy("val_accuracy", report.val_accuracy)
    _check_accuracy("test_accuracy", report.test_accuracy)
    for a in report.member_val_accuracy:
        _check_accuracy("member_val_accuracy", a)
    for _, _, a in report.cv:
        _check_accuracy("cv", a)
    lines = [
        "# sje zero-shot report",
        f"mode={report.mode}",
        f"seed={report.seed}",
        f"normalize={'true' if report.normalize else 'false'}",
    ]
    if report.classes:
        lines.append("classes=" + ",".join(str(n) for n in report.classes))
    if report.eta:
        lines.append("eta=" + ",".join(_fmt(e) for e in report.eta))
    if report.member_val_accuracy:
        lines.append("member_val_accuracy=" + ",".join(_fmt(a) for a in report.member_val_accuracy))
    for k, e, a in report.cv:
        lines.append(f"cv[{k},{_fmt(e)}]={_fmt(a)}")
    if report.alpha is not None:
        lines.append("alpha=" + ",".join(_fmt(a) for a in report.alpha))
    if report.val_accuracy is not None:
        lines.append(f"val_accuracy={_fmt(report.val_accuracy)}")
    if report.test_accuracy is not None:
        lines.append(f"test_accuracy={_fmt(report.test_accuracy)}")
    for key, source in report.provenance:
        lines.append(f"provenance.{key}={source}")
    if report.per_class:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "n", "correct", "accuracy"])
        for name, n, correct in report.per_class:
            w.writerow([name, n, correct, _fmt(correct / n)])
        lines.append("[per_class]")
        lines.append(buf.getvalue().rstrip("\n"))
    return "\n".join(lines) + "\n"


def emit_report(report: Report, path):
    text = format_report(report)
    Path(path).write_text(text, encoding="utf-8")


def _floats(v):
    return tuple(float(x) for x in v.split(","))


def parse_report(text: str) -> Report:
    head, _, table = text.partition("[per_class]\n")
    fields = {"cv": [], "provenance": []}
    for lineno, line in enumerate(head.splitlines(), start=1):
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if key.startswith("cv[") and key.endswith("]"):
            k, e = key[3:-1].split(",")
            fields["cv"].append((int(k), float(e), float(value)))
            continue
        if not sep:
            raise ParseError(f"expected key=value at line {lineno}", line=lineno)
        if key.startswith("provenance."):
            fields["provenance"].append((key[len("provenance."):], value))
            continue
        fields[key] = value
    try:
        per_class = tuple(
            (r["class"], int(r["n"]), int(r["correct"])) for r in csv.DictReader(io.StringIO(table))
        ) if table else ()
        return Report(
            mode=fields["mode"],
            seed=int(fields["seed"]),
            normalize=fields.get("normalize", "true") == "true",
            classes=tuple(int(n) for n in fields["classes"].split(",")) if "classes" in fields else (),
            eta=_floats(fields["eta"]) if "eta" in fields else (),
            member_val_accuracy=_floats(fields["member_val_accuracy"]) if "member_val_accuracy" in fields else (),
            cv=tuple(fields["cv"]),
            alpha=_floats(fields["alpha"]) if "alpha" in fields else None,
            val_accuracy=float(fields["val_accuracy"]) if "val_accuracy" in fields else None,
            test_accuracy=float(fields["test_accuracy"]) if "test_accuracy" in fields else None,
            per_class=per_class,
            provenance=tuple(fields["provenance"]),
        )
    except (KeyError, ValueError) as e:
        raise ParseError(f"malformed report: {e}") from None


def read_report(path) -> Report:
    return parse_report(Path(path).read_text(encoding="utf-8"))
