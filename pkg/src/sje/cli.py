"""Command-line entry point.

Exit codes: 0 success, 2 validation error (including malformed input files
and bad flags), 3 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

from . import embeddings as emb
from . import ensemble, harness, model, synth, taxonomy, text
from .errors import ValidationError

EXIT_VALIDATION = 2
EXIT_IO = 3


def _floats(s):
    try:
        return tuple(float(v) for v in s.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}") from None


def _ints(s):
    try:
        return tuple(int(v) for v in s.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None


def _add_data_args(p, stochastic=True):
    p.add_argument("--features", required=True, help="feature-matrix file")
    p.add_argument("--table", action="append", required=True, dest="tables",
                   help="embedding-table file (repeatable)")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--split", help="split file: class<TAB>train|val|test")
    g.add_argument("--split-counts", type=_ints, metavar="TRAIN,VAL,TEST",
                   help="draw a random class split (uses --seed)")
    p.add_argument("--test-features", help="separate feature file for test classes")
    p.add_argument("--no-normalize", action="store_true", help="skip l2 normalisation of table rows")
    p.add_argument("--seed", type=int, required=stochastic)


def _add_train_args(p):
    p.add_argument("--eta-grid", type=_floats, default=harness.DEFAULT_ETA_GRID)
    p.add_argument("--max-epochs", type=int, default=50)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--init-scale", type=float, default=1e-3)


def _config(args, mode):
    if args.split_counts is not None and args.seed is None:
        raise ValidationError("--seed is required with --split-counts")
    return harness.ExperimentConfig(
        features=args.features,
        tables=tuple(args.tables),
        split=args.split,
        split_counts=args.split_counts,
        test_features=args.test_features,
        mode=mode,
        eta_grid=getattr(args, "eta_grid", harness.DEFAULT_ETA_GRID),
        alpha_step=getattr(args, "alpha_step", 0.1),
        alpha=getattr(args, "alpha", None),
        normalize=not args.no_normalize,
        seed=args.seed if args.seed is not None else 0,
        max_epochs=getattr(args, "max_epochs", 50),
        patience=getattr(args, "patience", 5),
        init_scale=getattr(args, "init_scale", 1e-3),
        report=getattr(args, "out", None),
    )


def _prepared(cfg):
    data, tables, split, test_data = harness.load_inputs(cfg)
    tables = [t.reindex(data.class_names) if t.class_names != data.class_names else t for t in tables]
    if cfg.normalize:
        tables = [emb.l2_normalize_rows(t) for t in tables]
    return data, tables, split, test_data


# --------------------------------------------------------------------------
# Commands


def cmd_train(args):
    cfg = _config(args, args.mode)
    data, tables, split, test_data = _prepared(cfg)
    table = ensemble.concatenate_embeddings(tables) if args.mode == "cnc" else tables[0]
    trainval, _ = harness.holdout(data, split, test_data)
    sel = harness.cross_validate_eta(trainval, table, split, cfg.eta_grid, cfg.train_config(1.0))
    model.save_model(sel.model, args.model_out)
    if args.report:
        harness.emit_report(harness.Report(
            mode=args.mode, seed=cfg.seed, normalize=cfg.normalize,
            classes=(len(split.train), len(split.val), len(split.test)),
            eta=(sel.eta,), member_val_accuracy=(sel.val_accuracy,),
            cv=tuple((0, e, a) for e, a in sel.scores), val_accuracy=sel.val_accuracy,
            provenance=(("eta", "val-cv"), ("epoch", "val-early-stopping")),
        ), args.report)


def cmd_eval(args):
    cfg = _config(args, "single" if len(args.tables) == 1 else "cnc")
    data, tables, split, test_data = _prepared(cfg)
    _, test = harness.holdout(data, split, test_data)
    ids = sorted(split.test)
    if args.ensemble:
        em = ensemble.load_ensemble(args.ensemble, tables)
        pred, true, mode = ensemble.ensemble_predict_batch(test.features, em, ids), test.labels, "cmb"
        alpha = em.alpha
    else:
        m = model.load_model(args.model)
        table = ensemble.concatenate_embeddings(tables)
        pred, true = model.evaluate(m, test, table, ids)
        mode, alpha = cfg.mode, None
    report = harness.Report(
        mode=mode, seed=cfg.seed, normalize=cfg.normalize,
        classes=(len(split.train), len(split.val), len(split.test)),
        alpha=alpha, test_accuracy=model.per_class_accuracy(pred, true),
        per_class=harness.class_breakdown(pred, true, data.class_names),
    )
    harness.emit_report(report, args.out)
    print(f"test_accuracy={report.test_accuracy!r}")


def cmd_combine(args):
    cfg = _config(args, "cmb")
    data, tables, split, test_data = _prepared(cfg)
    trainval, _ = harness.holdout(data, split, test_data)
    sels = [harness.cross_validate_eta(trainval, t, split, cfg.eta_grid, cfg.train_config(1.0)) for t in tables]
    members = [(s.model, t) for s, t in zip(sels, tables)]
    if cfg.alpha is not None:
        alpha, source = cfg.alpha, "fixed"
    else:
        alpha, _ = ensemble.grid_search_alpha(members, trainval, split, cfg.alpha_step)
        source = "val-grid"
    em = ensemble.EnsembleModel(members, alpha)
    out = Path(args.ensemble_out)
    paths = []
    for k, s in enumerate(sels):
        p = out.with_name(f"{out.stem}.member{k}.model")
        model.save_model(s.model, p)
        paths.append(p.name)
    ensemble.save_ensemble(em, paths, out)
    if args.report:
        harness.emit_report(harness.Report(
            mode="cmb", seed=cfg.seed, normalize=cfg.normalize,
            classes=(len(split.train), len(split.val), len(split.test)),
            eta=tuple(s.eta for s in sels), member_val_accuracy=tuple(s.val_accuracy for s in sels),
            cv=tuple((k, e, a) for k, s in enumerate(sels) for e, a in s.scores), alpha=em.alpha,
            provenance=(("eta", "val-cv"), ("epoch", "val-early-stopping"), ("alpha", source)),
        ), args.report)


def cmd_report(args):
    cfg = _config(args, args.mode)
    report = harness.run_zero_shot(cfg)
    logging.getLogger(__name__).info("wall-clock %.3fs", report.wall_clock)
    print(f"test_accuracy={report.test_accuracy!r}")


def cmd_synth(args):
    task = synth.generate_planted_task(
        D=args.dim_in, E=args.dim_out, C=args.classes, samples_per_class=args.per_class,
        noise=args.noise, split=args.split, seed=args.seed,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    emb.save_feature_matrix(task.data, out / "features.txt")
    emb.save_output_table(task.table, out / "table.txt")
    emb.save_split(task.split, task.table.class_names, out / "split.txt")
    if args.noise_table:
        emb.save_output_table(synth.noise_table(task, seed=args.seed + 1), out / "noise_table.txt")


def cmd_build_bow(args):
    corpus = text.load_corpus(args.corpus)
    vocab = text.build_vocabulary(corpus, args.min_df, args.max_df, args.vocab_size)
    emb.save_output_table(text.bow_embedding(corpus, vocab), args.out)


def cmd_build_hierarchy(args):
    tax = taxonomy.load_taxonomy(args.taxonomy, args.leaf_map, args.counts, args.attach_under, args.dag)
    ic = taxonomy.information_content(tax)
    classes = list(tax.class_nodes)
    table = taxonomy.build_hierarchy_embedding(tax, ic, classes, args.similarity, args.invert)
    emb.save_output_table(table, args.out)


def cmd_build_wsw2v(args):
    corpus = text.load_corpus(args.corpus)
    wv = text.load_word_vectors(args.word_vectors)
    cfg = text.FinetuneConfig(window=args.window, negatives=args.negatives, step=args.step,
                              epochs=args.epochs, seed=args.seed)
    emb.save_output_table(text.ws_w2v_finetune(corpus, wv, cfg), args.out)


def cmd_build_binarize(args):
    table = emb.load_output_table(args.table)
    emb.save_output_table(emb.binarize_attributes(table), args.out)


def build_parser():
    parser = argparse.ArgumentParser(prog="sje", description="Zero-shot classification with structured joint embeddings")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="cross-validate eta and write the selected model")
    _add_data_args(p)
    _add_train_args(p)
    p.add_argument("--mode", choices=("single", "cnc"), default="single")
    p.add_argument("--model-out", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a saved model or ensemble on the test classes")
    _add_data_args(p, stochastic=False)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--model")
    g.add_argument("--ensemble")
    p.add_argument("--out", required=True, help="report path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("combine", help="train one model per table and grid-search the weights")
    _add_data_args(p)
    _add_train_args(p)
    p.add_argument("--alpha-step", type=float, default=0.1)
    p.add_argument("--alpha", type=_floats, help="fixed weights instead of a grid search")
    p.add_argument("--ensemble-out", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_combine)

    p = sub.add_parser("report", help="run the full zero-shot protocol and write its report")
    _add_data_args(p)
    _add_train_args(p)
    p.add_argument("--mode", choices=harness.MODES, default="single")
    p.add_argument("--alpha-step", type=float, default=0.1)
    p.add_argument("--alpha", type=_floats)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", help="write a planted task in the package file formats")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--dim-in", type=int, default=16)
    p.add_argument("--dim-out", type=int, default=8)
    p.add_argument("--classes", type=int, default=20)
    p.add_argument("--per-class", type=int, default=50)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--split", type=_ints, default=(12, 4, 4), metavar="TRAIN,VAL,TEST")
    p.add_argument("--noise-table", action="store_true", help="also write an uninformative table")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build-embedding", help="build a class embedding table")
    kinds = p.add_subparsers(dest="kind", required=True)

    b = kinds.add_parser("bow")
    b.add_argument("--corpus", required=True, help="directory with one document per class")
    b.add_argument("--min-df", type=int, default=1)
    b.add_argument("--max-df", type=float, default=1.0, help="maximum document-frequency fraction")
    b.add_argument("--vocab-size", type=int)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_build_bow)

    b = kinds.add_parser("hierarchy")
    b.add_argument("--taxonomy", required=True, help="parent<TAB>child edge file")
    b.add_argument("--leaf-map", required=True, help="class<TAB>node[<TAB>ancestor] file")
    b.add_argument("--counts", help="node<TAB>count file")
    b.add_argument("--attach-under", help="ancestor for classes missing from the hierarchy")
    b.add_argument("--similarity", choices=taxonomy.SIMILARITY_KINDS, required=True)
    b.add_argument("--invert", action="store_true", help="emit 1/(1+path) and -jcn")
    b.add_argument("--dag", action="store_true", help="allow nodes with several parents")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_build_hierarchy)

    b = kinds.add_parser("wsw2v")
    b.add_argument("--corpus", required=True)
    b.add_argument("--word-vectors", required=True)
    b.add_argument("--seed", type=int, required=True)
    b.add_argument("--window", type=int, default=35)
    b.add_argument("--negatives", type=int, default=5)
    b.add_argument("--step", type=float, default=0.025)
    b.add_argument("--epochs", type=int, default=10)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_build_wsw2v)

    b = kinds.add_parser("binarize")
    b.add_argument("--table", required=True, help="attributes-continuous table")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_build_binarize)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            args.func(args)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
