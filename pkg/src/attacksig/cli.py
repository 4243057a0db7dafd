"""Command-line pipeline: one subcommand per stage, handing off through files.

Exit codes: 0 success, 1 partial data failure, 2 configuration or contract
failure (bad config, missing labels, checkpoint version mismatch).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import classifier as clf
from .binfmt import CheckpointError
from .config import PipelineConfig, load_config
from .corpus import (
    ConfigError,
    DatasetManifest,
    UtteranceRecord,
    default_synth_config,
    materialize,
    parse_asvspoof_protocol,
    parse_split,
    read_manifest,
    split_in_domain,
    split_out_of_domain,
    synth_corpus,
    write_manifest,
)
from .embedder import (
    EmbedderDims,
    EmbedderParams,
    embed_many,
    grad_check,
    load_checkpoint,
    log_mel,
    save_checkpoint,
    tiny_batch,
    train,
)
from .embedder.export import read_embeddings, write_embeddings
from .features import FEATURE_NAMES, extract_signature, read_feature_table, write_feature_table
from .metrics import avg_class_conditional_variance, pca_2d, per_feature_report, scatter_export, standard_normalize, \
    write_cluster_report

logger = logging.getLogger("attacksig")

EXIT_OK, EXIT_PARTIAL, EXIT_CONTRACT = 0, 1, 2


class ContractError(Exception):
    """Raised for failures that map to exit code 2."""


# --------------------------------------------------------------------------
# helpers

def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def _manifest_path(args, cfg):
    path = getattr(args, "manifest", None) or cfg.manifest
    if not path:
        raise ContractError("no manifest given (--manifest or config 'manifest')")
    return path


def _load_table(args):
    """(ids, labels, X) from --features CSV or --embeddings JSONL."""
    if getattr(args, "features", None):
        ids, labels, X, _ = read_feature_table(args.features)
    elif getattr(args, "embeddings", None):
        ids, labels, X = read_embeddings(args.embeddings)
    else:
        raise ContractError("one of --features or --embeddings is required")
    return ids, labels, X


def _require_labels(ids, labels):
    missing = [u for u, lab in zip(ids, labels) if lab is None]
    if missing:
        raise ContractError(f"{len(missing)} row(s) have no label, e.g. {missing[0]!r}")


def _table_manifest(ids, labels) -> DatasetManifest:
    return DatasetManifest(tuple(UtteranceRecord(u, None, lab) for u, lab in zip(ids, labels)))


def _select(ids, labels, split, part, seed):
    """Row indices of ``part`` ('train', 'test' or 'all') under ``split``."""
    if split is None or part == "all":
        return np.arange(len(ids))
    _require_labels(ids, labels)
    train_m, test_m = _split(_table_manifest(ids, labels), split, seed)
    keep = {r.utterance_id for r in (train_m if part == "train" else test_m)}
    return np.array([i for i, u in enumerate(ids) if u in keep], dtype=int)


def _split(m, split, seed):
    try:
        mode, value = parse_split(split)
        if mode == "in-domain":
            return split_in_domain(m, value, seed)
        return split_out_of_domain(m, value)
    except ValueError as exc:
        raise ContractError(f"split {split!r}: {exc}") from None


def _classifier_split(ids, labels, split, seed):
    """Train/test indices for the classifier.

    In-domain splits every label; out-of-domain restricts to the held-out
    labels (unseen by the embedder) and splits those 90/10.
    """
    _require_labels(ids, labels)
    m = _table_manifest(ids, labels)
    mode, value = parse_split(split)
    if mode == "out-of-domain":
        _, m = _split(m, split, seed)
        value = 0.9
    try:
        train_m, test_m = split_in_domain(m, value, seed)
    except ValueError as exc:
        raise ContractError(str(exc)) from None
    pos = {u: i for i, u in enumerate(ids)}
    return (np.array([pos[r.utterance_id] for r in train_m], dtype=int),
            np.array([pos[r.utterance_id] for r in test_m], dtype=int))


def _pool_map(fn, items, jobs):
    """Ordered map, in worker processes when jobs > 1."""
    if jobs <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def _extract_one(job):
    rec, frame = job
    try:
        return extract_signature(rec, frame), None
    except Exception as exc:  # noqa: BLE001 - per-file failures are reported, not fatal
        return None, f"{type(exc).__name__}: {exc}"


def _mel_one(job):
    rec, mel = job
    try:
        return log_mel(rec.load(), mel), None
    except Exception as exc:  # noqa: BLE001
        return None, f"{type(exc).__name__}: {exc}"


# --------------------------------------------------------------------------
# commands

def cmd_synth_corpus(args):
    cfg = _config(args)
    synth = cfg.synth or default_synth_config()
    if args.utterances is not None:
        synth = replace(synth, utterances_per_attacker=args.utterances)
    if args.seed is not None:
        synth = replace(synth, seed=args.seed)
    synth.validate()
    out = Path(args.out)
    m = materialize(synth_corpus(synth), out)
    write_manifest(m, out / "manifest.jsonl", relative=True)
    with open(out / "synth_config.json", "w", encoding="utf-8") as fh:
        json.dump(synth.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    logger.info("wrote %d utterances for labels %s to %s", len(m), ",".join(m.label_names()), out)
    return EXIT_OK


def cmd_import_asvspoof(args):
    m = parse_asvspoof_protocol(args.protocol, args.audio_dir)
    missing = sum(r.source is None for r in m.records)
    write_manifest(m, args.out)
    logger.info("wrote %d records (%d without audio) for labels %s", len(m), missing, ",".join(m.label_names()))
    return EXIT_PARTIAL if missing else EXIT_OK


def cmd_extract_features(args):
    cfg = _config(args)
    m = read_manifest(_manifest_path(args, cfg))
    results = _pool_map(_extract_one, [(r, cfg.frame) for r in m.records], args.jobs)
    rows, failed = [], 0
    for r, (sig, err) in zip(m.records, results):
        if err is not None:
            failed += 1
            logger.error("%s: %s", r.utterance_id, err)
            continue
        rows.append((r.utterance_id, r.label, sig))
    write_feature_table(rows, args.out)
    logger.info("wrote %d feature rows (%d failed) to %s", len(rows), failed, args.out)
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_eval_features(args):
    ids, labels, X, _ = read_feature_table(args.features)
    _require_labels(ids, labels)
    rows = per_feature_report(X, labels, FEATURE_NAMES)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["feature", "var_c"])
        for name, v in rows:
            out.writerow([name, f"{v:.9g}"])
    logger.info("average var_C over %d labels: %.4f", len(set(labels)), rows[-1][1])
    return EXIT_OK


def cmd_train_embedder(args):
    cfg = _config(args)
    m = read_manifest(_manifest_path(args, cfg))
    if args.split:
        m, _ = _split(m, args.split, cfg.seed)
    tc = cfg.training
    overrides = {k: getattr(args, k) for k in ("steps", "learning_rate", "hidden", "d_e", "n_classes", "n_utterances")
                 if getattr(args, k) is not None}
    tc = replace(tc, seed=cfg.seed, **overrides)
    logger.info("training labels: %s (%d utterances)", ",".join(m.label_names()), len(m))
    frames = _featurize(m, cfg.mel, args.jobs)
    params, log = train(m, tc, cfg.mel, frames=frames)
    save_checkpoint(params, args.out, cfg.mel)
    if args.log:
        with open(args.log, "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["step", "loss", "grad_norm"])
            for step, loss, norm in log:
                out.writerow([step, repr(float(loss)), repr(float(norm))])
    if log:
        logger.info("loss %.4f -> %.4f over %d steps", log[0][1], log[-1][1], len(log))
    return EXIT_OK


def _featurize(m, mel, jobs):
    results = _pool_map(_mel_one, [(r, mel) for r in m.records], jobs)
    for r, (_, err) in zip(m.records, results):
        if err is not None:
            raise ContractError(f"{r.utterance_id}: {err}")
    return [f for f, _ in results]


def cmd_embed(args):
    cfg = _config(args)
    m = read_manifest(_manifest_path(args, cfg))
    params, mel = load_checkpoint(args.checkpoint or cfg.checkpoint)
    results = _pool_map(_mel_one, [(r, mel) for r in m.records], args.jobs)
    ok = [i for i, (_, err) in enumerate(results) if err is None]
    for r, (_, err) in zip(m.records, results):
        if err is not None:
            logger.error("%s: %s", r.utterance_id, err)
    E = embed_many(params, [results[i][0] for i in ok]) if ok else np.zeros((0, params.dims.d_e))
    write_embeddings([m.records[i].utterance_id for i in ok], [m.records[i].label for i in ok], E, args.out)
    logger.info("wrote %d embeddings to %s", len(ok), args.out)
    return EXIT_OK if len(ok) == len(m) else EXIT_PARTIAL


def cmd_eval_clusters(args):
    seed = _config(args).seed
    ids, labels, X = _load_table(args)
    _require_labels(ids, labels)
    idx = _select(ids, labels, args.split, args.part, seed)
    report = avg_class_conditional_variance(X[idx], [labels[i] for i in idx])
    write_cluster_report(report, args.out)
    logger.info("var_C %.4f over %d classes (%d rows)", report.average, len(report.classes), report.n)
    return EXIT_OK


def cmd_project(args):
    seed = _config(args).seed
    ids, labels, X = _load_table(args)
    idx = _select(ids, labels, args.split, args.part, seed)
    Xn = standard_normalize(X[idx])[0]
    p = pca_2d(Xn)
    scatter_export(p, [labels[i] for i in idx], args.out)
    logger.info("explained variance ratio %s", np.array2string(p.explained_variance_ratio, precision=3))
    return EXIT_OK


def cmd_train_classifier(args):
    cfg = _config(args)
    ids, labels, X = _load_table(args)
    tr, te = _classifier_split(ids, labels, args.split, cfg.seed)
    cc = replace(cfg.classifier, seed=cfg.seed)
    if args.epochs is not None:
        cc = replace(cc, epochs=args.epochs)
    logger.info("classifier train labels: %s", ",".join(sorted({labels[i] for i in tr})))
    p = clf.train_classifier(X[tr], [labels[i] for i in tr], cc)
    clf.save_classifier(p, args.out)
    if args.report:
        rep = clf.evaluate(p, X[te], [labels[i] for i in te])
        clf.write_report(rep, f"{args.report}.csv", f"{args.report}.json")
        logger.info("test accuracy %.4f on %d rows (baseline %.4f)", rep.accuracy, len(te), 1 / len(p.labels))
    return EXIT_OK


def cmd_classify(args):
    ids, labels, X = _load_table(args)
    p = clf.load_classifier(args.checkpoint)
    probs = clf.predict_proba(p, X)
    pred = [p.labels[i] for i in np.argmax(probs, axis=1)]
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["utterance_id", "label", "predicted", "probability"])
        for u, lab, q, row in zip(ids, labels, pred, probs):
            out.writerow([u, lab or "", q, f"{row.max():.9g}"])
    if args.report:
        _require_labels(ids, labels)
        rep = clf.report_from_predictions(labels, pred, p.labels)
        clf.write_report(rep, f"{args.report}.csv", f"{args.report}.json")
        logger.info("accuracy %.4f", rep.accuracy)
    return EXIT_OK


def cmd_grad_check(args):
    seed = _config(args).seed
    dims = EmbedderDims(n_mels=args.n_mels, hidden=args.hidden, d_e=args.d_e)
    params = EmbedderParams.init(dims, seed=seed)
    batch = tiny_batch(args.n_mels, args.n_classes, args.n_utterances, seed=seed)
    res = grad_check(params, batch, eps=args.eps, max_entries=args.max_entries, seed=seed)
    report = {
        "max_rel_error": res.max_rel_error,
        "worst_param": res.worst_param,
        "worst_index": list(res.worst_index),
        "n_checked": res.n_checked,
        "eps": res.eps,
        "tolerance": args.tolerance,
        "passed": res.passed(args.tolerance),
    }
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    logger.info("max relative error %.3g at %s%s", res.max_rel_error, res.worst_param, res.worst_index)
    return EXIT_OK if report["passed"] else EXIT_PARTIAL


# --------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="attacksig", description="Attacker signature pipeline.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="pipeline config JSON")
        p.add_argument("--seed", type=int, default=None)
        p.set_defaults(func=fn)
        return p

    def table_inputs(p):
        g = p.add_mutually_exclusive_group(required=True)
        g.add_argument("--features", help="feature table CSV")
        g.add_argument("--embeddings", help="embeddings JSONL")

    p = add("synth-corpus", cmd_synth_corpus, "generate the synthetic attacker corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--utterances", type=int, default=None, help="utterances per attacker")

    p = add("import-asvspoof", cmd_import_asvspoof, "manifest from an ASVspoof LA protocol file")
    p.add_argument("--protocol", required=True)
    p.add_argument("--audio-dir", required=True)
    p.add_argument("--out", required=True)

    p = add("extract-features", cmd_extract_features, "16 low-level features per utterance")
    p.add_argument("--manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)

    p = add("eval-features", cmd_eval_features, "per-feature class-conditional variance")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)

    p = add("train-embedder", cmd_train_embedder, "train the embedding network")
    p.add_argument("--manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--split", default=None, help="train on the train part of this split")
    p.add_argument("--log", default=None, help="training log CSV")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--steps", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--hidden", type=int)
    p.add_argument("--d-e", type=int)
    p.add_argument("--n-classes", type=int)
    p.add_argument("--n-utterances", type=int)

    p = add("embed", cmd_embed, "embed every utterance of a manifest")
    p.add_argument("--manifest")
    p.add_argument("--checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)

    for name, fn, help_ in (("eval-clusters", cmd_eval_clusters, "class-conditional variance report"),
                            ("project", cmd_project, "2-D PCA scatter (CSV + SVG)")):
        p = add(name, fn, help_)
        table_inputs(p)
        p.add_argument("--out", required=True, help="report CSV" if name == "eval-clusters" else "output prefix")
        p.add_argument("--split", default=None)
        p.add_argument("--part", choices=("train", "test", "all"), default="test")

    p = add("train-classifier", cmd_train_classifier, "train the attacker-ID MLP")
    table_inputs(p)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="in-domain:0.9")
    p.add_argument("--report", default=None, help="test report prefix (.csv, .json)")
    p.add_argument("--epochs", type=int, default=None)

    p = add("classify", cmd_classify, "predict attacker labels")
    table_inputs(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None)

    p = add("grad-check", cmd_grad_check, "finite-difference check of the embedder gradient")
    p.add_argument("--out", default=None)
    p.add_argument("--hidden", type=int, default=8)
    p.add_argument("--d-e", type=int, default=4)
    p.add_argument("--n-mels", type=int, default=5)
    p.add_argument("--n-classes", type=int, default=2)
    p.add_argument("--n-utterances", type=int, default=2)
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--max-entries", type=int, default=None)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except CheckpointError as exc:
        if exc.expected is not None:
            print(f"checkpoint version mismatch: expected {exc.expected}, found {exc.found}", file=sys.stderr)
        else:
            print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
