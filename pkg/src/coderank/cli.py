"""Command-line entry point: build indexes, retrieve, train, re-rank, evaluate.

Artifacts live in one directory (``paths.artifacts``, or $CODERANK_ARTIFACTS):

    aux_index.json  bm25_index.json  label_graph.json
    candidates.json  checkpoint.json  train_log.json  predictions.jsonl  report.json

The last split processed wins; each file records which split it covers.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from dataclasses import asdict, replace
from pathlib import Path
from typing import Sequence

from . import __version__
from .aux_retrieval import AUX_STAGE, BM25_STAGE, CandidateSet, CooccurrenceIndex, build_aux_index, coverage_report
from .bm25 import Bm25Index, build_bm25_index
from .config import ARTIFACTS_ENV, PipelineConfig, Paths, load_config, recovery_preset, save_config
from .corpus import Corpus, load_corpus, save_corpus
from .errors import CodeRankError, ConfigError, DataError, MalformedRecord
from .label_graph import LabelGraph, build_label_graph
from .metrics import evaluate
from .pipeline import calibrate_theta, retrieve
from .reranker import DecisionPolicy, load_checkpoint, predict_set, rank_candidates, save_checkpoint, train
from .serialize import atomic_write_text, file_digest, fingerprint, read_artifact, write_artifact
from .synthetic import SyntheticSpec, generate_synthetic_corpus

log = logging.getLogger("coderank")

AUX_FILE = "aux_index.json"
BM25_FILE = "bm25_index.json"
GRAPH_FILE = "label_graph.json"
CHECKPOINT_FILE = "checkpoint.json"
TRAIN_LOG_FILE = "train_log.json"
CANDIDATES_FILE = "candidates.json"
PREDICTIONS_FILE = "predictions.jsonl"
REPORT_FILE = "report.json"
VERSION = 1


def _corpus_files(cfg: PipelineConfig) -> list[Path]:
    files = [Path(cfg.paths.documents), Path(cfg.paths.labels)]
    if cfg.paths.splits:
        files.append(Path(cfg.paths.splits))
    for f in files:
        if not f.exists():
            raise DataError(f"input file {f} does not exist")
    return files


def _load(cfg: PipelineConfig) -> tuple[Corpus, str]:
    files = _corpus_files(cfg)
    corpus = load_corpus(cfg.paths.documents, cfg.paths.labels, cfg.paths.splits)
    return corpus, file_digest(*files)


# fingerprints cover exactly the inputs each artifact was built from


def _aux_fp(digest: str) -> str:
    return fingerprint({"artifact": "aux", "corpus": digest})


def _bm25_fp(digest: str, cfg: PipelineConfig) -> str:
    r = cfg.retrieval
    return fingerprint({"artifact": "bm25", "corpus": digest, "k1": r.k1, "b": r.b, "denominator": r.denominator,
                        "theta": r.theta, "eta": r.eta, "retain": r.calibration_retain, "use_aux": r.use_aux})


def _graph_fp(digest: str, cfg: PipelineConfig) -> str:
    return fingerprint({"artifact": "graph", "corpus": digest, "lambda": cfg.lam})


def _ckpt_fp(digest: str, cfg: PipelineConfig) -> str:
    return fingerprint({"artifact": "checkpoint", "graph": _graph_fp(digest, cfg), "bm25": _bm25_fp(digest, cfg),
                        "model": asdict(cfg.model), "train": asdict(_train_cfg(cfg)), "seed": cfg.seed})


def _train_cfg(cfg: PipelineConfig):
    # the root seed governs training; stages are split inside train()
    return replace(cfg.train, seed=cfg.seed)


# ---------------------------------------------------------------- commands


def cmd_gen_synthetic(out: str | Path, n_docs: int, n_labels: int, seed: int,
                      spec: SyntheticSpec | None = None) -> PipelineConfig:
    """Write a synthetic corpus plus a ready-to-use config.json into ``out``."""
    out = Path(out)
    corpus = generate_synthetic_corpus(seed, n_docs, n_labels, spec)
    files = save_corpus(corpus, out)
    cfg = recovery_preset(Paths(str(files["documents"]), str(files["labels"]), str(files["splits"]),
                                str(out / "artifacts")), seed=seed)
    save_config(cfg, out / "config.json")
    return cfg


def cmd_build_index(cfg: PipelineConfig) -> dict[str, Path]:
    """Build and persist the aux index, BM25 index and label graph.

    Everything is computed before the first file is written.
    """
    corpus, digest = _load(cfg)
    train_docs = corpus.docs("train")
    aux = build_aux_index(train_docs)
    bm25 = build_bm25_index(corpus.labels)
    graph = build_label_graph(train_docs, corpus.label_ids, cfg.lam)

    r = cfg.retrieval
    theta = r.theta
    if theta is None:
        valid = corpus.docs("valid") or train_docs
        keep_all = r.bm25_params(-1.0)
        aux_sets = [retrieve(d, aux, bm25, corpus.label_ids, r.eta, keep_all, r.fallback, r.use_aux).aux
                    for d in valid]
        theta = calibrate_theta(valid, aux_sets, bm25, keep_all, r.calibration_retain)
        log.info("calibrated theta %.6g on %d documents", theta, len(valid))

    out = cfg.artifacts
    paths = {"aux": out / AUX_FILE, "bm25": out / BM25_FILE, "graph": out / GRAPH_FILE}
    write_artifact(paths["aux"], "coderank-aux-index", VERSION, _aux_fp(digest), {"index": aux.to_json()})
    write_artifact(paths["bm25"], "coderank-bm25-index", VERSION, _bm25_fp(digest, cfg),
                   {"theta": theta, "index": bm25.to_json()})
    write_artifact(paths["graph"], "coderank-label-graph", VERSION, _graph_fp(digest, cfg), {"graph": graph.to_json()})
    return paths


def _load_indexes(cfg: PipelineConfig, digest: str) -> tuple[CooccurrenceIndex, Bm25Index, float, LabelGraph]:
    out = cfg.artifacts
    aux = CooccurrenceIndex.from_json(read_artifact(out / AUX_FILE, "coderank-aux-index", VERSION,
                                                    _aux_fp(digest))["index"])
    b = read_artifact(out / BM25_FILE, "coderank-bm25-index", VERSION, _bm25_fp(digest, cfg))
    graph = LabelGraph.from_json(read_artifact(out / GRAPH_FILE, "coderank-label-graph", VERSION,
                                               _graph_fp(digest, cfg))["graph"])
    return aux, Bm25Index.from_json(b["index"]), float(b["theta"]), graph


def _select(corpus: Corpus, split: str | None, ids: Sequence[str] | None):
    if ids:
        lookup = corpus.by_id()
        missing = [i for i in ids if i not in lookup]
        if missing:
            raise DataError(f"unknown document id(s): {missing[:5]}")
        return "selected", [lookup[i] for i in ids]
    if split not in ("train", "valid", "test"):
        raise ConfigError(f"unknown split {split!r}")
    return split, corpus.docs(split)


def _retrieve_docs(cfg, corpus, docs, aux, bm25, theta):
    r = cfg.retrieval
    params = r.bm25_params(theta)
    return [retrieve(d, aux, bm25, corpus.label_ids, r.eta, params, r.fallback, r.use_aux) for d in docs]


def _candidate_record(cs: CandidateSet) -> dict:
    return {"labels": sorted(cs.labels), "size": len(cs.labels), "stage": cs.stage, "fallback": cs.fallback}


def cmd_retrieve(cfg: PipelineConfig, split: str | None = "test", ids: Sequence[str] | None = None,
                 stage: str = BM25_STAGE) -> Path:
    """Candidate sets for a split (or explicit ids), with coverage.

    ``stage="bm25"`` records both stages; ``"aux"`` stops after the first.
    """
    stages = _stages(stage)
    corpus, digest = _load(cfg)
    aux, bm25, theta, _ = _load_indexes(cfg, digest)
    name, docs = _select(corpus, split, ids)
    got = _retrieve_docs(cfg, corpus, docs, aux, bm25, theta)
    cov = {st: asdict(coverage_report([getattr(g, attr) for g in got], docs)) for st, attr in stages}
    for c in cov.values():
        c.pop("per_doc_size")
    body = {
        "split": name,
        "eta": cfg.retrieval.eta,
        "theta": theta,
        "coverage": cov,
        "documents": [{"id": d.id, **{st: _candidate_record(getattr(g, attr)) for st, attr in stages}}
                      for d, g in zip(docs, got)],
    }
    path = cfg.artifacts / CANDIDATES_FILE
    write_artifact(path, "coderank-candidates", VERSION, fingerprint({"bm25": _bm25_fp(digest, cfg), "split": name}),
                   body)
    for st, c in cov.items():
        log.info("%s %s: recall %.4f, mean size %.1f", name, st, c["recall"], c["mean_size"])
    return path


def _stages(stage: str) -> list[tuple[str, str]]:
    if stage in ("aux", AUX_STAGE):
        return [(AUX_STAGE, "aux")]
    if stage == BM25_STAGE:
        return [(AUX_STAGE, "aux"), (BM25_STAGE, "bm25")]
    raise ConfigError(f"unknown candidate stage {stage!r}")


def cmd_train(cfg: PipelineConfig) -> Path:
    corpus, digest = _load(cfg)
    aux, bm25, theta, graph = _load_indexes(cfg, digest)
    valid = corpus.docs("valid")
    valid_cands = {g.bm25.doc_id: g.bm25 for g in _retrieve_docs(cfg, corpus, valid, aux, bm25, theta)}
    result = train(corpus, graph, _train_cfg(cfg), cfg.model, valid_cands)
    ckpt = result.checkpoint
    ckpt.fingerprint = _ckpt_fp(digest, cfg)
    ckpt.meta = {"best_epoch": result.best_epoch, "library_version": __version__}
    out = cfg.artifacts
    save_checkpoint(ckpt, out / CHECKPOINT_FILE)
    atomic_write_text(out / TRAIN_LOG_FILE, json.dumps({"best_epoch": result.best_epoch, "history": result.history},
                                                       indent=1, allow_nan=True) + "\n")
    return out / CHECKPOINT_FILE


def _policy(cfg: PipelineConfig, ckpt) -> DecisionPolicy:
    return cfg.policy if cfg.policy is not None else ckpt.policy


def cmd_rerank(cfg: PipelineConfig, split: str = "test", stage: str = BM25_STAGE) -> Path:
    """Rank each document's candidates with the checkpoint; write predictions.jsonl."""
    attr = _stages(stage)[-1][1]
    corpus, digest = _load(cfg)
    aux, bm25, theta, _ = _load_indexes(cfg, digest)
    ckpt = load_checkpoint(cfg.artifacts / CHECKPOINT_FILE, _ckpt_fp(digest, cfg))
    policy = _policy(cfg, ckpt)
    name, docs = _select(corpus, split, None)
    lines = []
    for d, g in zip(docs, _retrieve_docs(cfg, corpus, docs, aux, bm25, theta)):
        ranked = rank_candidates(d, getattr(g, attr), ckpt)
        lines.append(json.dumps({"id": d.id, "ranked": [[y, s] for y, s in ranked.entries],
                                 "predicted": sorted(predict_set(ranked, policy))}))
    path = cfg.artifacts / PREDICTIONS_FILE
    atomic_write_text(path, "".join(line + "\n" for line in lines))
    return path


def read_predictions(path: str | Path) -> tuple[dict[str, set], dict[str, list[tuple[str, float]]]]:
    pred, ranked = {}, {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                did = rec["id"]
                pred[did] = set(rec["predicted"])
                ranked[did] = [(str(y), float(s)) for y, s in rec["ranked"]]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise MalformedRecord(f"{path}:{lineno}: bad prediction record ({exc})") from None
    return pred, ranked


def cmd_evaluate(cfg: PipelineConfig, split: str = "test", stage: str = BM25_STAGE,
                 predictions: str | Path | None = None) -> Path:
    """Report over a split. Without ``predictions`` the split is re-ranked first."""
    corpus, _ = _load(cfg)
    if predictions is None:
        predictions = cmd_rerank(cfg, split, stage)
    pred, ranked = read_predictions(predictions)
    name, docs = _select(corpus, split, None)
    gold = {d.id: set(d.gold_labels) for d in docs}
    train_freq = Counter(y for d in corpus.docs("train") for y in d.gold_labels)
    report = evaluate(gold, pred, ranked, corpus.label_ids, cfg.ks, train_freq)
    body = {"split": name, "n_docs": len(docs), **report.to_json()}
    path = cfg.artifacts / REPORT_FILE
    atomic_write_text(path, json.dumps(body, indent=1, allow_nan=True) + "\n")
    log.info("%s: micro-F1 %.4f macro-F1 %.4f %s", name, report.micro_f1, report.macro_f1,
             " ".join(f"P@{k} {v:.4f}" for k, v in sorted(report.p_at_k.items())))
    return path


# ---------------------------------------------------------------- argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="pipeline config JSON (default: built-in defaults)")
    p.add_argument("--documents")
    p.add_argument("--labels")
    p.add_argument("--splits")
    p.add_argument("--artifacts", help=f"artifact directory (${ARTIFACTS_ENV} takes precedence)")
    p.add_argument("--eta", type=float)
    p.add_argument("--theta", type=float, help="BM25 threshold; negative keeps every candidate")
    p.add_argument("--calibrate-theta", action="store_true", help="choose theta on the validation split")
    p.add_argument("--k1", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--k", dest="ks", type=int, action="append", help="precision@K cutoff (repeatable)")
    p.add_argument("--no-aux", action="store_true", help="skip the auxiliary stage (BM25 over all labels)")
    p.add_argument("--no-graphormer", action="store_true", help="label vectors from descriptors only")
    p.add_argument("--top-k", type=int, help="predict the top K labels instead of thresholding")
    p.add_argument("--threshold", type=float, help="fixed cosine threshold for predictions")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="coderank", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-synthetic", help="write a synthetic corpus and config")
    p.add_argument("--out", required=True)
    p.add_argument("--docs", type=int, default=2000)
    p.add_argument("--n-labels", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--spec", help="JSON object of SyntheticSpec overrides")
    p.add_argument("-v", "--verbose", action="store_true")

    for name, hlp in (("build-index", "build aux/BM25 indexes and the label graph"),
                      ("retrieve", "write candidate sets for a split"),
                      ("train", "train the re-ranker"),
                      ("rerank", "rank candidates for a split"),
                      ("evaluate", "re-rank a split and write a metrics report")):
        p = sub.add_parser(name, help=hlp)
        _add_common(p)
        if name in ("retrieve", "rerank", "evaluate"):
            p.add_argument("--split", default="test", choices=("train", "valid", "test"))
        if name == "retrieve":
            p.add_argument("--ids", nargs="+", help="explicit document ids instead of a split")
        if name in ("retrieve", "rerank", "evaluate"):
            p.add_argument("--stage", default="bm25", choices=("aux", "bm25"),
                           help="last retrieval stage to apply")
        if name == "evaluate":
            p.add_argument("--predictions", help="evaluate an existing predictions file")
    return parser


def config_from_args(args: argparse.Namespace) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    paths = {k: getattr(args, k) for k in ("documents", "labels", "splits", "artifacts") if getattr(args, k)}
    retrieval = {k: getattr(args, k) for k in ("eta", "theta", "k1", "b") if getattr(args, k) is not None}
    if args.calibrate_theta:
        if args.theta is not None:
            raise ConfigError("--theta and --calibrate-theta are exclusive")
        retrieval["theta"] = None
    if args.no_aux:
        retrieval["use_aux"] = False
    train_kw = {k: v for k, v in (("tau", args.tau), ("epochs", args.epochs), ("learning_rate", args.lr))
                if v is not None}
    over: dict = {"paths": paths, "retrieval": retrieval, "train": train_kw}
    if args.no_graphormer:
        over["model"] = {"use_graphormer": False}
    if args.lam is not None:
        over["lam"] = args.lam
    if args.seed is not None:
        over["seed"] = args.seed
    if args.ks:
        over["ks"] = tuple(args.ks)
    if args.top_k is not None and args.threshold is not None:
        raise ConfigError("--top-k and --threshold are exclusive")
    if args.top_k is not None:
        over["policy"] = DecisionPolicy("top-k", args.top_k)
    elif args.threshold is not None:
        over["policy"] = DecisionPolicy("threshold", args.threshold)
    try:
        return cfg.with_overrides(**over)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, CodeRankError):
            raise
        raise ConfigError(str(exc)) from None


def run(argv: Sequence[str] | None = None) -> None:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "gen-synthetic":
        try:
            spec = SyntheticSpec(**{k: tuple(v) if isinstance(v, list) else v
                                    for k, v in json.loads(args.spec or "{}").items()})
        except (json.JSONDecodeError, TypeError) as exc:
            raise ConfigError(f"--spec: {exc}") from None
        cfg = cmd_gen_synthetic(args.out, args.docs, args.n_labels, args.seed, spec)
        print(Path(args.out) / "config.json")
        return
    cfg = config_from_args(args)
    if args.command == "build-index":
        for p in cmd_build_index(cfg).values():
            print(p)
    elif args.command == "retrieve":
        print(cmd_retrieve(cfg, args.split, args.ids, args.stage))
    elif args.command == "train":
        print(cmd_train(cfg))
    elif args.command == "rerank":
        print(cmd_rerank(cfg, args.split, args.stage))
    elif args.command == "evaluate":
        print(cmd_evaluate(cfg, args.split, args.stage, args.predictions))


def main(argv: Sequence[str] | None = None) -> int:
    try:
        run(argv)
    except CodeRankError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code
    except (ArithmeticError, ValueError, RuntimeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
