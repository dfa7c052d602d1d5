"""Command-line entry point: ``gsp <subcommand> ...``.

Exit status: 0 ok, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .amr import (
    AmrError,
    AmrGraph,
    OrderStrategy,
    format_actions,
    linearize,
    parse_penman,
    penman_variable_names,
    relation_frequency_table,
    serialize_penman,
)
from .config import TrainConfig
from .corpus import AnnotatedSentence, DataError, fallback_annotate, ingest, read_alignments, write_annotations
from .metrics import MatchSizeError, corpus_scores, root_distance_histogram

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("gsp_amr")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _read_graphs(path) -> list:
    return parse_penman(Path(path).read_text(encoding="utf-8"))


def _write(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _load_config(args) -> TrainConfig:
    cfg = TrainConfig.from_file(args.config) if args.config else TrainConfig.toy()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "epochs", None) is not None:
        overrides["epochs"] = args.epochs
    if getattr(args, "order", None) is not None:
        overrides["order"] = args.order
    return TrainConfig.from_dict({**cfg.to_dict(), **overrides})


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(args) -> int:
    from .training import save_model, train

    cfg = _load_config(args)
    pairs = ingest(args.amr, args.annotations)
    dev = ingest(args.dev_amr, args.dev_annotations) if args.dev_amr else None
    alignments = read_alignments(args.alignments) if args.alignments else None
    log_fh = open(args.log, "w", encoding="utf-8") if args.log else None

    def callback(record):
        if log_fh is not None:
            log_fh.write(json.dumps(record, sort_keys=True) + "\n")
            log_fh.flush()
        if not args.quiet:
            dev_score = record.get("dev_smatch")
            shown = f" dev_smatch {dev_score:.4f}" if dev_score is not None else ""
            print(f"epoch {record['epoch']:4d} loss {record['loss']:.4f}{shown}", file=sys.stderr)

    try:
        result = train(pairs, cfg, dev, alignments, callback=callback)
    finally:
        if log_fh is not None:
            log_fh.close()
    predicates = sorted({lem for s, _ in pairs for lem, tag in zip(s.lemmas, s.pos) if tag.upper().startswith("VB")})
    save_model(args.out, result.model, {"predicates": predicates, "history": result.log,
                                        "estimator": {"beam_size": 8}})
    print(json.dumps({"checkpoint": str(args.out), "best_dev_smatch": result.best_score,
                      "best_epoch": result.best_epoch, "stopped": result.stopped,
                      "config_hash": cfg.hash()}, sort_keys=True))
    return EXIT_OK


def _read_sentences(path) -> List[AnnotatedSentence]:
    """JSON-lines annotation records, or plain text with one sentence per line."""
    out = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if line.lstrip().startswith("{"):
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: bad JSON ({exc.msg})") from exc
            out.append(AnnotatedSentence.from_json(record))
        else:
            out.append(fallback_annotate(line, graph_id=f"s{len(out) + 1}"))
    if not out:
        raise DataError(f"{path}: no sentences")
    return out


def cmd_parse(args) -> int:
    from .estimator import GSPParser

    random.seed(args.seed)
    np.random.seed(args.seed)
    parser = GSPParser.load(args.model)
    parser.set_params(beam_size=args.beam, step_cap=args.step_cap, postprocess=not args.no_postprocess)
    sentences = _read_sentences(args.input)
    blocks = []
    for sent, res in zip(sentences, parser.decode(sentences)):
        g = parser.finalize(res)
        meta = {"id": sent.graph_id or "", "snt": sent.text}
        meta.update((k, v) for k, v in g.metadata.items() if k not in meta)
        blocks.append(serialize_penman(AmrGraph(g.nodes, g.edges, g.root, meta)))
    _write(args.output, "\n\n".join(blocks) + "\n")
    return EXIT_OK


def _metric_names(choice: str) -> tuple:
    return {"smatch": ("smatch",), "weighted": ("weighted",), "core": ("core",),
            "all": ("smatch", "weighted", "core")}[choice]


def cmd_eval(args) -> int:
    pred, gold = _read_graphs(args.pred), _read_graphs(args.gold)
    if len(pred) != len(gold):
        raise DataError(f"{args.pred} has {len(pred)} graphs but {args.gold} has {len(gold)}")
    metrics = _metric_names(args.metric)
    report = corpus_scores(list(zip(pred, gold)), args.d_thr, args.d_max, args.restarts, args.seed, metrics)
    corpus = report["corpus"]
    lines = [f"{'metric':<10} {'P':>7} {'R':>7} {'F1':>7}"]
    for m in metrics:
        r = corpus[m]
        lines.append(f"{m:<10} {r['precision']:7.4f} {r['recall']:7.4f} {r['f1']:7.4f}")
    lines.append(f"{'RA':<10} {'':>7} {'':>7} {corpus['root_accuracy']:7.4f}")
    lines.append(f"{'CM':<10} {'':>7} {'':>7} {corpus['complete_match']:7.4f}")
    table = "\n".join(lines) + "\n"
    jsonl = "".join(json.dumps({"type": "pair", **r}, sort_keys=True) + "\n" for r in report["pairs"])
    jsonl += json.dumps({"type": "corpus", **corpus}, sort_keys=True) + "\n"
    if args.jsonl:
        _write(args.jsonl, jsonl)
        sys.stdout.write(table)
    else:
        sys.stdout.write(table + jsonl)
    return EXIT_OK


def cmd_linearize(args) -> int:
    graphs = _read_graphs(args.amr)
    strategy = OrderStrategy(args.order, relation_frequency_table(graphs))
    blocks = []
    for k, g in enumerate(graphs):
        actions = linearize(g, strategy, args.seed + k)
        blocks.append(f"# ::id {g.metadata.get('id', k)}\n{format_actions(actions)}")
    _write(args.output, "\n\n".join(blocks) + "\n")
    return EXIT_OK


def cmd_stats(args) -> int:
    graphs = _read_graphs(args.amr)
    hist = root_distance_histogram(graphs)
    total = sum(hist.values())
    if args.json:
        print(json.dumps({"graphs": len(graphs), "nodes": total, "root_distance": hist}, sort_keys=True))
        return EXIT_OK
    print(f"graphs {len(graphs)}  nodes {total}")
    print(f"{'distance':>8} {'nodes':>7} {'share':>7}")
    for d, c in hist.items():
        print(f"{d:>8} {c:>7} {c / total:7.3f}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .decoder import GSPModel
    from .nn import grad_check
    from .synthetic import toy_parallel_corpus
    from .training import compute_loss
    from .vocab import build_vocabularies

    pairs, alignments = toy_parallel_corpus(20, seed=args.seed)
    cfg = TrainConfig.toy(seed=args.seed, dtype="float64")
    model = GSPModel(cfg, build_vocabularies(pairs, alignments))
    sent, graph = min(pairs, key=lambda p: (len(p[1].nodes), p[0].text))

    def loss():
        return compute_loss(model, graph, sent, OrderStrategy("relation-freq"), args.seed).total

    params = [(n, p) for n, p in model.named_parameters() if p.trainable]
    err, per = grad_check(loss, params, entries_per_param=args.entries, seed=args.seed)
    worst = max(per, key=per.get)
    print(json.dumps({"max_rel_err": err, "worst_parameter": worst, "parameters": len(params),
                      "entries_per_param": args.entries, "passed": err < args.tol}, sort_keys=True))
    return EXIT_OK if err < args.tol else EXIT_INTERNAL


def cmd_synth(args) -> int:
    from .synthetic import random_corpus, toy_parallel_corpus

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "random":
        graphs = random_corpus(args.n, seed=args.seed)
        (out / "graphs.amr").write_text("\n\n".join(serialize_penman(g) for g in graphs) + "\n", encoding="utf-8")
        return EXIT_OK
    pairs, alignments = toy_parallel_corpus(args.n, seed=args.seed)
    (out / "train.amr").write_text("\n\n".join(serialize_penman(g) for _, g in pairs) + "\n", encoding="utf-8")
    write_annotations(out / "train.jsonl", [s for s, _ in pairs])
    (out / "sentences.txt").write_text("".join(s.text + "\n" for s, _ in pairs), encoding="utf-8")
    with open(out / "alignments.txt", "w", encoding="utf-8") as fh:
        for _, g in pairs:
            names = penman_variable_names(g)
            # constants have no variable to point at
            items = [(i, n) for i, n in alignments[g.metadata["id"]] if n in names]
            fh.write(f"# ::id {g.metadata['id']}\n" + "".join(f"{i}\t{names[n]}\n" for i, n in items) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gsp", description="Top-down AMR parsing by graph spanning, and Smatch variants.")
    p.add_argument("--version", action="store_true", help="print version and config hashes")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, func, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--seed", type=int, default=0)
        sp.set_defaults(func=func)
        return sp

    sp = add("train", cmd_train, "train a parser on PENMAN graphs")
    sp.add_argument("--amr", required=True)
    sp.add_argument("--annotations")
    sp.add_argument("--alignments")
    sp.add_argument("--dev-amr")
    sp.add_argument("--dev-annotations")
    sp.add_argument("--config", help="JSON config; {\"base\": \"toy\", ...} starts from the toy settings")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--order", choices=["random", "relation-freq", "combined"])
    sp.add_argument("--out", required=True, help="checkpoint path")
    sp.add_argument("--log", help="JSON-lines training log")
    sp.add_argument("--quiet", action="store_true")

    sp = add("parse", cmd_parse, "parse sentences to PENMAN")
    sp.add_argument("--model", required=True)
    sp.add_argument("--input", required=True, help="JSON-lines annotations or one sentence per line")
    sp.add_argument("--output")
    sp.add_argument("--beam", type=int, default=8)
    sp.add_argument("--step-cap", type=int)
    sp.add_argument("--no-postprocess", action="store_true")

    sp = add("eval", cmd_eval, "score predicted against gold graphs")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--gold", required=True)
    sp.add_argument("--metric", choices=["smatch", "weighted", "core", "all"], default="all")
    sp.add_argument("--d-thr", type=int, default=5)
    sp.add_argument("--d-max", type=int, default=4)
    sp.add_argument("--restarts", type=int, default=4)
    sp.add_argument("--jsonl", help="write per-pair and corpus records here instead of stdout")

    sp = add("linearize", cmd_linearize, "print spanning action sequences")
    sp.add_argument("--amr", required=True)
    sp.add_argument("--order", choices=["random", "relation-freq", "combined"], default="relation-freq")
    sp.add_argument("--output")

    sp = add("stats", cmd_stats, "root-distance histogram")
    sp.add_argument("--amr", required=True)
    sp.add_argument("--json", action="store_true")

    sp = add("gradcheck", cmd_gradcheck, "finite-difference check of the full loss at toy size")
    sp.add_argument("--entries", type=int, default=20, help="entries sampled per parameter tensor")
    sp.add_argument("--tol", type=float, default=1e-4)

    sp = add("synth", cmd_synth, "write a synthetic corpus")
    sp.add_argument("--kind", choices=["parallel", "random"], default="parallel")
    sp.add_argument("--n", type=int, default=20)
    sp.add_argument("--out-dir", required=True)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.version:
        print(f"gsp-amr {__version__} default-config {TrainConfig().hash()} toy-config {TrainConfig.toy().hash()}")
        return EXIT_OK
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (DataError, AmrError, MatchSizeError, FileNotFoundError, IsADirectoryError, json.JSONDecodeError,
            UnicodeDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - reported, not hidden
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
