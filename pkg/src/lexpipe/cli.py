"""Command-line entry point: ``lexpipe <command> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

__all__ = ["build_parser", "main"]


def _common(p: argparse.ArgumentParser, top: bool = False) -> None:
    # Accept the global flags both before and after the subcommand.
    d = (lambda v: v) if top else (lambda v: argparse.SUPPRESS)
    p.add_argument("--config", type=Path, default=d(None), help="JSON run configuration")
    p.add_argument("--seed", type=int, default=d(None), help="global random seed")
    p.add_argument("--stub", action="store_true", default=d(False), help="force offline generator and embedder")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lexpipe", description="Legal-domain adaptation toolkit")
    _common(parser, top=True)
    sub = parser.add_subparsers(dest="command", required=True)

    def cmd(parent, name, help):
        p = parent.add_parser(name, help=help)
        _common(p)
        return p

    corpus = sub.add_parser("corpus", help="document ingestion").add_subparsers(dest="action", required=True)
    p = cmd(corpus, "build", "filter documents and write structured records")
    p.add_argument("--in", dest="text_dir", type=Path, required=True)
    p.add_argument("--meta", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--min-year", type=int, default=2020)
    p.add_argument("--anchors", type=Path)
    p.add_argument("--catalog", type=Path)
    p.set_defaults(func=_corpus_build)

    augment = sub.add_parser("augment", help="QA augmentation").add_subparsers(dest="action", required=True)
    p = cmd(augment, "run", "generate QA pairs from law articles")
    p.add_argument("--catalog", type=Path)
    p.add_argument("--laws", type=Path, required=True)
    p.add_argument("--num-qa", type=int, default=3)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--catalog-out", type=Path, help="also write the catalog with generated glosses")
    p.set_defaults(func=_augment_run)

    train = sub.add_parser("train", help="policy training").add_subparsers(dest="action", required=True)
    p = cmd(train, "sft", "supervised fine-tuning of a bigram policy")
    p.add_argument("--data", type=Path, required=True, help="JSONL of {input, output}")
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--lr", type=float, default=2.0)
    p.add_argument("--accum", type=int, default=1)
    p.add_argument("--init", type=Path, help="start from this checkpoint")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--log", type=Path, help="CSV of (step, loss, grad_norm)")
    p.add_argument("--plot", type=Path, help="PNG of the training curves")
    p.set_defaults(func=_train_sft)

    p = cmd(train, "grpo", "group-relative policy optimization")
    p.add_argument("--ckpt", type=Path, help="initial policy (default: uniform format-bandit policy)")
    p.add_argument("--reward", choices=("format", "process", "combined"), default="format")
    p.add_argument("--spec", type=Path, help="format template JSON (default: whole-answer month template)")
    p.add_argument("--queries", type=Path, help="text file, one query per line")
    p.add_argument("--G", type=int, default=8)
    p.add_argument("--eps", type=float, default=0.2)
    p.add_argument("--beta", type=float, default=0.01)
    p.add_argument("--lr", type=float, default=1.0)
    p.add_argument("--updates", type=int, default=2000)
    p.add_argument("--max-len", type=int, default=12)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--log", type=Path, help="CSV of (step, objective, mean_reward, kl)")
    p.add_argument("--plot", type=Path)
    p.set_defaults(func=_train_grpo)

    retrieve = sub.add_parser("retrieve", help="element retrieval").add_subparsers(dest="action", required=True)
    p = cmd(retrieve, "match", "elements matched by each chunk of a document")
    p.add_argument("--doc", type=Path, required=True)
    p.add_argument("--catalog", type=Path)
    p.add_argument("--augmented", action="store_true")
    p.add_argument("--topk", type=int, default=1)
    p.add_argument("--chunk-tokens", type=int, default=512)
    p.set_defaults(func=_retrieve_match)

    p = cmd(retrieve, "eval", "overlap accuracy with plain vs augmented descriptions")
    p.add_argument("--data", type=Path, required=True, help="JSONL of {id, text, elements}")
    p.add_argument("--catalog", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--topk", type=int, default=1)
    p.add_argument("--chunk-tokens", type=int, default=512)
    p.add_argument("--plot", type=Path)
    p.set_defaults(func=_retrieve_eval)

    p = cmd(sub, "eval", "element-extraction scores grouped by a metadata field")
    p.add_argument("--records", type=Path, required=True)
    p.add_argument("--meta", type=Path, required=True)
    p.add_argument("--catalog", type=Path)
    p.add_argument("--group-by", default="province")
    p.add_argument("--augmented", action="store_true")
    p.add_argument("--topk", type=int, default=2)
    p.add_argument("--chunk-tokens", type=int, default=24)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.set_defaults(func=_eval)

    pipeline = sub.add_parser("pipeline", help="full run").add_subparsers(dest="action", required=True)
    p = cmd(pipeline, "run", "run every enabled stage and emit the report")
    p.add_argument("--report", type=Path, help="report directory (default: <out_dir>/report)")
    p.set_defaults(func=_pipeline_run)

    p = cmd(pipeline, "report", "re-render the report from a saved manifest")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--report", type=Path, required=True)
    p.set_defaults(func=_pipeline_report)

    p = cmd(sub, "synth", "write the synthetic document fixture")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n", type=int, default=20)
    p.set_defaults(func=_synth)
    return parser


def _seed(args, default: int = 0) -> int:
    return default if args.seed is None else args.seed


def _catalog(path):
    from .elements import default_catalog, load_catalog

    return load_catalog(path) if path else default_catalog()


def _read_jsonl(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


# --- commands ---------------------------------------------------------------------

def _corpus_build(args) -> int:
    from .corpus import DEFAULT_ANCHORS, NoAnchorsFound, build_record, extract_sections, filter_document, \
        load_anchors, load_documents, serialize_record

    anchors = load_anchors(args.anchors) if args.anchors else DEFAULT_ANCHORS
    catalog = _catalog(args.catalog)
    kept, dropped = [], {}
    for doc in load_documents(args.text_dir, args.meta):
        decision = filter_document(doc, args.min_year)
        reason = decision.reason
        if decision.keep:
            try:
                kept.append(serialize_record(build_record(doc, extract_sections(doc, anchors), doc.features, catalog)))
                continue
            except NoAnchorsFound:
                reason = "no_anchors"
        dropped[reason] = dropped.get(reason, 0) + 1
    args.out.write_text("".join(line + "\n" for line in kept), encoding="utf-8")
    print(json.dumps({"kept": len(kept), "dropped": dropped}, ensure_ascii=False))
    return 0


def _augment_run(args) -> int:
    from .augment import augment_catalog, augment_laws
    from .clients import make_generator

    seed = _seed(args)
    gen = make_generator(stub=args.stub, seed=seed)
    pairs, diags = augment_laws(_read_jsonl(args.laws), gen, args.num_qa, seed=seed)
    args.out.write_text("".join(json.dumps(p.to_json(), ensure_ascii=False) + "\n" for p in pairs), encoding="utf-8")
    if args.catalog_out:
        augment_catalog(_catalog(args.catalog), gen, seed=seed).dump(args.catalog_out)
    for d in diags:
        print(f"{d.kind}: {d.detail}", file=sys.stderr)
    print(json.dumps({"qa_pairs": len(pairs), "diagnostics": len(diags)}))
    return 0


def _train_sft(args) -> int:
    from .policy import EOS, ToyPolicy, Vocab, train_sft

    rows = _read_jsonl(args.data)
    if args.init:
        policy = ToyPolicy.load(args.init)
    else:
        policy = ToyPolicy(Vocab.from_texts(r["input"] + r["output"] for r in rows))
    data = [(list(r["input"]), list(r["output"]) + [EOS]) for r in rows]
    log = train_sft(policy, data, args.steps, args.lr, args.accum)
    policy.save(args.out)
    if args.log:
        log.write_csv(args.log)
    if args.plot:
        from .plotting import plot_training_curves

        plot_training_curves(log.loss, log.grad_norm, args.plot)
    print(json.dumps({"initial_loss": log.loss[0], "final_loss": log.loss[-1]}))
    return 0


def _reward_fn(kind: str, spec_path):
    from .bandit import BANDIT_WEIGHTS, answer_spec
    from .rewards import AmountTask, combined_reward, format_reward, load_format_spec, process_reward

    spec = load_format_spec(spec_path) if spec_path else answer_spec()
    task = AmountTask()
    if kind == "format":
        return lambda out, q: combined_reward(out, q, spec, weights=BANDIT_WEIGHTS).total
    if kind == "process":
        return lambda out, q: process_reward(out, task)
    return lambda out, q: combined_reward(out, q, spec, task).total


def _train_grpo(args) -> int:
    from .bandit import format_valid_mass, make_format_bandit
    from .grpo import GrpoConfig, train_grpo
    from .policy import ToyPolicy

    bandit = make_format_bandit(max_len=args.max_len)
    policy = ToyPolicy.load(args.ckpt) if args.ckpt else bandit.uniform_policy()
    queries = [()]
    if args.queries:
        lines = [s for s in args.queries.read_text(encoding="utf-8").splitlines() if s]
        queries = [list(s) for s in lines] or [()]
    config = GrpoConfig(G=args.G, eps=args.eps, beta=args.beta, lr=args.lr, updates=args.updates,
                        seed=_seed(args), max_len=args.max_len)
    policy, log = train_grpo(policy, _reward_fn(args.reward, args.spec), config, queries=queries)
    policy.save(args.out)
    if args.log:
        log.write_csv(args.log)
    if args.plot:
        from .plotting import plot_grpo

        plot_grpo(log.mean_reward, log.kl, args.plot)
    summary = {"final_mean_reward": float(np.mean(log.mean_reward[-50:]))}
    if policy.vocab == bandit.vocab and not args.spec:
        summary["format_valid_mass"] = format_valid_mass(policy, bandit, 10_000, seed=_seed(args))
    print(json.dumps(summary))
    return 0


def _retrieve_match(args) -> int:
    from .clients import make_embedder
    from .retrieve import build_context, chunk_text, match_elements

    text = args.doc.read_text(encoding="utf-8")
    chunks = chunk_text(text, args.chunk_tokens)
    matches = match_elements(chunks, _catalog(args.catalog), make_embedder(stub=args.stub), args.augmented, args.topk)
    ctx = build_context(text, matches)
    out = {
        "elements": list(ctx.matched_elements),
        "matches": [{"chunk": m.chunk_index, "element": m.element_name, "cosine": round(m.cosine, 6)} for m in matches],
    }
    print(json.dumps(out, ensure_ascii=False, indent=2))
    return 0


def _retrieve_eval(args) -> int:
    from .clients import make_embedder
    from .retrieve import compare_augmentation

    data = [(r["id"], r["text"], r["elements"]) for r in _read_jsonl(args.data)]
    report = compare_augmentation(data, _catalog(args.catalog), make_embedder(stub=args.stub), args.chunk_tokens, args.topk)
    with open(args.out, "w", newline="", encoding="utf-8") as f:
        csv.writer(f, lineterminator="\n").writerows(report.to_csv_rows())
    if args.plot:
        from .plotting import plot_overlap

        rows = report.rows
        plot_overlap([r.doc_id for r in rows], [r.original for r in rows], [r.augmented for r in rows], args.plot)
    print(json.dumps({"original": report.mean_original, "augmented": report.mean_augmented}))
    return 0


def _eval(args) -> int:
    from .clients import make_embedder, make_generator
    from .corpus import parse_record
    from .metrics import report_csv, report_json
    from .pipeline import evaluate_records

    with open(args.records, encoding="utf-8") as f:
        records = [parse_record(line) for line in f if line.strip()]
    labels = {m["id"]: str(m.get(args.group_by, "")) for m in _read_jsonl(args.meta)}
    seed = _seed(args)
    rows, preds = evaluate_records(
        records, labels, _catalog(args.catalog), make_generator(stub=args.stub, seed=seed),
        make_embedder(stub=args.stub), args.augmented, args.chunk_tokens, args.topk, seed=seed,
    )
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "metrics.csv").write_text(report_csv(rows), encoding="utf-8")
    (args.out / "metrics.json").write_text(report_json(rows), encoding="utf-8")
    (args.out / "predictions.jsonl").write_text(
        "".join(json.dumps(p, ensure_ascii=False, sort_keys=True) + "\n" for p in preds), encoding="utf-8"
    )
    print(report_csv(rows), end="")
    return 0


def _pipeline_run(args) -> int:
    from .pipeline import PipelineConfig, emit_report, run_pipeline

    if args.config is None:
        raise SystemExit("pipeline run needs --config FILE")
    config = PipelineConfig.load(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.stub:
        config.stub = True
    manifest = run_pipeline(config, on_stage=lambda s, t: print(f"{s:<9} done in {t:.2f}s", file=sys.stderr))
    run_dir = config.path("out_dir")
    report_dir = args.report or run_dir / "report"
    emit_report(manifest, report_dir, run_dir)
    print((report_dir / "summary.txt").read_text(encoding="utf-8"), end="")
    return 0


def _pipeline_report(args) -> int:
    from .pipeline import RunManifest, emit_report

    manifest = RunManifest.from_json(args.manifest.read_text(encoding="utf-8"))
    emit_report(manifest, args.report, args.manifest.parent)
    return 0


def _synth(args) -> int:
    from .synth import write_fixture

    paths = write_fixture(args.out, n=args.n, seed=_seed(args))
    config = {
        "texts": "texts",
        "meta": "meta.jsonl",
        "laws": "laws.jsonl",
        "out_dir": "run",
        "seed": _seed(args),
        "stub": True,
    }
    (args.out / "config.json").write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    print(json.dumps({k: str(v) for k, v in paths.items()}))
    return 0


def main(argv: list[str] | None = None) -> int:
    from .clients import ClientError
    from .pipeline import ConfigInvalid, StageFailed

    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigInvalid, StageFailed, ClientError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
