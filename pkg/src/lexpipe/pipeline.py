"""End-to-end run: corpus, augmentation, SFT, GRPO, retrieval, evaluation.

A run is fully described by a JSON config. Every stage draws its randomness
from a seed derived from the global seed and the stage name, writes its
artifacts under ``out_dir`` and reads upstream artifacts from there, so a
disabled stage simply leaves earlier files untouched.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .augment import augment_catalog, augment_laws
from .bandit import format_valid_mass, make_format_bandit
from .clients import Embedder, GenerationRequest, Generator, make_embedder, make_generator
from .corpus import (
    DEFAULT_ANCHORS,
    NoAnchorsFound,
    build_record,
    extract_sections,
    filter_document,
    load_anchors,
    load_documents,
    parse_record,
    serialize_record,
)
from .elements import ElementCatalog, ElementValue, coerce_value, default_catalog, load_catalog, validate_extraction
from .grpo import GrpoConfig, train_grpo
from .metrics import aggregate_by_group, report_csv, report_json, score_document, ExtractionScore
from .policy import EOS, ToyPolicy, Vocab, train_sft
from .retrieve import compare_augmentation, retrieve_elements

__all__ = [
    "STAGES",
    "ConfigInvalid",
    "StageFailed",
    "PipelineConfig",
    "RunManifest",
    "stage_seed",
    "run_pipeline",
    "emit_report",
    "predict_elements",
    "evaluate_records",
    "record_text",
    "sha256_file",
]

STAGES = ("corpus", "augment", "sft", "grpo", "retrieve", "eval")


class ConfigInvalid(ValueError):
    pass


class StageFailed(RuntimeError):
    def __init__(self, stage: str, cause: BaseException, manifest: "RunManifest | None" = None):
        super().__init__(f"stage {stage!r} failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
        self.manifest = manifest


_DEFAULT_PARAMS: dict[str, dict] = {
    "corpus": {"min_year": 2020},
    "augment": {"num_qa": 3, "augment_catalog": True},
    "sft": {"steps": 300, "lr": 2.0, "grad_accum": 1},
    "grpo": {"G": 8, "eps": 0.2, "beta": 0.01, "lr": 1.0, "updates": 1500, "queries": 8, "eval_samples": 2000},
    "retrieve": {"max_chunk_tokens": 24, "top_k": 2},
    "eval": {"max_chunk_tokens": 24, "top_k": 2, "use_augmented": False},
}


@dataclass
class PipelineConfig:
    """One reproducible run. Relative paths resolve against ``base_dir``."""

    texts: str
    meta: str
    laws: str
    out_dir: str
    catalog: str | None = None
    anchors: str | None = None
    seed: int = 0
    stub: bool = False
    stages: dict[str, bool] = field(default_factory=lambda: {s: True for s in STAGES})
    params: dict[str, dict] = field(default_factory=dict)
    base_dir: str = "."

    def __post_init__(self):
        unknown = set(self.stages) - set(STAGES)
        if unknown:
            raise ConfigInvalid(f"unknown stages: {sorted(unknown)}")
        self.stages = {s: bool(self.stages.get(s, True)) for s in STAGES}
        unknown = set(self.params) - set(STAGES)
        if unknown:
            raise ConfigInvalid(f"unknown parameter blocks: {sorted(unknown)}")
        merged = {}
        for stage, defaults in _DEFAULT_PARAMS.items():
            given = dict(self.params.get(stage, {}))
            extra = set(given) - set(defaults)
            if extra:
                raise ConfigInvalid(f"unknown {stage} parameters: {sorted(extra)}")
            merged[stage] = {**defaults, **given}
        self.params = merged
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigInvalid("seed must be an integer")

    def path(self, name: str) -> Path | None:
        value = getattr(self, name)
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def validate(self) -> None:
        for name in ("texts", "meta", "laws", "catalog", "anchors"):
            p = self.path(name)
            if p is not None and not p.exists():
                raise ConfigInvalid(f"{name} path does not exist: {p}")

    @classmethod
    def from_dict(cls, obj: Mapping, base_dir: str | Path = ".") -> "PipelineConfig":
        names = {f.name for f in fields(cls)} - {"base_dir"}
        extra = set(obj) - names
        if extra:
            raise ConfigInvalid(f"unknown config keys: {sorted(extra)}")
        missing = {"texts", "meta", "laws", "out_dir"} - set(obj)
        if missing:
            raise ConfigInvalid(f"missing config keys: {sorted(missing)}")
        return cls(**obj, base_dir=str(base_dir))

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(obj, base_dir=path.parent)

    def snapshot(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d


@dataclass
class RunManifest:
    config: dict
    stages: list[dict] = field(default_factory=list)
    artifacts: dict[str, str] = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls(**json.loads(text))

    @property
    def completed(self) -> list[str]:
        return [s["name"] for s in self.stages if s["status"] == "ok"]


def stage_seed(seed: int, stage: str) -> int:
    """Independent 32-bit seed for one stage of a run."""
    return int(np.random.SeedSequence([seed, STAGES.index(stage)]).generate_state(1)[0])


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# --- shared helpers ---------------------------------------------------------------

def record_text(record) -> str:
    return "".join(record.sections.values())


def _read_jsonl(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def _write_jsonl(path: Path, rows) -> None:
    path.write_text("".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in rows), encoding="utf-8")


def _parse_json_object(text: str) -> dict:
    start = text.find("{")
    while start >= 0:
        try:
            obj, _ = json.JSONDecoder().raw_decode(text, start)
            if isinstance(obj, dict):
                return obj
        except json.JSONDecodeError:
            pass
        start = text.find("{", start + 1)
    return {}


def _coerce_all(values: Mapping[str, object], catalog: ElementCatalog) -> tuple[dict, list[str]]:
    """Catalog-valid, kind-coerced values plus names that were dropped."""
    coerced, dropped = [], []
    for name, raw in values.items():
        if name not in catalog:
            coerced.append(ElementValue(name, raw))
            continue
        try:
            coerced.append(ElementValue(name, coerce_value(catalog.get(name), raw)))
        except ValueError:
            dropped.append(name)
    valid, violations = validate_extraction(coerced, catalog)
    return {ev.name: ev.value for ev in valid}, dropped + [v.name for v in violations]


def predict_elements(
    text: str,
    catalog: ElementCatalog,
    generator: Generator,
    embedder: Embedder,
    use_augmented: bool = False,
    max_chunk_tokens: int = 24,
    top_k: int = 2,
    seed: int | None = None,
) -> tuple[dict, list[str], list[str]]:
    """Retrieve candidate elements, prompt the generator, keep valid values.

    Returns ``(prediction, retrieved_names, dropped_names)``.
    """
    ctx = retrieve_elements(text, catalog, embedder, use_augmented, max_chunk_tokens, top_k)
    reply = generator.generate(GenerationRequest(ctx.instruction(catalog), seed=seed))
    pred, dropped = _coerce_all(_parse_json_object(reply), catalog)
    return pred, list(ctx.matched_elements), dropped


def evaluate_records(
    records,
    labels: Mapping[str, str],
    catalog: ElementCatalog,
    generator: Generator,
    embedder: Embedder,
    use_augmented: bool = False,
    max_chunk_tokens: int = 24,
    top_k: int = 2,
    seed: int | None = None,
) -> tuple[list[ExtractionScore], list[dict]]:
    """Per-group extraction scores and one prediction row per record."""
    counts, groups, rows = [], [], []
    for rec in records:
        gold, _ = _coerce_all(rec.features, catalog)
        pred, retrieved, dropped = predict_elements(
            record_text(rec), catalog, generator, embedder, use_augmented, max_chunk_tokens, top_k, seed
        )
        c = score_document(gold, pred)
        counts.append(c)
        groups.append(labels[rec.index])
        rows.append({
            "index": rec.index,
            "group": labels[rec.index],
            "retrieved": retrieved,
            "prediction": {k: _jsonable(v) for k, v in pred.items()},
            "dropped": dropped,
            "tp": c.tp, "fp": c.fp, "fn": c.fn,
        })
    return aggregate_by_group(counts, groups), rows


def _jsonable(v):
    if isinstance(v, (bool, int, str)):
        return v
    return str(v)


# --- stages ---------------------------------------------------------------------

class _Run:
    def __init__(self, config: PipelineConfig):
        self.cfg = config
        self.out = Path(config.out_dir) if Path(config.out_dir).is_absolute() else Path(config.base_dir) / config.out_dir
        self.metrics: dict = {}
        self.written: list[Path] = []

    def p(self, stage: str) -> dict:
        return self.cfg.params[stage]

    def file(self, name: str) -> Path:
        return self.out / name

    def emit(self, name: str) -> Path:
        path = self.file(name)
        self.written.append(path)
        return path

    def catalog(self) -> ElementCatalog:
        augmented = self.file("catalog.jsonl")
        if augmented.exists():
            return load_catalog(augmented)
        src = self.cfg.path("catalog")
        return load_catalog(src) if src is not None else default_catalog()

    def records(self):
        with open(self.file("records.jsonl"), encoding="utf-8") as f:
            return [parse_record(line) for line in f if line.strip()]

    # each stage returns nothing and records metrics on self

    def corpus(self, seed: int) -> None:
        cfg = self.cfg
        anchors = load_anchors(cfg.path("anchors")) if cfg.anchors else DEFAULT_ANCHORS
        base_catalog = load_catalog(cfg.path("catalog")) if cfg.catalog else default_catalog()
        docs = load_documents(cfg.path("texts"), cfg.path("meta"))
        reasons: dict[str, int] = {}
        lines = []
        for doc in docs:
            decision = filter_document(doc, self.p("corpus")["min_year"])
            reason = decision.reason
            if decision.keep:
                try:
                    sections = extract_sections(doc, anchors)
                except NoAnchorsFound:
                    reason = "no_anchors"
                else:
                    lines.append(serialize_record(build_record(doc, sections, doc.features, base_catalog)))
                    continue
            reasons[reason] = reasons.get(reason, 0) + 1
        self.emit("records.jsonl").write_text("".join(line + "\n" for line in lines), encoding="utf-8")
        self.metrics["corpus"] = {"documents": len(docs), "kept": len(lines), "dropped": dict(sorted(reasons.items()))}

    def augment(self, seed: int) -> None:
        gen = make_generator(stub=self.cfg.stub, seed=seed)
        laws = _read_jsonl(self.cfg.path("laws"))
        pairs, diags = augment_laws(laws, gen, self.p("augment")["num_qa"], seed=seed)
        _write_jsonl(self.emit("qa.jsonl"), [p.to_json() for p in pairs])
        _write_jsonl(self.emit("augment_diagnostics.jsonl"), [asdict(d) for d in diags])
        if self.p("augment")["augment_catalog"]:
            base = load_catalog(self.cfg.path("catalog")) if self.cfg.catalog else default_catalog()
            augment_catalog(base, gen, seed=seed).dump(self.emit("catalog.jsonl"))
        self.metrics["augment"] = {"qa_pairs": len(pairs), "diagnostics": len(diags)}

    def sft(self, seed: int) -> None:
        qa = _read_jsonl(self.file("qa.jsonl"))
        if not qa:
            raise ValueError("no QA pairs to train on")
        texts = [r["input"] + r["output"] for r in qa]
        vocab = Vocab.from_texts(texts)
        data = [(list(r["input"]), list(r["output"]) + [EOS]) for r in qa]
        policy = ToyPolicy(vocab)
        p = self.p("sft")
        log = train_sft(policy, data, p["steps"], p["lr"], p["grad_accum"])
        log.write_csv(self.emit("sft_curve.csv"))
        policy.save(self.emit("sft_policy.json"))
        self.metrics["sft"] = {
            "vocab": len(vocab),
            "initial_loss": round(log.loss[0], 6),
            "final_loss": round(log.loss[-1], 6),
        }

    def grpo(self, seed: int) -> None:
        p = self.p("grpo")
        bandit = make_format_bandit()
        policy = bandit.uniform_policy()
        before = format_valid_mass(policy, bandit, p["eval_samples"], seed=seed + 1)
        config = GrpoConfig(G=p["G"], eps=p["eps"], beta=p["beta"], lr=p["lr"], updates=p["updates"], seed=seed)
        policy, log = train_grpo(policy, bandit.reward, config, queries=[bandit.query] * p["queries"])
        after = format_valid_mass(policy, bandit, p["eval_samples"], seed=seed + 1)
        log.write_csv(self.emit("grpo_log.csv"))
        policy.save(self.emit("grpo_policy.json"))
        self.metrics["grpo"] = {"valid_mass_before": before, "valid_mass_after": after, "updates": p["updates"]}

    def retrieve(self, seed: int) -> None:
        p = self.p("retrieve")
        catalog = self.catalog()
        data = [(r.index, record_text(r), list(r.features)) for r in self.records() if r.features]
        report = compare_augmentation(data, catalog, make_embedder(stub=self.cfg.stub), p["max_chunk_tokens"], p["top_k"])
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(report.to_csv_rows())
        self.emit("overlap.csv").write_text(buf.getvalue(), encoding="utf-8")
        self.metrics["retrieve"] = {
            "documents": len(report.rows),
            "mean_original": round(report.mean_original, 6),
            "mean_augmented": round(report.mean_augmented, 6),
        }

    def eval(self, seed: int) -> None:
        p = self.p("eval")
        labels = {m["id"]: m.get("province", "") for m in _read_jsonl(self.cfg.path("meta"))}
        rows, preds = evaluate_records(
            self.records(), labels, self.catalog(),
            make_generator(stub=self.cfg.stub, seed=seed), make_embedder(stub=self.cfg.stub),
            p["use_augmented"], p["max_chunk_tokens"], p["top_k"], seed=seed,
        )
        _write_jsonl(self.emit("predictions.jsonl"), preds)
        self.emit("metrics.csv").write_text(report_csv(rows), encoding="utf-8")
        self.emit("metrics.json").write_text(report_json(rows), encoding="utf-8")
        self.metrics["eval"] = {"groups": [asdict(r) for r in rows]}


def run_pipeline(config: PipelineConfig, on_stage: Callable[[str, float], None] | None = None) -> RunManifest:
    """Run the enabled stages in order and return the manifest.

    On failure the manifest (saved as ``manifest.json``) lists the stages
    that completed and the exception carries it as ``.manifest``.
    """
    config.validate()
    run = _Run(config)
    run.out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(config.snapshot())
    for stage in STAGES:
        if not config.stages[stage]:
            manifest.stages.append({"name": stage, "status": "skipped", "seconds": 0.0, "seed": None})
            continue
        seed = stage_seed(config.seed, stage)
        t0 = time.perf_counter()
        try:
            getattr(run, stage)(seed)
        except Exception as exc:
            manifest.stages.append({"name": stage, "status": "failed", "seconds": time.perf_counter() - t0, "seed": seed})
            _finish(run, manifest)
            raise StageFailed(stage, exc, manifest) from exc
        seconds = time.perf_counter() - t0
        manifest.stages.append({"name": stage, "status": "ok", "seconds": round(seconds, 3), "seed": seed})
        if on_stage is not None:
            on_stage(stage, seconds)
    _finish(run, manifest)
    return manifest


def _finish(run: _Run, manifest: RunManifest) -> None:
    manifest.artifacts = {p.name: sha256_file(p) for p in sorted(run.written) if p.exists()}
    manifest.metrics = run.metrics
    (run.out / "manifest.json").write_text(manifest.to_json(), encoding="utf-8")


# --- report ----------------------------------------------------------------------

def _summary(manifest: RunManifest) -> str:
    lines = ["run summary", "==========="]
    cfg = manifest.config
    if cfg:
        lines.append(f"seed: {cfg.get('seed')}  stub: {cfg.get('stub')}")
    for s in manifest.stages:
        lines.append(f"{s['name']:<9} {s['status']:<8} {s['seconds']:>8.3f}s")
    m = manifest.metrics
    if "corpus" in m:
        c = m["corpus"]
        lines.append(f"corpus: {c['kept']} of {c['documents']} documents kept; dropped {c['dropped']}")
    if "augment" in m:
        lines.append(f"augment: {m['augment']['qa_pairs']} QA pairs, {m['augment']['diagnostics']} diagnostics")
    if "sft" in m:
        s = m["sft"]
        lines.append(f"sft: loss {s['initial_loss']:.4f} -> {s['final_loss']:.4f} nats/token (vocab {s['vocab']})")
    if "grpo" in m:
        g = m["grpo"]
        lines.append(f"grpo: format-valid mass {g['valid_mass_before']:.4f} -> {g['valid_mass_after']:.4f}")
    if "retrieve" in m:
        r = m["retrieve"]
        lines.append(f"retrieve: overlap accuracy original {r['mean_original']:.4f}, augmented {r['mean_augmented']:.4f}")
    lines.append("")
    lines.append("extraction scores (%)")
    lines.append(f"{'group':<12}{'acc':>8}{'recall':>8}{'prec':>8}{'f1':>8}")
    for row in _group_rows(manifest):
        lines.append(
            f"{row.group:<12}" + "".join(f"{100 * getattr(row, k):>8.1f}" for k in ("accuracy", "recall", "precision", "f1"))
        )
    lines.append("")
    if manifest.artifacts:
        lines.append("artifacts (sha256)")
        lines.extend(f"  {name}  {digest}" for name, digest in sorted(manifest.artifacts.items()))
    return "\n".join(lines) + "\n"


def _group_rows(manifest: RunManifest) -> list[ExtractionScore]:
    return [ExtractionScore(**r) for r in manifest.metrics.get("eval", {}).get("groups", [])]


def _read_csv_columns(path: Path, cols: tuple[str, ...]) -> list[list[float]] | None:
    if not path.exists():
        return None
    with open(path, encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    return [[float(r[c]) for r in rows] for c in cols]


def emit_report(manifest: RunManifest, out_dir: str | Path, run_dir: str | Path | None = None) -> list[Path]:
    """Write summary text, metric tables, curve CSVs and figures to ``out_dir``.

    Output depends only on the manifest and the run artifacts it lists, so
    regenerating from a saved manifest reproduces every file byte for byte.
    """
    from . import plotting

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    run_dir = Path(run_dir) if run_dir is not None else None
    written = []

    def put(name: str, text: str) -> None:
        path = out / name
        path.write_text(text, encoding="utf-8")
        written.append(path)

    rows = _group_rows(manifest)
    put("summary.txt", _summary(manifest))
    put("metrics.csv", report_csv(rows))
    put("metrics.json", report_json(rows))
    put("run_metrics.json", json.dumps(manifest.metrics, ensure_ascii=False, indent=2, sort_keys=True) + "\n")
    if rows:
        data = [r for r in rows if r.group != "Average"]
        written.append(plotting.plot_group_scores(
            [r.group for r in data], [r.f1 for r in data], [r.accuracy for r in data], out / "group_scores.png"
        ))
    if run_dir is None:
        return written

    if "sft_curve.csv" in manifest.artifacts:
        cols = _read_csv_columns(run_dir / "sft_curve.csv", ("step", "loss", "grad_norm"))
        if cols is not None:
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["step", "loss", "grad_norm"])
            w.writerows([int(s), repr(l), repr(g)] for s, l, g in zip(*cols))
            put("sft_curve.csv", buf.getvalue())
            written.append(plotting.plot_training_curves(cols[1], cols[2], out / "sft_curve.png"))
    if "grpo_log.csv" in manifest.artifacts:
        cols = _read_csv_columns(run_dir / "grpo_log.csv", ("mean_reward", "kl"))
        if cols is not None:
            put("grpo_log.csv", (run_dir / "grpo_log.csv").read_text(encoding="utf-8"))
            written.append(plotting.plot_grpo(cols[0], cols[1], out / "grpo.png"))
    if "overlap.csv" in manifest.artifacts and (run_dir / "overlap.csv").exists():
        with open(run_dir / "overlap.csv", encoding="utf-8") as f:
            table = [r for r in csv.DictReader(f) if r["doc_id"] != "mean"]
        put("overlap.csv", (run_dir / "overlap.csv").read_text(encoding="utf-8"))
        written.append(plotting.plot_overlap(
            [r["doc_id"] for r in table], [float(r["original"]) for r in table],
            [float(r["augmented"]) for r in table], out / "overlap.png",
        ))
    return written
