"""Command-line entry point: one subcommand per stage plus ``run`` for the whole pipeline.

Configuration is a flat ``key=value`` file (``#`` comments, dotted section
prefixes such as ``sketch.theta``).  ``--set key=value`` and the explicit
flags override file values.  Every random choice derives from ``seed``
through named substreams, so a rerun with the same configuration reproduces
every output byte for byte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Sequence

from . import __version__
from .annotate import EntityMention, RelationAnnotation, annotate_dataset, default_rules_dir, load_rules
from .evalkbp import evaluate_queries, metrics_report, parse_protected, parse_queries, protected_recall, write_metrics
from .fairness import (
    DEFAULT_PROTECTED,
    ForestParams,
    fairness_report,
    link_table,
    train_forest,
    write_report,
    write_report_csv,
)
from .graph import PropertyGraph, build_graph, export_edgelist, export_triples, to_feature_table, write_feature_table
from .ingest import Dataset, parse_tacred, validation_report, write_tacred
from .linkpred import (
    Hyperparams,
    augment_with_predictions,
    benchmark,
    constant_features,
    node_features,
    split_edges,
    train_link_model,
)
from .linkpred import write_metrics as write_linkpred_metrics
from .numcore import derive_seed
from .sketch import SketchConfig, representative_sample, write_sample_outputs
from .synthetic import SYNTHETIC_DIR, attribute_table, observed_attributes

log = logging.getLogger("pkbp")

DEFAULT_CONFIG = SYNTHETIC_DIR / "pipeline.conf"
ARTIFACTS = ("edges.tsv", "triples.txt", "features.csv", "linkpred.metrics.json",
             "kbp_metrics.json", "fairness_report.json", "samples.csv", "projection.csv")


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage


# ---- configuration --------------------------------------------------------------

@dataclass(frozen=True)
class PipelineConfig:
    records: Path = SYNTHETIC_DIR / "records.json"
    rules: Path = field(default_factory=default_rules_dir)
    queries: Path = SYNTHETIC_DIR / "queries.tsv"
    protected_gold: Path = SYNTHETIC_DIR / "protected.tsv"
    output: Path = Path("pkbp-out")
    seed: int = 42
    use_rules: bool = True
    sketch: SketchConfig = SketchConfig()
    linkpred: Hyperparams = Hyperparams()
    linkpred_seeds: int = 5
    linkpred_test_fraction: float = 0.2
    linkpred_threshold: float = 0.9
    linkpred_features: str = "attribute"
    forest: ForestParams = ForestParams()
    protected: tuple[str, ...] = DEFAULT_PROTECTED
    lime_samples: int = 500
    shap_permutations: int = 1000
    fairness_csv: bool = False

    def validate(self) -> "PipelineConfig":
        for name in ("records", "queries", "protected_gold"):
            if not Path(getattr(self, name)).exists():
                raise FileNotFoundError(f"{name}: {getattr(self, name)} does not exist")
        if self.linkpred_features not in ("attribute", "constant"):
            raise ValueError("linkpred.features must be 'attribute' or 'constant'")
        return self


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _typed(value: str, like):
    if isinstance(like, bool):
        return _bool(value)
    if isinstance(like, int) or like is None:
        return int(value)
    if isinstance(like, float):
        return float(value)
    if isinstance(like, tuple):
        return tuple(v.strip() for v in value.split(",") if v.strip())
    return value.strip()


# top-level keys that name paths resolved against the config file's directory
_PATH_KEYS = ("records", "rules", "queries", "protected_gold")
_SECTIONS = {"sketch": "sketch", "linkpred": "linkpred", "forest": "forest"}
_FLAT_SECTION_KEYS = {
    "linkpred.seeds": "linkpred_seeds", "linkpred.test_fraction": "linkpred_test_fraction",
    "linkpred.threshold": "linkpred_threshold", "linkpred.features": "linkpred_features",
    "fairness.protected": "protected", "fairness.lime_samples": "lime_samples",
    "fairness.shap_permutations": "shap_permutations", "fairness.csv": "fairness_csv",
    "annotate.use_rules": "use_rules",
}


def read_config_file(path) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def build_config(values: dict[str, str], base_dir: Path | None = None,
                 start: PipelineConfig | None = None) -> PipelineConfig:
    """Apply ``values`` on top of ``start`` (defaults when omitted); relative input
    paths are taken relative to ``base_dir`` when given."""
    cfg = start or PipelineConfig()
    top: dict = {}
    nested: dict[str, dict] = {s: {} for s in _SECTIONS}
    for key, value in values.items():
        if key in _FLAT_SECTION_KEYS:
            name = _FLAT_SECTION_KEYS[key]
            top[name] = _typed(value, getattr(cfg, name))
        elif "." in key:
            section, sub = key.split(".", 1)
            if section not in _SECTIONS:
                raise ValueError(f"unknown config section in {key!r}")
            obj = getattr(cfg, _SECTIONS[section])
            if sub not in {f.name for f in fields(obj)}:
                raise ValueError(f"unknown config key {key!r}")
            nested[section][sub] = _typed(value, getattr(obj, sub))
        elif key in {f.name for f in fields(cfg)} and key not in _SECTIONS:
            if key in _PATH_KEYS:
                p = Path(value)
                top[key] = p if p.is_absolute() or base_dir is None else base_dir / p
            elif key == "output":
                top[key] = Path(value)
            else:
                top[key] = _typed(value, getattr(cfg, key))
        else:
            raise ValueError(f"unknown config key {key!r}")
    for section, attrs in nested.items():
        if attrs:
            top[_SECTIONS[section]] = replace(getattr(cfg, _SECTIONS[section]), **attrs)
    return replace(cfg, **top)


def config_from_args(args) -> PipelineConfig:
    values: dict[str, str] = {}
    base = None
    if args.config:
        values.update(read_config_file(args.config))
        base = Path(args.config).parent
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = str(args.seed)
    if getattr(args, "output", None):
        overrides["output"] = args.output
    # paths given on the command line are relative to the working directory
    return build_config(overrides, None, build_config(values, base))


def config_digest(cfg: PipelineConfig) -> str:
    """Hash of the configuration with input files replaced by their content hashes."""
    def norm(v):
        if isinstance(v, Path):
            return _tree_hash(v) if v.exists() else str(v)
        if hasattr(v, "__dataclass_fields__"):
            return {f.name: norm(getattr(v, f.name)) for f in fields(v)}
        if isinstance(v, tuple):
            return list(v)
        return v
    body = {f.name: norm(getattr(cfg, f.name)) for f in fields(cfg) if f.name != "output"}
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()


def _tree_hash(path: Path) -> str:
    h = hashlib.sha256()
    files = [path] if path.is_file() else sorted(p for p in path.rglob("*") if p.is_file())
    for p in files:
        h.update(p.relative_to(path).as_posix().encode() if p != path else b"")
        h.update(hashlib.sha256(p.read_bytes()).digest())
    return h.hexdigest()


# ---- stages ------------------------------------------------------------------

def _stage(name: str, fn: Callable, *a, **kw):
    try:
        return fn(*a, **kw)
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001 - every failure is reported with its stage
        raise StageError(name, exc) from exc


def stage_ingest(cfg: PipelineConfig) -> Dataset:
    return parse_tacred(cfg.records)


def stage_annotate(cfg: PipelineConfig, ds: Dataset):
    rules = load_rules(cfg.rules)
    return annotate_dataset(ds.records, rules, use_rules=cfg.use_rules)


def stage_linkpred(cfg: PipelineConfig, g: PropertyGraph) -> tuple[list[dict], PropertyGraph]:
    feats = node_features(g) if cfg.linkpred_features == "attribute" else constant_features(len(g.nodes))
    seeds = [derive_seed(cfg.seed, f"linkpred/run/{i}") % 2**32 for i in range(cfg.linkpred_seeds)]
    results = benchmark(g, feats, seeds, cfg.linkpred, cfg.linkpred_test_fraction)
    final_seed = derive_seed(cfg.seed, "linkpred/final") % 2**32
    split = split_edges(g, cfg.linkpred_test_fraction, final_seed)
    model = train_link_model("PGNN", g, split, feats, replace(cfg.linkpred, seed=final_seed))
    return results, augment_with_predictions(g, model, cfg.linkpred_threshold)


def stage_evaluate(cfg: PipelineConfig, g: PropertyGraph) -> dict:
    hops = evaluate_queries(g, parse_queries(cfg.queries))
    return metrics_report(hops, protected_recall(g, parse_protected(cfg.protected_gold)))


def stage_fairness(cfg: PipelineConfig, g: PropertyGraph) -> dict:
    relations = sorted({e.relation for e in g.edges.values()})
    X, y = link_table(g, observed_attributes(g), relations)
    seed = derive_seed(cfg.seed, "fairness")
    if len(set(y)) < 2:
        raise ValueError("every person has the same link status; nothing to classify")
    model = train_forest(X, y, cfg.forest, derive_seed(seed, "forest"))
    return fairness_report(model, X, y, cfg.protected, seed, explain_rows=(0,),
                           lime_samples=cfg.lime_samples, shap_permutations=cfg.shap_permutations)


def stage_sample(cfg: PipelineConfig, g: PropertyGraph):
    return representative_sample(attribute_table(g), replace(cfg.sketch, seed=derive_seed(cfg.seed, "sample")))


def stage_export(g: PropertyGraph, out: Path) -> None:
    export_edgelist(g, out / "edges.tsv")
    export_triples(g, out / "triples.txt")
    write_feature_table(to_feature_table(g, observed_attributes(g)), out / "features.csv")


def file_sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def manifest_for(out: Path, names: Sequence[str], cfg: PipelineConfig) -> dict:
    return {
        "pkbp_version": __version__,
        "config_sha256": config_digest(cfg),
        "artifacts": [{"path": n, "sha256": file_sha256(out / n), "bytes": (out / n).stat().st_size}
                      for n in names],
    }


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Run every stage, write the eight artifacts and ``manifest.json`` into ``cfg.output``."""
    _stage("config", cfg.validate)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    ds = _stage("ingest", stage_ingest, cfg)
    mentions, relations = _stage("annotate", stage_annotate, cfg, ds)
    kb = _stage("build-graph", build_graph, ds, mentions, relations)
    lp_results, final = _stage("linkpred", stage_linkpred, cfg, kb)
    _stage("linkpred", write_linkpred_metrics, lp_results, out / "linkpred.metrics.json")
    _stage("evaluate", lambda: write_metrics(stage_evaluate(cfg, final), out / "kbp_metrics.json"))
    report = _stage("fairness", stage_fairness, cfg, kb)
    _stage("fairness", write_report, report, out / "fairness_report.json")
    if cfg.fairness_csv:
        _stage("fairness", write_report_csv, report, out / "fairness_report.csv")
    sample = _stage("sample", stage_sample, cfg, final)
    _stage("sample", write_sample_outputs, sample, out / "samples.csv", out / "projection.csv")
    _stage("export", stage_export, final, out)
    manifest = manifest_for(out, ARTIFACTS, cfg)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest


# ---- intermediate files used by the single-stage subcommands -----------------------------

def write_annotations(mentions, relations, path) -> None:
    data = {"mentions": {rid: [m.to_json() for m in ms] for rid, ms in sorted(mentions.items())},
            "relations": {rid: [r.to_json() for r in rs] for rid, rs in sorted(relations.items())}}
    Path(path).write_text(json.dumps(data, indent=1) + "\n", encoding="utf-8")


def read_annotations(path):
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    mentions = {rid: [EntityMention.from_json(m) for m in ms] for rid, ms in data["mentions"].items()}
    relations = {rid: [RelationAnnotation.from_json(r) for r in rs] for rid, rs in data["relations"].items()}
    return mentions, relations


# ---- argument parsing -------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one configuration value")
    p.add_argument("--seed", type=int, help="master seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pkbp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="store_true", help="print version information as JSON")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("ingest", help="validate records and write them back normalized")
    _common(p)
    p.add_argument("--records", nargs="*", help="record files (default: config)")
    p.add_argument("--out", help="write the parsed dataset here")
    p.add_argument("--report", action="store_true", help="list every violation instead of stopping at the first")

    p = sub.add_parser("annotate", help="entity and relation annotation")
    _common(p)
    p.add_argument("--records")
    p.add_argument("--rules")
    p.add_argument("--no-rules", action="store_true", help="dataset annotations only (baseline)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("build-graph", help="populate the person graph")
    _common(p)
    p.add_argument("--records")
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("linkpred", help="benchmark GCN and PGNN, add predicted edges")
    _common(p)
    p.add_argument("--graph", required=True)
    p.add_argument("--metrics", required=True, help="linkpred.metrics.json path")
    p.add_argument("--out", required=True, help="augmented graph path")

    p = sub.add_parser("evaluate", help="hop-0/hop-1 slot filling metrics")
    _common(p)
    p.add_argument("--graph", required=True)
    p.add_argument("--queries")
    p.add_argument("--protected")
    p.add_argument("--out", required=True)

    p = sub.add_parser("fairness", help="forest, explanations and protected-attribute audit")
    _common(p)
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", help="also write the flat CSV twin here")

    p = sub.add_parser("sample", help="representative person sample")
    _common(p)
    p.add_argument("--graph", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--projection", required=True)

    p = sub.add_parser("export", help="edge list, triples and feature table")
    _common(p)
    p.add_argument("--graph", required=True)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("run", help="the whole pipeline")
    _common(p)
    p.add_argument("--output", help="output directory")
    p.add_argument("--manifest", action="store_true", help="print the manifest JSON on stdout")
    return parser


def _override(cfg: PipelineConfig, **paths) -> PipelineConfig:
    return replace(cfg, **{k: Path(v) for k, v in paths.items() if v})


def dispatch(args) -> int:
    cmd = args.command
    cfg = _stage("config", config_from_args, args)
    if cmd == "run":
        manifest = run_pipeline(cfg)
        if args.manifest:
            print(json.dumps(manifest, indent=2))
        else:
            print(f"wrote {len(manifest['artifacts'])} artifacts to {cfg.output}")
        return 0
    if cmd == "ingest":
        paths = args.records or [cfg.records]
        if args.report:
            lines = _stage("ingest", validation_report, paths)
            print("\n".join(lines) if lines else "no violations")
            return 1 if lines else 0
        ds = _stage("ingest", lambda: Dataset(tuple(r for p in paths for r in parse_tacred(p).records)))
        if args.out:
            write_tacred(ds, args.out)
        print(f"{len(ds.records)} records, {len(ds.relation_inventory)} relation labels")
        return 0
    if cmd == "annotate":
        cfg = _override(cfg, records=args.records, rules=args.rules)
        if args.no_rules:
            cfg = replace(cfg, use_rules=False)
        ds = _stage("ingest", stage_ingest, cfg)
        mentions, relations = _stage("annotate", stage_annotate, cfg, ds)
        write_annotations(mentions, relations, args.out)
        return 0
    if cmd == "build-graph":
        cfg = _override(cfg, records=args.records)
        ds = _stage("ingest", stage_ingest, cfg)
        mentions, relations = _stage("build-graph", read_annotations, args.annotations)
        _stage("build-graph", build_graph, ds, mentions, relations).save(args.out)
        return 0
    g = _stage(cmd, PropertyGraph.load, args.graph)
    if cmd == "linkpred":
        results, final = _stage("linkpred", stage_linkpred, cfg, g)
        write_linkpred_metrics(results, args.metrics)
        final.save(args.out)
    elif cmd == "evaluate":
        cfg = _override(cfg, queries=args.queries, protected_gold=args.protected)
        write_metrics(_stage("evaluate", stage_evaluate, cfg, g), args.out)
    elif cmd == "fairness":
        report = _stage("fairness", stage_fairness, cfg, g)
        write_report(report, args.out)
        if args.csv:
            write_report_csv(report, args.csv)
    elif cmd == "sample":
        write_sample_outputs(_stage("sample", stage_sample, cfg, g), args.samples, args.projection)
    elif cmd == "export":
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _stage("export", stage_export, g, out)
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.version:
        print(json.dumps({"name": "pkbp", "version": __version__}))
        return 0
    if not args.command:
        parser.print_help(sys.stderr)
        return 2
    try:
        return dispatch(args)
    except StageError as err:
        print(f"pkbp: error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
