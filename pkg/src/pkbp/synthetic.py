"""Access to the bundled 30-sentence corpus and its gold slot files."""

from __future__ import annotations

from pathlib import Path

import pandas as pd

from .annotate import annotate_dataset, default_rules
from .evalkbp import SlotQuery, parse_protected, parse_queries
from .graph import PropertyGraph, build_graph, to_feature_table
from .ingest import Dataset, parse_tacred

SYNTHETIC_DIR = Path(__file__).parent / "data" / "synthetic"


def corpus() -> Dataset:
    return parse_tacred(SYNTHETIC_DIR / "records.json")


def queries() -> list[SlotQuery]:
    return parse_queries(SYNTHETIC_DIR / "queries.tsv")


def protected() -> dict[str, dict[str, set[str]]]:
    return parse_protected(SYNTHETIC_DIR / "protected.tsv")


def graph(use_rules: bool = True) -> PropertyGraph:
    """The populated graph, with rule annotators on (augmented) or off (baseline)."""
    ds = corpus()
    return build_graph(ds, *annotate_dataset(ds.records, default_rules(), use_rules=use_rules))


def observed_attributes(g: PropertyGraph) -> list[str]:
    return sorted({k for node in g.nodes.values() for k in node.attributes})


def attribute_table(g: PropertyGraph, schema: list[str] | None = None) -> pd.DataFrame:
    """Feature table over ``schema`` (default: every attribute seen in ``g``) without the target."""
    return to_feature_table(g, observed_attributes(g) if schema is None else schema).drop(columns="target")
