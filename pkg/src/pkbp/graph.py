"""Personal property graph: people are nodes, person-person relations are
edges, and every other relation becomes a node attribute."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import pandas as pd

from .annotate import EntityMention, RelationAnnotation
from .ingest import Dataset
from .text import normalize_name

MISSING = "__NA__"
PROVENANCE_RANK = {"dataset": 3, "rule": 2, "predicted": 1}

RELATION_ATTRIBUTE = {
    "per:alternate_names": "alternate_name",
    "per:age": "age",
    "per:date_of_birth": "date_of_birth",
    "per:date_of_death": "date_of_death",
    "per:city_of_birth": "city_of_birth",
    "per:city_of_death": "city_of_death",
    "per:country_of_birth": "country_of_birth",
    "per:stateorprovince_of_birth": "state_or_province",
    "per:stateorprovince_of_death": "state_or_province",
    "per:country_of_death": "country",
    "per:cities_of_residence": "residence",
    "per:countries_of_residence": "residence",
    "per:stateorprovinces_of_residence": "residence",
    "per:origin": "nationality",
    "per:religion": "religion",
    "per:cause_of_death": "cause_of_death",
    "per:charges": "charges",
    "per:schools_attended": "educated_at",
    "per:employee_of": "employee_of",
    "per:title": "title",
    "per:spouse": "spouse",
    "per:siblings": "sibling",
    "per:parents": "parent",
    "per:children": "children",
    "per:other_family": "other_family",
}

SYMMETRIC_RELATIONS = frozenset({"per:spouse", "per:siblings", "per:other_family"})


class InvalidArgument(ValueError):
    pass


@dataclass
class PersonNode:
    node_id: int
    canonical_name: str
    aliases: set[str] = field(default_factory=set)
    attributes: dict[str, set[str]] = field(default_factory=dict)


@dataclass(frozen=True)
class PersonEdge:
    src: int
    dst: int
    relation: str
    provenance: str = "dataset"
    score: float = 1.0

    @property
    def key(self) -> tuple[int, int, str]:
        return (self.src, self.dst, self.relation)


class PropertyGraph:
    def __init__(self):
        self.nodes: dict[int, PersonNode] = {}
        self.edges: dict[tuple[int, int, str], PersonEdge] = {}
        self.name_index: dict[str, int] = {}

    def __len__(self) -> int:
        return len(self.nodes)

    def resolve_person(self, surface: str) -> int:
        """Node id for ``surface``; a new node is created on first sight.

        Matching is exact on the normalized name (case, whitespace and
        leading honorifics are ignored); partial names never merge.
        """
        key = normalize_name(surface)
        if not key:
            raise InvalidArgument(f"empty person name: {surface!r}")
        node_id = self.name_index.get(key)
        if node_id is None:
            node_id = len(self.nodes)
            self.nodes[node_id] = PersonNode(node_id, " ".join(surface.split()))
            self.name_index[key] = node_id
        else:
            node = self.nodes[node_id]
            alias = " ".join(surface.split())
            if alias != node.canonical_name:
                node.aliases.add(alias)
        return node_id

    def lookup(self, name: str) -> int | None:
        return self.name_index.get(normalize_name(name))

    def add_attribute(self, node_id: int, fine_type: str, value: str) -> None:
        self.nodes[node_id].attributes.setdefault(fine_type, set()).add(value)

    def add_edge(self, src: int, dst: int, relation: str, provenance: str = "dataset",
                 score: float = 1.0) -> bool:
        if src == dst:
            return False
        if src not in self.nodes or dst not in self.nodes:
            raise InvalidArgument(f"edge endpoint missing: {src} -> {dst}")
        if provenance != "predicted":
            score = 1.0
        edge = PersonEdge(src, dst, relation, provenance, float(score))
        prev = self.edges.get(edge.key)
        if prev is not None and PROVENANCE_RANK[prev.provenance] >= PROVENANCE_RANK[provenance]:
            return False
        self.edges[edge.key] = edge
        return True

    def sorted_edges(self) -> list[PersonEdge]:
        return [self.edges[k] for k in sorted(self.edges)]

    def linked_pairs(self) -> set[tuple[int, int]]:
        """Unordered node pairs joined by at least one edge, as ``(min, max)``."""
        return {(min(e.src, e.dst), max(e.src, e.dst)) for e in self.edges.values()}

    def degree(self) -> dict[int, int]:
        deg = {n: 0 for n in self.nodes}
        for u, v in self.linked_pairs():
            deg[u] += 1
            deg[v] += 1
        return deg

    def neighbours(self, node_id: int, relation: str) -> set[int]:
        out = {e.dst for e in self.edges.values() if e.src == node_id and e.relation == relation}
        if relation in SYMMETRIC_RELATIONS:
            out |= {e.src for e in self.edges.values() if e.dst == node_id and e.relation == relation}
        return out

    def copy(self) -> "PropertyGraph":
        g = PropertyGraph()
        for nid, n in self.nodes.items():
            g.nodes[nid] = PersonNode(nid, n.canonical_name, set(n.aliases),
                                      {k: set(v) for k, v in n.attributes.items()})
        g.edges = dict(self.edges)
        g.name_index = dict(self.name_index)
        return g

    # -- serialization ---------------------------------------------------

    def to_json(self) -> dict:
        return {
            "nodes": [
                {"id": n.node_id, "name": n.canonical_name, "aliases": sorted(n.aliases),
                 "attributes": {k: sorted(v) for k, v in sorted(n.attributes.items())}}
                for n in (self.nodes[i] for i in sorted(self.nodes))
            ],
            "edges": [
                {"src": e.src, "dst": e.dst, "relation": e.relation,
                 "provenance": e.provenance, "score": e.score}
                for e in self.sorted_edges()
            ],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "PropertyGraph":
        g = cls()
        for n in data["nodes"]:
            node = PersonNode(int(n["id"]), n["name"], set(n.get("aliases", ())),
                              {k: set(v) for k, v in n.get("attributes", {}).items()})
            g.nodes[node.node_id] = node
            for name in [node.canonical_name, *node.aliases]:
                g.name_index[normalize_name(name)] = node.node_id
        for e in data["edges"]:
            edge = PersonEdge(int(e["src"]), int(e["dst"]), e["relation"], e["provenance"], float(e["score"]))
            g.edges[edge.key] = edge
        return g

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1, ensure_ascii=False) + "\n",
                              encoding="utf-8")

    @classmethod
    def load(cls, path) -> "PropertyGraph":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    @classmethod
    def from_pairs(cls, n: int, pairs: Iterable[tuple[int, int]], relation: str = "per:other_family"):
        """Synthetic graph with persons ``p0 .. p{n-1}``; handy for link-prediction fixtures."""
        g = cls()
        for i in range(n):
            g.resolve_person(f"p{i}")
        for u, v in pairs:
            g.add_edge(int(u), int(v), relation)
        return g


def signature(g: PropertyGraph):
    """Id-free description of ``g``; equal for isomorphic builds."""
    name = {nid: normalize_name(n.canonical_name) for nid, n in g.nodes.items()}
    nodes = sorted(
        (name[nid], tuple(sorted((k, tuple(sorted(v))) for k, v in n.attributes.items())))
        for nid, n in g.nodes.items()
    )
    edges = sorted((name[e.src], name[e.dst], e.relation, e.provenance, e.score) for e in g.edges.values())
    return nodes, edges


def build_graph(ds: Dataset, mentions: Mapping[str, list[EntityMention]],
                rels: Mapping[str, list[RelationAnnotation]]) -> PropertyGraph:
    g = PropertyGraph()
    for r in ds.records:
        for m in mentions.get(r.id, ()):
            if m.coarse_type == "PERSON" and m.provenance == "dataset":
                g.resolve_person(m.surface)
        for a in rels.get(r.id, ()):
            if a.subject.coarse_type != "PERSON":
                continue
            src = g.resolve_person(a.subject.surface)
            if a.object.coarse_type == "PERSON":
                dst = g.resolve_person(a.object.surface)
                g.add_edge(src, dst, a.relation, a.provenance)
            else:
                key = RELATION_ATTRIBUTE.get(a.relation, a.object.fine_type)
                g.add_attribute(src, key, a.object.surface)
    return g


def export_edgelist(g: PropertyGraph, path) -> int:
    rows = g.sorted_edges()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for e in rows:
            fh.write(f"{e.src}\t{e.dst}\t{e.relation}\t{e.provenance}\t{e.score:.6f}\n")
    return len(rows)


def read_edgelist(path) -> list[tuple[int, int, str, str, float]]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        s, d, rel, prov, score = line.split("\t")
        out.append((int(s), int(d), rel, prov, float(score)))
    return out


def triple_lines(g: PropertyGraph) -> list[str]:
    lines = []
    by_src: dict[int, list[PersonEdge]] = {}
    for e in g.sorted_edges():
        by_src.setdefault(e.src, []).append(e)
    for nid in sorted(g.nodes):
        node = g.nodes[nid]
        for key in sorted(node.attributes):
            for value in sorted(node.attributes[key]):
                lines.append(f"person:{nid} {key} {value}")
        for e in by_src.get(nid, ()):
            lines.append(f"person:{e.src} {e.relation} person:{e.dst}")
    return lines


def export_triples(g: PropertyGraph, path) -> int:
    lines = triple_lines(g)
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return len(lines)


def parse_triple(line: str) -> tuple[str, str, str]:
    subject, predicate, value = line.split(" ", 2)
    return subject, predicate, value


def to_feature_table(g: PropertyGraph, schema: Iterable[str]) -> pd.DataFrame:
    """One row per person: first value (lexicographic) of each schema attribute
    or ``__NA__``, plus ``target`` = 0 when the person has any edge, else 1."""
    schema = list(schema)
    deg = g.degree()
    rows = []
    for nid in sorted(g.nodes):
        attrs = g.nodes[nid].attributes
        row = {"person_id": nid}
        for key in schema:
            values = attrs.get(key)
            row[key] = min(values) if values else MISSING
        row["target"] = 0 if deg[nid] >= 1 else 1
        rows.append(row)
    df = pd.DataFrame(rows, columns=["person_id", *schema, "target"])
    return df.set_index("person_id")


def write_feature_table(df: pd.DataFrame, path) -> int:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([df.index.name or "person_id", *df.columns])
        for idx, row in zip(df.index, df.itertuples(index=False)):
            w.writerow([idx, *row])
    return len(df)
