"""Cold-start slot-filling evaluation over a populated graph.

Hop-0 queries ask for people related to a person; hop-1 queries ask for an
attribute of a hop-0 answer.  Counts are pooled across queries (micro).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .graph import RELATION_ATTRIBUTE, PropertyGraph
from .text import normalize_name


def f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


@dataclass(frozen=True)
class HopMetrics:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return 1.0 if self.tp + self.fp == 0 else self.tp / (self.tp + self.fp)

    @property
    def recall(self) -> float:
        return 1.0 if self.tp + self.fn == 0 else self.tp / (self.tp + self.fn)

    @property
    def f1(self) -> float:
        return f1(self.precision, self.recall)

    def __add__(self, other: "HopMetrics") -> "HopMetrics":
        return HopMetrics(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    def as_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1,
                "tp": self.tp, "fp": self.fp, "fn": self.fn}


@dataclass(frozen=True)
class SlotQuery:
    hop: int
    subject: str
    slot: str
    gold: frozenset[str]

    def __post_init__(self):
        if self.hop not in (0, 1):
            raise ValueError(f"hop must be 0 or 1, got {self.hop}")
        if not self.gold:
            raise ValueError(f"query ({self.subject}, {self.slot}) has no gold fillers")


def parse_queries(path) -> list[SlotQuery]:
    queries = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 4 or parts[0] not in ("hop0", "hop1"):
            raise ValueError(f"{path}:{lineno}: expected 'hop<0|1>\\tsubject\\tslot\\tgold|gold'")
        hop, subject, slot, gold = parts
        queries.append(SlotQuery(int(hop[3]), subject, slot, frozenset(g for g in gold.split("|") if g)))
    return queries


def write_queries(queries: Iterable[SlotQuery], path) -> None:
    Path(path).write_text("".join(
        f"hop{q.hop}\t{q.subject}\t{q.slot}\t{'|'.join(sorted(q.gold))}\n" for q in queries), encoding="utf-8")


def retrieve(g: PropertyGraph, subject: str, slot: str, hop: int) -> set[str] | None:
    """Normalized fillers the graph holds for ``(subject, slot)``; ``None`` if the subject is unknown."""
    nid = g.lookup(subject)
    if nid is None:
        return None
    if hop == 0:
        return {normalize_name(g.nodes[v].canonical_name) for v in g.neighbours(nid, slot)}
    key = RELATION_ATTRIBUTE.get(slot, slot)
    return {normalize_name(v) for v in g.nodes[nid].attributes.get(key, ())}


def query_counts(g: PropertyGraph, q: SlotQuery, answerable: bool = True) -> HopMetrics:
    gold = {normalize_name(x) for x in q.gold}
    got = retrieve(g, q.subject, q.slot, q.hop) if answerable else None
    if got is None:
        return HopMetrics(0, 0, len(gold))
    return HopMetrics(len(got & gold), len(got - gold), len(gold - got))


def evaluate_hop(g: PropertyGraph, queries: list[SlotQuery],
                 hop0: list[SlotQuery] | None = None) -> HopMetrics:
    """Micro-pooled metrics for queries of a single hop level.

    When hop-0 queries are supplied for a hop-1 evaluation, a hop-1 query
    whose subject is a hop-0 gold answer is only answerable if that answer
    was actually retrieved; otherwise all its gold fillers count as misses.
    """
    hops = {q.hop for q in queries}
    if len(hops) > 1:
        raise ValueError("queries mix hop levels")
    reachable: set[str] | None = None
    dependent: set[str] = set()
    if hop0 is not None and hops == {1}:
        reachable = set()
        for q0 in hop0:
            gold0 = {normalize_name(x) for x in q0.gold}
            dependent |= gold0
            got = retrieve(g, q0.subject, q0.slot, 0) or set()
            reachable |= got & gold0
    total = HopMetrics()
    for q in queries:
        answerable = True
        if reachable is not None:
            subj = normalize_name(q.subject)
            answerable = subj not in dependent or subj in reachable
        total = total + query_counts(g, q, answerable)
    return total


def hop_all(m0: HopMetrics, m1: HopMetrics) -> HopMetrics:
    return m0 + m1


def evaluate_queries(g: PropertyGraph, queries: list[SlotQuery]) -> dict[str, HopMetrics]:
    q0 = [q for q in queries if q.hop == 0]
    q1 = [q for q in queries if q.hop == 1]
    m0 = evaluate_hop(g, q0)
    m1 = evaluate_hop(g, q1, hop0=q0)
    return {"hop0": m0, "hop1": m1, "hopall": hop_all(m0, m1)}


ProtectedGold = Mapping[str, Mapping[str, Iterable[str]]]


def parse_protected(path) -> dict[str, dict[str, set[str]]]:
    """Lines ``person<TAB>attribute<TAB>value|value``."""
    gold: dict[str, dict[str, set[str]]] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 'person\\tattribute\\tvalue|value'")
        person, attr, values = parts
        gold.setdefault(person, {}).setdefault(attr, set()).update(v for v in values.split("|") if v)
    return gold


def protected_recall(g: PropertyGraph, gold: ProtectedGold) -> dict[str, HopMetrics]:
    """Per-attribute pooled counts over the gold persons, plus an ``aggregate`` entry."""
    if not gold:
        raise ValueError("protected gold is empty")
    per_attr: dict[str, HopMetrics] = {}
    for person, attrs in gold.items():
        nid = g.lookup(person)
        for attr, values in attrs.items():
            want = {normalize_name(v) for v in values}
            have = set() if nid is None else {normalize_name(v) for v in g.nodes[nid].attributes.get(attr, ())}
            m = HopMetrics(len(want & have), len(have - want), len(want - have))
            per_attr[attr] = per_attr.get(attr, HopMetrics()) + m
    out = dict(sorted(per_attr.items()))
    agg = HopMetrics()
    for m in out.values():
        agg = agg + m
    out["aggregate"] = agg
    return out


def generate_queries(truth: PropertyGraph, seed: int, n_hop0: int = 10,
                     n_hop1: int = 10) -> list[SlotQuery]:
    """Sample hop-0 queries from the edges of a gold graph, then hop-1 queries
    about the attributes of their answers."""
    gen = np.random.default_rng(seed)
    slots = sorted({(e.src, e.relation) for e in truth.edges.values()})
    chosen = [slots[i] for i in sorted(gen.permutation(len(slots))[:n_hop0])]
    out: list[SlotQuery] = []
    answers: list[int] = []
    for src, rel in chosen:
        fillers = sorted(truth.neighbours(src, rel))
        out.append(SlotQuery(0, truth.nodes[src].canonical_name, rel,
                             frozenset(truth.nodes[f].canonical_name for f in fillers)))
        answers.extend(fillers)
    pool = sorted({(a, k) for a in answers for k in truth.nodes[a].attributes})
    for i in sorted(gen.permutation(len(pool))[:n_hop1]):
        a, k = pool[i]
        out.append(SlotQuery(1, truth.nodes[a].canonical_name, k, frozenset(truth.nodes[a].attributes[k])))
    return out


def metrics_report(hops: Mapping[str, HopMetrics], protected: Mapping[str, HopMetrics] | None) -> dict:
    report = {k: v.as_dict() for k, v in hops.items()}
    if protected is not None:
        report["protected"] = {k: v.as_dict() for k, v in protected.items()}
    return report


def write_metrics(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
