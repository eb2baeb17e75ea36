"""Rule-based personal-data annotators.

Three kinds of labeling functions run over each sentence record:

* dictionaries (``<fine_type>.dict``) matched longest-first, leftmost on ties;
* token patterns (``patterns.conf``) in a small regex subset;
* trigger-window relation rules (``relations.rules``).

Dictionary matching is deliberately context-free, so a city name used as a
person's name is still tagged as a location.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

from .ingest import NO_RELATION, TACRED_RELATIONS, SentenceRecord
from .text import normalize_phrase

PERSONAL_ENTITY_TYPES = (
    "name", "alternate_name", "email", "url", "phone", "date", "date_of_birth",
    "date_of_death", "age", "gender", "ethnicity", "nationality", "religion", "title",
    "organization", "employee_of", "school", "educated_at", "location", "city",
    "state_or_province", "country", "residence", "city_of_birth", "city_of_death",
    "country_of_birth", "cause_of_death", "charges", "spouse", "sibling", "parent",
    "children", "other_family", "other",
)

FINE_TO_COARSE = {
    "name": "PERSON", "alternate_name": "PERSON", "spouse": "PERSON", "sibling": "PERSON",
    "parent": "PERSON", "children": "PERSON", "other_family": "PERSON",
    "email": "EMAIL", "url": "URL", "phone": "PHONE",
    "date": "DATE", "date_of_birth": "DATE", "date_of_death": "DATE",
    "age": "NUMBER", "gender": "GENDER", "ethnicity": "NATIONALITY", "nationality": "NATIONALITY",
    "religion": "RELIGION", "title": "TITLE",
    "organization": "ORGANIZATION", "employee_of": "ORGANIZATION", "school": "ORGANIZATION",
    "educated_at": "ORGANIZATION",
    "location": "LOCATION", "residence": "LOCATION", "city_of_birth": "LOCATION",
    "city_of_death": "LOCATION", "country_of_birth": "LOCATION",
    "city": "CITY", "state_or_province": "STATE_OR_PROVINCE", "country": "COUNTRY",
    "cause_of_death": "CAUSE_OF_DEATH", "charges": "CRIMINAL_CHARGE", "other": "MISC",
}

COARSE_TO_FINE = {
    "PERSON": "name", "ORGANIZATION": "organization", "LOCATION": "location",
    "CITY": "city", "COUNTRY": "country", "STATE_OR_PROVINCE": "state_or_province",
    "DATE": "date", "NUMBER": "age", "TITLE": "title", "RELIGION": "religion",
    "NATIONALITY": "nationality", "CAUSE_OF_DEATH": "cause_of_death",
    "CRIMINAL_CHARGE": "charges", "URL": "url", "EMAIL": "email",
}

PROVENANCE_RANK = {"dataset": 2, "rule": 1}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EntityMention:
    record_id: str
    span: tuple[int, int]
    surface: str
    coarse_type: str
    fine_type: str
    provenance: str  # dictionary | pattern | dataset

    def sort_key(self):
        return (self.span[0], self.fine_type, self.span[1], self.provenance, self.coarse_type)

    def to_json(self) -> dict:
        return {"record_id": self.record_id, "span": list(self.span), "surface": self.surface,
                "coarse_type": self.coarse_type, "fine_type": self.fine_type,
                "provenance": self.provenance}

    @classmethod
    def from_json(cls, d: dict) -> "EntityMention":
        return cls(d["record_id"], tuple(d["span"]), d["surface"], d["coarse_type"],
                   d["fine_type"], d["provenance"])


@dataclass(frozen=True)
class RelationAnnotation:
    record_id: str
    subject: EntityMention
    object: EntityMention
    relation: str
    provenance: str  # rule | dataset
    confidence: float = 1.0

    @property
    def triple(self):
        return (self.subject.span, self.object.span, self.relation)

    def to_json(self) -> dict:
        return {"record_id": self.record_id, "subject": self.subject.to_json(),
                "object": self.object.to_json(), "relation": self.relation,
                "provenance": self.provenance, "confidence": self.confidence}

    @classmethod
    def from_json(cls, d: dict) -> "RelationAnnotation":
        return cls(d["record_id"], EntityMention.from_json(d["subject"]),
                   EntityMention.from_json(d["object"]), d["relation"], d["provenance"],
                   float(d["confidence"]))


@dataclass(frozen=True)
class RelationRule:
    subject_type: str
    object_type: str
    relation: str
    window: int
    triggers: tuple[tuple[str, ...], ...]


@dataclass(frozen=True)
class TokenPattern:
    expression: str
    elements: tuple[re.Pattern, ...]

    def match_at(self, tokens, i: int) -> bool:
        if i + len(self.elements) > len(tokens):
            return False
        return all(el.fullmatch(tokens[i + k]) for k, el in enumerate(self.elements))


@dataclass(frozen=True)
class RuleSet:
    dictionaries: dict[str, frozenset[str]] = field(default_factory=dict)
    patterns: dict[str, tuple[TokenPattern, ...]] = field(default_factory=dict)
    relation_rules: tuple[RelationRule, ...] = ()
    entity_types: frozenset[str] = frozenset(PERSONAL_ENTITY_TYPES)

    def __hash__(self):
        return id(self)


# -- pattern language -------------------------------------------------------

_FORBIDDEN = set("()|^$")


def compile_pattern(expression: str) -> TokenPattern:
    """Compile a whitespace-separated sequence of per-token expressions.

    Each element is a regex restricted to literals, escapes, character
    classes, ``.`` and the quantifiers ``* + ? {m,n}``; grouping, alternation
    and anchors are rejected.  Every element must match a whole token.
    """
    parts = expression.split()
    if not parts:
        raise ValueError("empty pattern")
    compiled = []
    for part in parts:
        in_class = False
        escaped = False
        for ch in part:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif in_class:
                in_class = ch != "]"
            elif ch == "[":
                in_class = True
            elif ch in _FORBIDDEN:
                raise ValueError(f"unsupported construct {ch!r} in {part!r}")
        if escaped or in_class:
            raise ValueError(f"unterminated element {part!r}")
        try:
            compiled.append(re.compile(part))
        except re.error as exc:
            raise ValueError(f"{part!r}: {exc}") from None
    return TokenPattern(expression, tuple(compiled))


# -- loading ----------------------------------------------------------------

def _content_lines(path: Path):
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if line and not line.startswith("#"):
            yield lineno, raw.rstrip("\n")


def load_rules(directory, inventory: Iterable[str] = TACRED_RELATIONS,
               entity_types: Iterable[str] = PERSONAL_ENTITY_TYPES) -> RuleSet:
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f"rules directory not found: {directory}")
    inventory = frozenset(inventory)
    entity_types = frozenset(entity_types)

    dictionaries: dict[str, frozenset[str]] = {}
    sources: dict[str, Path] = {}
    for path in sorted(directory.rglob("*.dict")):
        stem = path.stem
        if stem in dictionaries:
            raise ConfigError(f"duplicate entity type {stem!r}: {sources[stem]} and {path}")
        if stem not in entity_types:
            raise ConfigError(f"{path}: {stem!r} is not a personal entity type")
        phrases = {normalize_phrase(line) for _, line in _content_lines(path)}
        dictionaries[stem] = frozenset(p for p in phrases if p)
        sources[stem] = path
    if not dictionaries:
        raise ConfigError(f"no dictionaries found in {directory}")

    patterns: dict[str, list[TokenPattern]] = {}
    pattern_file = directory / "patterns.conf"
    if pattern_file.exists():
        for lineno, line in _content_lines(pattern_file):
            fine_type, sep, expr = line.partition("\t")
            fine_type = fine_type.strip()
            if not sep or fine_type not in entity_types:
                raise ConfigError(f"{pattern_file}:{lineno}: bad pattern line {line!r}")
            try:
                patterns.setdefault(fine_type, []).append(compile_pattern(expr.strip()))
            except ValueError as exc:
                raise ConfigError(f"{pattern_file}:{lineno}: unreadable pattern: {exc}") from None

    rules: list[RelationRule] = []
    rules_file = directory / "relations.rules"
    if rules_file.exists():
        for lineno, line in _content_lines(rules_file):
            fields = [f.strip() for f in line.split("\t")]
            if len(fields) != 5:
                raise ConfigError(f"{rules_file}:{lineno}: expected 5 tab-separated fields")
            subj, obj, label, window, triggers = fields
            if label not in inventory:
                raise ConfigError(f"{rules_file}:{lineno}: relation {label!r} not in inventory")
            try:
                w = int(window)
            except ValueError:
                raise ConfigError(f"{rules_file}:{lineno}: window {window!r} is not an integer") from None
            trig = tuple(tuple(normalize_phrase(t).split()) for t in triggers.split(",") if t.strip())
            if w < 0 or not trig:
                raise ConfigError(f"{rules_file}:{lineno}: need a non-negative window and triggers")
            rules.append(RelationRule(subj, obj, label, w, trig))

    return RuleSet(dictionaries, {k: tuple(v) for k, v in patterns.items()}, tuple(rules), entity_types)


def default_rules_dir() -> Path:
    return Path(str(resources.files("pkbp") / "rules"))


def default_rules() -> RuleSet:
    return load_rules(default_rules_dir())


# -- entity annotation ------------------------------------------------------

def _overlaps(a: tuple[int, int], b: tuple[int, int]) -> bool:
    return a[0] <= b[1] and b[0] <= a[1]


def _dictionary_matches(tokens: list[str], phrases: frozenset[str]):
    if not phrases:
        return
    max_len = max(len(p.split(" ")) for p in phrases)
    i = 0
    while i < len(tokens):
        for n in range(min(max_len, len(tokens) - i), 0, -1):
            if " ".join(tokens[i:i + n]) in phrases:
                yield (i, i + n - 1)
                i += n
                break
        else:
            i += 1


def _ner_runs(tags) -> list[tuple[tuple[int, int], str]]:
    runs = []
    i = 0
    while i < len(tags):
        tag = tags[i]
        j = i
        while j + 1 < len(tags) and tags[j + 1] == tag:
            j += 1
        if tag != "O":
            runs.append(((i, j), tag))
        i = j + 1
    return runs


def _dataset_mention(r: SentenceRecord, span, coarse: str, entity_types) -> EntityMention:
    fine = COARSE_TO_FINE.get(coarse, "other")
    if fine not in entity_types:
        fine = "other"
    return EntityMention(r.id, tuple(span), " ".join(r.tokens[span[0]:span[1] + 1]),
                         coarse, fine, "dataset")


def annotate_entities(r: SentenceRecord, rules: RuleSet) -> list[EntityMention]:
    candidates = [
        _dataset_mention(r, r.subj_span, r.subj_type, rules.entity_types),
        _dataset_mention(r, r.obj_span, r.obj_type, rules.entity_types),
    ]
    if r.ner_tags is not None:
        for span, tag in _ner_runs(r.ner_tags):
            candidates.append(_dataset_mention(r, span, tag, rules.entity_types))

    folded = [t.casefold() for t in r.tokens]
    for fine in sorted(rules.dictionaries):
        coarse = FINE_TO_COARSE.get(fine, "MISC")
        for span in _dictionary_matches(folded, rules.dictionaries[fine]):
            candidates.append(EntityMention(r.id, span, " ".join(r.tokens[span[0]:span[1] + 1]),
                                            coarse, fine, "dictionary"))
    for fine in sorted(rules.patterns):
        coarse = FINE_TO_COARSE.get(fine, "MISC")
        for pat in rules.patterns[fine]:
            for i in range(len(r.tokens)):
                if pat.match_at(r.tokens, i):
                    span = (i, i + len(pat.elements) - 1)
                    candidates.append(EntityMention(r.id, span, " ".join(r.tokens[span[0]:span[1] + 1]),
                                                    coarse, fine, "pattern"))

    kept: list[EntityMention] = []
    for m in candidates:
        if any(k.fine_type == m.fine_type and _overlaps(k.span, m.span) for k in kept):
            continue
        kept.append(m)
    return sorted(kept, key=EntityMention.sort_key)


# -- relation annotation ----------------------------------------------------

def _gap(a: tuple[int, int], b: tuple[int, int]) -> int:
    return max(0, max(a[0], b[0]) - min(a[1], b[1]) - 1)


def _trigger_spans(folded: list[str], trigger: tuple[str, ...]):
    n = len(trigger)
    for i in range(len(folded) - n + 1):
        if tuple(folded[i:i + n]) == trigger:
            yield (i, i + n - 1)


def _compatible(m: EntityMention, wanted: str) -> bool:
    return m.fine_type == wanted or m.coarse_type == wanted


def annotate_relations(r: SentenceRecord, mentions: list[EntityMention],
                       rules: RuleSet) -> list[RelationAnnotation]:
    """Gold relation plus every firing relation rule, deduplicated by triple.

    A rule fires for a (subject, object) mention pair when the pair and some
    trigger occurrence are pairwise within ``window`` tokens of each other.
    For person-to-person rules the subject must precede the object, which
    fixes the direction of asymmetric relations such as ``per:parents``.
    """
    out: dict[tuple, RelationAnnotation] = {}

    def offer(ann: RelationAnnotation):
        prev = out.get(ann.triple)
        if prev is None or PROVENANCE_RANK[ann.provenance] > PROVENANCE_RANK[prev.provenance]:
            out[ann.triple] = ann

    if r.relation != NO_RELATION:
        subj = next((m for m in mentions if m.span == r.subj_span and m.provenance == "dataset"), None)
        obj = next((m for m in mentions if m.span == r.obj_span and m.provenance == "dataset"), None)
        if subj is None:
            subj = _dataset_mention(r, r.subj_span, r.subj_type, rules.entity_types)
        if obj is None:
            obj = _dataset_mention(r, r.obj_span, r.obj_type, rules.entity_types)
        offer(RelationAnnotation(r.id, subj, obj, r.relation, "dataset", 1.0))

    folded = [t.casefold() for t in r.tokens]
    for rule in rules.relation_rules:
        trig_spans = [s for t in rule.triggers for s in _trigger_spans(folded, t)]
        if not trig_spans:
            continue
        person_pair = rule.object_type == "PERSON"
        subjects = [m for m in mentions if m.coarse_type == rule.subject_type]
        objects = [m for m in mentions if _compatible(m, rule.object_type)]
        for s in subjects:
            for o in objects:
                if _overlaps(s.span, o.span):
                    continue
                if person_pair and s.span[0] >= o.span[0]:
                    continue
                if _gap(s.span, o.span) > rule.window:
                    continue
                if any(not _overlaps(t, s.span) and not _overlaps(t, o.span)
                       and _gap(t, s.span) <= rule.window and _gap(t, o.span) <= rule.window
                       for t in trig_spans):
                    offer(RelationAnnotation(r.id, s, o, rule.relation, "rule", 1.0))

    return sorted(out.values(), key=lambda a: (a.subject.span, a.object.span, a.relation,
                                               a.subject.fine_type, a.object.fine_type))


def annotate_dataset(records: Iterable[SentenceRecord], rules: RuleSet, use_rules: bool = True):
    """Annotate every record; with ``use_rules=False`` only dataset provenance survives."""
    mentions: dict[str, list[EntityMention]] = {}
    relations: dict[str, list[RelationAnnotation]] = {}
    active = rules if use_rules else RuleSet({}, {}, (), rules.entity_types)
    for r in records:
        ms = annotate_entities(r, active)
        mentions[r.id] = ms
        relations[r.id] = annotate_relations(r, ms, active)
    return mentions, relations
