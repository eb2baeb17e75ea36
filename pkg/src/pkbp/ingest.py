"""TACRED-format record loading and validation."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

log = logging.getLogger(__name__)

NO_RELATION = "no_relation"

TACRED_RELATIONS = frozenset({
    "org:alternate_names", "org:city_of_headquarters", "org:country_of_headquarters",
    "org:dissolved", "org:founded", "org:founded_by", "org:member_of", "org:members",
    "org:number_of_employees/members", "org:parents", "org:political/religious_affiliation",
    "org:shareholders", "org:stateorprovince_of_headquarters", "org:subsidiaries",
    "org:top_members/employees", "org:website",
    "per:age", "per:alternate_names", "per:cause_of_death", "per:charges", "per:children",
    "per:cities_of_residence", "per:city_of_birth", "per:city_of_death",
    "per:countries_of_residence", "per:country_of_birth", "per:country_of_death",
    "per:date_of_birth", "per:date_of_death", "per:employee_of", "per:origin",
    "per:other_family", "per:parents", "per:religion", "per:schools_attended",
    "per:siblings", "per:spouse", "per:stateorprovince_of_birth",
    "per:stateorprovince_of_death", "per:stateorprovinces_of_residence", "per:title",
})

REQUIRED_FIELDS = ("id", "token", "subj_start", "subj_end", "obj_start", "obj_end",
                   "subj_type", "obj_type", "relation")


class ParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class ValidationError(ValueError):
    def __init__(self, record_id: str, violations: list[str]):
        super().__init__(f"record {record_id}: " + "; ".join(violations))
        self.record_id = record_id
        self.violations = violations


@dataclass(frozen=True)
class SentenceRecord:
    id: str
    tokens: tuple[str, ...]
    subj_span: tuple[int, int]
    obj_span: tuple[int, int]
    subj_type: str
    obj_type: str
    relation: str
    pos_tags: tuple[str, ...] | None = None
    ner_tags: tuple[str, ...] | None = None

    @property
    def subj_text(self) -> str:
        return " ".join(self.tokens[self.subj_span[0]:self.subj_span[1] + 1])

    @property
    def obj_text(self) -> str:
        return " ".join(self.tokens[self.obj_span[0]:self.obj_span[1] + 1])

    def to_json(self) -> dict:
        out = {
            "id": self.id,
            "token": list(self.tokens),
            "subj_start": self.subj_span[0],
            "subj_end": self.subj_span[1],
            "obj_start": self.obj_span[0],
            "obj_end": self.obj_span[1],
            "subj_type": self.subj_type,
            "obj_type": self.obj_type,
            "relation": self.relation,
        }
        if self.pos_tags is not None:
            out["stanford_pos"] = list(self.pos_tags)
        if self.ner_tags is not None:
            out["stanford_ner"] = list(self.ner_tags)
        return out


@dataclass(frozen=True)
class Dataset:
    records: tuple[SentenceRecord, ...] = ()
    relation_inventory: frozenset[str] = field(default_factory=frozenset)
    entity_type_inventory: frozenset[str] = field(default_factory=frozenset)

    def __len__(self) -> int:
        return len(self.records)

    def by_id(self) -> dict[str, SentenceRecord]:
        return {r.id: r for r in self.records}


def _span_violations(name: str, span: tuple[int, int], n: int) -> list[str]:
    start, end = span
    if start > end:
        return [f"{name} span start > end ({start} > {end})"]
    if start < 0 or end >= n:
        return [f"{name} span out of bounds ({start}, {end}) for {n} tokens"]
    return []


def validate_record(r: SentenceRecord, inventory: Iterable[str] = TACRED_RELATIONS) -> list[str]:
    """List every invariant the record breaks; empty when it is valid."""
    n = len(r.tokens)
    violations = _span_violations("subj", r.subj_span, n) + _span_violations("obj", r.obj_span, n)
    if not violations:
        (s0, s1), (o0, o1) = r.subj_span, r.obj_span
        if s0 <= o1 and o0 <= s1:
            violations.append("span overlap")
    for name, tags in (("pos", r.pos_tags), ("ner", r.ner_tags)):
        if tags is not None and len(tags) != n:
            violations.append(f"{name} tag length mismatch ({len(tags)} != {n})")
    if r.relation != NO_RELATION and r.relation not in set(inventory):
        violations.append(f"unknown relation {r.relation!r}")
    return violations


def _record_from_obj(obj, index: int) -> SentenceRecord:
    if not isinstance(obj, dict):
        raise ValidationError(f"#{index}", ["record is not an object"])
    rid = str(obj.get("id", f"#{index}"))
    missing = [k for k in REQUIRED_FIELDS if k not in obj]
    if missing:
        raise ValidationError(rid, [f"missing field {k!r}" for k in missing])
    try:
        pos = obj.get("stanford_pos")
        ner = obj.get("stanford_ner")
        return SentenceRecord(
            id=rid,
            tokens=tuple(str(t) for t in obj["token"]),
            subj_span=(int(obj["subj_start"]), int(obj["subj_end"])),
            obj_span=(int(obj["obj_start"]), int(obj["obj_end"])),
            subj_type=str(obj["subj_type"]),
            obj_type=str(obj["obj_type"]),
            relation=str(obj["relation"]),
            pos_tags=None if pos is None else tuple(str(t) for t in pos),
            ner_tags=None if ner is None else tuple(str(t) for t in ner),
        )
    except (TypeError, ValueError) as exc:
        raise ValidationError(rid, [f"bad field value: {exc}"]) from None


def _load_objects(data: bytes) -> list:
    text = data.decode("utf-8")
    try:
        objs = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, len(text[:exc.pos].encode("utf-8"))) from None
    if not isinstance(objs, list):
        raise ParseError("top-level value must be an array of records", 0)
    return objs


def records_from_bytes(data: bytes) -> list[SentenceRecord]:
    """Build records without validating them (used for validation reports)."""
    return [_record_from_obj(o, i) for i, o in enumerate(_load_objects(data))]


def dataset_from_records(records: Iterable[SentenceRecord],
                         inventory: Iterable[str] = TACRED_RELATIONS) -> Dataset:
    inventory = frozenset(inventory)
    records = tuple(records)
    seen: set[str] = set()
    relations: set[str] = set()
    types: set[str] = set()
    for r in records:
        if r.id in seen:
            raise ValidationError(r.id, ["duplicate record id"])
        seen.add(r.id)
        structural = [v for v in validate_record(r, inventory) if not v.startswith("unknown relation")]
        if structural:
            raise ValidationError(r.id, structural)
        if r.relation != NO_RELATION:
            if r.relation not in inventory:
                log.warning("record %s: relation %r outside the configured inventory", r.id, r.relation)
            relations.add(r.relation)
        types.update((r.subj_type, r.obj_type))
    return Dataset(records, frozenset(relations), frozenset(types))


def parse_tacred_bytes(data: bytes, inventory: Iterable[str] = TACRED_RELATIONS) -> Dataset:
    return dataset_from_records(records_from_bytes(data), inventory)


def parse_tacred(path, inventory: Iterable[str] = TACRED_RELATIONS) -> Dataset:
    """Load one TACRED JSON file into a validated :class:`Dataset`.

    Relations outside ``inventory`` are kept and logged as warnings; the
    returned inventory lists the labels actually seen.
    """
    return parse_tacred_bytes(Path(path).read_bytes(), inventory)


def parse_many(paths: Iterable, inventory: Iterable[str] = TACRED_RELATIONS) -> Dataset:
    records: list[SentenceRecord] = []
    for p in paths:
        records.extend(records_from_bytes(Path(p).read_bytes()))
    return dataset_from_records(records, inventory)


def dump_tacred(ds: Dataset) -> str:
    return json.dumps([r.to_json() for r in ds.records], ensure_ascii=False, indent=1)


def write_tacred(ds: Dataset, path) -> None:
    Path(path).write_text(dump_tacred(ds) + "\n", encoding="utf-8")


def validation_report(paths: Iterable, inventory: Iterable[str] = TACRED_RELATIONS) -> list[str]:
    """``<record-id>\\t<violation>`` lines for every problem found, in file order."""
    lines: list[str] = []
    seen: set[str] = set()
    for p in paths:
        for i, obj in enumerate(_load_objects(Path(p).read_bytes())):
            try:
                r = _record_from_obj(obj, i)
            except ValidationError as exc:
                lines.extend(f"{exc.record_id}\t{v}" for v in exc.violations)
                continue
            if r.id in seen:
                lines.append(f"{r.id}\tduplicate record id")
            seen.add(r.id)
            lines.extend(f"{r.id}\t{v}" for v in validate_record(r, inventory))
    return lines
