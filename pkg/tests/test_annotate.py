import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pkbp.annotate import (
    PERSONAL_ENTITY_TYPES,
    ConfigError,
    EntityMention,
    RelationRule,
    RuleSet,
    annotate_entities,
    annotate_relations,
    compile_pattern,
    default_rules,
    load_rules,
)
from pkbp.ingest import SentenceRecord


def rec(tokens, subj=(0, 0), obj=None, relation="no_relation", subj_type="PERSON",
        obj_type="MISC", ner=None, rid="r"):
    tokens = tuple(tokens)
    if obj is None:
        obj = (len(tokens) - 1, len(tokens) - 1)
    return SentenceRecord(rid, tokens, subj, obj, subj_type, obj_type, relation,
                          ner_tags=None if ner is None else tuple(ner))


def test_load_rules_educated_at(tmp_path):
    (tmp_path / "educated_at.dict").write_text("# schools\nBrigham   Young University\n")
    rules = load_rules(tmp_path)
    assert "brigham young university" in rules.dictionaries["educated_at"]


def test_load_rules_empty_dir(tmp_path):
    with pytest.raises(ConfigError, match="no dictionaries found"):
        load_rules(tmp_path)


def test_load_rules_duplicate_stem(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    (tmp_path / "a" / "email.dict").write_text("x\n")
    (tmp_path / "b" / "email.dict").write_text("y\n")
    with pytest.raises(ConfigError, match="duplicate"):
        load_rules(tmp_path)


def test_load_rules_bad_pattern_names_line(tmp_path):
    (tmp_path / "religion.dict").write_text("Baptist\n")
    (tmp_path / "patterns.conf").write_text("# c\nemail\t[a-z]+@x\nphone\t(\\d+|x)\n")
    with pytest.raises(ConfigError, match=r"patterns.conf:3"):
        load_rules(tmp_path)


def test_load_rules_unknown_relation(tmp_path):
    (tmp_path / "religion.dict").write_text("Baptist\n")
    (tmp_path / "relations.rules").write_text("PERSON\treligion\tper:flavor\t4\tis\n")
    with pytest.raises(ConfigError, match="per:flavor"):
        load_rules(tmp_path)


def test_default_pack_loads():
    rules = default_rules()
    assert {"religion", "location", "school", "organization", "title", "cause_of_death"} <= set(rules.dictionaries)
    assert {"email", "url", "phone", "date", "age", "name"} <= set(rules.patterns)
    labels = {r.relation for r in rules.relation_rules}
    assert {"per:spouse", "per:siblings", "per:parents", "per:children", "per:religion",
            "per:city_of_birth", "per:city_of_death", "per:cities_of_residence"} <= labels
    assert len(PERSONAL_ENTITY_TYPES) == 34


def test_pattern_language():
    p = compile_pattern(r"\d{3}-\d{4}")
    assert p.match_at(["call", "555-1234"], 1)
    assert not p.match_at(["call", "555-12345"], 1)
    two = compile_pattern(r"Dr\.? [A-Z]\w+")
    assert two.match_at(["Dr.", "Who"], 0)
    for bad in ["(a|b)", "^x", "x$", "[abc", "a\\"]:
        with pytest.raises(ValueError):
            compile_pattern(bad)


def test_email_pattern_mention():
    r = rec(["Write", "to", "alice@example.com", "today"], subj=(0, 0), obj=(3, 3))
    ms = annotate_entities(r, default_rules())
    emails = [m for m in ms if m.fine_type == "email"]
    assert len(emails) == 1 and emails[0].surface == "alice@example.com"
    assert emails[0].provenance == "pattern"


def test_no_hits_gives_dataset_mentions_only():
    r = rec(["zz", "yy", "xx"], subj=(0, 0), obj=(2, 2))
    ms = annotate_entities(r, default_rules())
    assert [m.provenance for m in ms] == ["dataset", "dataset"]
    assert [m.span for m in ms] == [(0, 0), (2, 2)]


def test_longest_match_wins():
    rules = RuleSet({"school": frozenset({"brigham young", "brigham young university"})})
    r = rec(["She", "attended", "Brigham", "Young", "University", "."], subj=(0, 0), obj=(5, 5))
    schools = [m for m in annotate_entities(r, rules) if m.fine_type == "school"]
    assert len(schools) == 1 and schools[0].span == (2, 4)


def test_leftmost_first_on_ties():
    rules = RuleSet({"location": frozenset({"new york", "york city"})})
    r = rec(["in", "New", "York", "City", "."], subj=(0, 0), obj=(4, 4))
    locs = [m.span for m in annotate_entities(r, rules) if m.fine_type == "location"]
    assert locs == [(1, 2)]


def test_planted_context_free_false_positive():
    """A city name used as a person's first name is still tagged as a location."""
    r = rec(["Washington", "Irving", "met", "Esther", "Okafor"], subj=(0, 1), obj=(3, 4),
            obj_type="PERSON")
    ms = annotate_entities(r, default_rules())
    fp = [m for m in ms if m.fine_type == "location"]
    assert len(fp) == 1 and fp[0].surface == "Washington" and fp[0].provenance == "dictionary"


def test_ner_runs_become_dataset_mentions():
    r = rec(["Farid", "Haddad", "and", "his", "wife", "Grace", "Haddad", "moved"],
            subj=(0, 1), obj=(7, 7), ner=["PERSON", "PERSON", "O", "O", "O", "PERSON", "PERSON", "O"])
    persons = [m for m in annotate_entities(r, default_rules()) if m.coarse_type == "PERSON"]
    assert [m.span for m in persons] == [(0, 1), (5, 6)]


def religion_rules():
    return RuleSet({"religion": frozenset({"baptist"})}, {},
                   (RelationRule("PERSON", "religion", "per:religion", 4, (("is",), ("converted",))),))


def test_bill_clinton_religion_rule():
    r = rec(["Bill", "Clinton", "is", "a", "Baptist"], subj=(0, 1), obj=(4, 4))
    rules = religion_rules()
    rels = annotate_relations(r, annotate_entities(r, rules), rules)
    assert len(rels) == 1
    a = rels[0]
    assert (a.relation, a.provenance, a.confidence) == ("per:religion", "rule", 1.0)
    assert a.subject.span == (0, 1) and a.object.surface == "Baptist"


def test_window_is_respected():
    r = rec(["Bill", "Clinton", "is", "a", "very", "very", "very", "Baptist"], subj=(0, 1), obj=(7, 7))
    rules = religion_rules()
    assert annotate_relations(r, annotate_entities(r, rules), rules) == []


def test_no_relation_no_rule_is_empty():
    r = rec(["zz", "yy", "xx"], subj=(0, 0), obj=(2, 2))
    assert annotate_relations(r, annotate_entities(r, default_rules()), default_rules()) == []


def test_dataset_wins_dedup():
    r = rec(["Bill", "Clinton", "is", "a", "Baptist"], subj=(0, 1), obj=(4, 4),
            relation="per:religion", obj_type="RELIGION")
    rules = religion_rules()
    rels = annotate_relations(r, annotate_entities(r, rules), rules)
    assert len(rels) == 1 and rels[0].provenance == "dataset"


def test_person_rules_are_directional():
    r = rec(["Carla", "Moreno", ",", "daughter", "of", "Alice", "Moreno"], subj=(0, 1), obj=(5, 6),
            obj_type="PERSON")
    rels = annotate_relations(r, annotate_entities(r, default_rules()), default_rules())
    assert [(a.subject.surface, a.relation, a.object.surface) for a in rels] == [
        ("Carla Moreno", "per:parents", "Alice Moreno")]


sentences = st.lists(st.sampled_from(
    ["Bill", "Clinton", "is", "a", "Baptist", "Catholic", "married", "Alice", "wife", "Boston",
     "lives", "in", "born", "x@y.org", "1990", "42", ","]), min_size=3, max_size=12)


@settings(max_examples=80, deadline=None)
@given(sentences, st.sampled_from(["no_relation", "per:religion", "per:spouse"]))
def test_determinism_order_and_monotonicity(tokens, relation):
    r = rec(tokens, subj=(0, 0), obj=(len(tokens) - 1, len(tokens) - 1), relation=relation)
    rules = default_rules()
    ms = annotate_entities(r, rules)
    assert ms == annotate_entities(r, rules)
    assert ms == sorted(ms, key=EntityMention.sort_key)
    for i, a in enumerate(ms):
        assert 0 <= a.span[0] <= a.span[1] < len(tokens)
        assert a.fine_type in rules.entity_types
        for b in ms[i + 1:]:
            if a.fine_type == b.fine_type:
                assert a.span[1] < b.span[0] or b.span[1] < a.span[0]
    rels = annotate_relations(r, ms, rules)
    assert rels == annotate_relations(r, ms, rules)
    baseline = annotate_relations(r, ms, RuleSet({}, {}, ()))
    triples = {a.triple for a in rels}
    assert {a.triple for a in baseline} <= triples
    assert len(triples) == len(rels)
    for a in rels:
        if a.relation.startswith("per:") and a.provenance == "rule":
            assert a.subject.coarse_type == "PERSON"
