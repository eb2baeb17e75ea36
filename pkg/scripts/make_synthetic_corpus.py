"""Regenerate the bundled 30-sentence synthetic corpus and its gold slots.

Each sentence carries one TACRED-style labeled pair.  Several sentences also
state a second fact that only the rule annotators recover, which is what the
baseline-vs-augmented comparisons rely on.

    python scripts/make_synthetic_corpus.py src/pkbp/data/synthetic
"""

import json
import sys
from pathlib import Path

ENTITIES = {
    "PERSON": [
        "Alice Moreno", "Brian Moreno", "Carla Moreno", "Daniel Okafor", "Esther Okafor",
        "Farid Haddad", "Grace Haddad", "Hugo Haddad", "Irene Novak", "Jonas Novak",
        "Karim Benali", "Lena Benali", "Marco Rossi", "Nadia Rossi", "Oscar Rossi",
        "Priya Sharma", "Rahul Sharma", "Sofia Lindqvist", "Tomas Lindqvist", "Ursula Weber",
        "Washington Irving",
    ],
    "CITY": ["Boston", "Lagos", "Beirut", "Montreal", "Prague", "Brno", "Marseille", "Milan",
             "Turin", "Mumbai", "Stockholm", "Denver", "Chicago"],
    "ORGANIZATION": ["Acme Corp", "Globex", "Initech", "Georgetown University", "University of Lagos",
                     "Charles University", "Bocconi University", "Delhi University"],
    "RELIGION": ["Catholic", "Methodist", "Muslim", "Lutheran", "Hindu"],
    "TITLE": ["engineer", "teacher", "pastor"],
    "NUMBER": ["24", "31"],
    "DATE": ["1998", "2015", "last year"],
}

# (id, sentence, subject, object, relation)
SENTENCES = [
    ("s01", "Alice Moreno married Brian Moreno in 1998 .", "Alice Moreno", "Brian Moreno", "per:spouse"),
    ("s02", "Brian Moreno is a devout Catholic and lives in Boston .", "Brian Moreno", "Boston", "per:cities_of_residence"),
    ("s03", "Carla Moreno , daughter of Alice Moreno , is 24 .", "Carla Moreno", "24", "per:age"),
    ("s04", "Alice Moreno works for Acme Corp in Boston .", "Alice Moreno", "Acme Corp", "per:employee_of"),
    ("s05", "Brian Moreno graduated from Georgetown University .", "Brian Moreno", "Georgetown University", "per:schools_attended"),
    ("s06", "Daniel Okafor and his sister Esther Okafor grew up in Lagos .", "Daniel Okafor", "Lagos", "per:cities_of_residence"),
    ("s07", "Esther Okafor , a Methodist , studied at the University of Lagos .", "Esther Okafor", "University of Lagos", "per:schools_attended"),
    ("s08", "Daniel Okafor is a Methodist pastor .", "Daniel Okafor", "Methodist", "per:religion"),
    ("s09", "Born in Beirut , Farid Haddad is a practicing Muslim .", "Farid Haddad", "Beirut", "per:city_of_birth"),
    ("s10", "Farid Haddad and his wife Grace Haddad moved to Montreal .", "Grace Haddad", "Montreal", "per:cities_of_residence"),
    ("s11", "Hugo Haddad , brother of Farid Haddad , is an engineer in Beirut .", "Hugo Haddad", "engineer", "per:title"),
    ("s12", "Grace Haddad works for Globex .", "Grace Haddad", "Globex", "per:employee_of"),
    ("s13", "Irene Novak and Jonas Novak live in Prague .", "Irene Novak", "Prague", "per:cities_of_residence"),
    ("s14", "Irene Novak , wife of Jonas Novak , is a Lutheran .", "Irene Novak", "Lutheran", "per:religion"),
    ("s15", "Jonas Novak was born in Brno and attended Charles University .", "Jonas Novak", "Brno", "per:city_of_birth"),
    ("s16", "Karim Benali lives in Marseille with his sister Lena Benali .", "Karim Benali", "Marseille", "per:cities_of_residence"),
    ("s17", "Karim Benali is a Muslim .", "Karim Benali", "Muslim", "per:religion"),
    ("s18", "Lena Benali , 31 , joined Initech last year .", "Lena Benali", "Initech", "per:employee_of"),
    ("s19", "Marco Rossi married Nadia Rossi in Milan .", "Marco Rossi", "Nadia Rossi", "per:spouse"),
    ("s20", "Marco Rossi , son of Oscar Rossi , lives in Milan .", "Marco Rossi", "Milan", "per:cities_of_residence"),
    ("s21", "Nadia Rossi is a Catholic who studied at Bocconi University .", "Nadia Rossi", "Bocconi University", "per:schools_attended"),
    ("s22", "Oscar Rossi died in Turin in 2015 .", "Oscar Rossi", "Turin", "per:city_of_death"),
    ("s23", "Priya Sharma and her brother Rahul Sharma are Hindu .", "Priya Sharma", "Rahul Sharma", "per:siblings"),
    ("s24", "Priya Sharma lives in Mumbai .", "Priya Sharma", "Mumbai", "per:cities_of_residence"),
    ("s25", "Rahul Sharma studied at Delhi University .", "Rahul Sharma", "Delhi University", "per:schools_attended"),
    ("s26", "Sofia Lindqvist and her husband Tomas Lindqvist live in Stockholm .", "Sofia Lindqvist", "Stockholm", "per:cities_of_residence"),
    ("s27", "Tomas Lindqvist is a Lutheran teacher .", "Tomas Lindqvist", "teacher", "per:title"),
    ("s28", "Ursula Weber works for Globex in Denver .", "Ursula Weber", "Globex", "per:employee_of"),
    ("s29", "Ursula Weber lives in Denver .", "Ursula Weber", "Denver", "per:cities_of_residence"),
    ("s30", "Washington Irving emailed Esther Okafor at esther@example.org from Chicago .", "Washington Irving", "Esther Okafor", "no_relation"),
]

QUERIES = [
    # hop-0: person -> person
    ("hop0", "Alice Moreno", "per:spouse", ["Brian Moreno"]),
    ("hop0", "Carla Moreno", "per:parents", ["Alice Moreno"]),
    ("hop0", "Daniel Okafor", "per:siblings", ["Esther Okafor"]),
    ("hop0", "Farid Haddad", "per:spouse", ["Grace Haddad"]),
    ("hop0", "Hugo Haddad", "per:siblings", ["Farid Haddad"]),
    ("hop0", "Irene Novak", "per:spouse", ["Jonas Novak"]),
    ("hop0", "Karim Benali", "per:siblings", ["Lena Benali"]),
    ("hop0", "Marco Rossi", "per:spouse", ["Nadia Rossi"]),
    ("hop0", "Marco Rossi", "per:parents", ["Oscar Rossi"]),
    ("hop0", "Priya Sharma", "per:siblings", ["Rahul Sharma"]),
    ("hop0", "Sofia Lindqvist", "per:spouse", ["Tomas Lindqvist"]),
    ("hop0", "Oscar Rossi", "per:children", ["Marco Rossi"]),
    # hop-1: a hop-0 answer -> attribute
    ("hop1", "Brian Moreno", "religion", ["Catholic"]),
    ("hop1", "Brian Moreno", "residence", ["Boston"]),
    ("hop1", "Alice Moreno", "employee_of", ["Acme Corp"]),
    ("hop1", "Esther Okafor", "educated_at", ["University of Lagos"]),
    ("hop1", "Esther Okafor", "religion", ["Methodist"]),
    ("hop1", "Grace Haddad", "employee_of", ["Globex"]),
    ("hop1", "Grace Haddad", "residence", ["Montreal"]),
    ("hop1", "Farid Haddad", "religion", ["Muslim"]),
    ("hop1", "Jonas Novak", "educated_at", ["Charles University"]),
    ("hop1", "Jonas Novak", "city_of_birth", ["Brno"]),
    ("hop1", "Lena Benali", "employee_of", ["Initech"]),
    ("hop1", "Nadia Rossi", "religion", ["Catholic"]),
    ("hop1", "Oscar Rossi", "city_of_death", ["Turin"]),
    ("hop1", "Rahul Sharma", "educated_at", ["Delhi University"]),
    ("hop1", "Rahul Sharma", "religion", ["Hindu"]),
    ("hop1", "Tomas Lindqvist", "religion", ["Lutheran"]),
    ("hop1", "Tomas Lindqvist", "title", ["teacher"]),
]

PROTECTED = [
    ("Brian Moreno", "religion", ["Catholic"]),
    ("Brian Moreno", "residence", ["Boston"]),
    ("Carla Moreno", "age", ["24"]),
    ("Daniel Okafor", "religion", ["Methodist"]),
    ("Daniel Okafor", "residence", ["Lagos"]),
    ("Esther Okafor", "religion", ["Methodist"]),
    ("Farid Haddad", "religion", ["Muslim"]),
    ("Grace Haddad", "residence", ["Montreal"]),
    ("Irene Novak", "religion", ["Lutheran"]),
    ("Irene Novak", "residence", ["Prague"]),
    ("Jonas Novak", "residence", ["Prague"]),
    ("Karim Benali", "religion", ["Muslim"]),
    ("Nadia Rossi", "religion", ["Catholic"]),
    ("Rahul Sharma", "religion", ["Hindu"]),
    ("Sofia Lindqvist", "residence", ["Stockholm"]),
    ("Tomas Lindqvist", "religion", ["Lutheran"]),
    ("Tomas Lindqvist", "residence", ["Stockholm"]),
]


def find(tokens, phrase, after=-1):
    words = phrase.split()
    for i in range(after + 1, len(tokens) - len(words) + 1):
        if tokens[i:i + len(words)] == words:
            return i, i + len(words) - 1
    raise ValueError(f"{phrase!r} not in {tokens}")


def ner_tags(tokens):
    tags = ["O"] * len(tokens)
    ordered = sorted(((p, label) for label, ps in ENTITIES.items() for p in ps),
                     key=lambda pl: -len(pl[0].split()))
    for phrase, label in ordered:
        start = -1
        while True:
            try:
                s, e = find(tokens, phrase, start)
            except ValueError:
                break
            if all(t == "O" for t in tags[s:e + 1]):
                tags[s:e + 1] = [label] * (e - s + 1)
            start = s
    return tags


def entity_type(tags, span):
    return tags[span[0]]


def build():
    records = []
    for rid, sentence, subj, obj, relation in SENTENCES:
        tokens = sentence.split()
        tags = ner_tags(tokens)
        s = find(tokens, subj)
        o = find(tokens, obj)
        records.append({
            "id": rid, "token": tokens,
            "subj_start": s[0], "subj_end": s[1], "obj_start": o[0], "obj_end": o[1],
            "subj_type": entity_type(tags, s), "obj_type": entity_type(tags, o),
            "relation": relation,
            "stanford_pos": ["NNP" if t != "O" else "X" for t in tags],
            "stanford_ner": tags,
        })
    return records


def main(out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "records.json").write_text(json.dumps(build(), indent=1) + "\n")
    (out / "queries.tsv").write_text(
        "".join(f"{h}\t{s}\t{slot}\t{'|'.join(g)}\n" for h, s, slot, g in QUERIES))
    (out / "protected.tsv").write_text(
        "".join(f"{p}\t{a}\t{'|'.join(v)}\n" for p, a, v in PROTECTED))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "src/pkbp/data/synthetic")
