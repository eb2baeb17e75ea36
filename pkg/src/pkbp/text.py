from __future__ import annotations

HONORIFICS = frozenset({
    "mr", "mrs", "ms", "miss", "mx", "dr", "prof", "sir", "dame", "madam",
    "rev", "hon", "lord", "lady",
})


def normalize_phrase(text: str) -> str:
    """Case-fold and collapse runs of whitespace."""
    return " ".join(text.casefold().split())


def normalize_name(text: str) -> str:
    """Phrase normalization plus removal of leading honorifics (``Dr.``, ``Mrs`` ...)."""
    words = normalize_phrase(text).split(" ")
    while len(words) > 1 and words[0].rstrip(".") in HONORIFICS:
        words = words[1:]
    if words == [""]:
        return ""
    if len(words) == 1 and words[0].rstrip(".") in HONORIFICS:
        return ""
    return " ".join(words)
