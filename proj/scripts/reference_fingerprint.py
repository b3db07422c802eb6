#!/usr/bin/env python3
"""Independent reference for the question fingerprint recipe, written against
the documented rules rather than the C++ code:

  normalize: NFC, lowercase, NFC again, collapse whitespace runs to one space,
             strip whitespace and punctuation from both edges
  material:  normalize(stem) then, for each sorted normalized choice text (MCQ)
             or part prompt (SAQ), a 0x1E separator followed by the text
  hash:      lowercase hex SHA-256 of the UTF-8 material

Writes fixtures/reference_fingerprints.json.
"""
import hashlib
import json
import pathlib
import unicodedata


def normalize(s):
    s = unicodedata.normalize("NFC", unicodedata.normalize("NFC", s).lower())
    s = " ".join(s.split())

    def edge(ch):
        return ch.isspace() or unicodedata.category(ch).startswith("P")

    i, j = 0, len(s)
    while i < j and edge(s[i]):
        i += 1
    while j > i and edge(s[j - 1]):
        j -= 1
    return s[i:j]


def fingerprint(q):
    children = q["choices"] if q["kind"] == "mcq" else q["parts"]
    material = normalize(q["stem"]) + "".join("\x1e" + c for c in sorted(normalize(c) for c in children))
    return hashlib.sha256(material.encode("utf-8")).hexdigest()


CASES = [
    {"name": "F1", "kind": "mcq",
     "stem": "Which ion is chiefly responsible for the rapid depolarisation phase of the ventricular myocyte action potential?",
     "choices": ["Potassium", "Sodium", "Chloride", "Magnesium"]},
    {"name": "F2-saq", "kind": "saq",
     "stem": "A 24 year old athlete has a resting heart rate of 48 beats per minute.",
     "parts": ["Define bradycardia.", "Explain why a trained athlete may have a low resting heart rate."]},
    {"name": "F3-unicode", "kind": "mcq",
     "stem": "  ¿Qué fármaco   es un β-bloqueante?  ",
     "choices": ["Atenolol", "Caféine", "Énalapril"]},
    {"name": "F4-single-part", "kind": "saq",
     "stem": "Define shock.", "parts": ["Define shock."]},
]


def main():
    out = []
    for c in CASES:
        entry = dict(c)
        entry["normalized_stem"] = normalize(c["stem"])
        entry["fingerprint"] = fingerprint(c)
        out.append(entry)
    path = pathlib.Path(__file__).resolve().parent.parent / "fixtures" / "reference_fingerprints.json"
    path.write_text(json.dumps(out, indent=1, ensure_ascii=False) + "\n", encoding="utf-8")
    for e in out:
        print(e["fingerprint"], e["name"])


if __name__ == "__main__":
    main()
