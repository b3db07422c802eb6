#!/usr/bin/env python3
"""Process every manifest paper with the local providers through the CLI,
check the result against the hand-labelled manifest, and only then write the
exported bank to fixtures/golden/<paper>.bank.json.

usage: pin_goldens.py path/to/examforge
"""
import json
import pathlib
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent
FIX = ROOT / "fixtures"


def check(entry, bank):
    qs = bank["questions"]
    problems = []
    if len(qs) != len(entry["questions"]):
        problems.append(f"count {len(qs)} != {len(entry['questions'])}")
    for e in entry["questions"]:
        hits = [q for q in qs if q["stem"].startswith(e["stem_starts"])]
        if len(hits) != 1:
            problems.append(f"q{e['n']}: {len(hits)} matches")
            continue
        q = hits[0]
        if q["kind"] != e["kind"]:
            problems.append(f"q{e['n']}: kind {q['kind']}")
        elif e["kind"] == "mcq":
            correct = [i for i, c in enumerate(q["choices"]) if c["correct"]]
            if len(q["choices"]) != e["choices"] or correct != [e["correct"]]:
                problems.append(f"q{e['n']}: choices {len(q['choices'])} correct {correct}")
        elif [p["marks"] for p in q["parts"]] != e["marks"]:
            problems.append(f"q{e['n']}: marks {[p['marks'] for p in q['parts']]}")
    return problems


def main():
    exe = sys.argv[1]
    manifest = json.loads((FIX / "manifest.json").read_text())
    out_dir = FIX / "golden"
    out_dir.mkdir(exist_ok=True)
    failed = False
    with tempfile.TemporaryDirectory() as tmp:
        db = str(pathlib.Path(tmp) / "pin.db")
        base = [exe, "--database", db, "--fixtures", str(FIX / "layouts")]
        subprocess.run(base + ["seed", "--fixtures-dir", str(FIX)], check=True, capture_output=True)
        for entry in manifest["papers"]:
            bank_path = pathlib.Path(tmp) / (entry["file"] + ".bank.json")
            subprocess.run(base + ["process", str(FIX / entry["file"]), "--course", entry["course"],
                                   "--paper-title", entry["paper"]["title"],
                                   "--paper-year", str(entry["paper"]["year"]), "--provider", "local",
                                   "--out", str(bank_path)], check=True, capture_output=True)
            text = bank_path.read_text(encoding="utf-8")
            problems = check(entry, json.loads(text))
            if problems:
                failed = True
                print(entry["file"], "MISMATCH", "; ".join(problems))
                continue
            name = entry["file"].rsplit(".", 1)[0]
            (out_dir / f"{name}.bank.json").write_text(text, encoding="utf-8")
            print(entry["file"], "pinned")
    sys.exit(1 if failed else 0)


if __name__ == "__main__":
    main()
