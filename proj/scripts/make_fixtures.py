#!/usr/bin/env python3
"""Render fixtures/src/*.txt into deterministic PDFs plus the layout JSON the
fixture OCR provider serves for them (keyed by the PDF's sha256).

Source markup: a line "<<<PAGE>>>" starts a new page; "<<<TABLE" ... "TABLE>>>"
encloses a table whose cells are separated by " | ".  Blank lines separate
paragraphs.
"""
import argparse
import hashlib
import io
import json
import pathlib

from reportlab.lib.pagesizes import A4
from reportlab.pdfgen import canvas

# Papers whose layout is emitted in the analyzeResult shape instead of the
# native one, so both normalisation paths are exercised end to end.
ANALYZE_SHAPE = {"paper_D"}


def parse_source(text):
    pages = [{"paragraphs": [], "tables": []}]
    para, table = [], None
    for raw in text.splitlines():
        line = raw.rstrip()
        if table is not None:
            if line == "TABLE>>>":
                pages[-1]["tables"].append(table)
                table = None
            else:
                table.append([c.strip() for c in line.split("|")])
            continue
        if line == "<<<TABLE":
            if para:
                pages[-1]["paragraphs"].append(para)
                para = []
            table = []
        elif line == "<<<PAGE>>>":
            if para:
                pages[-1]["paragraphs"].append(para)
                para = []
            pages.append({"paragraphs": [], "tables": []})
        elif not line.strip():
            if para:
                pages[-1]["paragraphs"].append(para)
                para = []
        else:
            para.append(line)
    if para:
        pages[-1]["paragraphs"].append(para)
    return pages


def confidence(*key):
    h = hashlib.sha256("/".join(map(str, key)).encode()).digest()
    return round(0.90 + (h[0] / 255.0) * 0.09, 3)


def render_pdf(pages):
    buf = io.BytesIO()
    c = canvas.Canvas(buf, pagesize=A4, invariant=1)
    c.setTitle("examination paper")
    width, height = A4
    for page in pages:
        y = height - 60
        c.setFont("Helvetica", 10)
        for para in page["paragraphs"]:
            for line in para:
                c.drawString(50, y, line)
                y -= 14
            y -= 8
        for table in page["tables"]:
            for row in table:
                for i, cell in enumerate(row):
                    c.drawString(50 + i * 160, y, cell)
                y -= 14
            y -= 8
        c.showPage()
    c.save()
    return buf.getvalue()


def native_layout(name, pages):
    out_pages, tables = [], []
    for pno, page in enumerate(pages, 1):
        paras = []
        for qi, para in enumerate(page["paragraphs"]):
            lines = []
            for li, line in enumerate(para):
                words = [{"text": w, "confidence": confidence(name, pno, qi, li, wi)}
                         for wi, w in enumerate(line.split())]
                lines.append({"words": words})
            paras.append({"lines": lines})
        out_pages.append({"number": pno, "paragraphs": paras})
        tables.extend({"page": pno, "rows": t} for t in page["tables"])
    return {"pages": out_pages, "tables": tables}


def analyze_layout(name, pages):
    content = []
    offset = 0
    result_pages, paragraphs, tables = [], [], []

    def emit(s):
        nonlocal offset
        start = offset
        content.append(s)
        offset += len(s)
        return start

    for pno, page in enumerate(pages, 1):
        words, lines = [], []
        for qi, para in enumerate(page["paragraphs"]):
            pstart = offset
            for li, line in enumerate(para):
                lstart = offset
                for wi, w in enumerate(line.split()):
                    if wi:
                        emit(" ")
                    words.append({"content": w, "confidence": confidence(name, pno, qi, li, wi),
                                  "spans": [{"offset": emit(w), "length": len(w)}]})
                lines.append({"content": " ".join(line.split()),
                              "spans": [{"offset": lstart, "length": offset - lstart}]})
                emit("\n")
            paragraphs.append({"content": "\n".join(" ".join(l.split()) for l in para),
                               "boundingRegions": [{"pageNumber": pno}],
                               "spans": [{"offset": pstart, "length": offset - pstart - 1}]})
        for t in page["tables"]:
            cells = [{"rowIndex": r, "columnIndex": c, "content": v}
                     for r, row in enumerate(t) for c, v in enumerate(row)]
            tables.append({"rowCount": len(t), "columnCount": max(len(r) for r in t),
                           "boundingRegions": [{"pageNumber": pno}], "cells": cells})
        result_pages.append({"pageNumber": pno, "words": words, "lines": lines})
    return {"status": "succeeded",
            "analyzeResult": {"content": "".join(content), "pages": result_pages,
                              "paragraphs": paragraphs, "tables": tables}}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--root", default=str(pathlib.Path(__file__).resolve().parent.parent / "fixtures"))
    args = ap.parse_args()
    root = pathlib.Path(args.root)
    layouts = root / "layouts"
    layouts.mkdir(exist_ok=True)
    index = {}
    for src in sorted((root / "src").glob("*.txt")):
        name = src.stem
        pages = parse_source(src.read_text(encoding="utf-8"))
        pdf = render_pdf(pages)
        (root / f"{name}.pdf").write_bytes(pdf)
        sha = hashlib.sha256(pdf).hexdigest()
        layout = analyze_layout(name, pages) if name in ANALYZE_SHAPE else native_layout(name, pages)
        (layouts / f"{sha}.layout.json").write_text(json.dumps(layout, indent=1, ensure_ascii=False) + "\n")
        index[f"{name}.pdf"] = sha

    blank = render_pdf([{"paragraphs": [], "tables": []}])
    (root / "blank.pdf").write_bytes(blank)
    sha = hashlib.sha256(blank).hexdigest()
    (layouts / f"{sha}.layout.json").write_text(json.dumps({"pages": [{"number": 1, "paragraphs": []}]}) + "\n")
    index["blank.pdf"] = sha

    for k, v in index.items():
        print(f"{v}  {k}")


if __name__ == "__main__":
    main()
