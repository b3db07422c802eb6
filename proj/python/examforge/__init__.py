"""Exam papers in, validated question banks out."""

import json as _json

from . import _core
from ._core import Error, compute_dau, normalize_text, percent_change

__all__ = ["Bank", "Error", "compute_dau", "fingerprint", "normalize_text", "percent_change", "validate"]


def fingerprint(question):
    return _core.fingerprint(_json.dumps(question))


def validate(question):
    """Violation codes for a question dict; empty when valid."""
    return _core.validate(_json.dumps(question))


class Bank:
    """A content store with the pipeline attached (fixture OCR, local synthesis)."""

    def __init__(self, database=":memory:", fixtures_dir="fixtures/layouts",
                 prompt_file="prompts/system.txt", review_first=False):
        self._bank = _core.Bank(str(database), str(fixtures_dir), str(prompt_file), review_first)

    def seed(self, seed_file):
        return _json.loads(self._bank.seed(str(seed_file)))

    def process(self, file, course, title, year):
        return _json.loads(self._bank.process(str(file), course, title, year))

    def questions(self, paper_id):
        return _json.loads(self._bank.questions(paper_id))

    def export_bank(self, paper_id):
        return self._bank.export_bank(paper_id)

    def import_bank(self, document, course):
        return _json.loads(self._bank.import_bank(document, course))

    def integrity(self):
        return self._bank.integrity()
