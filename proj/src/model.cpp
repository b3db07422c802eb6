#include "examforge/model.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/locid.h>
#include <unicode/unistr.h>

#include <algorithm>

#include "examforge/crypto.hpp"

namespace examforge {

std::string_view to_string(QuestionKind k) { return k == QuestionKind::kMcq ? "mcq" : "saq"; }

std::string_view to_string(QuestionState s) {
  switch (s) {
    case QuestionState::kDraft: return "draft";
    case QuestionState::kPublished: return "published";
    case QuestionState::kFlagged: return "flagged";
    case QuestionState::kRetired: return "retired";
  }
  return "draft";
}

std::string_view to_string(Generator g) {
  switch (g) {
    case Generator::kRuleBased: return "rule-based";
    case Generator::kModel: return "model";
    case Generator::kManual: return "manual";
  }
  return "manual";
}

std::string_view to_string(Role r) {
  switch (r) {
    case Role::kStudent: return "student";
    case Role::kFaculty: return "faculty";
    case Role::kAdmin: return "admin";
  }
  return "student";
}

std::optional<QuestionKind> parse_question_kind(std::string_view s) {
  if (s == "mcq") return QuestionKind::kMcq;
  if (s == "saq") return QuestionKind::kSaq;
  return std::nullopt;
}

std::optional<QuestionState> parse_question_state(std::string_view s) {
  for (auto st : {QuestionState::kDraft, QuestionState::kPublished, QuestionState::kFlagged, QuestionState::kRetired})
    if (to_string(st) == s) return st;
  return std::nullopt;
}

std::optional<Generator> parse_generator(std::string_view s) {
  for (auto g : {Generator::kRuleBased, Generator::kModel, Generator::kManual})
    if (to_string(g) == s) return g;
  return std::nullopt;
}

std::optional<Role> parse_role(std::string_view s) {
  for (auto r : {Role::kStudent, Role::kFaculty, Role::kAdmin})
    if (to_string(r) == s) return r;
  return std::nullopt;
}

std::optional<int> Question::correct_index() const {
  for (const auto& c : choices)
    if (c.is_correct) return c.index;
  return std::nullopt;
}

namespace {

const icu::Normalizer2& nfc() {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* n = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status) || n == nullptr) throw std::runtime_error("ICU NFC normalizer unavailable");
  return *n;
}

bool is_edge_trim(UChar32 c) { return u_isUWhiteSpace(c) || u_ispunct(c); }

}  // namespace

std::string normalize_text(std::string_view s) {
  if (s.empty()) return {};
  const auto& norm = nfc();
  UErrorCode status = U_ZERO_ERROR;
  icu::UnicodeString u = norm.normalize(icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(), static_cast<int32_t>(s.size()))), status);
  u.toLower(icu::Locale::getRoot());
  // Full case mapping can emit decomposed sequences; recompose.
  u = norm.normalize(u, status);
  if (U_FAILURE(status)) return {};

  icu::UnicodeString collapsed;
  bool pending_space = false;
  for (int32_t i = 0; i < u.length(); i = u.moveIndex32(i, 1)) {
    const UChar32 c = u.char32At(i);
    if (u_isUWhiteSpace(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space && !collapsed.isEmpty()) collapsed.append(static_cast<UChar>(' '));
    pending_space = false;
    collapsed.append(c);
  }

  int32_t begin = 0;
  int32_t end = collapsed.length();
  while (begin < end && is_edge_trim(collapsed.char32At(begin))) begin = collapsed.moveIndex32(begin, 1);
  while (end > begin) {
    const int32_t prev = collapsed.moveIndex32(end, -1);
    if (!is_edge_trim(collapsed.char32At(prev))) break;
    end = prev;
  }
  std::string out;
  collapsed.tempSubStringBetween(begin, end).toUTF8String(out);
  return out;
}

std::string question_fingerprint(const Question& q) {
  std::vector<std::string> children;
  if (q.kind == QuestionKind::kMcq) {
    for (const auto& c : q.choices) children.push_back(normalize_text(c.text));
  } else {
    for (const auto& p : q.parts) children.push_back(normalize_text(p.prompt));
  }
  std::sort(children.begin(), children.end());
  // Record separator (0x1E) never survives normalization, so the framing is
  // unambiguous.
  std::string material = normalize_text(q.stem);
  for (const auto& c : children) {
    material.push_back('\x1e');
    material += c;
  }
  return sha256_hex(material);
}

bool ValidationReport::has(std::string_view code) const {
  return std::find(violations.begin(), violations.end(), code) != violations.end();
}

ValidationReport validate_question(const Question& q) {
  ValidationReport r;
  auto add = [&r](const char* code) {
    if (!r.has(code)) r.violations.emplace_back(code);
  };

  if (normalize_text(q.stem).empty()) add("empty-stem");
  if (q.concept_ids.empty()) add("no-concepts");
  if (!(q.provenance.confidence >= 0.0 && q.provenance.confidence <= 1.0)) add("bad-confidence");

  if (q.kind == QuestionKind::kMcq) {
    if (!q.parts.empty()) add("parts-on-mcq");
    const auto n = static_cast<int>(q.choices.size());
    if (n < kMinChoices) add("too-few-choices");
    if (n > kMaxChoices) add("too-many-choices");
    int correct = 0;
    std::set<std::string> seen;
    for (int i = 0; i < n; ++i) {
      const auto& c = q.choices[static_cast<size_t>(i)];
      if (c.index != i) add("non-contiguous-choice-index");
      if (c.is_correct) ++correct;
      auto key = normalize_text(c.text);
      if (key.empty()) add("empty-choice-text");
      if (!seen.insert(std::move(key)).second) add("duplicate-choice-text");
    }
    if (correct == 0) add("no-correct-choice");
    if (correct > 1) add("multiple-correct-choices");
  } else {
    if (!q.choices.empty()) add("choices-on-saq");
    if (q.parts.empty()) add("saq-no-parts");
    for (size_t i = 0; i < q.parts.size(); ++i) {
      const auto& p = q.parts[i];
      if (p.index != static_cast<int>(i)) add("non-contiguous-part-index");
      if (p.marks < 1) add("bad-marks");
      if (normalize_text(p.prompt).empty()) add("empty-part-prompt");
    }
  }

  if (!q.fingerprint.empty() && q.fingerprint != question_fingerprint(q)) add("fingerprint-mismatch");
  return r;
}

}  // namespace examforge
