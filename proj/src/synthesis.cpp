#include "examforge/synthesis.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <regex>

#include "examforge/error.hpp"
#include "examforge/http_client.hpp"

namespace examforge {

using nlohmann::json;

// --- windowing ---------------------------------------------------------------

std::vector<PromptBundle> window_text(std::string_view text, std::size_t max_window_chars,
                                      const std::string& system_instructions, const ContextTags& context) {
  if (max_window_chars < kMinWindowChars)
    throw Error("bad-window", "max window must be at least " + std::to_string(kMinWindowChars) + " chars");
  std::vector<PromptBundle> out;
  if (text.empty()) return out;

  // Units are paragraphs with their trailing blank-line separator attached.
  std::vector<std::string_view> units;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto sep = text.find("\n\n", pos);
    const std::size_t end = sep == std::string_view::npos ? text.size() : sep + 2;
    units.push_back(text.substr(pos, end - pos));
    pos = end;
  }

  std::size_t window_start = 0;
  std::string current;
  auto flush = [&] {
    PromptBundle b;
    b.system_instructions = system_instructions;
    b.context = context;
    b.start_offset = window_start;
    b.user_content = std::move(current);
    out.push_back(std::move(b));
    current.clear();
  };
  std::size_t offset = 0;
  for (auto unit : units) {
    if (!current.empty() && current.size() + unit.size() > max_window_chars) {
      flush();
      window_start = offset;
    }
    current.append(unit);
    offset += unit.size();
  }
  if (!current.empty()) flush();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].window_index = static_cast<int>(i);
    out[i].window_count = static_cast<int>(out.size());
  }
  return out;
}

// --- rule-based extraction ---------------------------------------------------

namespace {

const std::regex& re(const char* pattern) {
  // Patterns are string literals; cache per call site via a static map.
  static thread_local std::map<const char*, std::regex> cache;
  auto it = cache.find(pattern);
  if (it == cache.end()) it = cache.emplace(pattern, std::regex(pattern, std::regex::ECMAScript)).first;
  return it->second;
}

constexpr const char* kStem = R"(^\s*(?:(?:[Qq](?:uestion|UESTION)?)\s*(\d+)\s*[.):]?|(\d+)\s*[.)])(?:\s+(.*\S))?\s*$)";
constexpr const char* kOption = R"(^\s*(\*)?\s*(?:([A-J])[.)]|\(([A-Ja-j])\))\s+(.*?)\s*(\*)?\s*$)";
constexpr const char* kPart = R"(^\s*([a-z])[.)]\s+(.*\S)\s*$)";
constexpr const char* kMarks = R"(\(\s*(\d+)\s*[Mm][Aa][Rr][Kk][Ss]?\s*\))";
constexpr const char* kAnswer =
    R"(^\s*(?:[Cc]orrect\s+[Aa]nswer|[Aa]nswer|ANSWER|[Aa]ns)\s*[:.\-]\s*\(?([A-Ja-j])\)?(?:[\s.)].*)?$)";
constexpr const char* kKeyHeader =
    R"(^\s*(?:[Aa]nswers|ANSWERS|[Aa]nswer\s+[Kk]ey|ANSWER\s+KEY|[Mm]arking\s+[Ss]cheme|MARKING\s+SCHEME)\s*:?\s*$)";
constexpr const char* kKeyLine = R"(^\s*(?:(?:[Qq]\s*)?\d+\s*[.):\-]?\s*\(?[A-J]\)?\s*[,;]?\s*)+$)";
constexpr const char* kKeyEntry = R"((\d+)\s*[.):\-]?\s*\(?([A-J])\)?)";
constexpr const char* kSectionBreak =
    R"(^\s*(?:(?:SECTION|Section|PART|Part)\b.*|(?:END|End)(?:\s+[Oo][Ff]\s+.*)?\.?\s*)$)";

struct PendingOption {
  char letter = 'A';
  std::string text;
  bool starred = false;
};

struct PendingPart {
  std::string text;
  std::optional<int> marks;
};

struct PendingItem {
  int ordinal = 0;
  std::string stem;
  std::size_t offset = 0;
  std::optional<int> marks;
  std::vector<PendingOption> options;
  std::vector<PendingPart> parts;
  std::optional<char> answer;
};

// Outcome of closing an item; MCQs may wait for an answer-key block.
struct ClosedItem {
  PendingItem item;
  enum class Status { kDraft, kRejected, kAwaitingKey } status = Status::kDraft;
  std::string reason;
};

void append_text(std::string& target, const std::string& more) {
  if (more.empty()) return;
  if (!target.empty()) target.push_back(' ');
  target += more;
}

// Removes "(N marks)" and returns the mark count if present.
std::optional<int> take_marks(std::string& text) {
  std::smatch m;
  if (!std::regex_search(text, m, re(kMarks))) return std::nullopt;
  const int marks = std::stoi(m[1].str());
  text = m.prefix().str() + m.suffix().str();
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.pop_back();
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.erase(text.begin());
  return marks;
}

DraftQuestion to_draft(const PendingItem& item) {
  DraftQuestion d;
  Question& q = d.content;
  q.stem = item.stem;
  q.state = QuestionState::kDraft;
  q.provenance.generator = Generator::kRuleBased;
  q.provenance.confidence = 1.0;
  d.source_offset = item.offset;
  if (!item.options.empty()) {
    q.kind = QuestionKind::kMcq;
    for (size_t i = 0; i < item.options.size(); ++i)
      q.choices.push_back({static_cast<int>(i), item.options[i].text,
                           item.answer && *item.answer == item.options[i].letter});
  } else {
    q.kind = QuestionKind::kSaq;
    if (item.parts.empty()) {
      q.parts.push_back({0, item.stem, "", item.marks.value_or(1)});
    } else {
      for (size_t i = 0; i < item.parts.size(); ++i)
        q.parts.push_back({static_cast<int>(i), item.parts[i].text, "", item.parts[i].marks.value_or(1)});
    }
  }
  return d;
}

ClosedItem close_item(PendingItem item) {
  ClosedItem out{std::move(item), ClosedItem::Status::kDraft, {}};
  auto& it = out.item;
  if (auto m = take_marks(it.stem)) it.marks = m;
  if (!it.options.empty()) {
    for (size_t i = 0; i < it.options.size(); ++i) {
      if (it.options[i].letter != static_cast<char>('A' + i)) {
        out.status = ClosedItem::Status::kRejected;
        out.reason = "non-contiguous-options";
        return out;
      }
    }
    std::vector<char> starred;
    for (const auto& o : it.options)
      if (o.starred) starred.push_back(o.letter);
    if (starred.size() == 1) it.answer = starred.front();
    if (!it.answer) out.status = ClosedItem::Status::kAwaitingKey;
    return out;
  }
  if (it.parts.empty() && !it.marks) {
    out.status = ClosedItem::Status::kRejected;
    out.reason = "no-options";
  }
  return out;
}

std::string fragment_of(const PendingItem& item) {
  std::string s = std::to_string(item.ordinal) + ". " + item.stem;
  return s.size() > 200 ? s.substr(0, 200) : s;
}

}  // namespace

SynthesisOutput extract_questions_rule_based(std::string_view text) {
  std::vector<ClosedItem> closed;
  std::optional<PendingItem> current;
  bool key_mode = false;

  auto close_current = [&] {
    if (current) closed.push_back(close_item(std::move(*current)));
    current.reset();
  };
  auto apply_key = [&](int ordinal, char letter) {
    for (auto it = closed.rbegin(); it != closed.rend(); ++it) {
      if (it->status == ClosedItem::Status::kAwaitingKey && it->item.ordinal == ordinal) {
        it->item.answer = letter;
        it->status = ClosedItem::Status::kDraft;
        return;
      }
    }
  };

  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
    const std::string line(text.substr(pos, end - pos));
    const std::size_t line_offset = pos;
    pos = end + 1;
    if (line.find_first_not_of(" \t\r\f\v") == std::string::npos) {
      if (nl == std::string_view::npos) break;
      continue;
    }

    std::smatch m;
    if (key_mode) {
      if (std::regex_match(line, re(kKeyLine))) {
        for (std::sregex_iterator e(line.begin(), line.end(), re(kKeyEntry)), stop; e != stop; ++e)
          apply_key(std::stoi((*e)[1].str()), (*e)[2].str()[0]);
        continue;
      }
      key_mode = false;
    }
    if (std::regex_match(line, re(kKeyHeader))) {
      close_current();
      key_mode = true;
    } else if (std::regex_match(line, re(kSectionBreak))) {
      close_current();
    } else if (current && std::regex_match(line, m, re(kAnswer))) {
      current->answer = static_cast<char>(std::toupper(static_cast<unsigned char>(m[1].str()[0])));
    } else if (std::regex_match(line, m, re(kStem))) {
      close_current();
      PendingItem item;
      item.ordinal = std::stoi(m[1].matched ? m[1].str() : m[2].str());
      item.stem = m[3].matched ? m[3].str() : std::string{};
      item.offset = line_offset;
      current = std::move(item);
    } else if (current && std::regex_match(line, m, re(kOption))) {
      const std::string letter = m[2].matched ? m[2].str() : m[3].str();
      current->options.push_back({static_cast<char>(std::toupper(static_cast<unsigned char>(letter[0]))), m[4].str(),
                                  m[1].matched || m[5].matched});
    } else if (current && current->options.empty() && std::regex_match(line, m, re(kPart))) {
      PendingPart part{m[2].str(), std::nullopt};
      part.marks = take_marks(part.text);
      current->parts.push_back(std::move(part));
    } else if (current) {
      std::string more = line;
      more.erase(0, more.find_first_not_of(" \t"));
      while (!more.empty() && std::isspace(static_cast<unsigned char>(more.back()))) more.pop_back();
      if (!current->options.empty()) {
        append_text(current->options.back().text, more);
      } else if (!current->parts.empty()) {
        auto& part = current->parts.back();
        append_text(part.text, more);
        if (auto marks = take_marks(part.text)) part.marks = marks;
      } else {
        append_text(current->stem, more);
      }
    }
    if (nl == std::string_view::npos) break;
  }
  close_current();

  SynthesisOutput out;
  out.provider_name = "rule-based";
  out.model_version = "grammar-1";
  for (auto& c : closed) {
    switch (c.status) {
      case ClosedItem::Status::kDraft: {
        const bool answer_known =
            c.item.options.empty() ||
            std::any_of(c.item.options.begin(), c.item.options.end(),
                        [&](const PendingOption& o) { return c.item.answer && o.letter == *c.item.answer; });
        if (!answer_known) {
          out.rejected.push_back({fragment_of(c.item), "no-answer-key"});
          break;
        }
        out.drafts.push_back(to_draft(c.item));
        break;
      }
      case ClosedItem::Status::kAwaitingKey:
        out.rejected.push_back({fragment_of(c.item), "no-answer-key"});
        break;
      case ClosedItem::Status::kRejected:
        out.rejected.push_back({fragment_of(c.item), c.reason});
        break;
    }
  }
  return out;
}

// --- model output parsing ----------------------------------------------------

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string strip_fence(std::string_view raw) {
  const auto open = raw.find("```");
  if (open == std::string_view::npos) return std::string(raw);
  const auto body_start = raw.find('\n', open);
  if (body_start == std::string_view::npos) return std::string(raw);
  const auto close = raw.find("```", body_start);
  return std::string(raw.substr(body_start + 1, close == std::string_view::npos ? std::string_view::npos
                                                                                  : close - body_start - 1));
}

std::optional<json> find_json(std::string_view raw) {
  const std::string body = trim(strip_fence(raw));
  if (body.empty()) return std::nullopt;
  try {
    return json::parse(body);
  } catch (const json::exception&) {
  }
  // Prose around a JSON payload: take the outermost bracketed region.
  for (auto [open, close] : {std::pair{'[', ']'}, std::pair{'{', '}'}}) {
    const auto b = body.find(open);
    const auto e = body.rfind(close);
    if (b == std::string::npos || e == std::string::npos || e <= b) continue;
    try {
      return json::parse(body.substr(b, e - b + 1));
    } catch (const json::exception&) {
    }
  }
  return std::nullopt;
}

std::optional<QuestionKind> kind_of(const json& item) {
  if (!item.contains("kind") || !item["kind"].is_string()) return std::nullopt;
  std::string k = item["kind"].get<std::string>();
  std::transform(k.begin(), k.end(), k.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::replace(k.begin(), k.end(), '_', '-');
  std::replace(k.begin(), k.end(), ' ', '-');
  if (k == "mcq" || k == "multiple-choice") return QuestionKind::kMcq;
  if (k == "saq" || k == "short-answer") return QuestionKind::kSaq;
  return std::nullopt;
}

std::string fragment(const json& item) {
  std::string s = item.dump();
  return s.size() > 200 ? s.substr(0, 200) : s;
}

struct ItemError {
  std::string reason;
};

std::optional<int> letter_index(const json& v, int n) {
  if (!v.is_string()) return std::nullopt;
  const std::string s = trim(v.get<std::string>());
  if (s.size() == 1 || (s.size() == 2 && (s[1] == '.' || s[1] == ')'))) {
    const int idx = std::toupper(static_cast<unsigned char>(s[0])) - 'A';
    if (idx >= 0 && idx < n) return idx;
  }
  return std::nullopt;
}

DraftQuestion parse_item(const json& item) {
  if (!item.is_object()) throw ItemError{"malformed-item"};
  auto kind = kind_of(item);
  if (!kind) throw ItemError{"bad-kind"};
  if (!item.contains("stem") || !item["stem"].is_string() || trim(item["stem"].get<std::string>()).empty())
    throw ItemError{"missing-stem"};

  DraftQuestion d;
  Question& q = d.content;
  q.kind = *kind;
  q.stem = trim(item["stem"].get<std::string>());
  q.state = QuestionState::kDraft;
  q.provenance.generator = Generator::kModel;
  if (item.contains("generator") && item["generator"].is_string())
    q.provenance.generator = parse_generator(item["generator"].get<std::string>()).value_or(Generator::kModel);
  q.provenance.confidence = kDefaultModelConfidence;
  if (item.contains("confidence") && item["confidence"].is_number()) {
    const double c = item["confidence"].get<double>();
    if (c >= 0.0 && c <= 1.0) q.provenance.confidence = c;
  }
  if (item.contains("explanation") && item["explanation"].is_string() &&
      !trim(item["explanation"].get<std::string>()).empty())
    q.explanation = item["explanation"].get<std::string>();
  if (item.contains("concepts") && item["concepts"].is_array())
    for (const auto& c : item["concepts"])
      if (c.is_string() && !trim(c.get<std::string>()).empty()) d.concept_names.push_back(trim(c.get<std::string>()));
  if (item.contains("source_offset") && item["source_offset"].is_number_unsigned())
    d.source_offset = item["source_offset"].get<std::size_t>();

  if (q.kind == QuestionKind::kMcq) {
    if (!item.contains("choices") || !item["choices"].is_array() || item["choices"].empty())
      throw ItemError{"malformed-item"};
    const auto& choices = item["choices"];
    const int n = static_cast<int>(choices.size());
    int flagged = 0;
    for (int i = 0; i < n; ++i) {
      const auto& c = choices[static_cast<size_t>(i)];
      McqChoice choice{i, {}, false};
      if (c.is_string()) {
        choice.text = c.get<std::string>();
      } else if (c.is_object() && c.contains("text") && c["text"].is_string()) {
        choice.text = c["text"].get<std::string>();
        for (const char* key : {"correct", "is_correct"})
          if (c.contains(key) && c[key].is_boolean() && c[key].get<bool>()) choice.is_correct = true;
      } else {
        throw ItemError{"malformed-item"};
      }
      flagged += choice.is_correct ? 1 : 0;
      q.choices.push_back(std::move(choice));
    }
    if (flagged == 0) {
      std::optional<int> idx;
      if (item.contains("correct_index") && item["correct_index"].is_number_integer()) {
        const int v = item["correct_index"].get<int>();
        if (v >= 0 && v < n) idx = v;
      }
      for (const char* key : {"answer", "correct_answer"}) {
        if (idx || !item.contains(key)) continue;
        idx = letter_index(item[key], n);
        if (!idx && item[key].is_string()) {
          const auto wanted = normalize_text(item[key].get<std::string>());
          for (const auto& c : q.choices)
            if (normalize_text(c.text) == wanted) idx = c.index;
        }
      }
      if (idx) {
        q.choices[static_cast<size_t>(*idx)].is_correct = true;
        flagged = 1;
      }
    }
    if (flagged != 1) throw ItemError{"missing-correct"};
  } else {
    if (item.contains("parts") && item["parts"].is_array() && !item["parts"].empty()) {
      int i = 0;
      for (const auto& p : item["parts"]) {
        if (!p.is_object()) throw ItemError{"malformed-item"};
        SaqPart part{i++, {}, {}, 1};
        for (const char* key : {"prompt", "text"})
          if (part.prompt.empty() && p.contains(key) && p[key].is_string()) part.prompt = p[key].get<std::string>();
        for (const char* key : {"expected_answer", "answer"})
          if (part.expected_answer.empty() && p.contains(key) && p[key].is_string())
            part.expected_answer = p[key].get<std::string>();
        if (p.contains("marks")) {
          if (!p["marks"].is_number_integer() || p["marks"].get<int>() < 1) throw ItemError{"malformed-item"};
          part.marks = p["marks"].get<int>();
        }
        q.parts.push_back(std::move(part));
      }
    } else {
      SaqPart part{0, q.stem, {}, 1};
      for (const char* key : {"expected_answer", "answer"})
        if (part.expected_answer.empty() && item.contains(key) && item[key].is_string())
          part.expected_answer = item[key].get<std::string>();
      if (item.contains("marks")) {
        if (!item["marks"].is_number_integer() || item["marks"].get<int>() < 1) throw ItemError{"malformed-item"};
        part.marks = item["marks"].get<int>();
      }
      q.parts.push_back(std::move(part));
    }
  }
  return d;
}

}  // namespace

SynthesisOutput parse_model_output(std::string_view raw) {
  SynthesisOutput out;
  auto doc = find_json(raw);
  const json* items = nullptr;
  json single;
  if (doc) {
    if (doc->is_array()) {
      items = &*doc;
    } else if (doc->is_object()) {
      for (const char* key : {"items", "questions"})
        if (!items && doc->contains(key) && (*doc)[key].is_array()) items = &(*doc)[key];
      if (!items && doc->contains("stem")) {
        single = json::array({*doc});
        items = &single;
      }
      if (doc->contains("rejected") && (*doc)["rejected"].is_array())
        for (const auto& r : (*doc)["rejected"])
          if (r.is_object())
            out.rejected.push_back({r.value("fragment", std::string{}), r.value("reason", std::string("malformed-item"))});
    }
  }
  if (items == nullptr) {
    const std::string head(raw.substr(0, 200));
    out.rejected.push_back({head, "malformed-item"});
    return out;
  }
  for (const auto& item : *items) {
    try {
      out.drafts.push_back(parse_item(item));
    } catch (const ItemError& e) {
      out.rejected.push_back({fragment(item), e.reason});
    } catch (const json::exception&) {
      out.rejected.push_back({fragment(item), "malformed-item"});
    }
  }
  return out;
}

// --- validation & dedupe -------------------------------------------------------

DedupeResult validate_and_dedupe(std::vector<DraftQuestion> drafts, const std::set<std::string>& existing) {
  DedupeResult out;
  std::set<std::string> batch;
  for (auto& d : drafts) {
    d.content.fingerprint = question_fingerprint(d.content);
    const auto report = validate_question(d.content);
    if (!report.ok()) {
      out.dropped.push_back({std::move(d), "invalid", report.violations.front()});
    } else if (existing.contains(d.content.fingerprint)) {
      out.dropped.push_back({std::move(d), "duplicate-existing", {}});
    } else if (!batch.insert(d.content.fingerprint).second) {
      out.dropped.push_back({std::move(d), "duplicate-batch", {}});
    } else {
      out.accepted.push_back(std::move(d));
    }
  }
  return out;
}

// --- serialization -----------------------------------------------------------

json draft_to_json(const DraftQuestion& d) {
  const Question& q = d.content;
  json j;
  j["kind"] = to_string(q.kind);
  j["stem"] = q.stem;
  j["explanation"] = q.explanation ? json(*q.explanation) : json(nullptr);
  j["concepts"] = d.concept_names;
  j["confidence"] = q.provenance.confidence;
  j["generator"] = to_string(q.provenance.generator);
  if (d.source_offset) j["source_offset"] = *d.source_offset;
  if (d.source_span)
    j["source_span"] = {{"first", {d.source_span->first.first, d.source_span->first.second}},
                        {"last", {d.source_span->last.first, d.source_span->last.second}}};
  if (q.kind == QuestionKind::kMcq) {
    j["choices"] = json::array();
    for (const auto& c : q.choices) j["choices"].push_back({{"text", c.text}, {"correct", c.is_correct}});
  } else {
    j["parts"] = json::array();
    for (const auto& p : q.parts)
      j["parts"].push_back({{"prompt", p.prompt}, {"expected_answer", p.expected_answer}, {"marks", p.marks}});
  }
  return j;
}

json synthesis_to_json(const SynthesisOutput& out) {
  json items = json::array();
  for (const auto& d : out.drafts) items.push_back(draft_to_json(d));
  json rejected = json::array();
  for (const auto& r : out.rejected) rejected.push_back({{"fragment", r.raw_fragment}, {"reason", r.reason}});
  return {{"items", std::move(items)},
          {"rejected", std::move(rejected)},
          {"provider", out.provider_name},
          {"model_version", out.model_version},
          {"latency_ms", out.latency.count()}};
}

SynthesisOutput synthesis_from_json(const json& j) {
  SynthesisOutput out = parse_model_output(j.dump());
  out.provider_name = j.value("provider", std::string{});
  out.model_version = j.value("model_version", std::string{});
  out.latency = std::chrono::milliseconds(j.value("latency_ms", 0L));
  if (j.contains("items")) {
    const auto& items = j["items"];
    for (size_t i = 0; i < out.drafts.size() && i < items.size(); ++i) {
      if (items[i].contains("source_span")) {
        const auto& s = items[i]["source_span"];
        out.drafts[i].source_span =
            SourceSpan{{s["first"][0].get<int>(), s["first"][1].get<int>()}, {s["last"][0].get<int>(), s["last"][1].get<int>()}};
      }
    }
  }
  return out;
}

// --- providers -----------------------------------------------------------------

RawOutput generate_with_model(const PromptBundle& bundle, SynthesisProvider& provider,
                              const std::function<void(const RawOutput&)>& persist) {
  RawOutput raw = provider.generate(bundle);
  if (persist) persist(raw);
  return raw;
}

RawOutput LocalSynthesisProvider::generate(const PromptBundle& bundle) {
  const auto start = std::chrono::steady_clock::now();
  SynthesisOutput out = extract_questions_rule_based(bundle.user_content);
  for (auto& d : out.drafts)
    if (d.source_offset) *d.source_offset += bundle.start_offset;
  json doc = synthesis_to_json(out);
  doc.erase("latency_ms");
  RawOutput raw;
  raw.text = doc.dump();
  raw.latency = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
  raw.provider_name = name();
  raw.model_version = out.model_version;
  raw.generator = Generator::kRuleBased;
  return raw;
}

FallbackSynthesisProvider::FallbackSynthesisProvider(std::shared_ptr<SynthesisProvider> primary,
                                                     std::shared_ptr<SynthesisProvider> fallback)
    : primary_(std::move(primary)), fallback_(std::move(fallback)) {}

RawOutput FallbackSynthesisProvider::generate(const PromptBundle& bundle) {
  try {
    return primary_->generate(bundle);
  } catch (const Error& e) {
    if (!e.retryable()) throw;
    return fallback_->generate(bundle);
  }
}

RemoteSynthesisProvider::RemoteSynthesisProvider(RemoteSynthesisConfig config) : config_(std::move(config)) {
  if (config_.endpoint.empty()) throw Error("provider-misconfigured", "LLM_ENDPOINT is not set");
  if (config_.max_window_chars < kMinWindowChars) config_.max_window_chars = kMinWindowChars;
}

std::string RemoteSynthesisProvider::render_user_message(const PromptBundle& b) {
  std::string msg;
  if (!b.context.institution.empty()) msg += "Institution: " + b.context.institution + "\n";
  if (!b.context.course_code.empty()) msg += "Course: " + b.context.course_code + "\n";
  if (!b.context.locale_note.empty()) msg += "Local context: " + b.context.locale_note + "\n";
  msg += "Window " + std::to_string(b.window_index + 1) + " of " + std::to_string(b.window_count) + "\n\n";
  msg += "<document>\n" + b.user_content + "\n</document>\n";
  return msg;
}

RawOutput RemoteSynthesisProvider::generate(const PromptBundle& bundle) {
  json request = {{"model", config_.model},
                  {"temperature", 0},
                  {"messages",
                   json::array({{{"role", "system"}, {"content", bundle.system_instructions}},
                                {{"role", "user"}, {"content", render_user_message(bundle)}}})}};
  HttpCall call;
  call.url = config_.endpoint;
  call.body = request.dump();
  call.timeout = config_.timeout;
  call.max_response_bytes = kMaxModelResponseBytes;
  call.headers = {{"api-key", config_.api_key}, {"Authorization", "Bearer " + config_.api_key}};

  const auto start = std::chrono::steady_clock::now();
  HttpReply reply = with_retries(config_.retry, [&] {
    auto r = http_request(call);
    if (r.status / 100 != 2) throw_for_status(r, "model provider");
    return r;
  });
  RawOutput raw;
  raw.latency = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
  raw.provider_name = name();
  json body;
  try {
    body = json::parse(reply.body);
    raw.text = body.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw Error("provider-bad-response", std::string("unexpected model response shape: ") + e.what());
  }
  raw.model_version = body.value("model", config_.model);
  return raw;
}

std::string default_system_instructions() {
  return "You convert exam papers into structured question banks. Return only a JSON array. Each element is an "
         "object with: kind (\"mcq\" or \"saq\"), stem, choices (mcq: array of {text, correct} with exactly one "
         "correct), parts (saq: array of {prompt, expected_answer, marks}), explanation, concepts (array of topic "
         "names), confidence (0 to 1). Do not invent questions that are not in the document.";
}

}  // namespace examforge
