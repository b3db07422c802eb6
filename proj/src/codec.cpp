#include "examforge/codec.hpp"

#include "examforge/time.hpp"

namespace examforge {

using nlohmann::json;

json to_json(const Question& q) {
  json j = {{"id", q.id},
            {"kind", to_string(q.kind)},
            {"stem", q.stem},
            {"explanation", q.explanation ? json(*q.explanation) : json(nullptr)},
            {"past_paper_id", q.past_paper_id},
            {"course_id", q.course_id},
            {"concept_ids", q.concept_ids},
            {"state", to_string(q.state)},
            {"fingerprint", q.fingerprint},
            {"provenance",
             {{"source_document_id", q.provenance.source_document_id},
              {"generator", to_string(q.provenance.generator)},
              {"confidence", q.provenance.confidence},
              {"created_at", format_rfc3339(q.provenance.created_at)}}}};
  if (q.kind == QuestionKind::kMcq) {
    j["choices"] = json::array();
    for (const auto& c : q.choices)
      j["choices"].push_back({{"index", c.index}, {"text", c.text}, {"is_correct", c.is_correct}});
  } else {
    j["parts"] = json::array();
    for (const auto& p : q.parts)
      j["parts"].push_back(
          {{"index", p.index}, {"prompt", p.prompt}, {"expected_answer", p.expected_answer}, {"marks", p.marks}});
  }
  return j;
}

json to_json(const Course& c) {
  return {{"id", c.id}, {"code", c.code}, {"title", c.title}, {"institution_ids", c.institution_ids}};
}

json to_json(const Concept& c) {
  return {{"id", c.id}, {"name", c.name}, {"parent_id", c.parent_id ? json(*c.parent_id) : json(nullptr)}};
}

json to_json(const PastPaper& p) {
  return {{"id", p.id},
          {"course_id", p.course_id},
          {"title", p.title},
          {"year", p.year},
          {"source_document_id", p.source_document_id ? json(*p.source_document_id) : json(nullptr)}};
}

}  // namespace examforge
