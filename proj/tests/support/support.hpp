#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "examforge/app.hpp"
#include "examforge/model.hpp"
#include "examforge/store.hpp"
#include "examforge/time.hpp"

namespace examforge::testing {

inline std::filesystem::path source_dir() { return EXAMFORGE_SOURCE_DIR; }
inline std::filesystem::path fixtures_dir() { return source_dir() / "fixtures"; }

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Bytes read_bytes(const std::filesystem::path& p) {
  const auto s = read_file(p);
  return Bytes(s.begin(), s.end());
}

inline nlohmann::json manifest() { return nlohmann::json::parse(read_file(fixtures_dir() / "manifest.json")); }

inline nlohmann::json manifest_paper(const std::string& file) {
  const auto m = manifest();
  for (const auto& p : m["papers"])
    if (p["file"] == file) return p;
  throw std::runtime_error("no manifest entry for " + file);
}

inline Timestamp at(const char* rfc3339) { return *parse_rfc3339(rfc3339); }

// Settable clock shared by everything built from it.
struct ManualClock {
  std::shared_ptr<Timestamp> now = std::make_shared<Timestamp>(at("2025-06-01T12:00:00.000Z"));
  Clock clock() const {
    auto n = now;
    return [n] { return *n; };
  }
  void set(Timestamp t) const { *now = t; }
  void advance(std::chrono::milliseconds d) const { *now += d; }
};

inline std::shared_ptr<ContentStore> seeded_store(Clock clock = system_clock(), const std::string& path = ":memory:") {
  auto store = std::make_shared<ContentStore>(Database::open(path), std::move(clock));
  load_seed(*store, nlohmann::json::parse(read_file(fixtures_dir() / "seed.json")));
  return store;
}

inline Question make_mcq(std::string stem, std::vector<std::string> choices, int correct,
                         const std::string& course_id = "crs-med101", const std::string& concept_id = "cpt-cardio") {
  Question q;
  q.kind = QuestionKind::kMcq;
  q.stem = std::move(stem);
  q.course_id = course_id;
  q.concept_ids = {concept_id};
  q.provenance.generator = Generator::kManual;
  for (size_t i = 0; i < choices.size(); ++i)
    q.choices.push_back({static_cast<int>(i), choices[i], static_cast<int>(i) == correct});
  return q;
}

inline Question make_saq(std::string stem, std::vector<std::pair<std::string, int>> parts,
                         const std::string& course_id = "crs-med101", const std::string& concept_id = "cpt-cardio") {
  Question q;
  q.kind = QuestionKind::kSaq;
  q.stem = std::move(stem);
  q.course_id = course_id;
  q.concept_ids = {concept_id};
  for (size_t i = 0; i < parts.size(); ++i) q.parts.push_back({static_cast<int>(i), parts[i].first, "", parts[i].second});
  return q;
}

// Four published MCQs in MED101 under one paper; returns their ids.
inline std::vector<std::string> insert_sample_bank(ContentStore& store, const std::string& title = "Sample Paper",
                                                   QuestionState state = QuestionState::kPublished) {
  std::vector<Question> qs = {
      make_mcq("Which node paces the heart?", {"SA node", "AV node", "Bundle of His"}, 0),
      make_mcq("Which ion depolarises the ventricle?", {"Sodium", "Potassium", "Chloride", "Calcium"}, 0),
      make_mcq("Normal GFR is about?", {"25 mL/min", "125 mL/min", "500 mL/min"}, 1),
      make_mcq("Which hormone acts on the collecting duct?", {"ADH", "Insulin", "Glucagon", "Renin"}, 0),
  };
  return store.insert_question_bank(qs, "crs-med101", {title, 2023}, std::nullopt, state).question_ids;
}

}  // namespace examforge::testing
