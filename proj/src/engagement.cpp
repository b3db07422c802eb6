#include "examforge/engagement.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "examforge/error.hpp"

namespace examforge {

using nlohmann::json;

// --- pure computations -----------------------------------------------------------

std::vector<DauPoint> compute_dau(const std::vector<EngagementEvent>& events, const DateRange& range) {
  std::map<Day, std::set<std::string>> users;
  for (const auto& e : events) {
    const Day d = utc_day(e.at);
    if (range.contains(d)) users[d].insert(e.user_id);
  }
  std::vector<DauPoint> out;
  for (Day d = range.from; d <= range.to; d += std::chrono::days{1}) {
    auto it = users.find(d);
    out.push_back({d, it == users.end() ? 0 : static_cast<int>(it->second.size())});
  }
  return out;
}

double mean_dau(const std::vector<DauPoint>& series) {
  if (series.empty()) return 0.0;
  double sum = 0;
  for (const auto& p : series) sum += p.dau;
  return sum / static_cast<double>(series.size());
}

double percent_change(double baseline_mean, double current_mean) {
  if (baseline_mean == 0.0) {
    if (current_mean == 0.0) return 0.0;
    throw Error("undefined-baseline", "baseline has no activity; percent change is undefined");
  }
  return (current_mean - baseline_mean) / baseline_mean * 100.0;
}

SatisfactionSummary compute_satisfaction(const std::vector<Rating>& ratings) {
  SatisfactionSummary out;
  std::map<std::string, std::pair<long, long>> per_rater;  // sum, count
  for (const auto& r : ratings) {
    ++out.histogram[r.rating];
    auto& [sum, count] = per_rater[r.user_id];
    sum += r.rating;
    ++count;
  }
  out.raters = static_cast<int>(per_rater.size());
  for (const auto& [user, sc] : per_rater)
    // mean >= 4  <=>  sum >= 4 * count, without floating point.
    if (sc.first >= static_cast<long>(kSatisfiedThreshold) * sc.second) ++out.satisfied;
  if (out.raters > 0) out.fraction_satisfied = static_cast<double>(out.satisfied) / out.raters;
  return out;
}

ProcessingStats compute_processing_stats(std::vector<JobDuration> jobs) {
  ProcessingStats out;
  std::vector<double> secs;
  for (const auto& j : jobs) secs.push_back(j.seconds);
  out.jobs = std::move(jobs);
  if (secs.empty()) return out;
  std::sort(secs.begin(), secs.end());
  const size_t n = secs.size();
  out.median_seconds = n % 2 == 1 ? secs[n / 2] : (secs[n / 2 - 1] + secs[n / 2]) / 2.0;
  const size_t rank = static_cast<size_t>(std::ceil(0.95 * static_cast<double>(n)));
  out.p95_seconds = secs[std::max<size_t>(rank, 1) - 1];
  return out;
}

// --- enums -------------------------------------------------------------------------

std::string_view to_string(FlagState s) {
  switch (s) {
    case FlagState::kOpen: return "open";
    case FlagState::kResolvedRepublished: return "resolved-republished";
    case FlagState::kResolvedRetired: return "resolved-retired";
  }
  return "open";
}

std::optional<FlagState> parse_flag_state(std::string_view s) {
  if (s == "open") return FlagState::kOpen;
  if (s == "resolved-republished") return FlagState::kResolvedRepublished;
  if (s == "resolved-retired") return FlagState::kResolvedRetired;
  return std::nullopt;
}

std::optional<FlagOutcome> parse_flag_outcome(std::string_view s) {
  if (s == "republish") return FlagOutcome::kRepublish;
  if (s == "retire") return FlagOutcome::kRetire;
  return std::nullopt;
}

// --- recording -------------------------------------------------------------------

Engagement::Engagement(std::shared_ptr<ContentStore> store, std::chrono::minutes session_timeout)
    : store_(std::move(store)), session_timeout_(session_timeout) {}

Timestamp Engagement::effective(std::optional<Timestamp> at) const {
  const Timestamp now = store_->now();
  return at ? std::min(*at, now) : now;
}

UserAccount Engagement::require_user(const std::string& user_id) {
  auto u = store_->user(user_id);
  if (!u) throw Error("unknown-user", "no user " + user_id);
  return *u;
}

UserAccount Engagement::require_reviewer(const std::string& actor_id) {
  auto u = require_user(actor_id);
  if (u.role != Role::kFaculty && u.role != Role::kAdmin)
    throw Error("forbidden", "only faculty or admins may review content");
  return u;
}

void Engagement::touch(const std::string& user_id, const std::string& event,
                       const std::optional<std::string>& question_id, Timestamp at) {
  auto& db = store_->db();
  Transaction tx(db);
  db.prepare("INSERT INTO analytics (user_id, event, question_id, at) VALUES (?, ?, ?, ?)")
      .bind_all(user_id, event, question_id, format_rfc3339(at))
      .run();

  const std::string stamp = format_rfc3339(at);
  auto st = db.prepare(
      "SELECT id, started_at, last_event_at FROM user_study_sessions WHERE user_id = ? "
      "ORDER BY last_event_at DESC LIMIT 1");
  st.bind_all(user_id);
  bool extended = false;
  if (st.step()) {
    const std::string id = st.text(0);
    const Timestamp started = parse_rfc3339(st.text(1)).value_or(Timestamp{});
    const Timestamp last = parse_rfc3339(st.text(2)).value_or(Timestamp{});
    st.reset();
    if (at >= last && at - last <= session_timeout_) {
      db.prepare("UPDATE user_study_sessions SET last_event_at = ?, event_count = event_count + 1 WHERE id = ?")
          .bind_all(stamp, id)
          .run();
      const auto secs = std::chrono::duration_cast<std::chrono::seconds>(at - last).count();
      db.prepare(
            "INSERT INTO user_study_times (user_id, day, seconds) VALUES (?, ?, ?) "
            "ON CONFLICT(user_id, day) DO UPDATE SET seconds = seconds + excluded.seconds")
          .bind_all(user_id, format_date(utc_day(at)), static_cast<std::int64_t>(secs))
          .run();
      extended = true;
    } else if (at >= started && at <= last) {
      db.prepare("UPDATE user_study_sessions SET event_count = event_count + 1 WHERE id = ?").bind_all(id).run();
      extended = true;
    }
  }
  if (!extended) {
    db.prepare(
          "INSERT INTO user_study_sessions (id, user_id, started_at, last_event_at, event_count) "
          "VALUES (?, ?, ?, ?, 1)")
        .bind_all(new_id("ses"), user_id, stamp, stamp)
        .run();
  }
  tx.commit();
}

McqOutcome Engagement::record_mcq_response(const std::string& user_id, const std::string& question_id,
                                           int chosen_index, std::optional<Timestamp> at,
                                           const std::optional<std::string>& op_id) {
  require_user(user_id);
  auto& db = store_->db();
  Transaction tx(db);
  auto q = store_->question(question_id);
  if (!q) throw Error("unknown-question", "no question " + question_id);
  if (q->state != QuestionState::kPublished) throw Error("not-available", "question is not published");
  if (q->kind != QuestionKind::kMcq) throw Error("wrong-kind", "question is not multiple choice");
  if (chosen_index < 0 || chosen_index >= static_cast<int>(q->choices.size()))
    throw Error("bad-choice", "choice " + std::to_string(chosen_index) + " outside [0, " +
                                  std::to_string(q->choices.size()) + ")");
  const bool correct = q->choices[static_cast<size_t>(chosen_index)].is_correct;
  const Timestamp when = effective(at);
  db.prepare(
        "INSERT INTO user_mcq_responses (user_id, question_id, chosen_index, correct, at, op_id) "
        "VALUES (?, ?, ?, ?, ?, ?)")
      .bind_all(user_id, question_id, chosen_index, correct, format_rfc3339(when), op_id)
      .run();
  for (const auto& concept_id : q->concept_ids) {
    db.prepare(
          "INSERT INTO user_concept_progress (user_id, concept_id, attempted, correct) VALUES (?, ?, 1, ?) "
          "ON CONFLICT(user_id, concept_id) DO UPDATE SET attempted = attempted + 1, "
          "correct = correct + excluded.correct")
        .bind_all(user_id, concept_id, correct ? 1 : 0)
        .run();
  }
  touch(user_id, "mcq-response", question_id, when);
  tx.commit();
  return {correct, q->correct_index().value_or(0), q->explanation};
}

void Engagement::record_saq_response(const std::string& user_id, const std::string& question_id,
                                     const std::vector<std::string>& answers, bool self_correct,
                                     std::optional<Timestamp> at, const std::optional<std::string>& op_id) {
  require_user(user_id);
  auto& db = store_->db();
  Transaction tx(db);
  auto q = store_->question(question_id);
  if (!q) throw Error("unknown-question", "no question " + question_id);
  if (q->state != QuestionState::kPublished) throw Error("not-available", "question is not published");
  if (q->kind != QuestionKind::kSaq) throw Error("wrong-kind", "question is not short answer");
  if (answers.size() > q->parts.size()) throw Error("bad-request", "more answers than parts");
  const Timestamp when = effective(at);
  db.prepare(
        "INSERT INTO user_saq_responses (user_id, question_id, answers, self_correct, at, op_id) "
        "VALUES (?, ?, ?, ?, ?, ?)")
      .bind_all(user_id, question_id, json(answers).dump(), self_correct, format_rfc3339(when), op_id)
      .run();
  touch(user_id, "saq-response", question_id, when);
  tx.commit();
}

void Engagement::record_feedback(const std::string& user_id, const std::string& question_id, int rating,
                                 const std::optional<std::string>& comment, std::optional<Timestamp> at) {
  require_user(user_id);
  if (rating < 1 || rating > 5) throw Error("bad-rating", "rating must be between 1 and 5");
  auto& db = store_->db();
  Transaction tx(db);
  auto q = store_->question(question_id);
  if (!q) throw Error("unknown-question", "no question " + question_id);
  const Timestamp when = effective(at);
  db.prepare(
        "INSERT INTO question_feedbacks (user_id, question_id, rating, comment, at, client_at) "
        "VALUES (?, ?, ?, ?, ?, ?) ON CONFLICT(user_id, question_id) DO UPDATE SET "
        "rating = excluded.rating, comment = excluded.comment, at = excluded.at, client_at = excluded.client_at")
      .bind_all(user_id, question_id, rating, comment, format_rfc3339(when),
                at ? std::optional<std::string>(format_rfc3339(*at)) : std::nullopt)
      .run();
  touch(user_id, "feedback", question_id, when);
  tx.commit();
}

void Engagement::record_study_event(const std::string& user_id, std::optional<Timestamp> at) {
  require_user(user_id);
  touch(user_id, "study", std::nullopt, effective(at));
}

// --- review lifecycle ----------------------------------------------------------------

namespace {

FlagRecord read_flag(Statement& st) {
  FlagRecord f;
  f.id = st.text(0);
  f.question_id = st.text(1);
  f.raised_by = st.text(2);
  f.reason = st.text(3);
  f.state = parse_flag_state(st.text(4)).value_or(FlagState::kOpen);
  f.at = parse_rfc3339(st.text(5)).value_or(Timestamp{});
  if (auto r = st.opt_text(6)) f.resolved_at = parse_rfc3339(*r);
  f.resolved_by = st.opt_text(7);
  return f;
}

constexpr const char* kFlagColumns = "id, question_id, raised_by, reason, state, at, resolved_at, resolved_by";

}  // namespace

FlagRecord Engagement::flag_question(const std::string& actor_id, const std::string& question_id,
                                     const std::string& reason) {
  require_reviewer(actor_id);
  auto& db = store_->db();
  Transaction tx(db);
  auto q = store_->question(question_id);
  if (!q) throw Error("unknown-question", "no question " + question_id);
  if (q->state != QuestionState::kPublished && q->state != QuestionState::kDraft)
    throw Error("bad-state", "only published or draft questions can be flagged (state is " +
                                 std::string(to_string(q->state)) + ")");
  FlagRecord f{new_id("flg"), question_id, actor_id, reason, FlagState::kOpen, store_->now(), {}, {}};
  db.prepare("INSERT INTO flags (id, question_id, raised_by, reason, state, at) VALUES (?, ?, ?, ?, ?, ?)")
      .bind_all(f.id, f.question_id, f.raised_by, f.reason, to_string(f.state), format_rfc3339(f.at))
      .run();
  store_->set_question_state(question_id, QuestionState::kFlagged);
  tx.commit();
  return f;
}

Question Engagement::resolve_flag(const std::string& actor_id, const std::string& flag_id, FlagOutcome outcome) {
  require_reviewer(actor_id);
  auto& db = store_->db();
  Transaction tx(db);
  auto f = flag(flag_id);
  if (!f) throw Error("unknown-flag", "no flag " + flag_id);
  if (f->state != FlagState::kOpen) throw Error("flag-closed", "flag was already resolved");
  const FlagState next =
      outcome == FlagOutcome::kRepublish ? FlagState::kResolvedRepublished : FlagState::kResolvedRetired;
  db.prepare("UPDATE flags SET state = ?, resolved_at = ?, resolved_by = ? WHERE id = ?")
      .bind_all(to_string(next), format_rfc3339(store_->now()), actor_id, flag_id)
      .run();
  // Other open flags on the same question keep it hidden until they close too.
  auto others = db.prepare("SELECT COUNT(*) FROM flags WHERE question_id = ? AND state = 'open'");
  others.bind_all(f->question_id);
  others.step();
  const bool still_flagged = others.integer(0) > 0;
  others.reset();
  if (outcome == FlagOutcome::kRetire)
    store_->set_question_state(f->question_id, QuestionState::kRetired);
  else if (!still_flagged)
    store_->set_question_state(f->question_id, QuestionState::kPublished);
  auto q = store_->question(f->question_id);
  tx.commit();
  return *q;
}

Question Engagement::publish_question(const std::string& actor_id, const std::string& question_id) {
  require_reviewer(actor_id);
  auto& db = store_->db();
  Transaction tx(db);
  auto q = store_->question(question_id);
  if (!q) throw Error("unknown-question", "no question " + question_id);
  if (q->state != QuestionState::kDraft) throw Error("bad-state", "only drafts can be published");
  store_->set_question_state(question_id, QuestionState::kPublished);
  q = store_->question(question_id);
  tx.commit();
  return *q;
}

std::optional<FlagRecord> Engagement::flag(const std::string& flag_id) {
  auto& db = store_->db();
  auto lock = db.lock();
  auto st = db.prepare(std::string("SELECT ") + kFlagColumns + " FROM flags WHERE id = ?");
  st.bind_all(flag_id);
  if (!st.step()) return std::nullopt;
  return read_flag(st);
}

std::vector<FlagRecord> Engagement::flags(std::optional<FlagState> state) {
  auto& db = store_->db();
  auto lock = db.lock();
  auto st = db.prepare(std::string("SELECT ") + kFlagColumns +
                       " FROM flags WHERE (?1 IS NULL OR state = ?1) ORDER BY at, id");
  st.bind_all(state ? std::optional<std::string>(std::string(to_string(*state))) : std::nullopt);
  std::vector<FlagRecord> out;
  while (st.step()) out.push_back(read_flag(st));
  return out;
}

// --- progress and metrics ------------------------------------------------------------

ConceptProgress Engagement::progress(const std::string& user_id, const std::string& concept_id) {
  auto& db = store_->db();
  auto lock = db.lock();
  auto st = db.prepare("SELECT attempted, correct FROM user_concept_progress WHERE user_id = ? AND concept_id = ?");
  st.bind_all(user_id, concept_id);
  ConceptProgress p{user_id, concept_id, 0, 0};
  if (st.step()) {
    p.attempted = static_cast<int>(st.integer(0));
    p.correct = static_cast<int>(st.integer(1));
  }
  return p;
}

std::vector<ConceptProgress> Engagement::progress(const std::string& user_id) {
  auto& db = store_->db();
  auto lock = db.lock();
  auto st = db.prepare(
      "SELECT concept_id, attempted, correct FROM user_concept_progress WHERE user_id = ? ORDER BY concept_id");
  st.bind_all(user_id);
  std::vector<ConceptProgress> out;
  while (st.step())
    out.push_back({user_id, st.text(0), static_cast<int>(st.integer(1)), static_cast<int>(st.integer(2))});
  return out;
}

std::vector<EngagementEvent> Engagement::engagement_events(const DateRange& range) {
  auto& db = store_->db();
  auto lock = db.lock();
  auto st = db.prepare("SELECT user_id, at FROM analytics WHERE at >= ? AND at < ? ORDER BY at");
  st.bind_all(format_rfc3339(range.begin()), format_rfc3339(range.end()));
  std::vector<EngagementEvent> out;
  while (st.step()) out.push_back({st.text(0), parse_rfc3339(st.text(1)).value_or(Timestamp{})});
  return out;
}

DauReport Engagement::daily_active_users(const DateRange& current, const std::optional<DateRange>& baseline) {
  if (current.to < current.from || (baseline && baseline->to < baseline->from))
    throw Error("bad-range", "range end precedes its start");
  DauReport r;
  r.current = compute_dau(engagement_events(current), current);
  r.current_mean = mean_dau(r.current);
  if (baseline) {
    r.baseline = compute_dau(engagement_events(*baseline), *baseline);
    r.baseline_mean = mean_dau(r.baseline);
    r.percent_change = percent_change(r.baseline_mean, r.current_mean);
  }
  return r;
}

SatisfactionSummary Engagement::satisfaction_summary(const DateRange& range) {
  std::vector<Rating> ratings;
  {
    auto& db = store_->db();
    auto lock = db.lock();
    auto st = db.prepare("SELECT user_id, rating, at FROM question_feedbacks WHERE at >= ? AND at < ?");
    st.bind_all(format_rfc3339(range.begin()), format_rfc3339(range.end()));
    while (st.step())
      ratings.push_back({st.text(0), static_cast<int>(st.integer(1)), parse_rfc3339(st.text(2)).value_or(Timestamp{})});
  }
  return compute_satisfaction(ratings);
}

ProcessingStats Engagement::processing_time_stats(const DateRange& range) {
  std::vector<JobDuration> jobs;
  {
    auto& db = store_->db();
    auto lock = db.lock();
    auto st = db.prepare("SELECT id, timestamps FROM jobs WHERE state = 'done' ORDER BY id");
    while (st.step()) {
      const auto stamps = json::parse(st.text(1));
      if (!stamps.contains("queued") || !stamps.contains("done")) continue;
      const auto queued = parse_rfc3339(stamps["queued"].get<std::string>());
      const auto done = parse_rfc3339(stamps["done"].get<std::string>());
      if (!queued || !done || !range.contains(utc_day(*done))) continue;
      jobs.push_back({st.text(0), std::chrono::duration<double>(*done - *queued).count()});
    }
  }
  return compute_processing_stats(std::move(jobs));
}

}  // namespace examforge
