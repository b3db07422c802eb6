#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "examforge/store.hpp"

namespace examforge {

// --- pure metric computations --------------------------------------------------

struct EngagementEvent {
  std::string user_id;
  Timestamp at{};
};

struct DauPoint {
  Day day{};
  int dau = 0;
};

// One point per day of the range, zero-filled.
std::vector<DauPoint> compute_dau(const std::vector<EngagementEvent>& events, const DateRange& range);
double mean_dau(const std::vector<DauPoint>& series);
// (current - baseline) / baseline * 100. Throws "undefined-baseline" when the
// baseline is zero and the current value is not.
double percent_change(double baseline_mean, double current_mean);

struct Rating {
  std::string user_id;
  int rating = 0;
  Timestamp at{};
};

inline constexpr double kSatisfiedThreshold = 4.0;

struct SatisfactionSummary {
  std::map<int, int> histogram;  // rating -> count
  int raters = 0;
  int satisfied = 0;
  double fraction_satisfied = 0.0;
};

SatisfactionSummary compute_satisfaction(const std::vector<Rating>& ratings);

struct JobDuration {
  std::string job_id;
  double seconds = 0.0;
};

struct ProcessingStats {
  std::optional<double> median_seconds;
  std::optional<double> p95_seconds;  // nearest rank
  std::vector<JobDuration> jobs;
};

ProcessingStats compute_processing_stats(std::vector<JobDuration> jobs);

// --- recorded engagement and review ----------------------------------------------

struct McqOutcome {
  bool correct = false;
  int correct_index = 0;
  std::optional<std::string> explanation;
};

enum class FlagState { kOpen, kResolvedRepublished, kResolvedRetired };
enum class FlagOutcome { kRepublish, kRetire };
std::string_view to_string(FlagState s);
std::optional<FlagState> parse_flag_state(std::string_view s);
std::optional<FlagOutcome> parse_flag_outcome(std::string_view s);

struct FlagRecord {
  std::string id;
  std::string question_id;
  std::string raised_by;
  std::string reason;
  FlagState state = FlagState::kOpen;
  Timestamp at{};
  std::optional<Timestamp> resolved_at;
  std::optional<std::string> resolved_by;
};

struct ConceptProgress {
  std::string user_id;
  std::string concept_id;
  int attempted = 0;
  int correct = 0;
  [[nodiscard]] double mastery() const { return attempted == 0 ? 0.0 : static_cast<double>(correct) / attempted; }
};

struct DauReport {
  std::vector<DauPoint> current;
  std::vector<DauPoint> baseline;
  double current_mean = 0.0;
  double baseline_mean = 0.0;
  std::optional<double> percent_change;
};

// Every recording call also writes an analytics event and extends the
// user's study session (30 minutes of inactivity closes one).
class Engagement {
 public:
  explicit Engagement(std::shared_ptr<ContentStore> store,
                      std::chrono::minutes session_timeout = std::chrono::minutes(30));

  // `at` defaults to now; later-than-now values are clamped to now.
  McqOutcome record_mcq_response(const std::string& user_id, const std::string& question_id, int chosen_index,
                                 std::optional<Timestamp> at = {}, const std::optional<std::string>& op_id = {});
  void record_saq_response(const std::string& user_id, const std::string& question_id,
                           const std::vector<std::string>& answers, bool self_correct,
                           std::optional<Timestamp> at = {}, const std::optional<std::string>& op_id = {});
  // One rating per (user, question); a later rating replaces the earlier one.
  void record_feedback(const std::string& user_id, const std::string& question_id, int rating,
                       const std::optional<std::string>& comment, std::optional<Timestamp> at = {});
  // A study activity with no other record (opening a question, paging).
  void record_study_event(const std::string& user_id, std::optional<Timestamp> at = {});

  FlagRecord flag_question(const std::string& actor_id, const std::string& question_id, const std::string& reason);
  Question resolve_flag(const std::string& actor_id, const std::string& flag_id, FlagOutcome outcome);
  // Publishes a draft held back by review-first mode.
  Question publish_question(const std::string& actor_id, const std::string& question_id);
  [[nodiscard]] std::optional<FlagRecord> flag(const std::string& flag_id);
  [[nodiscard]] std::vector<FlagRecord> flags(std::optional<FlagState> state = {});

  [[nodiscard]] ConceptProgress progress(const std::string& user_id, const std::string& concept_id);
  [[nodiscard]] std::vector<ConceptProgress> progress(const std::string& user_id);

  [[nodiscard]] std::vector<EngagementEvent> engagement_events(const DateRange& range);
  [[nodiscard]] DauReport daily_active_users(const DateRange& current, const std::optional<DateRange>& baseline = {});
  [[nodiscard]] SatisfactionSummary satisfaction_summary(const DateRange& range);
  [[nodiscard]] ProcessingStats processing_time_stats(const DateRange& range);

 private:
  Timestamp effective(std::optional<Timestamp> at) const;
  UserAccount require_user(const std::string& user_id);
  UserAccount require_reviewer(const std::string& actor_id);
  void touch(const std::string& user_id, const std::string& event, const std::optional<std::string>& question_id,
             Timestamp at);

  std::shared_ptr<ContentStore> store_;
  std::chrono::minutes session_timeout_;
};

}  // namespace examforge
