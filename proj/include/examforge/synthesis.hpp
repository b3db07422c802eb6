#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "examforge/model.hpp"
#include "examforge/ocr.hpp"
#include "examforge/retry.hpp"

namespace examforge {

inline constexpr std::size_t kMinWindowChars = 2000;
inline constexpr std::size_t kMaxModelResponseBytes = 2 * 1024 * 1024;
inline constexpr double kDefaultModelConfidence = 0.5;

struct ContextTags {
  std::string institution;
  std::string course_code;
  std::string locale_note;
};

struct PromptBundle {
  std::string system_instructions;
  std::string user_content;
  ContextTags context;
  int window_index = 0;
  int window_count = 1;
  std::size_t start_offset = 0;  // byte offset of user_content in the full text
};

struct SourceSpan {
  ParagraphKey first;
  ParagraphKey last;
};

// A generated item before insertion: Question content (no id, state draft)
// plus what the generator said about concepts and where it came from.
struct DraftQuestion {
  Question content;
  std::vector<std::string> concept_names;
  std::optional<std::size_t> source_offset;  // byte offset into the full text
  std::optional<SourceSpan> source_span;
};

struct RejectedFragment {
  std::string raw_fragment;
  std::string reason;
};

struct SynthesisOutput {
  std::vector<DraftQuestion> drafts;
  std::vector<RejectedFragment> rejected;
  std::string provider_name;
  std::string model_version;
  std::chrono::milliseconds latency{0};
};

// Greedy packing of paragraphs (separated by blank lines) into windows of at
// most max_window_chars bytes. A paragraph larger than the limit becomes its
// own window. Concatenating the windows reproduces `text`.
std::vector<PromptBundle> window_text(std::string_view text, std::size_t max_window_chars,
                                      const std::string& system_instructions = {}, const ContextTags& context = {});

// Deterministic grammar-based extraction of exam questions from plain text.
SynthesisOutput extract_questions_rule_based(std::string_view text);

// Parses the structured item array a generator returns. Total: malformed
// content lands in `rejected`, never in an exception.
SynthesisOutput parse_model_output(std::string_view raw);

struct DroppedDraft {
  DraftQuestion draft;
  std::string reason;  // invalid | duplicate-existing | duplicate-batch
  std::string detail;
};

struct DedupeResult {
  std::vector<DraftQuestion> accepted;
  std::vector<DroppedDraft> dropped;
};

// Drafts must already carry course and concept ids. Sets each accepted
// draft's fingerprint; accepted order follows input order.
DedupeResult validate_and_dedupe(std::vector<DraftQuestion> drafts, const std::set<std::string>& existing_fingerprints);

// Item schema shared by generators and the synthesis audit artifact.
nlohmann::json draft_to_json(const DraftQuestion& d);
nlohmann::json synthesis_to_json(const SynthesisOutput& out);
SynthesisOutput synthesis_from_json(const nlohmann::json& j);

struct RawOutput {
  std::string text;
  std::chrono::milliseconds latency{0};
  std::string provider_name;
  std::string model_version;
  Generator generator = Generator::kModel;
};

class SynthesisProvider {
 public:
  virtual ~SynthesisProvider() = default;
  virtual RawOutput generate(const PromptBundle& bundle) = 0;
  [[nodiscard]] virtual std::string name() const = 0;
  [[nodiscard]] virtual Generator generator() const = 0;
  // Largest window this provider accepts in one call.
  [[nodiscard]] virtual std::size_t max_window_chars() const = 0;
};

// Calls the provider and hands the raw answer to `persist` before anyone
// parses it.
RawOutput generate_with_model(const PromptBundle& bundle, SynthesisProvider& provider,
                              const std::function<void(const RawOutput&)>& persist);

// The rule-based extractor behind the provider interface. It has no context
// limit, so a document always arrives as a single window and answer keys at
// the end of a paper stay in reach of their questions.
class LocalSynthesisProvider final : public SynthesisProvider {
 public:
  RawOutput generate(const PromptBundle& bundle) override;
  [[nodiscard]] std::string name() const override { return "local"; }
  [[nodiscard]] Generator generator() const override { return Generator::kRuleBased; }
  [[nodiscard]] std::size_t max_window_chars() const override { return static_cast<std::size_t>(-1); }
};

struct RemoteSynthesisConfig {
  std::string endpoint;  // LLM_ENDPOINT, chat-completions style
  std::string api_key;   // LLM_API_KEY
  std::string model = "o3-mini";
  std::size_t max_window_chars = 24000;
  std::chrono::milliseconds timeout{std::chrono::seconds(120)};
  RetryPolicy retry;
};

class RemoteSynthesisProvider final : public SynthesisProvider {
 public:
  explicit RemoteSynthesisProvider(RemoteSynthesisConfig config);
  RawOutput generate(const PromptBundle& bundle) override;
  [[nodiscard]] std::string name() const override { return "remote"; }
  [[nodiscard]] Generator generator() const override { return Generator::kModel; }
  [[nodiscard]] std::size_t max_window_chars() const override { return config_.max_window_chars; }

  // The user message sent for a bundle; exposed for inspection.
  static std::string render_user_message(const PromptBundle& bundle);

 private:
  RemoteSynthesisConfig config_;
};

// Uses `fallback` for a window when `primary` stays unavailable after its own
// retries. Windows are sized for the primary.
class FallbackSynthesisProvider final : public SynthesisProvider {
 public:
  FallbackSynthesisProvider(std::shared_ptr<SynthesisProvider> primary, std::shared_ptr<SynthesisProvider> fallback);
  RawOutput generate(const PromptBundle& bundle) override;
  [[nodiscard]] std::string name() const override { return primary_->name() + "+" + fallback_->name(); }
  [[nodiscard]] Generator generator() const override { return primary_->generator(); }
  [[nodiscard]] std::size_t max_window_chars() const override { return primary_->max_window_chars(); }

 private:
  std::shared_ptr<SynthesisProvider> primary_;
  std::shared_ptr<SynthesisProvider> fallback_;
};

// Built-in instructions used when the prompt asset file is absent.
std::string default_system_instructions();

}  // namespace examforge
