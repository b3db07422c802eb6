#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "examforge/retry.hpp"
#include "examforge/time.hpp"

namespace examforge {

struct Word {
  std::string text;
  double confidence = 1.0;
};

struct Line {
  std::vector<Word> words;
  [[nodiscard]] std::string text() const;
};

struct Paragraph {
  std::vector<Line> lines;
  [[nodiscard]] std::string text() const;
};

struct Page {
  int number = 1;
  std::vector<Paragraph> paragraphs;
};

struct Table {
  int page = 1;
  std::vector<std::vector<std::string>> rows;
};

// Normalized document layout. Reading order is paragraph order within a
// page, page order overall.
struct LayoutResult {
  std::vector<Page> pages;
  std::vector<Table> tables;
  std::string source_document_id;
  std::string provider_name;
  Timestamp produced_at{};
};

nlohmann::json to_json(const LayoutResult& layout);

// (page number, 0-based paragraph index within the page)
using ParagraphKey = std::pair<int, int>;

struct OrderedText {
  std::string text;
  // Half-open [begin, end) byte ranges into `text`.
  std::map<ParagraphKey, std::pair<std::size_t, std::size_t>> offsets;
};

// Maps either the native layout shape ({"pages":[{"number", "paragraphs":
// [{"lines":[{"words":[...]}]}]}]}) or a Document-Intelligence style
// "analyzeResult" payload onto LayoutResult. Throws
// Error("provider-bad-response") on structural problems.
LayoutResult normalize_layout(const nlohmann::json& payload);
LayoutResult parse_layout(std::string_view raw_payload);

// Paragraph texts in reading order separated by blank lines; each page's
// tables follow its paragraphs, one row per line with " | " between cells.
OrderedText layout_to_text(const LayoutResult& layout);

// Content type by magic number, falling back to the file extension.
std::string sniff_content_type(std::span<const std::uint8_t> bytes, std::string_view filename = {});

struct AnalyzeOutput {
  LayoutResult layout;
  std::string raw_payload;  // verbatim provider output, kept for audit
};

class OcrProvider {
 public:
  virtual ~OcrProvider() = default;
  virtual AnalyzeOutput analyze(std::span<const std::uint8_t> document, const std::string& content_type,
                                const std::string& document_id) = 0;
  [[nodiscard]] virtual std::string name() const = 0;
};

bool is_supported_document_type(std::string_view content_type);

// Resolves documents by content hash: <fixtures>/<sha256>.layout.json.
// analyze is a pure function of the input bytes (plus the injected clock).
class FixtureOcrProvider final : public OcrProvider {
 public:
  explicit FixtureOcrProvider(std::filesystem::path fixtures_dir, Clock clock = system_clock());
  AnalyzeOutput analyze(std::span<const std::uint8_t> document, const std::string& content_type,
                        const std::string& document_id) override;
  [[nodiscard]] std::string name() const override { return "fixture"; }

 private:
  std::filesystem::path dir_;
  Clock clock_;
};

struct RemoteOcrConfig {
  std::string endpoint;  // OCR_ENDPOINT
  std::string api_key;   // OCR_API_KEY
  int max_in_flight = 4;
  std::chrono::milliseconds timeout{std::chrono::seconds(120)};
  std::chrono::milliseconds poll_interval{std::chrono::seconds(1)};
  RetryPolicy retry;
};

// Plain HTTPS client. POSTs the document bytes; handles both a synchronous
// JSON answer and the 202 + Operation-Location polling pattern.
class RemoteOcrProvider final : public OcrProvider {
 public:
  explicit RemoteOcrProvider(RemoteOcrConfig config, Clock clock = system_clock());
  AnalyzeOutput analyze(std::span<const std::uint8_t> document, const std::string& content_type,
                        const std::string& document_id) override;
  [[nodiscard]] std::string name() const override { return "remote"; }

 private:
  std::string fetch_once(std::span<const std::uint8_t> document, const std::string& content_type);

  RemoteOcrConfig config_;
  Clock clock_;
  std::counting_semaphore<1024> in_flight_;
};

}  // namespace examforge
