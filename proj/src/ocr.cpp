#include "examforge/ocr.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "examforge/crypto.hpp"
#include "examforge/error.hpp"
#include "examforge/http_client.hpp"

namespace examforge {

using nlohmann::json;

std::string Line::text() const {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out.push_back(' ');
    out += w.text;
  }
  return out;
}

std::string Paragraph::text() const {
  std::string out;
  for (size_t i = 0; i < lines.size(); ++i) {
    if (i != 0) out.push_back('\n');
    out += lines[i].text();
  }
  return out;
}

json to_json(const LayoutResult& layout) {
  json pages = json::array();
  for (const auto& page : layout.pages) {
    json paragraphs = json::array();
    for (const auto& para : page.paragraphs) {
      json lines = json::array();
      for (const auto& line : para.lines) {
        json words = json::array();
        for (const auto& w : line.words) words.push_back({{"text", w.text}, {"confidence", w.confidence}});
        lines.push_back({{"words", std::move(words)}});
      }
      paragraphs.push_back({{"lines", std::move(lines)}});
    }
    pages.push_back({{"number", page.number}, {"paragraphs", std::move(paragraphs)}});
  }
  json tables = json::array();
  for (const auto& t : layout.tables) tables.push_back({{"page", t.page}, {"rows", t.rows}});
  return {{"pages", std::move(pages)},
          {"tables", std::move(tables)},
          {"source_document_id", layout.source_document_id},
          {"provider_name", layout.provider_name},
          {"produced_at", format_rfc3339(layout.produced_at)}};
}

namespace {

[[noreturn]] void bad(const std::string& why) { throw Error("provider-bad-response", "malformed layout: " + why); }

double checked_confidence(const json& j) {
  if (!j.is_number()) bad("word confidence is not a number");
  const double c = j.get<double>();
  if (!(c >= 0.0 && c <= 1.0)) bad("word confidence outside [0, 1]");
  return c;
}

// Words never contain whitespace; provider tokens that do are split.
void push_words(std::vector<Word>& out, const std::string& text, double confidence) {
  std::istringstream in(text);
  std::string token;
  while (in >> token) out.push_back({token, confidence});
}

void check_contiguous(const std::vector<Page>& pages) {
  for (size_t i = 0; i < pages.size(); ++i)
    if (pages[i].number != static_cast<int>(i + 1))
      bad("page numbers are not contiguous from 1 (found " + std::to_string(pages[i].number) + " at position " +
          std::to_string(i + 1) + ")");
}

LayoutResult normalize_native(const json& payload) {
  LayoutResult out;
  const auto& pages = payload.at("pages");
  if (!pages.is_array()) bad("\"pages\" is not an array");
  for (const auto& pj : pages) {
    if (!pj.is_object() || !pj.contains("number") || !pj["number"].is_number_integer()) bad("page without number");
    Page page;
    page.number = pj["number"].get<int>();
    if (pj.contains("paragraphs")) {
      if (!pj["paragraphs"].is_array()) bad("\"paragraphs\" is not an array");
      for (const auto& paj : pj["paragraphs"]) {
        Paragraph para;
        if (!paj.is_object() || !paj.contains("lines") || !paj["lines"].is_array()) bad("paragraph without lines");
        for (const auto& lj : paj["lines"]) {
          Line line;
          if (lj.contains("words")) {
            if (!lj["words"].is_array()) bad("\"words\" is not an array");
            for (const auto& wj : lj["words"]) {
              if (!wj.contains("text") || !wj["text"].is_string()) bad("word without text");
              const double conf = wj.contains("confidence") ? checked_confidence(wj["confidence"]) : 1.0;
              push_words(line.words, wj["text"].get<std::string>(), conf);
            }
          } else if (lj.contains("text") && lj["text"].is_string()) {
            push_words(line.words, lj["text"].get<std::string>(), 1.0);
          } else {
            bad("line without words");
          }
          if (!line.words.empty()) para.lines.push_back(std::move(line));
        }
        if (!para.lines.empty()) page.paragraphs.push_back(std::move(para));
      }
    }
    out.pages.push_back(std::move(page));
  }
  check_contiguous(out.pages);
  if (payload.contains("tables")) {
    for (const auto& tj : payload["tables"]) {
      Table t;
      t.page = tj.value("page", 1);
      for (const auto& row : tj.at("rows")) t.rows.push_back(row.get<std::vector<std::string>>());
      out.tables.push_back(std::move(t));
    }
  }
  out.source_document_id = payload.value("source_document_id", std::string{});
  out.provider_name = payload.value("provider_name", std::string{});
  if (payload.contains("produced_at") && payload["produced_at"].is_string())
    out.produced_at = parse_rfc3339(payload["produced_at"].get<std::string>()).value_or(Timestamp{});
  return out;
}

struct Span {
  long offset = -1;
  long length = 0;
  [[nodiscard]] bool contains(long pos) const { return offset >= 0 && pos >= offset && pos < offset + length; }
};

Span first_span(const json& j) {
  if (j.contains("span") && j["span"].is_object()) return {j["span"].value("offset", -1L), j["span"].value("length", 0L)};
  if (j.contains("spans") && j["spans"].is_array() && !j["spans"].empty())
    return {j["spans"][0].value("offset", -1L), j["spans"][0].value("length", 0L)};
  return {};
}

int region_page(const json& j) {
  if (j.contains("boundingRegions") && j["boundingRegions"].is_array() && !j["boundingRegions"].empty())
    return j["boundingRegions"][0].value("pageNumber", 1);
  return 1;
}

// Document-Intelligence "read"/"layout" result: paragraphs are top-level and
// reference pages through boundingRegions; words and lines carry spans into
// the document content, which is how words are attributed to lines.
LayoutResult normalize_analyze_result(const json& result) {
  LayoutResult out;
  const auto& pages = result.at("pages");
  if (!pages.is_array()) bad("\"pages\" is not an array");

  struct RawPage {
    std::vector<std::pair<Span, std::string>> lines;
    std::vector<std::pair<Span, Word>> words;
  };
  std::map<int, RawPage> raw;
  for (const auto& pj : pages) {
    if (!pj.contains("pageNumber") || !pj["pageNumber"].is_number_integer()) bad("page without pageNumber");
    Page page;
    page.number = pj["pageNumber"].get<int>();
    RawPage rp;
    for (const auto& wj : pj.value("words", json::array())) {
      const double conf = wj.contains("confidence") ? checked_confidence(wj["confidence"]) : 1.0;
      rp.words.push_back({first_span(wj), Word{wj.value("content", std::string{}), conf}});
    }
    for (const auto& lj : pj.value("lines", json::array()))
      rp.lines.emplace_back(first_span(lj), lj.value("content", std::string{}));
    raw[page.number] = std::move(rp);
    out.pages.push_back(std::move(page));
  }
  check_contiguous(out.pages);

  auto line_from = [](const RawPage& rp, const Span& line_span, const std::string& content) {
    Line line;
    for (const auto& [ws, w] : rp.words)
      if (line_span.contains(ws.offset)) push_words(line.words, w.text, w.confidence);
    if (line.words.empty()) push_words(line.words, content, 1.0);
    return line;
  };

  const bool has_paragraphs = result.contains("paragraphs") && result["paragraphs"].is_array();
  if (has_paragraphs) {
    for (const auto& paj : result["paragraphs"]) {
      const int pno = region_page(paj);
      if (pno < 1 || pno > static_cast<int>(out.pages.size())) bad("paragraph on unknown page");
      const auto& rp = raw[pno];
      const Span pspan = first_span(paj);
      Paragraph para;
      for (const auto& [ls, content] : rp.lines)
        if (pspan.contains(ls.offset)) para.lines.push_back(line_from(rp, ls, content));
      if (para.lines.empty()) {
        std::istringstream in(paj.value("content", std::string{}));
        std::string text;
        while (std::getline(in, text)) {
          Line line;
          push_words(line.words, text, 1.0);
          if (!line.words.empty()) para.lines.push_back(std::move(line));
        }
      }
      std::erase_if(para.lines, [](const Line& l) { return l.words.empty(); });
      if (!para.lines.empty()) out.pages[static_cast<size_t>(pno - 1)].paragraphs.push_back(std::move(para));
    }
  } else {
    for (auto& page : out.pages) {
      const auto& rp = raw[page.number];
      for (const auto& [ls, content] : rp.lines) {
        Paragraph para;
        para.lines.push_back(line_from(rp, ls, content));
        if (!para.lines.front().words.empty()) page.paragraphs.push_back(std::move(para));
      }
    }
  }

  for (const auto& tj : result.value("tables", json::array())) {
    Table t;
    t.page = region_page(tj);
    const int rows = tj.value("rowCount", 0);
    const int cols = tj.value("columnCount", 0);
    if (rows < 0 || cols < 0 || rows > 10000 || cols > 1000) bad("table dimensions out of range");
    t.rows.assign(static_cast<size_t>(rows), std::vector<std::string>(static_cast<size_t>(cols)));
    for (const auto& cj : tj.value("cells", json::array())) {
      const int r = cj.value("rowIndex", -1);
      const int c = cj.value("columnIndex", -1);
      if (r < 0 || r >= rows || c < 0 || c >= cols) bad("table cell outside the grid");
      t.rows[static_cast<size_t>(r)][static_cast<size_t>(c)] = cj.value("content", std::string{});
    }
    out.tables.push_back(std::move(t));
  }
  return out;
}

}  // namespace

LayoutResult normalize_layout(const json& payload) {
  try {
    if (!payload.is_object()) bad("payload is not an object");
    if (payload.contains("analyzeResult")) return normalize_analyze_result(payload["analyzeResult"]);
    if (!payload.contains("pages")) bad("missing \"pages\"");
    const auto& pages = payload["pages"];
    if (pages.is_array() && !pages.empty() && pages[0].is_object() && pages[0].contains("pageNumber"))
      return normalize_analyze_result(payload);
    return normalize_native(payload);
  } catch (const json::exception& e) {
    bad(e.what());
  }
}

LayoutResult parse_layout(std::string_view raw_payload) {
  json payload;
  try {
    payload = json::parse(raw_payload);
  } catch (const json::exception& e) {
    bad(std::string("payload is not JSON: ") + e.what());
  }
  return normalize_layout(payload);
}

OrderedText layout_to_text(const LayoutResult& layout) {
  OrderedText out;
  auto append_block = [&out](const std::string& block) {
    if (!out.text.empty()) out.text += "\n\n";
    const size_t begin = out.text.size();
    out.text += block;
    return std::pair{begin, out.text.size()};
  };
  for (const auto& page : layout.pages) {
    for (size_t i = 0; i < page.paragraphs.size(); ++i) {
      const auto text = page.paragraphs[i].text();
      const ParagraphKey key{page.number, static_cast<int>(i)};
      if (text.empty()) {
        out.offsets[key] = {out.text.size(), out.text.size()};
        continue;
      }
      out.offsets[key] = append_block(text);
    }
    for (const auto& table : layout.tables) {
      if (table.page != page.number || table.rows.empty()) continue;
      std::string block;
      for (size_t r = 0; r < table.rows.size(); ++r) {
        if (r != 0) block.push_back('\n');
        for (size_t c = 0; c < table.rows[r].size(); ++c) {
          if (c != 0) block += " | ";
          block += table.rows[r][c];
        }
      }
      append_block(block);
    }
  }
  return out;
}

std::string sniff_content_type(std::span<const std::uint8_t> b, std::string_view filename) {
  auto starts = [&b](std::initializer_list<std::uint8_t> magic) {
    return b.size() >= magic.size() && std::equal(magic.begin(), magic.end(), b.begin());
  };
  if (starts({'%', 'P', 'D', 'F', '-'})) return "application/pdf";
  if (starts({0x89, 'P', 'N', 'G'})) return "image/png";
  if (starts({0xFF, 0xD8, 0xFF})) return "image/jpeg";
  if (starts({'I', 'I', '*', 0}) || starts({'M', 'M', 0, '*'})) return "image/tiff";
  std::string ext(std::filesystem::path(std::string(filename)).extension().string());
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (ext == ".pdf") return "application/pdf";
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".tif" || ext == ".tiff") return "image/tiff";
  return "application/octet-stream";
}

bool is_supported_document_type(std::string_view ct) {
  return ct == "application/pdf" || ct == "image/png" || ct == "image/jpeg" || ct == "image/tiff";
}

namespace {

void check_input(std::span<const std::uint8_t> document, const std::string& content_type) {
  if (document.empty()) throw Error("empty-document", "document is empty");
  if (!is_supported_document_type(content_type))
    throw Error("unsupported-format", "unsupported content type '" + content_type + "'");
}

}  // namespace

FixtureOcrProvider::FixtureOcrProvider(std::filesystem::path fixtures_dir, Clock clock)
    : dir_(std::move(fixtures_dir)), clock_(std::move(clock)) {}

AnalyzeOutput FixtureOcrProvider::analyze(std::span<const std::uint8_t> document, const std::string& content_type,
                                          const std::string& document_id) {
  check_input(document, content_type);
  const auto path = dir_ / (sha256_hex(document) + ".layout.json");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("fixture-missing", "no fixture layout for document (expected " + path.string() + ")");
  std::ostringstream buf;
  buf << in.rdbuf();
  AnalyzeOutput out{parse_layout(buf.str()), buf.str()};
  out.layout.source_document_id = document_id;
  out.layout.provider_name = name();
  out.layout.produced_at = clock_();
  return out;
}

RemoteOcrProvider::RemoteOcrProvider(RemoteOcrConfig config, Clock clock)
    : config_(std::move(config)), clock_(std::move(clock)), in_flight_(std::max(1, config_.max_in_flight)) {
  if (config_.endpoint.empty()) throw Error("provider-misconfigured", "OCR_ENDPOINT is not set");
}

std::string RemoteOcrProvider::fetch_once(std::span<const std::uint8_t> document, const std::string& content_type) {
  HttpCall call;
  call.url = config_.endpoint;
  call.body.assign(document.begin(), document.end());
  call.content_type = content_type;
  call.timeout = config_.timeout;
  call.headers = {{"Ocp-Apim-Subscription-Key", config_.api_key}, {"api-key", config_.api_key}};
  auto reply = http_request(call);

  if (reply.status == 202) {
    auto op = reply.headers.find("operation-location");
    if (op == reply.headers.end()) throw Error("provider-bad-response", "202 without Operation-Location");
    HttpCall poll;
    poll.method = "GET";
    poll.url = op->second;
    poll.timeout = config_.timeout;
    poll.headers = call.headers;
    const auto max_polls = std::max<long>(1, config_.timeout / std::max(config_.poll_interval, std::chrono::milliseconds(1)));
    for (long i = 0; i < max_polls; ++i) {
      auto status_reply = http_request(poll);
      if (status_reply.status / 100 != 2) throw_for_status(status_reply, "OCR provider");
      json status;
      try {
        status = json::parse(status_reply.body);
      } catch (const json::exception&) {
        throw Error("provider-bad-response", "OCR status payload is not JSON");
      }
      const auto state = status.value("status", std::string{});
      if (state == "succeeded") return status_reply.body;
      if (state == "failed" || state == "canceled") throw Error("provider-bad-response", "OCR analysis " + state);
      config_.retry.sleep(config_.poll_interval);
    }
    throw Error("provider-timeout", "OCR analysis did not finish in time", true);
  }
  if (reply.status / 100 != 2) throw_for_status(reply, "OCR provider");
  return reply.body;
}

AnalyzeOutput RemoteOcrProvider::analyze(std::span<const std::uint8_t> document, const std::string& content_type,
                                         const std::string& document_id) {
  check_input(document, content_type);
  in_flight_.acquire();
  std::string raw;
  try {
    raw = with_retries(config_.retry, [&] { return fetch_once(document, content_type); });
  } catch (...) {
    in_flight_.release();
    throw;
  }
  in_flight_.release();
  AnalyzeOutput out{parse_layout(raw), raw};
  out.layout.source_document_id = document_id;
  out.layout.provider_name = name();
  out.layout.produced_at = clock_();
  return out;
}

}  // namespace examforge
