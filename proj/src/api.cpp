#include "examforge/api.hpp"

#include <charconv>
#include <fstream>
#include <regex>

#include <zlib.h>

#include "examforge/codec.hpp"
#include "examforge/error.hpp"

namespace examforge {

using nlohmann::json;

// --- tokens ----------------------------------------------------------------------

TokenTable TokenTable::from_json(const json& j) {
  if (!j.is_object()) throw Error("bad-config", "token table must be a JSON object");
  TokenTable t;
  for (const auto& [token, entry] : j.items()) {
    const auto role = parse_role(entry.value("role", std::string{}));
    if (!role || !entry.contains("user_id")) throw Error("bad-config", "token entry needs user_id and a valid role");
    t.add(token, {entry["user_id"].get<std::string>(), *role});
  }
  return t;
}

TokenTable TokenTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("bad-config", "cannot read token file " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error("bad-config", "token file " + path.string() + " is not valid JSON: " + e.what());
  }
}

void TokenTable::add(const std::string& token, Principal principal) { tokens_[token] = std::move(principal); }

std::optional<Principal> TokenTable::lookup(const std::string& token) const {
  auto it = tokens_.find(token);
  if (it == tokens_.end()) return std::nullopt;
  return it->second;
}

// --- helpers -----------------------------------------------------------------------

std::string url_decode(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '+') {
      out.push_back(' ');
    } else if (s[i] == '%' && i + 2 < s.size()) {
      int v = 0;
      auto [p, ec] = std::from_chars(s.data() + i + 1, s.data() + i + 3, v, 16);
      if (ec == std::errc{} && p == s.data() + i + 3) {
        out.push_back(static_cast<char>(v));
        i += 2;
      } else {
        out.push_back('%');
      }
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

void split_target(std::string_view target, std::string& path, std::map<std::string, std::string>& query) {
  const auto q = target.find('?');
  path = url_decode(target.substr(0, q));
  if (q == std::string_view::npos) return;
  std::string_view rest = target.substr(q + 1);
  while (!rest.empty()) {
    const auto amp = rest.find('&');
    const auto pair = rest.substr(0, amp);
    const auto eq = pair.find('=');
    if (!pair.empty())
      query[url_decode(pair.substr(0, eq))] = eq == std::string_view::npos ? "" : url_decode(pair.substr(eq + 1));
    if (amp == std::string_view::npos) break;
    rest = rest.substr(amp + 1);
  }
}

std::string gzip_compress(std::string_view data) {
  z_stream zs{};
  if (deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK)
    throw Error("internal-error", "deflateInit2 failed");
  std::string out(deflateBound(&zs, static_cast<uLong>(data.size())) + 32, '\0');
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
  zs.avail_in = static_cast<uInt>(data.size());
  zs.next_out = reinterpret_cast<Bytef*>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&zs, Z_FINISH);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw Error("internal-error", "deflate failed");
  out.resize(zs.total_out);
  return out;
}

std::string gzip_decompress(std::string_view data) {
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 32) != Z_OK) throw Error("internal-error", "inflateInit2 failed");
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
  zs.avail_in = static_cast<uInt>(data.size());
  std::string out;
  char buf[16384];
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = reinterpret_cast<Bytef*>(buf);
    zs.avail_out = sizeof buf;
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw Error("bad-request", "corrupt gzip stream");
    }
    out.append(buf, sizeof buf - zs.avail_out);
  }
  inflateEnd(&zs);
  return out;
}

int status_for(const std::string& code) {
  if (code == "unauthenticated") return 401;
  if (code == "forbidden") return 403;
  if (code == "not-found" || code.rfind("unknown-", 0) == 0) return 404;
  if (code == "flag-closed" || code == "bad-state" || code == "not-available" || code == "cursor-expired" ||
      code == "integrity-violation" || code == "session-closed")
    return 409;
  if (code == "store-busy" || code == "store-unavailable") return 503;
  if (code == "store-error" || code == "internal-error") return 500;
  return 422;
}

namespace {

struct Route {
  std::string method;
  std::regex pattern;
  std::string name;
};

const std::vector<Route>& routes() {
  static const std::vector<Route> table = {
      {"GET", std::regex("^/health$"), "health"},
      {"GET", std::regex("^/courses$"), "courses"},
      {"GET", std::regex("^/questions$"), "questions"},
      {"GET", std::regex("^/questions/([^/]+)$"), "question"},
      {"GET", std::regex("^/papers/([^/]+)/questions$"), "paper-questions"},
      {"GET", std::regex("^/papers/([^/]+)/export$"), "paper-export"},
      {"POST", std::regex("^/questions/([^/]+)/responses$"), "responses"},
      {"POST", std::regex("^/questions/([^/]+)/feedback$"), "feedback"},
      {"POST", std::regex("^/questions/([^/]+)/flags$"), "flag"},
      {"POST", std::regex("^/questions/([^/]+)/publish$"), "publish"},
      {"GET", std::regex("^/flags$"), "flags"},
      {"POST", std::regex("^/flags/([^/]+)/resolve$"), "resolve"},
      {"GET", std::regex("^/progress$"), "progress"},
      {"GET", std::regex("^/analytics/dau$"), "dau"},
      {"GET", std::regex("^/analytics/processing$"), "processing"},
      {"GET", std::regex("^/analytics/satisfaction$"), "satisfaction"},
      {"POST", std::regex("^/sync/push$"), "push"},
      {"GET", std::regex("^/sync/pull$"), "pull"},
      {"GET", std::regex("^/jobs/([^/]+)$"), "job"},
  };
  return table;
}

json parse_body(const ApiRequest& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::exception&) {
    throw Error("bad-request", "request body is not valid JSON");
  }
}

int int_param(const std::map<std::string, std::string>& q, const std::string& name, int fallback) {
  auto it = q.find(name);
  if (it == q.end() || it->second.empty()) return fallback;
  int v = 0;
  auto [p, ec] = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
  if (ec != std::errc{} || p != it->second.data() + it->second.size())
    throw Error("bad-request", name + " must be an integer");
  return v;
}

std::optional<std::string> opt_param(const std::map<std::string, std::string>& q, const std::string& name) {
  auto it = q.find(name);
  if (it == q.end() || it->second.empty()) return std::nullopt;
  return it->second;
}

Day date_param(const std::map<std::string, std::string>& q, const std::string& name) {
  auto v = opt_param(q, name);
  if (!v) throw Error("bad-request", name + " is required (YYYY-MM-DD)");
  auto d = parse_date(*v);
  if (!d) throw Error("bad-request", name + " must be a date (YYYY-MM-DD)");
  return *d;
}

DateRange range_param(const std::map<std::string, std::string>& q, const std::string& from, const std::string& to) {
  DateRange r{date_param(q, from), date_param(q, to)};
  if (r.to < r.from) throw Error("bad-range", to + " precedes " + from);
  return r;
}

json page_json(const QuestionPage& page) {
  json items = json::array();
  for (const auto& q : page.items) items.push_back(to_json(q));
  return {{"items", items}, {"total", page.total}, {"page", page.page}, {"page_size", page.page_size}};
}

void require_staff(const Principal& p) {
  if (p.role != Role::kFaculty && p.role != Role::kAdmin) throw Error("forbidden", "requires faculty or admin role");
}

json flag_json(const FlagRecord& f) {
  return {{"id", f.id},
          {"question_id", f.question_id},
          {"raised_by", f.raised_by},
          {"reason", f.reason},
          {"state", to_string(f.state)},
          {"at", format_rfc3339(f.at)},
          {"resolved_at", f.resolved_at ? json(format_rfc3339(*f.resolved_at)) : json(nullptr)}};
}

json dau_series(const std::vector<DauPoint>& s) {
  json out = json::array();
  for (const auto& p : s) out.push_back({{"date", format_date(p.day)}, {"dau", p.dau}});
  return out;
}

}  // namespace

Api::Api(ApiContext context) : ctx_(std::move(context)) {}

std::optional<Principal> Api::authenticate(const std::string& authorization) const {
  constexpr std::string_view kBearer = "Bearer ";
  if (authorization.size() <= kBearer.size() || authorization.compare(0, kBearer.size(), kBearer) != 0)
    return std::nullopt;
  return ctx_.tokens.lookup(authorization.substr(kBearer.size()));
}

ApiResponse Api::route(const ApiRequest& req) {
  const std::string request_id = new_id("req");
  ApiResponse resp;
  json body;
  try {
    int status = 200;
    body = dispatch(req, request_id, status);
    resp.status = status;
  } catch (const Error& e) {
    resp.status = status_for(e.code());
    body = {{"code", e.code()}, {"message", e.what()}, {"request_id", request_id}};
    if (resp.status == 503) resp.headers["retry-after"] = "1";
  } catch (const std::exception& e) {
    resp.status = 500;
    body = {{"code", "internal-error"}, {"message", e.what()}, {"request_id", request_id}};
  }
  resp.body = body.is_string() ? body.get<std::string>() : body.dump();
  resp.headers["content-type"] = "application/json";
  resp.headers["x-request-id"] = request_id;
  auto ae = req.headers.find("accept-encoding");
  if (resp.body.size() > kCompressThreshold && ae != req.headers.end() &&
      ae->second.find("gzip") != std::string::npos) {
    resp.body = gzip_compress(resp.body);
    resp.headers["content-encoding"] = "gzip";
    resp.headers["vary"] = "Accept-Encoding";
  }
  return resp;
}

json Api::dispatch(const ApiRequest& req, const std::string& request_id, int& status) {
  std::smatch m;
  const Route* matched = nullptr;
  bool path_known = false;
  for (const auto& r : routes()) {
    if (!std::regex_match(req.path, m, r.pattern)) continue;
    path_known = true;
    if (r.method == req.method) {
      matched = &r;
      break;
    }
  }
  if (!matched) {
    if (path_known) {
      status = 405;
      return {{"code", "method-not-allowed"}, {"message", req.method + " not allowed on " + req.path},
              {"request_id", request_id}};
    }
    throw Error("not-found", "no route for " + req.method + " " + req.path);
  }
  std::regex_match(req.path, m, matched->pattern);
  const std::string arg = m.size() > 1 ? m[1].str() : std::string{};
  const std::string& name = matched->name;

  if (name == "health") return {{"status", "ok"}, {"version", ctx_.version}};

  auto auth = req.headers.find("authorization");
  const auto principal = auth == req.headers.end() ? std::nullopt : authenticate(auth->second);
  if (!principal) throw Error("unauthenticated", "missing or unknown bearer token");
  const Principal& me = *principal;
  auto& store = *ctx_.store;

  if (name == "courses") {
    json out = json::array();
    for (const auto& c : store.courses(opt_param(req.query, "institution"))) out.push_back(to_json(c));
    return {{"items", out}};
  }
  if (name == "questions" || name == "paper-questions") {
    QuestionFilter f;
    f.page = int_param(req.query, "page", 1);
    f.page_size = int_param(req.query, "page_size", 20);
    if (name == "paper-questions") {
      if (!store.past_paper(arg)) throw Error("unknown-paper", "no paper " + arg);
      f.past_paper_id = arg;
    } else {
      f.institution_id = opt_param(req.query, "institution");
      f.course_id = opt_param(req.query, "course");
      f.concept_id = opt_param(req.query, "concept");
      f.past_paper_id = opt_param(req.query, "paper");
      if (auto s = opt_param(req.query, "state")) {
        f.state = parse_question_state(*s);
        if (!f.state) throw Error("bad-request", "unknown state " + *s);
      }
    }
    return page_json(store.query_questions(f, me.role));
  }
  if (name == "question") {
    auto q = store.question(arg);
    if (!q || (me.role == Role::kStudent && q->state != QuestionState::kPublished))
      throw Error("unknown-question", "no question " + arg);
    return to_json(*q);
  }
  if (name == "paper-export") {
    require_staff(me);
    return store.export_bank(arg);
  }
  if (name == "responses") {
    const json b = parse_body(req);
    auto q = store.question(arg);
    if (!q) throw Error("unknown-question", "no question " + arg);
    const std::string kind = b.value("kind", std::string(to_string(q->kind)));
    if (kind == "mcq") {
      if (!b.contains("chosen_index") || !b["chosen_index"].is_number_integer())
        throw Error("bad-request", "chosen_index is required");
      const auto r = ctx_.engagement->record_mcq_response(me.user_id, arg, b["chosen_index"].get<int>());
      status = 201;
      return {{"correct", r.correct},
              {"correct_index", r.correct_index},
              {"explanation", r.explanation ? json(*r.explanation) : json(nullptr)}};
    }
    if (kind == "saq") {
      std::vector<std::string> answers;
      const json& parts = b.contains("parts") ? b["parts"] : b.value("answers", json::array());
      if (!parts.is_array()) throw Error("bad-request", "parts must be a list of answers");
      for (const auto& p : parts) {
        if (p.is_string()) answers.push_back(p);
        else if (p.is_object()) answers.push_back(p.value("answer", std::string{}));
        else throw Error("bad-request", "each part answer must be a string");
      }
      ctx_.engagement->record_saq_response(me.user_id, arg, answers, b.value("self_correct", false));
      json expected = json::array();
      for (const auto& p : q->parts)
        expected.push_back({{"index", p.index}, {"expected_answer", p.expected_answer}, {"marks", p.marks}});
      status = 201;
      return {{"recorded", true}, {"parts", expected}};
    }
    throw Error("bad-request", "kind must be mcq or saq");
  }
  if (name == "feedback") {
    const json b = parse_body(req);
    if (!b.contains("rating") || !b["rating"].is_number_integer()) throw Error("bad-request", "rating is required");
    std::optional<std::string> comment;
    if (b.contains("comment") && b["comment"].is_string()) comment = b["comment"].get<std::string>();
    ctx_.engagement->record_feedback(me.user_id, arg, b["rating"].get<int>(), comment);
    status = 201;
    return {{"recorded", true}};
  }
  if (name == "flag") {
    const json b = parse_body(req);
    const std::string reason = b.value("reason", std::string{});
    if (reason.empty()) throw Error("bad-request", "reason is required");
    status = 201;
    return flag_json(ctx_.engagement->flag_question(me.user_id, arg, reason));
  }
  if (name == "resolve") {
    const json b = parse_body(req);
    const auto outcome = parse_flag_outcome(b.value("outcome", std::string{}));
    if (!outcome) throw Error("bad-request", "outcome must be republish or retire");
    return to_json(ctx_.engagement->resolve_flag(me.user_id, arg, *outcome));
  }
  if (name == "publish") return to_json(ctx_.engagement->publish_question(me.user_id, arg));
  if (name == "flags") {
    require_staff(me);
    std::optional<FlagState> state;
    if (auto s = opt_param(req.query, "state")) {
      state = parse_flag_state(*s);
      if (!state) throw Error("bad-request", "unknown flag state " + *s);
    }
    json out = json::array();
    for (const auto& f : ctx_.engagement->flags(state)) out.push_back(flag_json(f));
    return {{"items", out}};
  }
  if (name == "progress") {
    json out = json::array();
    for (const auto& p : ctx_.engagement->progress(me.user_id))
      out.push_back({{"concept_id", p.concept_id}, {"attempted", p.attempted}, {"correct", p.correct},
                     {"mastery", p.mastery()}});
    return {{"items", out}};
  }
  if (name == "dau") {
    require_staff(me);
    const DateRange current = range_param(req.query, "from", "to");
    std::optional<DateRange> baseline;
    if (req.query.count("baseline_from") || req.query.count("baseline_to"))
      baseline = range_param(req.query, "baseline_from", "baseline_to");
    const auto r = ctx_.engagement->daily_active_users(current, baseline);
    json out = {{"series", dau_series(r.current)}, {"mean", r.current_mean}};
    if (baseline) {
      out["baseline"] = {{"series", dau_series(r.baseline)}, {"mean", r.baseline_mean}};
      out["percent_change"] = *r.percent_change;
    }
    return out;
  }
  if (name == "processing") {
    require_staff(me);
    const auto s = ctx_.engagement->processing_time_stats(range_param(req.query, "from", "to"));
    json jobs = json::array();
    for (const auto& j : s.jobs) jobs.push_back({{"job_id", j.job_id}, {"seconds", j.seconds}});
    return {{"median_seconds", s.median_seconds ? json(*s.median_seconds) : json(nullptr)},
            {"p95_seconds", s.p95_seconds ? json(*s.p95_seconds) : json(nullptr)},
            {"jobs", jobs}};
  }
  if (name == "satisfaction") {
    require_staff(me);
    const auto s = ctx_.engagement->satisfaction_summary(range_param(req.query, "from", "to"));
    json hist = json::object();
    for (const auto& [rating, count] : s.histogram) hist[std::to_string(rating)] = count;
    return {{"histogram", hist},
            {"raters", s.raters},
            {"satisfied", s.satisfied},
            {"fraction_satisfied", s.fraction_satisfied}};
  }
  if (name == "push") {
    const json b = parse_body(req);
    const json& ops = b.is_array() ? b : (b.contains("ops") ? b["ops"] : json());
    if (!ops.is_array()) throw Error("bad-request", "body must be {\"ops\": [...]}");
    std::vector<SyncOp> parsed;
    std::vector<std::optional<OpResult>> early(ops.size());
    for (size_t i = 0; i < ops.size(); ++i) {
      try {
        parsed.push_back(parse_sync_op(ops[i], me.user_id));
      } catch (const Error& e) {
        early[i] = OpResult{ops[i].is_object() ? ops[i].value("op_id", std::string{}) : std::string{},
                            OpStatus::kRejected, e.code()};
      }
    }
    const auto applied = ctx_.sync->push(me.user_id, parsed);
    json results = json::array();
    size_t k = 0;
    for (size_t i = 0; i < ops.size(); ++i) results.push_back(to_json(early[i] ? *early[i] : applied[k++]));
    return {{"results", results}};
  }
  if (name == "pull") return to_json(ctx_.sync->pull(opt_param(req.query, "cursor")));
  if (name == "job") {
    require_staff(me);
    if (!ctx_.pipeline) throw Error("not-found", "job tracking is not enabled");
    const auto s = ctx_.pipeline->job_status(arg);
    json log = json::array();
    for (const auto& e : s.log) log.push_back(to_json(e));
    json out = {{"id", arg}, {"state", to_string(s.state)}, {"log", log}};
    if (s.result)
      out["result"] = {{"past_paper_id", s.result->past_paper_id},
                       {"accepted_count", s.result->accepted_count},
                       {"dropped_count", s.result->dropped_count}};
    if (s.failure)
      out["failure"] = {{"stage", s.failure->stage}, {"code", s.failure->code}, {"message", s.failure->message}};
    return out;
  }
  throw Error("not-found", "no route for " + req.method + " " + req.path);
}

}  // namespace examforge
