#include "triage/service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>

#include <httplib.h>

#include "triage/text.hpp"

namespace triage {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

json error_body(std::string_view code, std::string_view detail) {
  return json{{"error", code}, {"detail", detail}};
}

HttpReply reply(int status, const json& body) { return {status, body.dump()}; }

const std::string& required_string(const json& j, const char* field) {
  if (!j.contains(field)) throw SchemaError(field, std::string("missing field '") + field + "'");
  const auto& v = j.at(field);
  if (!v.is_string()) throw SchemaError(field, std::string("field '") + field + "' must be a string");
  const auto& s = v.get_ref<const std::string&>();
  if (s.empty()) throw SchemaError(field, std::string("field '") + field + "' must not be empty");
  return s;
}

std::vector<std::string> optional_strings(const json& j, const char* field) {
  std::vector<std::string> out;
  if (!j.contains(field)) return out;
  const auto& v = j.at(field);
  if (!v.is_array()) throw SchemaError(field, std::string("field '") + field + "' must be an array of strings");
  for (const auto& e : v) {
    if (!e.is_string()) throw SchemaError(field, std::string("field '") + field + "' must be an array of strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

std::optional<std::size_t> optional_count(const json& j, const char* field, std::size_t min) {
  if (!j.contains(field)) return std::nullopt;
  const auto& v = j.at(field);
  if (!v.is_number_integer() || v.get<std::int64_t>() < static_cast<std::int64_t>(min) ||
      v.get<std::int64_t>() > 10000) {
    throw SchemaError(field, std::string("field '") + field + "' must be an integer in [" +
                                 std::to_string(min) + ", 10000]");
  }
  return v.get<std::size_t>();
}

double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

}  // namespace

AssignmentRecord parse_assignment(const json& body) {
  if (!body.is_object()) throw SchemaError("body", "request body must be a JSON object");
  AssignmentRecord r;
  r.description = required_string(body, "description");
  r.suggested_groups = optional_strings(body, "suggested_groups");
  r.suggested_resolvers = optional_strings(body, "suggested_resolvers");
  r.chosen_group = required_string(body, "chosen_group");
  r.chosen_resolver = required_string(body, "chosen_resolver");
  r.chooser_id = required_string(body, "chooser_id");
  return r;
}

AssignmentLog::AssignmentLog(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(path_, std::ios::binary);
  if (!in) return;
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  needs_newline_ = !content.empty() && content.back() != '\n';
  std::size_t begin = 0;
  while (begin < content.size()) {
    const std::size_t end = content.find('\n', begin);
    if (end == std::string::npos) break;  // torn tail: not a record
    const auto line = std::string_view(content).substr(begin, end - begin);
    begin = end + 1;
    const auto j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("seq")) continue;
    next_seq_ = std::max(next_seq_, j["seq"].get<std::uint64_t>() + 1);
  }
}

std::uint64_t AssignmentLog::next_seq() const {
  std::lock_guard lock(mu_);
  return next_seq_;
}

std::uint64_t AssignmentLog::append(const AssignmentRecord& r) {
  std::lock_guard lock(mu_);
  const auto now = std::max(std::chrono::system_clock::now(), last_ts_);
  const std::uint64_t seq = next_seq_;
  json line{{"seq", seq},
            {"timestamp", format_utc(now)},
            {"description", r.description},
            {"suggested_groups", r.suggested_groups},
            {"suggested_resolvers", r.suggested_resolvers},
            {"chosen_group", r.chosen_group},
            {"chosen_resolver", r.chosen_resolver},
            {"chooser_id", r.chooser_id}};
  std::string bytes = (needs_newline_ ? "\n" : "") + line.dump() + "\n";

  const int fd = ::open(path_.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (fd < 0) throw StorageError("cannot open assignment log: " + std::string(std::strerror(errno)));
  std::size_t done = 0;
  while (done < bytes.size()) {
    const ssize_t n = ::write(fd, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      const std::string why = std::strerror(errno);
      ::close(fd);
      throw StorageError("cannot write assignment log: " + why);
    }
    done += static_cast<std::size_t>(n);
  }
  const bool synced = ::fsync(fd) == 0;
  ::close(fd);
  if (!synced) throw StorageError("cannot sync assignment log");
  needs_newline_ = false;
  last_ts_ = now;
  ++next_seq_;
  return seq;
}

json suggestions_to_json(const Suggestions& s) {
  json groups = json::array(), resolvers = json::array(), similar = json::array();
  for (const auto& g : s.groups) groups.push_back({{"name", g.label}, {"score", g.probability}});
  for (const auto& r : s.resolvers) resolvers.push_back({{"name", r.label}, {"score", r.probability}});
  for (const auto& t : s.similar) {
    similar.push_back({{"id", t.id}, {"snippet", t.snippet}, {"resolver", t.resolver}, {"distance", t.distance}});
  }
  return json{{"groups", groups},
              {"resolvers", resolvers},
              {"similar", similar},
              {"timings_ms",
               {{"encode", s.timings.encode_ms},
                {"group", s.timings.group_ms},
                {"resolver", s.timings.resolver_ms},
                {"ann", s.timings.ann_ms},
                {"total", s.timings.total_ms}}}};
}

bool valid_suggest_response(const json& body, std::string* why) {
  auto fail = [&](std::string msg) {
    if (why) *why = std::move(msg);
    return false;
  };
  if (!body.is_object()) return fail("body is not an object");
  for (const char* key : {"groups", "resolvers", "similar", "timings_ms"}) {
    if (!body.contains(key)) return fail(std::string("missing key ") + key);
  }
  for (const char* key : {"groups", "resolvers"}) {
    const auto& list = body[key];
    if (!list.is_array()) return fail(std::string(key) + " is not an array");
    double prev = 2.0;
    for (const auto& e : list) {
      if (!e.is_object() || e.size() != 2 || !e.contains("name") || !e["name"].is_string() ||
          !e.contains("score") || !e["score"].is_number()) {
        return fail(std::string("bad entry in ") + key);
      }
      const double p = e["score"].get<double>();
      if (p < 0.0 || p > 1.0) return fail(std::string("score outside [0,1] in ") + key);
      if (p > prev) return fail(std::string(key) + " not sorted by score");
      prev = p;
    }
  }
  const auto& similar = body["similar"];
  if (!similar.is_array()) return fail("similar is not an array");
  double prev = -1.0;
  for (const auto& e : similar) {
    if (!e.is_object() || e.size() != 4 || !e.contains("id") || !e["id"].is_string() || !e.contains("snippet") ||
        !e["snippet"].is_string() || !e.contains("resolver") || !e["resolver"].is_string() ||
        !e.contains("distance") || !e["distance"].is_number()) {
      return fail("bad entry in similar");
    }
    const double d = e["distance"].get<double>();
    if (d < prev) return fail("similar not sorted by distance");
    prev = d;
  }
  const auto& t = body["timings_ms"];
  if (!t.is_object() || t.size() != 5) return fail("timings_ms must have exactly five keys");
  for (const char* key : {"encode", "group", "resolver", "ann", "total"}) {
    if (!t.contains(key) || !t[key].is_number() || t[key].get<double>() < 0.0) {
      return fail(std::string("bad timing ") + key);
    }
  }
  return true;
}

TriageService::TriageService(ServiceOptions options)
    : options_(std::move(options)), log_(options_.assignment_log) {}

TriageService::~TriageService() {
  stop();
  wait();
}

void TriageService::set_bundle(std::shared_ptr<const ModelBundle> bundle) {
  if (!bundle) throw InvalidArgument("set_bundle: null bundle");
  if (bundle_) throw InvalidArgument("set_bundle: bundle already set");
  bundle_ = std::move(bundle);
  bundle_version_ = bundle_->version();
  ready_.store(true, std::memory_order_release);
}

HttpReply TriageService::handle_suggest(std::string_view body) {
  if (!ready()) return reply(503, error_body("not_ready", "bundle is still loading"));
  const json req = json::parse(body, nullptr, false);
  if (req.is_discarded() || !req.is_object()) {
    return reply(400, error_body("malformed_request", "body must be a JSON object"));
  }
  SuggestRequest sr;
  std::string description;
  try {
    if (!req.contains("description") || !req["description"].is_string()) {
      throw SchemaError("description", "field 'description' must be a string");
    }
    description = req["description"].get<std::string>();
    if (auto v = optional_count(req, "k_group", 1)) sr.k_group = *v;
    if (auto v = optional_count(req, "k_resolver", 1)) sr.k_resolver = *v;
    if (auto v = optional_count(req, "n_similar", 0)) sr.n_similar = *v;
  } catch (const SchemaError& e) {
    return reply(400, error_body("malformed_request", e.what()));
  }
  if (description.size() > options_.max_description_bytes) {
    return reply(413, error_body("description_too_large",
                                 "description exceeds " + std::to_string(options_.max_description_bytes) + " bytes"));
  }
  try {
    return reply(200, suggestions_to_json(suggest(*bundle_, description, sr)));
  } catch (const EmptyDescriptionError& e) {
    return reply(422, error_body("empty_after_cleaning", e.what()));
  } catch (const std::exception& e) {
    return reply(500, error_body("internal", e.what()));
  }
}

HttpReply TriageService::handle_assignment(std::string_view body) {
  const json req = json::parse(body, nullptr, false);
  if (req.is_discarded()) return reply(400, error_body("malformed_request", "body is not valid JSON"));
  AssignmentRecord record;
  try {
    record = parse_assignment(req);
  } catch (const SchemaError& e) {
    return reply(400, json{{"error", "schema_violation"}, {"field", e.key()}, {"detail", e.what()}});
  }
  try {
    return reply(200, json{{"seq", log_.append(record)}});
  } catch (const StorageError& e) {
    return reply(503, json{{"error", "storage_unavailable"}, {"detail", e.what()}, {"retry_after_seconds", 1}});
  }
}

HttpReply TriageService::handle_health() const {
  if (!ready()) return reply(503, json{{"status", "loading"}});
  return reply(200, json{{"status", "ok"}, {"bundle_version", bundle_version_}});
}

HttpReply TriageService::handle_metrics() const {
  json endpoints = json::object();
  std::lock_guard lock(metrics_mu_);
  for (const auto& [name, v] : latencies_ms_) {
    endpoints[name] = {{"count", v.size()}, {"p50_ms", percentile(v, 0.50)}, {"p95_ms", percentile(v, 0.95)}};
  }
  return reply(200, json{{"endpoints", endpoints}});
}

void TriageService::record_latency(const std::string& endpoint, double ms) {
  std::lock_guard lock(metrics_mu_);
  latencies_ms_[endpoint].push_back(ms);
}

int TriageService::start(const std::string& host, int port) {
  if (server_) throw InvalidArgument("service already started");
  server_ = std::make_unique<httplib::Server>();
  const std::size_t workers = std::max<std::size_t>(1, options_.worker_threads);
  server_->new_task_queue = [workers] { return new httplib::ThreadPool(workers); };
  server_->set_payload_max_length(4 * options_.max_description_bytes + 4096);

  auto route = [this](const std::string& endpoint, auto handler) {
    return [this, endpoint, handler](const httplib::Request& req, httplib::Response& res) {
      const auto t0 = Clock::now();
      HttpReply r = handler(req);
      res.status = r.status;
      if (r.status == 503 && endpoint == "/v1/assignments") res.set_header("Retry-After", "1");
      res.set_content(r.body, "application/json");
      record_latency(endpoint, std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
    };
  };
  server_->Post("/v1/suggest", route("/v1/suggest", [this](const httplib::Request& q) { return handle_suggest(q.body); }));
  server_->Post("/v1/assignments",
                route("/v1/assignments", [this](const httplib::Request& q) { return handle_assignment(q.body); }));
  server_->Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
    const HttpReply r = handle_health();
    res.status = r.status;
    res.set_content(r.body, "application/json");
  });
  server_->Get("/v1/metrics", route("/v1/metrics", [this](const httplib::Request&) { return handle_metrics(); }));

  const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) {
    server_.reset();
    throw Error("cannot bind " + host + ":" + std::to_string(port));
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void TriageService::stop() {
  if (server_) server_->stop();
}

void TriageService::wait() {
  if (thread_.joinable()) thread_.join();
}

}  // namespace triage
