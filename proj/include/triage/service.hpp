#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "triage/errors.hpp"
#include "triage/pipeline.hpp"

namespace httplib {
class Server;
}

namespace triage {

// The assignment log could not be written.
class StorageError : public Error {
 public:
  using Error::Error;
};

struct AssignmentRecord {
  std::string description;
  std::vector<std::string> suggested_groups;
  std::vector<std::string> suggested_resolvers;
  std::string chosen_group;
  std::string chosen_resolver;
  std::string chooser_id;
};

// Throws SchemaError naming the first missing or ill-typed field. The
// suggested_* arrays are optional.
AssignmentRecord parse_assignment(const nlohmann::json& body);

// Append-only JSON-lines log of confirmed assignments. Sequence numbers
// start at 1 and resume from the last complete record after a restart;
// timestamps never decrease within one file. Appends are serialized.
class AssignmentLog {
 public:
  explicit AssignmentLog(std::filesystem::path path);

  // Writes and fsyncs one line; returns its sequence number. Throws
  // StorageError when the file cannot be written.
  std::uint64_t append(const AssignmentRecord& record);
  std::uint64_t next_seq() const;
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::uint64_t next_seq_ = 1;
  std::chrono::system_clock::time_point last_ts_{};
  bool needs_newline_ = false;  // file ends in a torn record
};

nlohmann::json suggestions_to_json(const Suggestions& s);

// Checks a suggest response body against the published schema; on failure
// writes the reason to `why`.
bool valid_suggest_response(const nlohmann::json& body, std::string* why = nullptr);

struct ServiceOptions {
  std::filesystem::path assignment_log = "assignments.jsonl";
  std::size_t max_description_bytes = 32 * 1024;
  std::size_t worker_threads = 16;
};

struct HttpReply {
  int status = 200;
  std::string body;
};

// REST front end over one immutable bundle. The service answers health
// checks as soon as it listens and reports ready once a bundle is set.
class TriageService {
 public:
  explicit TriageService(ServiceOptions options);
  ~TriageService();
  TriageService(const TriageService&) = delete;
  TriageService& operator=(const TriageService&) = delete;

  // May be called once; the service is ready afterwards.
  void set_bundle(std::shared_ptr<const ModelBundle> bundle);
  bool ready() const noexcept { return ready_.load(std::memory_order_acquire); }

  // Binds (port 0 picks a free port) and serves on a background thread.
  // Returns the bound port; throws Error if binding fails.
  int start(const std::string& host, int port);
  // Stops accepting connections and waits for in-flight requests.
  void stop();
  // Blocks until the server thread exits.
  void wait();

  // Transport-free handlers, used by the HTTP routes.
  HttpReply handle_suggest(std::string_view body);
  HttpReply handle_assignment(std::string_view body);
  HttpReply handle_health() const;
  HttpReply handle_metrics() const;

 private:
  void record_latency(const std::string& endpoint, double ms);

  ServiceOptions options_;
  AssignmentLog log_;
  std::shared_ptr<const ModelBundle> bundle_;
  std::string bundle_version_;
  std::atomic<bool> ready_{false};
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  mutable std::mutex metrics_mu_;
  std::map<std::string, std::vector<double>> latencies_ms_;
};

}  // namespace triage
