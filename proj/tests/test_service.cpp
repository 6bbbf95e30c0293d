#include <gtest/gtest.h>

#include <fstream>
#include <iterator>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "test_support.hpp"
#include "triage/service.hpp"

using namespace triage;
using nlohmann::json;
using triage::testing::TempDir;
using triage::testing::trained_fixture;

namespace {

std::shared_ptr<const ModelBundle> shared_bundle() {
  static const auto b = std::make_shared<const ModelBundle>(trained_fixture().bundle);
  return b;
}

ServiceOptions options_in(const TempDir& dir) {
  ServiceOptions o;
  o.assignment_log = dir / "assignments.jsonl";
  return o;
}

json assignment(std::string group = "g", std::string resolver = "r") {
  return {{"description", "vpn drops"},
          {"suggested_groups", {"g", "h"}},
          {"suggested_resolvers", {"r"}},
          {"chosen_group", group},
          {"chosen_resolver", resolver},
          {"chooser_id", "agent-7"}};
}

std::vector<json> log_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<json> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(json::parse(line));
  return out;
}

json without_timings(json j) {
  j.erase("timings_ms");
  return j;
}

}  // namespace

TEST(ParseAssignment, RequiredAndOptionalFields) {
  const auto r = parse_assignment(assignment());
  EXPECT_EQ(r.chosen_group, "g");
  EXPECT_EQ(r.suggested_groups, (std::vector<std::string>{"g", "h"}));
  auto j = assignment();
  j.erase("suggested_groups");
  EXPECT_TRUE(parse_assignment(j).suggested_groups.empty());
  for (const char* key : {"description", "chosen_group", "chosen_resolver", "chooser_id"}) {
    auto bad = assignment();
    bad.erase(key);
    try {
      parse_assignment(bad);
      FAIL() << key;
    } catch (const SchemaError& e) {
      EXPECT_EQ(e.key(), key);
    }
    bad[key] = 5;
    EXPECT_THROW(parse_assignment(bad), SchemaError);
  }
  auto bad = assignment();
  bad["suggested_resolvers"] = {"r", 3};
  EXPECT_THROW(parse_assignment(bad), SchemaError);
}

TEST(AssignmentLog, SequenceResumesAcrossRestartsAndTornTails) {
  TempDir dir;
  const auto path = dir / "log.jsonl";
  {
    AssignmentLog log(path);
    EXPECT_EQ(log.append(parse_assignment(assignment())), 1u);
    EXPECT_EQ(log.append(parse_assignment(assignment())), 2u);
  }
  const std::string prefix = [&] {
    std::ifstream in(path);
    return std::string(std::istreambuf_iterator<char>(in), {});
  }();
  {
    AssignmentLog log(path);
    EXPECT_EQ(log.next_seq(), 3u);
    EXPECT_EQ(log.append(parse_assignment(assignment())), 3u);
  }
  std::ifstream in(path);
  const std::string after(std::istreambuf_iterator<char>(in), {});
  EXPECT_EQ(after.substr(0, prefix.size()), prefix);  // append-only
  { std::ofstream torn(path, std::ios::app); torn << "{\"seq\": 99, \"desc"; }
  AssignmentLog log(path);
  EXPECT_EQ(log.append(parse_assignment(assignment())), 4u);
  std::ifstream raw(path);
  std::string text(std::istreambuf_iterator<char>(raw), {});
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);  // torn line kept, new record on its own line
  EXPECT_EQ(json::parse(text.substr(text.rfind('\n', text.size() - 2) + 1))["seq"], 4);

  std::ifstream again(path);
  std::string line, prev_ts;
  while (std::getline(again, line)) {
    const auto j = json::parse(line, nullptr, false);
    if (j.is_discarded()) continue;
    EXPECT_GE(j["timestamp"].get<std::string>(), prev_ts);
    prev_ts = j["timestamp"].get<std::string>();
  }
}

TEST(Service, HealthReportsLoadingUntilBundleSet) {
  TempDir dir;
  TriageService svc(options_in(dir));
  EXPECT_EQ(svc.handle_health().status, 503);
  EXPECT_EQ(json::parse(svc.handle_health().body)["status"], "loading");
  EXPECT_EQ(svc.handle_suggest(R"({"description":"vpn"})").status, 503);
  svc.set_bundle(shared_bundle());
  const auto h = svc.handle_health();
  EXPECT_EQ(h.status, 200);
  EXPECT_EQ(json::parse(h.body)["bundle_version"], shared_bundle()->version());
}

TEST(Service, SuggestResponsesMatchSchema) {
  TempDir dir;
  TriageService svc(options_in(dir));
  svc.set_bundle(shared_bundle());
  for (std::size_t i = 0; i < 20; ++i) {
    const json req{{"description", trained_fixture().data.test[i].description}, {"k_group", 1 + i % 4}, {"n_similar", i % 3}};
    const auto r = svc.handle_suggest(req.dump());
    ASSERT_EQ(r.status, 200);
    const auto body = json::parse(r.body);
    std::string why;
    EXPECT_TRUE(valid_suggest_response(body, &why)) << why;
    EXPECT_EQ(body["groups"].size(), 1 + i % 4);
    EXPECT_EQ(body["similar"].size(), i % 3);
  }
  std::string why;
  EXPECT_FALSE(valid_suggest_response(json{{"groups", json::array()}}, &why));
  EXPECT_NE(why.find("resolvers"), std::string::npos);
}

TEST(Service, SuggestErrorStatuses) {
  TempDir dir;
  TriageService svc(options_in(dir));
  svc.set_bundle(shared_bundle());
  EXPECT_EQ(svc.handle_suggest("not json").status, 400);
  EXPECT_EQ(svc.handle_suggest("[1,2]").status, 400);
  EXPECT_EQ(svc.handle_suggest(R"({"text":"vpn"})").status, 400);
  EXPECT_EQ(svc.handle_suggest(R"({"description":"vpn","k_group":0})").status, 400);
  EXPECT_EQ(svc.handle_suggest(R"({"description":"vpn","k_resolver":"five"})").status, 400);
  EXPECT_EQ(svc.handle_suggest(R"({"description":"vpn","n_similar":-1})").status, 400);
  EXPECT_EQ(svc.handle_suggest(json{{"description", std::string(32 * 1024 + 1, 'a')}}.dump()).status, 413);
  EXPECT_EQ(svc.handle_suggest(json{{"description", std::string(32 * 1024, 'a')}}.dump()).status, 200);
  const auto empty = svc.handle_suggest(R"({"description":"  ?? !! "})");
  EXPECT_EQ(empty.status, 422);
  EXPECT_EQ(json::parse(empty.body)["error"], "empty_after_cleaning");
}

TEST(Service, AssignmentStatuses) {
  TempDir dir;
  TriageService svc(options_in(dir));
  const auto a = svc.handle_assignment(assignment().dump());
  ASSERT_EQ(a.status, 200);
  const auto b = svc.handle_assignment(assignment("g2", "r2").dump());
  EXPECT_EQ(json::parse(b.body)["seq"].get<int>(), json::parse(a.body)["seq"].get<int>() + 1);

  auto bad = assignment();
  bad.erase("chooser_id");
  const auto r = svc.handle_assignment(bad.dump());
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(json::parse(r.body)["error"], "schema_violation");
  EXPECT_EQ(json::parse(r.body)["field"], "chooser_id");
  EXPECT_EQ(svc.handle_assignment("{").status, 400);

  const auto lines = log_lines(dir / "assignments.jsonl");
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[1]["chosen_group"], "g2");
  EXPECT_EQ(lines[0]["chooser_id"], "agent-7");
}

TEST(Service, UnwritableLogIsStorageUnavailable) {
  TempDir dir;
  ServiceOptions o;
  o.assignment_log = dir / "missing-dir" / "log.jsonl";
  TriageService svc(o);
  const auto r = svc.handle_assignment(assignment().dump());
  EXPECT_EQ(r.status, 503);
  const auto body = json::parse(r.body);
  EXPECT_EQ(body["error"], "storage_unavailable");
  EXPECT_EQ(body["retry_after_seconds"], 1);
}

TEST(ServiceHttp, EndToEndOverLoopback) {
  TempDir dir;
  TriageService svc(options_in(dir));
  const int port = svc.start("127.0.0.1", 0);
  ASSERT_GT(port, 0);
  httplib::Client cli("127.0.0.1", port);
  auto h = cli.Get("/v1/health");
  ASSERT_TRUE(h);
  EXPECT_EQ(h->status, 503);
  svc.set_bundle(shared_bundle());
  h = cli.Get("/v1/health");
  EXPECT_EQ(h->status, 200);

  const json req{{"description", trained_fixture().data.test[0].description}};
  auto s = cli.Post("/v1/suggest", req.dump(), "application/json");
  ASSERT_TRUE(s);
  EXPECT_EQ(s->status, 200);
  EXPECT_TRUE(valid_suggest_response(json::parse(s->body)));

  auto a = cli.Post("/v1/assignments", assignment().dump(), "application/json");
  EXPECT_EQ(a->status, 200);
  EXPECT_EQ(json::parse(a->body)["seq"], 1);

  auto m = cli.Get("/v1/metrics");
  ASSERT_TRUE(m);
  const auto metrics = json::parse(m->body);
  EXPECT_EQ(metrics["endpoints"]["/v1/suggest"]["count"], 1);
  EXPECT_GE(metrics["endpoints"]["/v1/suggest"]["p95_ms"].get<double>(), 0.0);
  svc.stop();
}

TEST(ServiceHttp, StorageFailureSetsRetryAfter) {
  TempDir dir;
  ServiceOptions o;
  o.assignment_log = dir / "nope" / "log.jsonl";
  TriageService svc(o);
  const int port = svc.start("127.0.0.1", 0);
  httplib::Client cli("127.0.0.1", port);
  auto a = cli.Post("/v1/assignments", assignment().dump(), "application/json");
  ASSERT_TRUE(a);
  EXPECT_EQ(a->status, 503);
  EXPECT_EQ(a->get_header_value("Retry-After"), "1");
  svc.stop();
}

TEST(ServiceHttp, ConcurrentRequestsMatchSequential) {
  TempDir dir;
  TriageService svc(options_in(dir));
  svc.set_bundle(shared_bundle());
  const int port = svc.start("127.0.0.1", 0);
  const auto& test = trained_fixture().data.test;
  const std::size_t n = 64;
  std::vector<json> sequential(n), concurrent(n);
  for (std::size_t i = 0; i < n; ++i) {
    const json req{{"description", test[i % test.size()].description}};
    sequential[i] = without_timings(json::parse(svc.handle_suggest(req.dump()).body));
  }
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < 16; ++t) {
    threads.emplace_back([&, t] {
      httplib::Client cli("127.0.0.1", port);
      for (std::size_t i = t; i < n; i += 16) {
        const json req{{"description", test[i % test.size()].description}};
        auto r = cli.Post("/v1/suggest", req.dump(), "application/json");
        if (r && r->status == 200) concurrent[i] = without_timings(json::parse(r->body));
      }
    });
  }
  for (auto& th : threads) th.join();
  for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(concurrent[i], sequential[i]) << i;
  svc.stop();
}

TEST(ServiceHttp, ConcurrentAssignmentsGetDistinctSequenceNumbers) {
  TempDir dir;
  TriageService svc(options_in(dir));
  const int port = svc.start("127.0.0.1", 0);
  std::vector<std::thread> threads;
  std::mutex mu;
  std::vector<int> seqs;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&] {
      httplib::Client cli("127.0.0.1", port);
      for (int i = 0; i < 10; ++i) {
        auto r = cli.Post("/v1/assignments", assignment().dump(), "application/json");
        if (r && r->status == 200) {
          std::lock_guard lock(mu);
          seqs.push_back(json::parse(r->body)["seq"].get<int>());
        }
      }
    });
  }
  for (auto& th : threads) th.join();
  svc.stop();
  std::sort(seqs.begin(), seqs.end());
  ASSERT_EQ(seqs.size(), 80u);
  for (int i = 0; i < 80; ++i) EXPECT_EQ(seqs[i], i + 1);
  EXPECT_EQ(log_lines(dir / "assignments.jsonl").size(), 80u);
}
