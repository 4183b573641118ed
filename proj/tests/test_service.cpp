#include <catch_amalgamated.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <thread>

#include "threshy/fixtures.hpp"
#include "threshy/service.hpp"

using namespace threshy;
using namespace std::chrono_literals;

namespace {

/// Service on an ephemeral port for the lifetime of the object.
struct Running {
  explicit Running(service::ServiceConfig config = {}) : server([&] {
    config.port = 0;
    return config;
  }()) {
    port = server.bind();
    REQUIRE(port > 0);
    thread = std::thread([this] { server.listen(); });
    server.wait_until_ready();
  }
  ~Running() {
    server.stop();
    thread.join();
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(60, 0);
    return c;
  }

  service::Server server;
  int port = -1;
  std::thread thread;
};

std::string upload(httplib::Client& c, const fixtures::FixtureSpec& spec) {
  std::string path = "/api/datasets?task=" + std::string(to_string(spec.task));
  if (spec.positive_label) path += "&positive_label=" + *spec.positive_label;
  auto res = c.Post(path, fixtures::generate_fixture(spec), "text/csv");
  REQUIRE(res);
  REQUIRE((res->status == 201 || res->status == 200));
  return Json::parse(res->body)["dataset_id"];
}

Json wait_for_job(httplib::Client& c, const std::string& id, std::vector<std::string>* statuses = nullptr) {
  for (int i = 0; i < 6000; ++i) {
    auto res = c.Get("/api/jobs/" + id);
    REQUIRE(res);
    REQUIRE(res->status == 200);
    auto j = Json::parse(res->body);
    const std::string status = j["status"];
    if (statuses && (statuses->empty() || statuses->back() != status)) statuses->push_back(status);
    if (status == "done" || status == "failed" || status == "cancelled") return j;
    std::this_thread::sleep_for(5ms);
  }
  FAIL("job did not finish");
  return {};
}

}  // namespace

TEST_CASE("health") {
  Running s;
  auto c = s.client();
  auto res = c.Get("/api/health");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(Json::parse(res->body)["status"] == "ok");
}

TEST_CASE("upload is idempotent and keyed by digest") {
  Running s;
  auto c = s.client();
  const auto csv = fixtures::generate_fixture(fixtures::spam_model_1());
  auto first = c.Post("/api/datasets?task=binary&positive_label=spam", csv, "text/csv");
  REQUIRE(first);
  CHECK(first->status == 201);
  auto body = Json::parse(first->body);
  CHECK(body["dataset_id"] == hex_digest(csv));
  CHECK(body["summary"]["record_count"] == 100);
  auto second = c.Post("/api/datasets?task=binary&positive_label=spam", csv, "text/csv");
  CHECK(second->status == 200);
  CHECK(Json::parse(second->body)["dataset_id"] == body["dataset_id"]);
  CHECK(s.server.datasets().size() == 1);

  auto summary = c.Get("/api/datasets/" + body["dataset_id"].get<std::string>() + "/summary");
  CHECK(summary->status == 200);
  CHECK(Json::parse(summary->body) == body["summary"]);
}

TEST_CASE("upload errors") {
  service::ServiceConfig cfg;
  cfg.max_upload_bytes = 4096;
  Running s(cfg);
  auto c = s.client();
  auto broken = c.Post("/api/datasets?task=multiclass", "id,truth,score:a,score:b\nr1,a,0.1,0.2\nr2,b,0.3\n",
                       "text/csv");
  REQUIRE(broken);
  CHECK(broken->status == 400);
  auto err = Json::parse(broken->body);
  CHECK(err["code"] == "parse_error");
  CHECK(err["line"] == 3);
  CHECK(err["message"].get<std::string>().find("line 3") != std::string::npos);
  CHECK(err.contains("detail"));

  auto big = c.Post("/api/datasets", fixtures::generate_fixture(fixtures::tomatoes()), "text/csv");
  REQUIRE(big);
  CHECK(big->status == 413);

  auto bad_task = c.Post("/api/datasets?task=ranking", "truth,score:a,score:b\na,0.1,0.2\n", "text/csv");
  CHECK(bad_task->status == 422);
}

TEST_CASE("evaluate") {
  Running s;
  auto c = s.client();
  const auto id = upload(c, fixtures::four_record_multiclass());
  auto res = c.Post("/api/datasets/" + id + "/evaluate", R"({"threshold": 0.5})", "application/json");
  REQUIRE(res);
  REQUIRE(res->status == 200);
  auto j = Json::parse(res->body);
  CHECK(j["confusion"]["per_label"]["a"] == Json({{"tp", 1}, {"fp", 1}, {"mp", 1}}));
  CHECK(j["metrics"]["abstain_count"] == 1);
  CHECK(j["total_cost"].is_null());

  const auto d = fixtures::load_fixture(fixtures::four_record_multiclass());
  CHECK(res->body == dump_canonical(as_json(evaluate(d, ThresholdProfile::uniform(d, 0.5)))));

  auto again = c.Post("/api/datasets/" + id + "/evaluate", R"({"threshold": 0.5})", "application/json");
  CHECK(again->body == res->body);

  auto per_label = c.Post("/api/datasets/" + id + "/evaluate",
                          R"({"thresholds": {"a": 0.95}, "default_threshold": 0.0,
                              "costs": {"labels": {"a": {"false_positive": 2}}}})",
                          "application/json");
  REQUIRE(per_label->status == 200);
  CHECK(Json::parse(per_label->body)["total_cost"].is_number());

  CHECK(c.Post("/api/datasets/nope/evaluate", "{}", "application/json")->status == 404);
  auto mismatch = c.Post("/api/datasets/" + id + "/evaluate",
                         R"({"profile": {"task": "multilabel", "thresholds": {}}})", "application/json");
  CHECK(mismatch->status == 422);
  CHECK(Json::parse(mismatch->body)["code"] == "task_mismatch");
  CHECK(c.Post("/api/datasets/" + id + "/evaluate", "{oops", "application/json")->status == 400);
  CHECK(c.Post("/api/datasets/" + id + "/evaluate", R"({"threshold": 2})", "application/json")->status == 422);
}

TEST_CASE("optimize job lifecycle, export and monitor") {
  Running s;
  auto c = s.client();
  const auto id = upload(c, fixtures::spam_model_2());
  auto submit = c.Post("/api/datasets/" + id + "/optimize",
                       R"({"settings": {"population_size": 40, "generations": 30, "rng_seed": 42}})",
                       "application/json");
  REQUIRE(submit);
  REQUIRE(submit->status == 202);
  const std::string job = Json::parse(submit->body)["job_id"];

  std::vector<std::string> statuses;
  auto done = wait_for_job(c, job, &statuses);
  REQUIRE(done["status"] == "done");
  CHECK(statuses.back() == "done");
  const std::vector<std::string> order{"queued", "running", "done"};
  auto it = order.begin();
  for (const auto& st : statuses) {
    it = std::find(it, order.end(), st);
    CHECK(it != order.end());
  }
  CHECK(done["progress"]["generation"] == 30);
  CHECK(done["result"]["front"].size() >= 1);

  auto exported = c.Post("/api/export", Json({{"dataset_id", id}, {"job_id", job}}).dump(), "application/json");
  REQUIRE(exported->status == 200);
  const auto doc = parse_profile(exported->body);
  CHECK(doc.provenance.optimizer.has_value());
  auto exported_again = c.Post("/api/export", Json({{"dataset_id", id}, {"job_id", job}}).dump(), "application/json");
  CHECK(exported_again->body == exported->body);

  auto bad_index = c.Post("/api/export",
                          Json({{"dataset_id", id}, {"job_id", job}, {"solution_index", 999}}).dump(),
                          "application/json");
  CHECK(bad_index->status == 422);

  auto pass = c.Post("/api/monitor", Json({{"dataset_id", id}, {"profile", Json::parse(exported->body)}}).dump(),
                     "application/json");
  REQUIRE(pass->status == 200);
  CHECK(Json::parse(pass->body)["verdict"] == "pass");

  const auto degraded = upload(c, fixtures::spam_model_2_degraded());
  auto regress = c.Post("/api/monitor",
                        Json({{"dataset_id", degraded}, {"profile", Json::parse(exported->body)}}).dump(),
                        "application/json");
  REQUIRE(regress->status == 200);
  CHECK(Json::parse(regress->body)["verdict"] == "regress");
  const auto d = fixtures::load_fixture(fixtures::spam_model_2_degraded());
  CHECK(regress->body == dump_canonical(as_json(monitor_compare(doc, d))));

  CHECK(c.Get("/api/jobs/job-999")->status == 404);
}

TEST_CASE("manual export matches the library") {
  Running s;
  auto c = s.client();
  const auto id = upload(c, fixtures::tomatoes());
  auto res = c.Post("/api/export",
                    R"({"dataset_id": ")" + id +
                        R"(", "thresholds": {"ripe": 0.6}, "default_threshold": 0.55, "created_at": "2020-11-08T09:30:00Z"})",
                    "application/json");
  REQUIRE(res->status == 200);
  const auto d = fixtures::load_fixture(fixtures::tomatoes());
  ThresholdProfile p{{{"ripe", 0.6}}, 0.55, TaskKind::multilabel, std::nullopt};
  CHECK(res->body ==
        export_profile(make_profile_document(d, p, std::nullopt, std::nullopt, "2020-11-08T09:30:00Z")));
}

TEST_CASE("duplicate submissions share a job; cancel stops it") {
  service::ServiceConfig cfg;
  cfg.workers = 1;
  Running s(cfg);
  auto c = s.client();
  const auto id = upload(c, fixtures::tomatoes());
  const std::string body = R"({"settings": {"population_size": 200, "generations": 100000}})";
  auto first = c.Post("/api/datasets/" + id + "/optimize", body, "application/json");
  REQUIRE(first->status == 202);
  const std::string job = Json::parse(first->body)["job_id"];
  auto dup = c.Post("/api/datasets/" + id + "/optimize", body, "application/json");
  REQUIRE(dup->status == 409);
  CHECK(Json::parse(dup->body)["job_id"] == job);

  // A different job waits in the queue behind the first one (one worker).
  auto queued = c.Post("/api/datasets/" + id + "/optimize",
                       R"({"settings": {"population_size": 20, "generations": 100000}})", "application/json");
  REQUIRE(queued->status == 202);
  const std::string queued_id = Json::parse(queued->body)["job_id"];
  CHECK(Json::parse(c.Get("/api/jobs/" + queued_id)->body)["status"] == "queued");

  // Wait until the first job is running and has made progress, then cancel it.
  std::size_t last_gen = 0;
  for (int i = 0; i < 2000; ++i) {
    auto j = Json::parse(c.Get("/api/jobs/" + job)->body);
    const std::size_t g = j["progress"]["generation"];
    CHECK(g >= last_gen);
    last_gen = g;
    if (j["status"] == "running" && g >= 2) break;
    std::this_thread::sleep_for(5ms);
  }
  CHECK(c.Delete("/api/jobs/" + job)->status == 200);
  auto cancelled = wait_for_job(c, job);
  CHECK(cancelled["status"] == "cancelled");
  CHECK(cancelled["result"].is_null());

  CHECK(c.Delete("/api/jobs/" + queued_id)->status == 200);
  CHECK(wait_for_job(c, queued_id)["status"] == "cancelled");
}

TEST_CASE("CORS only for local origins") {
  Running s;
  auto c = s.client();
  auto local = c.Get("/api/health", {{"Origin", "http://localhost:5173"}});
  CHECK(local->get_header_value("Access-Control-Allow-Origin") == "http://localhost:5173");
  auto remote = c.Get("/api/health", {{"Origin", "https://example.com"}});
  CHECK(remote->get_header_value("Access-Control-Allow-Origin").empty());
}

TEST_CASE("static UI directory is served under /") {
  const auto dir = std::filesystem::temp_directory_path() / "threshy-ui-test";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "index.html") << "<html>threshy</html>";
  service::ServiceConfig cfg;
  cfg.ui_dir = dir.string();
  Running s(cfg);
  auto c = s.client();
  auto res = c.Get("/index.html");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->body.find("threshy") != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("unknown routes get structured errors") {
  Running s;
  auto c = s.client();
  auto res = c.Get("/api/nothing");
  REQUIRE(res);
  CHECK(res->status == 404);
  CHECK(Json::parse(res->body).contains("code"));
}
