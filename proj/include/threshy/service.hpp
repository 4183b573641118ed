#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <shared_mutex>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"

#include "threshy/costs.hpp"
#include "threshy/dataset.hpp"
#include "threshy/json_io.hpp"
#include "threshy/monitor.hpp"
#include "threshy/optimizer.hpp"
#include "threshy/profile.hpp"
#include "threshy/version.hpp"

namespace threshy::service {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t max_upload_bytes = 64u * 1024u * 1024u;
  std::size_t workers = 2;
  std::string ui_dir;  // static bundle served under "/" when non-empty
};

// ---- dataset registry ------------------------------------------------------------------

struct StoredDataset {
  std::shared_ptr<const Dataset> dataset;
  DatasetSummary summary;
  std::string uploaded_at;
};

/// Append-only, keyed by content digest.
class DatasetRegistry {
 public:
  /// Returns the stored entry and whether it was newly inserted.
  std::pair<std::shared_ptr<const StoredDataset>, bool> insert(Dataset dataset) {
    std::unique_lock lock(mutex_);
    if (auto it = entries_.find(dataset.content_digest()); it != entries_.end()) {
      const auto& existing = *it->second->dataset;
      if (existing.task() != dataset.task() ||
          existing.positive_label() != dataset.positive_label()) {
        throw Error(ErrorCode::validation,
                    "dataset " + dataset.content_digest() +
                        " was already uploaded with a different task or positive label");
      }
      return {it->second, false};
    }
    auto entry = std::make_shared<StoredDataset>();
    entry->summary = summarize(dataset);
    entry->dataset = std::make_shared<const Dataset>(std::move(dataset));
    entry->uploaded_at = utc_now_rfc3339();
    entries_.emplace(entry->dataset->content_digest(), entry);
    return {entry, true};
  }

  std::shared_ptr<const StoredDataset> find(const std::string& id) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(id);
    return it == entries_.end() ? nullptr : it->second;
  }

  std::shared_ptr<const StoredDataset> get(const std::string& id) const {
    if (auto entry = find(id)) return entry;
    throw Error(ErrorCode::not_found, "unknown dataset '" + id + "'");
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
  }

 private:
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<const StoredDataset>> entries_;
};

// ---- jobs ------------------------------------------------------------------------------

enum class JobStatus { queued, running, done, failed, cancelled };

inline const char* to_string(JobStatus s) {
  switch (s) {
    case JobStatus::queued: return "queued";
    case JobStatus::running: return "running";
    case JobStatus::done: return "done";
    case JobStatus::failed: return "failed";
    case JobStatus::cancelled: return "cancelled";
  }
  return "unknown";
}

inline bool is_terminal(JobStatus s) {
  return s == JobStatus::done || s == JobStatus::failed || s == JobStatus::cancelled;
}

struct JobState {
  std::string job_id;
  std::string dataset_id;
  JobStatus status = JobStatus::queued;
  std::size_t generation = 0;
  std::size_t generations_total = 0;
  std::optional<ObjectiveVector> best_objectives;
  std::shared_ptr<const OptimizationResult> result;
  std::optional<std::string> error;
  std::string finished_at;
};

inline Json as_json(const JobState& s) {
  return {
      {"job_id", s.job_id},
      {"dataset_id", s.dataset_id},
      {"status", to_string(s.status)},
      {"progress",
       {{"generation", s.generation},
        {"generations_total", s.generations_total},
        {"best_objectives", s.best_objectives ? objectives_json(*s.best_objectives) : Json(nullptr)}}},
      {"result", s.result ? threshy::as_json(*s.result) : Json(nullptr)},
      {"error", s.error ? Json(*s.error) : Json(nullptr)},
  };
}

class Job {
 public:
  Job(std::string id, std::shared_ptr<const StoredDataset> data, OptimizerSettings settings,
      std::optional<CostSchedule> costs, std::string key)
      : data_(std::move(data)),
        settings_(std::move(settings)),
        costs_(std::move(costs)),
        key_(std::move(key)) {
    auto s = std::make_shared<JobState>();
    s->job_id = std::move(id);
    s->dataset_id = data_->dataset->content_digest();
    s->generations_total = settings_.generations;
    state_ = std::move(s);
  }

  /// Immutable snapshot; never waits on the optimizer.
  std::shared_ptr<const JobState> snapshot() const {
    std::lock_guard lock(state_mutex_);
    return state_;
  }

  const std::string& id() const { return state_->job_id; }
  const std::string& key() const { return key_; }
  const StoredDataset& data() const { return *data_; }
  const OptimizerSettings& settings() const { return settings_; }
  const std::optional<CostSchedule>& costs() const { return costs_; }

  /// Applies `fn` to a copy of the state and publishes it; returns false if the job had
  /// already reached a terminal status.
  template <typename Fn>
  bool update(Fn&& fn) {
    std::lock_guard lock(state_mutex_);
    if (is_terminal(state_->status)) return false;
    auto next = std::make_shared<JobState>(*state_);
    fn(*next);
    if (is_terminal(next->status)) next->finished_at = utc_now_rfc3339();
    state_ = std::move(next);
    return true;
  }

  std::stop_source& stop_source() { return stop_; }

 private:
  std::shared_ptr<const StoredDataset> data_;
  OptimizerSettings settings_;
  std::optional<CostSchedule> costs_;
  std::string key_;
  mutable std::mutex state_mutex_;
  std::shared_ptr<const JobState> state_;
  std::stop_source stop_;
};

/// Bounded worker pool running optimizations FIFO.
class JobManager {
 public:
  explicit JobManager(std::size_t workers) {
    if (workers == 0) workers = 1;
    for (std::size_t i = 0; i < workers; ++i) {
      threads_.emplace_back([this](std::stop_token stop) { work(stop); });
    }
  }

  ~JobManager() { shutdown(); }

  JobManager(const JobManager&) = delete;
  JobManager& operator=(const JobManager&) = delete;

  struct Submission {
    std::shared_ptr<Job> job;
    bool duplicate = false;
  };

  Submission submit(std::shared_ptr<const StoredDataset> data, OptimizerSettings settings,
                    std::optional<CostSchedule> costs) {
    settings.validate();
    if (costs) costs->validate();
    const std::string key = data->dataset->content_digest() + "/" +
                            hex_digest(as_json(settings).dump()) + "/" +
                            (costs ? cost_schedule_digest(*costs) : std::string("none"));
    std::lock_guard lock(mutex_);
    for (const auto& [id, job] : jobs_) {
      if (job->key() == key && !is_terminal(job->snapshot()->status)) return {job, true};
    }
    auto job = std::make_shared<Job>("job-" + std::to_string(++counter_), std::move(data),
                                     std::move(settings), std::move(costs), key);
    jobs_.emplace(job->id(), job);
    queue_.push_back(job);
    cv_.notify_one();
    return {job, false};
  }

  std::shared_ptr<Job> find(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto it = jobs_.find(id);
    return it == jobs_.end() ? nullptr : it->second;
  }

  std::shared_ptr<Job> get(const std::string& id) const {
    if (auto job = find(id)) return job;
    throw Error(ErrorCode::not_found, "unknown job '" + id + "'");
  }

  /// Queued jobs cancel immediately; running ones stop at the next generation boundary.
  void cancel(Job& job) {
    job.stop_source().request_stop();
    job.update([](JobState& s) {
      if (s.status == JobStatus::queued) s.status = JobStatus::cancelled;
    });
  }

  void shutdown() {
    {
      std::lock_guard lock(mutex_);
      if (stopped_) return;
      stopped_ = true;
      for (auto& [id, job] : jobs_) cancel(*job);
    }
    for (auto& t : threads_) t.request_stop();
    cv_.notify_all();
    threads_.clear();  // joins
  }

 private:
  void work(std::stop_token stop) {
    while (true) {
      std::shared_ptr<Job> job;
      {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, stop, [&] { return !queue_.empty(); });
        if (stop.stop_requested()) return;
        job = queue_.front();
        queue_.pop_front();
      }
      run(*job);
    }
  }

  static void run(Job& job) {
    if (!job.update([](JobState& s) { s.status = JobStatus::running; })) return;
    try {
      const auto& costs = job.costs();
      auto result = optimize(
          *job.data().dataset, job.settings(), costs ? &*costs : nullptr,
          [&](const OptimizerProgress& p) {
            job.update([&](JobState& s) {
              s.generation = std::max(s.generation, p.generation);
              s.best_objectives = p.best;
            });
          },
          job.stop_source().get_token());
      auto shared = std::make_shared<const OptimizationResult>(std::move(result));
      job.update([&](JobState& s) {
        s.status = JobStatus::done;
        s.result = shared;
      });
    } catch (const Error& e) {
      job.update([&](JobState& s) {
        s.status = e.code() == ErrorCode::cancelled ? JobStatus::cancelled : JobStatus::failed;
        if (s.status == JobStatus::failed) s.error = e.what();
      });
    } catch (const std::exception& e) {
      job.update([&](JobState& s) {
        s.status = JobStatus::failed;
        s.error = e.what();
      });
    }
  }

  mutable std::mutex mutex_;
  std::condition_variable_any cv_;
  std::deque<std::shared_ptr<Job>> queue_;
  std::map<std::string, std::shared_ptr<Job>> jobs_;
  std::size_t counter_ = 0;
  bool stopped_ = false;
  std::vector<std::jthread> threads_;
};

// ---- HTTP ------------------------------------------------------------------------------

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::parse: return 400;
    case ErrorCode::not_found: return 404;
    case ErrorCode::cancelled: return 409;
    case ErrorCode::validation:
    case ErrorCode::task_mismatch:
    case ErrorCode::version: return 422;
  }
  return 500;
}

inline Json error_body(const std::string& code, const std::string& message,
                       const std::string& detail = {}) {
  return {{"code", code}, {"message", message}, {"detail", detail}};
}

inline void reply(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(dump_canonical(body), "application/json");
}

/// Thin JSON-over-HTTP front end for the engine.
class Server {
 public:
  explicit Server(ServiceConfig config) : config_(std::move(config)), jobs_(config_.workers) {
    routes();
  }

  ~Server() { stop(); }

  /// Binds; port 0 picks an ephemeral port. Returns the bound port or -1.
  int bind() {
    if (config_.port == 0) {
      port_ = http_.bind_to_any_port(config_.host);
    } else {
      port_ = http_.bind_to_port(config_.host, config_.port) ? config_.port : -1;
    }
    return port_;
  }

  /// Serves until stop(); call bind() first.
  bool listen() { return http_.listen_after_bind(); }

  void stop() {
    jobs_.shutdown();
    if (http_.is_running()) http_.stop();
  }

  void wait_until_ready() const { http_.wait_until_ready(); }

  int port() const { return port_; }
  DatasetRegistry& datasets() { return datasets_; }
  JobManager& jobs() { return jobs_; }

 private:
  static Json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return Json::object();
    try {
      return Json::parse(req.body);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::parse, "request body is not valid JSON", e.what());
    }
  }

  static std::optional<CostSchedule> costs_from(const Json& body) {
    if (!body.contains("costs") || body["costs"].is_null()) return std::nullopt;
    return cost_schedule_from_json(body["costs"]);
  }

  template <typename Fn>
  static httplib::Server::Handler guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const ParseError& e) {
        Json body = error_body(to_string(e.code()), e.what(), e.detail());
        body["line"] = e.line();
        reply(res, 400, body);
      } catch (const Error& e) {
        reply(res, http_status(e.code()), error_body(to_string(e.code()), e.what(), e.detail()));
      } catch (const std::exception& e) {
        reply(res, 500, error_body("internal_error", e.what()));
      }
    };
  }

  /// Threshold profile from an evaluate body: {"threshold": x}, {"thresholds": {...},
  /// "default_threshold": x}, or {"profile": <profile document or thresholds object>}.
  static std::pair<ThresholdProfile, std::optional<CostSchedule>> profile_from_body(
      const Json& body, const Dataset& dataset) {
    if (body.contains("profile")) {
      const auto& p = body["profile"];
      if (p.is_object() && p.contains("format_version")) {
        auto doc = profile_from_json(p);
        return {doc.threshold_profile(), doc.costs};
      }
      return {bare_profile(p, dataset), std::nullopt};
    }
    if (body.contains("threshold")) {
      if (!body["threshold"].is_number()) throw Error(ErrorCode::parse, "'threshold' must be a number");
      auto profile = ThresholdProfile::uniform(dataset, body["threshold"].get<double>());
      profile.validate();
      return {profile, std::nullopt};
    }
    return {bare_profile(body, dataset), std::nullopt};
  }

  static ThresholdProfile bare_profile(const Json& p, const Dataset& dataset) {
    if (!p.is_object()) throw Error(ErrorCode::parse, "profile must be a JSON object");
    ThresholdProfile profile = ThresholdProfile::uniform(dataset, 0.5);
    if (p.contains("task")) profile.task = parse_task(p["task"].get<std::string>());
    if (p.contains("positive_label") && !p["positive_label"].is_null()) {
      profile.positive_label = p["positive_label"].get<std::string>();
    }
    profile.default_threshold = detail::number_or(p, "default_threshold", 0.5, "profile");
    if (p.contains("thresholds")) {
      if (!p["thresholds"].is_object()) throw Error(ErrorCode::parse, "'thresholds' must be an object");
      for (const auto& [label, v] : p["thresholds"].items()) {
        if (!v.is_number()) throw Error(ErrorCode::parse, "threshold for '" + label + "' must be a number");
        profile.thresholds[label] = v.get<double>();
      }
    }
    profile.validate();
    return profile;
  }

  void routes() {
    http_.set_payload_max_length(config_.max_upload_bytes);

    http_.set_post_routing_handler([](const httplib::Request& req, httplib::Response& res) {
      static const std::regex local(R"(^https?://(localhost|127\.0\.0\.1|\[::1\])(:\d+)?$)");
      const auto origin = req.get_header_value("Origin");
      if (!origin.empty() && std::regex_match(origin, local)) {
        res.set_header("Access-Control-Allow-Origin", origin);
        res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.set_header("Vary", "Origin");
      }
    });
    http_.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.status = 204;
    });

    http_.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (!res.body.empty()) return;
      const std::string code = res.status == 413   ? "payload_too_large"
                               : res.status == 404 ? "not_found"
                                                   : "http_error";
      res.set_content(dump_canonical(error_body(code, httplib::status_message(res.status))),
                      "application/json");
    });

    http_.Get("/api/health", guarded([](const httplib::Request&, httplib::Response& res) {
      reply(res, 200, {{"status", "ok"}, {"engine_version", kEngineVersion}});
    }));

    http_.Post("/api/datasets", guarded([this](const httplib::Request& req, httplib::Response& res) {
      std::optional<std::string> positive;
      if (req.has_param("positive_label")) positive = req.get_param_value("positive_label");
      const TaskKind task = req.has_param("task") ? parse_task(req.get_param_value("task"))
                                                  : infer_task(req.body, positive);
      auto [entry, created] = datasets_.insert(parse_dataset(req.body, task, positive));
      reply(res, created ? 201 : 200,
            {{"dataset_id", entry->dataset->content_digest()}, {"summary", as_json(entry->summary)}});
    }));

    http_.Get("/api/datasets/:id/summary",
              guarded([this](const httplib::Request& req, httplib::Response& res) {
                reply(res, 200, as_json(datasets_.get(req.path_params.at("id"))->summary));
              }));

    http_.Post("/api/datasets/:id/evaluate",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const auto entry = datasets_.get(req.path_params.at("id"));
                 const Json body = parse_body(req);
                 auto [profile, profile_costs] = profile_from_body(body, *entry->dataset);
                 auto costs = costs_from(body);
                 if (!costs) costs = profile_costs;
                 const auto eval = evaluate(*entry->dataset, profile);
                 reply(res, 200, as_json(eval, costs ? &*costs : nullptr));
               }));

    http_.Post("/api/datasets/:id/optimize",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const auto entry = datasets_.get(req.path_params.at("id"));
                 const Json body = parse_body(req);
                 const auto settings =
                     settings_from_json(body.contains("settings") ? body["settings"] : Json());
                 auto submission = jobs_.submit(entry, settings, costs_from(body));
                 const auto snap = submission.job->snapshot();
                 if (submission.duplicate) {
                   Json err = error_body("duplicate_job",
                                         "an identical job is already queued or running");
                   err["job_id"] = snap->job_id;
                   reply(res, 409, err);
                   return;
                 }
                 reply(res, 202, {{"job_id", snap->job_id}, {"status", to_string(snap->status)}});
               }));

    http_.Get("/api/jobs/:id", guarded([this](const httplib::Request& req, httplib::Response& res) {
      reply(res, 200, as_json(*jobs_.get(req.path_params.at("id"))->snapshot()));
    }));

    http_.Delete("/api/jobs/:id", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto job = jobs_.get(req.path_params.at("id"));
      jobs_.cancel(*job);
      const auto snap = job->snapshot();
      reply(res, 200, {{"job_id", snap->job_id}, {"status", to_string(snap->status)}});
    }));

    http_.Post("/api/export", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const Json body = parse_body(req);
      const auto entry = datasets_.get(detail::require<std::string>(body, "dataset_id", "export"));
      const Dataset& dataset = *entry->dataset;
      auto costs = costs_from(body);
      std::optional<std::string> created_at;
      if (body.contains("created_at")) {
        created_at = detail::require<std::string>(body, "created_at", "export");
        if (!is_rfc3339(*created_at)) {
          throw Error(ErrorCode::validation, "created_at must be an RFC-3339 timestamp");
        }
      }

      ProfileDocument doc;
      if (body.contains("job_id")) {
        auto job = jobs_.get(detail::require<std::string>(body, "job_id", "export"));
        const auto snap = job->snapshot();
        if (snap->dataset_id != dataset.content_digest()) {
          throw Error(ErrorCode::validation, "job " + snap->job_id + " ran on a different dataset");
        }
        if (snap->status != JobStatus::done || !snap->result) {
          throw Error(ErrorCode::validation, "job " + snap->job_id + " has no result (status " +
                                                 to_string(snap->status) + ")");
        }
        std::size_t index = snap->result->recommended_index;
        if (body.contains("solution_index")) {
          if (!body["solution_index"].is_number_integer() ||
              body["solution_index"].get<std::int64_t>() < 0) {
            throw Error(ErrorCode::validation, "solution_index must be a non-negative integer");
          }
          index = body["solution_index"].get<std::size_t>();
        }
        if (!costs) costs = job->costs();
        doc = profile_from_result(dataset, *snap->result, index, costs,
                                  created_at.value_or(snap->finished_at));
      } else {
        const auto profile = bare_profile(body, dataset);
        doc = make_profile_document(dataset, profile, costs, std::nullopt,
                                    created_at.value_or(entry->uploaded_at));
      }
      res.status = 200;
      res.set_header("Content-Disposition", "attachment; filename=\"profile.threshy.json\"");
      res.set_content(export_profile(doc), "application/json");
    }));

    http_.Post("/api/monitor", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const Json body = parse_body(req);
      const auto entry = datasets_.get(detail::require<std::string>(body, "dataset_id", "monitor"));
      const auto doc = profile_from_json(detail::require<Json>(body, "profile", "monitor"));
      const double tolerance =
          detail::number_or(body, "tolerance", kDefaultMonitorTolerance, "monitor");
      std::optional<double> cost_tolerance;
      if (body.contains("cost_tolerance") && !body["cost_tolerance"].is_null()) {
        cost_tolerance = detail::require_number(body, "cost_tolerance", "monitor");
      }
      reply(res, 200, as_json(monitor_compare(doc, *entry->dataset, tolerance, cost_tolerance)));
    }));

    if (!config_.ui_dir.empty()) http_.set_mount_point("/", config_.ui_dir);
  }

  ServiceConfig config_;
  DatasetRegistry datasets_;
  JobManager jobs_;
  httplib::Server http_;
  int port_ = -1;
};

}  // namespace threshy::service
