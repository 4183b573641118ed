// threshy command-line front end.

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <pthread.h>
#include <sys/stat.h>
#include <unistd.h>

#include "CLI11.hpp"

#include "threshy/service.hpp"
#include "threshy/threshy.hpp"

namespace fs = std::filesystem;
using namespace threshy;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitInternal = 2;
constexpr int kExitRegress = 3;

struct DatasetArgs {
  std::string path;
  std::string task;
  std::string positive_label;
};

std::string read_file(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::not_found, std::string("cannot open ") + what + " '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::not_found, "cannot write '" + path + "'");
  out << bytes;
  if (!out.flush()) throw Error(ErrorCode::not_found, "failed writing '" + path + "'");
}

Dataset load_dataset(const DatasetArgs& args) {
  const std::string csv = read_file(args.path, "dataset");
  std::optional<std::string> positive;
  if (!args.positive_label.empty()) positive = args.positive_label;
  const TaskKind task = args.task.empty() ? infer_task(csv, positive) : parse_task(args.task);
  try {
    return parse_dataset(csv, task, positive);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), args.path + ": " + e.what());
  }
}

std::optional<CostSchedule> load_costs(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return parse_cost_schedule(read_file(path, "cost schedule"));
}

/// --created-at, else SOURCE_DATE_EPOCH, else the input file's modification time; keeps
/// repeated exports of the same inputs byte-identical.
std::map<std::string, double> parse_manual_thresholds(const std::vector<std::string>& items) {
  std::map<std::string, double> out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(ErrorCode::validation, "--threshold expects label=value, got '" + item + "'");
    }
    std::size_t used = 0;
    double value = 0.0;
    try {
      value = std::stod(item.substr(eq + 1), &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || eq + 1 + used != item.size()) {
      throw Error(ErrorCode::validation, "--threshold value is not a number in '" + item + "'");
    }
    out[item.substr(0, eq)] = value;
  }
  return out;
}

std::string resolve_created_at(const std::string& flag, const std::string& input_path) {
  if (!flag.empty()) {
    if (!is_rfc3339(flag)) throw Error(ErrorCode::validation, "--created-at must be RFC-3339");
    return flag;
  }
  std::time_t t = 0;
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch && *epoch) {
    t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  } else {
    struct stat st {};
    if (::stat(input_path.c_str(), &st) != 0) {
      throw Error(ErrorCode::not_found, "cannot stat '" + input_path + "'");
    }
    t = st.st_mtime;
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

void print_summary_table(const DatasetSummary& s) {
  std::cout << fmt("records      %zu\n", s.record_count) << fmt("labels       %zu\n", s.label_count)
            << "task         " << to_string(s.task) << "\n";
  if (s.positive_label) std::cout << "positive     " << *s.positive_label << "\n";
  std::cout << "digest       " << s.content_digest << "\n\n";
  std::cout << fmt("%-20s %10s\n", "label", "positives");
  for (const auto& [label, n] : s.per_label_positive_count) {
    std::cout << fmt("%-20s %10zu\n", label.c_str(), n);
  }
}

void print_evaluation_table(const Evaluation& e, const CostSchedule* costs) {
  std::cout << fmt("%-20s %6s %6s %6s %9s %9s %9s\n", "label", "tp", "fp", "mp", "precision",
                   "recall", "f1");
  for (std::size_t i = 0; i < e.confusion.labels.size(); ++i) {
    const auto& c = e.confusion.counts[i];
    const auto& m = e.metrics.per_label[i].values;
    std::cout << fmt("%-20s %6zu %6zu %6zu %9.4f %9.4f %9.4f\n", e.confusion.labels[i].c_str(), c.tp,
                     c.fp, c.mp, m.precision, m.recall, m.f1);
  }
  const auto t = e.confusion.totals();
  std::cout << fmt("%-20s %6zu %6zu %6zu %9.4f %9.4f %9.4f\n", "(micro)", t.tp, t.fp, t.mp,
                   e.metrics.micro.precision, e.metrics.micro.recall, e.metrics.micro.f1)
            << fmt("%-20s %6s %6s %6s %9.4f %9.4f %9.4f\n", "(macro)", "", "", "",
                   e.metrics.macro.precision, e.metrics.macro.recall, e.metrics.macro.f1);
  if (e.metrics.abstain_count) std::cout << fmt("abstentions  %zu\n", *e.metrics.abstain_count);
  if (costs) std::cout << fmt("total cost   %g\n", total_cost(e.confusion, *costs));
  for (const auto& w : e.warnings) std::cerr << "warning: " << w << "\n";
}

void print_front_table(const OptimizationResult& r, const Dataset& dataset,
                       const CostSchedule* costs) {
  const auto mask = active_genes(dataset);
  std::cout << fmt("seed %llu, population %zu, generations %zu, front size %zu\n",
                   static_cast<unsigned long long>(r.provenance.settings.rng_seed),
                   r.provenance.settings.population_size, r.provenance.settings.generations,
                   r.front.size());
  std::cout << fmt("%3s %5s", "", "#");
  for (std::size_t l = 0; l < r.labels.size(); ++l) {
    if (mask[l]) std::cout << fmt(" %10.10s", r.labels[l].c_str());
  }
  std::cout << fmt(" %7s %7s %7s", "tp", "fp", "mp");
  if (costs) std::cout << fmt(" %10s", "cost");
  std::cout << "\n";
  for (std::size_t i = 0; i < r.front.size(); ++i) {
    const auto& s = r.front[i];
    std::cout << fmt("%3s %5zu", i == r.recommended_index ? "*" : "", i);
    for (std::size_t l = 0; l < r.labels.size(); ++l) {
      if (mask[l]) std::cout << fmt(" %10.4f", s.thresholds[l]);
    }
    std::cout << fmt(" %7.0f %7.0f %7.0f", -s.objectives[0], s.objectives[1], s.objectives[2]);
    if (costs) std::cout << fmt(" %10g", total_cost(confusion_for_genes(dataset, s.thresholds), *costs));
    std::cout << "\n";
  }
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
}

void add_dataset_args(CLI::App* cmd, DatasetArgs& args) {
  cmd->add_option("input", args.path, "benchmark CSV (truth + per-label scores)")->required();
  cmd->add_option("--task", args.task, "binary | multiclass | multilabel (inferred if omitted)")
      ->check(CLI::IsMember({"binary", "multiclass", "multilabel"}));
  cmd->add_option("--positive-label", args.positive_label, "positive class for binary tasks");
}

void add_format(CLI::App* cmd, std::string& format) {
  cmd->add_option("--format", format, "output format")
      ->check(CLI::IsMember({"table", "json"}))
      ->default_val("table");
}

int run_serve(service::ServiceConfig config) {
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  service::Server server(config);
  const int port = server.bind();
  if (port < 0) {
    std::cerr << "error: cannot bind " << config.host << ":" << config.port << "\n";
    return kExitUsage;
  }
  std::cout << "listening on http://" << config.host << ":" << port << std::endl;

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });
  const bool ok = server.listen();
  server.stop();
  // listen() may also end without a signal; wake the waiter so it can be joined.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  return ok ? kExitOk : kExitInternal;
}

std::size_t env_size(const char* name, std::size_t fallback) {
  if (const char* v = std::getenv(name); v && *v) return std::strtoull(v, nullptr, 10);
  return fallback;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"threshy: calibrate, optimize and monitor per-label decision thresholds"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kEngineVersion);

  std::string format;
  DatasetArgs data;
  std::string costs_path, profile_path, out_path, created_at;
  std::optional<double> threshold;
  std::vector<std::string> manual;
  double default_threshold = 0.5;
  OptimizerSettings settings;
  std::optional<std::size_t> solution;
  double tolerance = kDefaultMonitorTolerance;
  std::optional<double> cost_tolerance;
  service::ServiceConfig serve_config;
  serve_config.port = static_cast<int>(env_size("THRESHY_PORT", 8080));
  serve_config.workers = env_size("THRESHY_WORKERS", 2);
  std::size_t max_upload_mib = env_size("THRESHY_MAX_UPLOAD_MIB", 64);
  std::string fixtures_dir = "fixtures";

  auto* summarize_cmd = app.add_subcommand("summarize", "describe a benchmark dataset");
  add_dataset_args(summarize_cmd, data);
  add_format(summarize_cmd, format);

  auto* evaluate_cmd = app.add_subcommand("evaluate", "confusion counts and metrics at given thresholds");
  add_dataset_args(evaluate_cmd, data);
  add_format(evaluate_cmd, format);
  auto* t_opt = evaluate_cmd->add_option("--threshold", threshold, "one threshold for every label")
                    ->check(CLI::Range(0.0, 1.0));
  evaluate_cmd->add_option("--profile", profile_path, "threshold profile (.threshy.json)")
      ->excludes(t_opt);
  evaluate_cmd->add_option("--costs", costs_path, "cost schedule JSON");

  auto* optimize_cmd = app.add_subcommand("optimize", "search per-label thresholds with NSGA-II");
  add_dataset_args(optimize_cmd, data);
  add_format(optimize_cmd, format);
  optimize_cmd->add_option("--costs", costs_path, "cost schedule JSON");
  optimize_cmd->add_option("--out", out_path, "write the chosen solution as a profile");
  optimize_cmd->add_option("--seed", settings.rng_seed, "random seed")->capture_default_str();
  optimize_cmd->add_option("--population", settings.population_size, "population size (even, >= 4)")
      ->capture_default_str();
  optimize_cmd->add_option("--generations", settings.generations, "generations")->capture_default_str();
  optimize_cmd->add_option("--solution", solution, "front index to export (default: recommended)");
  optimize_cmd->add_option("--created-at", created_at, "RFC-3339 timestamp recorded in the profile");

  auto* export_cmd = app.add_subcommand("export", "write a profile for hand-picked thresholds");
  add_dataset_args(export_cmd, data);
  export_cmd->add_option("--threshold", manual, "per-label threshold, label=value (repeatable)")
      ->delimiter(',');
  export_cmd->add_option("--default-threshold", default_threshold, "threshold for unlisted labels")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  export_cmd->add_option("--costs", costs_path, "cost schedule JSON");
  export_cmd->add_option("--out", out_path, "output path (default: stdout)");
  export_cmd->add_option("--created-at", created_at, "RFC-3339 timestamp recorded in the profile");

  auto* monitor_cmd = app.add_subcommand("monitor", "check a profile against fresh data");
  add_dataset_args(monitor_cmd, data);
  add_format(monitor_cmd, format);
  monitor_cmd->add_option("--profile", profile_path, "profile with a baseline")->required();
  monitor_cmd->add_option("--tolerance", tolerance, "allowed relative F1 drop")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  monitor_cmd->add_option("--cost-tolerance", cost_tolerance, "allowed relative cost increase");

  auto* serve_cmd = app.add_subcommand("serve", "run the HTTP service");
  serve_cmd->add_option("--host", serve_config.host, "bind address")->capture_default_str();
  serve_cmd->add_option("--port", serve_config.port, "port, 0 for an ephemeral one")
      ->capture_default_str();
  serve_cmd->add_option("--workers", serve_config.workers, "concurrent optimization jobs")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  serve_cmd->add_option("--max-upload-mib", max_upload_mib, "largest accepted upload")
      ->capture_default_str();
  serve_cmd->add_option("--ui-dir", serve_config.ui_dir, "static UI bundle served under /");

  auto* fixtures_cmd = app.add_subcommand("fixtures", "regenerate the bundled benchmark fixtures");
  fixtures_cmd->add_option("--dir", fixtures_dir, "output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const bool json = format == "json";
  try {
    if (*summarize_cmd) {
      const auto summary = summarize(load_dataset(data));
      if (json) {
        std::cout << dump_canonical(as_json(summary));
      } else {
        print_summary_table(summary);
      }
      return kExitOk;
    }

    if (*evaluate_cmd) {
      const Dataset dataset = load_dataset(data);
      auto costs = load_costs(costs_path);
      ThresholdProfile profile = ThresholdProfile::uniform(dataset, threshold.value_or(0.5));
      if (!profile_path.empty()) {
        const auto doc = parse_profile(read_file(profile_path, "profile"));
        profile = doc.threshold_profile();
        if (!costs) costs = doc.costs;
      }
      const auto eval = evaluate(dataset, profile);
      if (json) {
        std::cout << dump_canonical(as_json(eval, costs ? &*costs : nullptr));
      } else {
        print_evaluation_table(eval, costs ? &*costs : nullptr);
      }
      return kExitOk;
    }

    if (*optimize_cmd) {
      settings.validate();
      const Dataset dataset = load_dataset(data);
      const auto costs = load_costs(costs_path);
      const auto result = optimize(dataset, settings, costs ? &*costs : nullptr);
      if (!out_path.empty()) {
        const auto doc = profile_from_result(dataset, result, solution.value_or(result.recommended_index),
                                             costs, resolve_created_at(created_at, data.path));
        write_file(out_path, export_profile(doc));
      }
      if (json) {
        std::cout << dump_canonical(as_json(result));
      } else {
        print_front_table(result, dataset, costs ? &*costs : nullptr);
        if (!out_path.empty()) std::cout << "profile written to " << out_path << "\n";
      }
      return kExitOk;
    }

    if (*export_cmd) {
      const Dataset dataset = load_dataset(data);
      ThresholdProfile profile{parse_manual_thresholds(manual), default_threshold, dataset.task(), dataset.positive_label()};
      profile.validate();
      const auto doc = make_profile_document(dataset, profile, load_costs(costs_path), std::nullopt,
                                             resolve_created_at(created_at, data.path));
      if (out_path.empty()) {
        std::cout << export_profile(doc);
      } else {
        write_file(out_path, export_profile(doc));
      }
      return kExitOk;
    }

    if (*monitor_cmd) {
      const auto doc = parse_profile(read_file(profile_path, "profile"));
      if (data.task.empty()) data.task = std::string(to_string(doc.task));
      if (data.positive_label.empty() && doc.positive_label) data.positive_label = *doc.positive_label;
      const auto report = monitor_compare(doc, load_dataset(data), tolerance, cost_tolerance);
      if (json) {
        std::cout << dump_canonical(as_json(report));
      } else {
        std::cout << format_report_table(report);
      }
      return report.verdict == Verdict::pass ? kExitOk : kExitRegress;
    }

    if (*serve_cmd) {
      serve_config.max_upload_bytes = max_upload_mib * 1024u * 1024u;
      return run_serve(serve_config);
    }

    if (*fixtures_cmd) {
      fs::create_directories(fixtures_dir);
      for (const auto& spec : fixtures::all_fixtures()) {
        write_file((fs::path(fixtures_dir) / spec.file_name()).string(), fixtures::generate_fixture(spec));
      }
      write_file((fs::path(fixtures_dir) / "manifest.json").string(),
                 dump_canonical(fixtures::manifest()));
      std::cout << "wrote " << fixtures::all_fixtures().size() << " fixtures to " << fixtures_dir << "\n";
      return kExitOk;
    }
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (!e.detail().empty()) std::cerr << "  " << e.detail() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}
