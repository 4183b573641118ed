#include <catch_amalgamated.hpp>

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <csignal>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "threshy/fixtures.hpp"
#include "threshy/monitor.hpp"
#include "threshy/profile.hpp"
#include "threshy/service.hpp"

using namespace threshy;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

const std::string kCli = THRESHY_CLI;
const std::string kFx = THRESHY_FIXTURES_DIR;

fs::path scratch() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("threshy-cli-test-" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Run run(const std::string& args) {
  const auto err_path = scratch() / "stderr.txt";
  const std::string cmd = kCli + " " + args + " 2>" + err_path.string();
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe);
  char buf[4096];
  std::size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err_path);
  return r;
}

// Drops the "profile written to <path>" line, which names a different file per run.
std::string without_written_line(const std::string& out) {
  return out.substr(0, out.find("profile written to"));
}

std::string fx(const std::string& name) { return kFx + "/" + name + ".csv"; }

}  // namespace

TEST_CASE("summarize") {
  auto table = run("summarize " + fx("spam_model_1") + " --positive-label spam");
  CHECK(table.code == 0);
  CHECK(table.out.find("records      100") != std::string::npos);

  auto json = run("summarize " + fx("spam_model_1") + " --positive-label spam --format json");
  REQUIRE(json.code == 0);
  const auto d = fixtures::load_fixture(fixtures::spam_model_1());
  CHECK(json.out == dump_canonical(as_json(summarize(d))));
  CHECK(summary_from_json(Json::parse(json.out)) == summarize(d));

  auto missing = run("summarize /no/such/file.csv");
  CHECK(missing.code == 1);
  CHECK(missing.err.find("/no/such/file.csv") != std::string::npos);
}

TEST_CASE("parse errors exit 1 with the line number") {
  const auto bad = scratch() / "bad.csv";
  std::ofstream(bad) << "id,truth,score:a,score:b\nr1,a,0.1,0.2\nr2,b,0.3\n";
  auto r = run("summarize " + bad.string());
  CHECK(r.code == 1);
  CHECK(r.err.find("line 3") != std::string::npos);
}

TEST_CASE("evaluate") {
  auto dog = run("evaluate " + fx("dog_cat") + " --threshold 0.5 --format json");
  REQUIRE(dog.code == 0);
  auto j = Json::parse(dog.out);
  CHECK(j["confusion"]["per_label"]["dog"]["tp"] == 1);

  auto zero = run("evaluate " + fx("tomatoes") + " --threshold 0 --format json");
  REQUIRE(zero.code == 0);
  for (const auto& [label, c] : Json::parse(zero.out)["confusion"]["per_label"].items()) CHECK(c["mp"] == 0);

  auto table = run("evaluate " + fx("four_record_multiclass") + " --threshold 0.5");
  CHECK(table.code == 0);
  CHECK(table.out.find("abstentions  1") != std::string::npos);

  CHECK(run("evaluate " + fx("dog_cat") + " --threshold 1.5").code == 1);
}

TEST_CASE("evaluate with a profile equals the library evaluation") {
  const auto profile = scratch() / "golden-copy.threshy.json";
  fs::copy_file(kFx + "/golden.threshy.json", profile, fs::copy_options::overwrite_existing);
  auto r = run("evaluate " + fx("four_record_multiclass") + " --profile " + profile.string() + " --format json");
  REQUIRE(r.code == 0);
  const auto doc = parse_profile(slurp(profile));
  const auto d = fixtures::load_fixture(fixtures::four_record_multiclass());
  CHECK(r.out == dump_canonical(as_json(evaluate(d, doc.threshold_profile()), doc.costs ? &*doc.costs : nullptr)));
}

TEST_CASE("optimize writes identical profiles for identical inputs") {
  const auto a = scratch() / "a.threshy.json";
  const auto b = scratch() / "b.threshy.json";
  const std::string args = "optimize " + fx("spam_model_1") + " --positive-label spam --seed 42 --out ";
  auto ra = run(args + a.string());
  auto rb = run(args + b.string());
  REQUIRE(ra.code == 0);
  REQUIRE(rb.code == 0);
  CHECK(slurp(a) == slurp(b));
  CHECK(without_written_line(ra.out) == without_written_line(rb.out));
  CHECK(ra.out.find("seed 42") != std::string::npos);
  // Zero-error row: tp 40, fp 0, mp 0.
  CHECK(ra.out.find("40       0       0") != std::string::npos);
  CHECK(parse_profile(slurp(a)).provenance.optimizer->rng_seed == 42);
}

TEST_CASE("optimize rejects bad settings") {
  auto r = run("optimize " + fx("spam_model_1") + " --positive-label spam --population 3");
  CHECK(r.code == 1);
  CHECK(r.err.find("population") != std::string::npos);
  CHECK(run("optimize").code == 1);
  CHECK(run("frobnicate").code == 1);
}

TEST_CASE("monitor exit codes") {
  const auto profile = scratch() / "m.threshy.json";
  REQUIRE(run("optimize " + fx("spam_model_2") + " --positive-label spam --out " + profile.string() +
              " --created-at 2020-11-08T09:30:00Z")
              .code == 0);
  auto pass = run("monitor " + fx("spam_model_2") + " --profile " + profile.string());
  CHECK(pass.code == 0);
  auto regress = run("monitor " + fx("spam_model_2_degraded") + " --profile " + profile.string() + " --format json");
  CHECK(regress.code == 3);
  CHECK(Json::parse(regress.out)["verdict"] == "regress");

  // Strip the baseline: usage error with an explanation.
  auto j = Json::parse(slurp(profile));
  j["baseline"] = nullptr;
  const auto bare = scratch() / "bare.threshy.json";
  std::ofstream(bare) << j.dump();
  auto no_base = run("monitor " + fx("spam_model_2") + " --profile " + bare.string());
  CHECK(no_base.code == 1);
  CHECK(no_base.err.find("baseline") != std::string::npos);
}

TEST_CASE("export is deterministic") {
  const std::string args = "export " + fx("tomatoes") + " --threshold ripe=0.6,roma=0.55 --created-at 2020-11-08T09:30:00Z";
  auto a = run(args);
  auto b = run(args);
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  const auto doc = parse_profile(a.out);
  CHECK(doc.thresholds.at("ripe") == 0.6);
  CHECK(doc.provenance.optimizer == std::nullopt);
}

TEST_CASE("fixtures command regenerates the committed files") {
  const auto dir = scratch() / "fixtures";
  REQUIRE(run("fixtures --dir " + dir.string()).code == 0);
  for (const auto& spec : fixtures::all_fixtures()) {
    CHECK(slurp(dir / spec.file_name()) == slurp(kFx + "/" + spec.file_name()));
  }
  CHECK(slurp(dir / "manifest.json") == slurp(kFx + "/manifest.json"));
}

TEST_CASE("serve binds an ephemeral port and shuts down on SIGINT") {
  const auto out = scratch() / "serve.txt";
  const pid_t pid = ::fork();
  REQUIRE(pid >= 0);
  if (pid == 0) {
    const int fd = ::open(out.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    ::dup2(fd, 1);
    ::dup2(fd, 2);
    ::execl(kCli.c_str(), kCli.c_str(), "serve", "--port", "0", static_cast<char*>(nullptr));
    ::_exit(127);
  }

  int port = 0;
  for (int i = 0; i < 500 && port == 0; ++i) {
    const auto text = slurp(out);
    const auto colon = text.rfind(':');
    if (text.find("listening") != std::string::npos && colon != std::string::npos) {
      port = std::atoi(text.c_str() + colon + 1);
    } else {
      ::usleep(10000);
    }
  }
  REQUIRE(port > 0);
  httplib::Client client("127.0.0.1", port);
  auto health = client.Get("/api/health");
  REQUIRE(health);
  CHECK(health->status == 200);

  ::kill(pid, SIGINT);
  int status = 0;
  bool exited = false;
  for (int i = 0; i < 500 && !exited; ++i) {
    exited = ::waitpid(pid, &status, WNOHANG) == pid;
    if (!exited) ::usleep(10000);
  }
  if (!exited) ::kill(pid, SIGKILL);
  REQUIRE(exited);
  CHECK(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 0);
}
