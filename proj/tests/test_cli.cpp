#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "commands.hpp"
#include "doctest.h"
#include "lpvsd/io.hpp"
#include "support.hpp"

using namespace lpvsd;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "lpvsd");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch() {
  static const fs::path dir = [] {
    const auto d = fs::temp_directory_path() / ("lpvsd_cli_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

fs::path write(const std::string& name, const std::string& text) {
  const auto p = scratch() / name;
  std::ofstream(p) << text;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Certificate for the default plant in DIR/certificate.json.
fs::path certified_dir(const std::string& name) {
  const auto dir = scratch() / name;
  const auto fp = io::plant_fingerprint(engine::EngineConfig{}, testing::afr_plant());
  io::write_file(dir / "certificate.json",
                 io::certificate_to_json(testing::afr_certificate(), fp).dump(2) + "\n");
  return dir;
}

}  // namespace

TEST_CASE("usage errors exit 1, help exits 0") {
  CHECK(run({}).code == cli::kUsage);
  CHECK(run({"frobnicate"}).code == cli::kUsage);
  CHECK(run({"--help"}).code == cli::kOk);
  CHECK(run({"simulate", "--help"}).code == cli::kOk);
  CHECK(run({"synthesize", "--dense-grid", "1"}).code == cli::kUsage);
  CHECK(run({"validate", "--convention", "6pi"}).code == cli::kUsage);
}

TEST_CASE("validate accepts the defaults and rejects a single-speed range") {
  const auto ok = run({"validate"});
  CHECK(ok.code == cli::kOk);
  CHECK(ok.out.find("configuration ok") != std::string::npos);

  const auto cfg = write("point.json", R"({"engine": {"speed_min": 800, "speed_max": 800}})");
  const auto bad = run({"synthesize", "--config", cfg.string(), "--out", (scratch() / "x").string()});
  CHECK(bad.code == cli::kUsage);
  CHECK_FALSE(fs::exists(scratch() / "x" / "certificate.json"));
}

TEST_CASE("malformed JSON reports its line") {
  const auto cfg = write("broken.json", "{\n  \"seed\": 3,\n  \"plots\": [1, 2\n}\n");
  const auto r = run({"validate", "--config", cfg.string()});
  CHECK(r.code == cli::kUsage);
  CHECK(r.err.find("broken.json:4:") != std::string::npos);
}

TEST_CASE("synthesis that fails everywhere exits 2 with the lambda table") {
  const auto cfg = write("starved.json", R"({"synthesis": {
      "lambda2": [1], "lambda3": [0.1, 1], "lambda4": [1],
      "solver": {"max_iterations": 1}}})");
  const auto out = scratch() / "starved";
  const auto r = run({"synthesize", "--config", cfg.string(), "--out", out.string()});
  CHECK(r.code == cli::kInfeasible);
  CHECK(fs::exists(out / "lambda_table.txt"));
  CHECK_FALSE(fs::exists(out / "certificate.json"));
  const auto report = io::json::parse(slurp(out / "synthesis_report.json"));
  CHECK(report["feasible"] == false);
  CHECK(report["trials"].size() == 2);
}

TEST_CASE("simulate: unknown scenario lists the presets") {
  const auto dir = certified_dir("unknown");
  const auto r = run({"simulate", "--out", dir.string(), "--scenario", "moon-landing"});
  CHECK(r.code == cli::kUsage);
  CHECK(r.err.find("oxygen-800rpm") != std::string::npos);
  CHECK(r.err.find("tracking-no-disturbance") != std::string::npos);
}

TEST_CASE("simulate: certificate for another plant is refused") {
  const auto dir = certified_dir("mismatch");
  const auto r = run({"simulate", "--out", dir.string(), "--scenario", "oxygen-800rpm",
                      "--convention", "physical-120"});
  CHECK(r.code == cli::kUsage);
  CHECK(r.err.find("different plant") != std::string::npos);
  CHECK(run({"simulate", "--out", (scratch() / "empty").string()}).code == cli::kUsage);
}

TEST_CASE("simulate writes reproducible trace, metrics and plot") {
  const auto dir = certified_dir("sim");
  const auto cfg = write("short.json", R"({"scenarios": [
      {"name": "short", "preset": "oxygen-800rpm", "duration": 12}]})");
  const auto a = run({"simulate", "--config", cfg.string(), "--out", dir.string(), "--seed", "5"});
  REQUIRE(a.code == cli::kOk);
  const auto csv = slurp(dir / "short.trace.csv");
  const auto metrics = slurp(dir / "short.metrics.json");
  const auto svg = slurp(dir / "short.svg");
  CHECK(csv.rfind("t,x1,x2,x3,x4,", 0) == 0);
  const auto m = io::json::parse(metrics);
  CHECK(m["seed"] == 5);
  CHECK(m["status"] == "completed");
  CHECK(m["dm_o2"].contains("max_abs"));

  const auto b = run({"simulate", "--config", cfg.string(), "--out", dir.string(), "--seed", "5"});
  REQUIRE(b.code == cli::kOk);
  CHECK(slurp(dir / "short.trace.csv") == csv);
  CHECK(slurp(dir / "short.metrics.json") == metrics);
  CHECK(slurp(dir / "short.svg") == svg);
}

TEST_CASE("environment variables stand in for flags") {
  const auto dir = certified_dir("env");
  const auto cfg = write("env.json", R"({"scenarios": [
      {"name": "tiny", "preset": "oxygen-3000rpm", "duration": 1}]})");
  ::setenv("LPVSD_CONFIG", cfg.string().c_str(), 1);
  ::setenv("LPVSD_OUT", dir.string().c_str(), 1);
  const auto r = run({"simulate"});
  ::unsetenv("LPVSD_CONFIG");
  ::unsetenv("LPVSD_OUT");
  CHECK(r.code == cli::kOk);
  CHECK(fs::exists(dir / "tiny.trace.csv"));
}

TEST_CASE("an unstable loop halts with exit 3 and a partial trace") {
  // Flip the sign of the controller output gains: the loop diverges.
  auto cert = testing::afr_certificate();
  const auto fp = io::plant_fingerprint(engine::EngineConfig{}, testing::afr_plant());
  cert.C_hat = AffineMatrixFn(-50.0 * cert.C_hat.base(), {-50.0 * cert.C_hat.slope(0)});
  cert.D_K = AffineMatrixFn(-50.0 * cert.D_K.base(), {-50.0 * cert.D_K.slope(0)});
  const auto dir = scratch() / "unstable";
  io::write_file(dir / "certificate.json", io::certificate_to_json(cert, fp).dump() + "\n");
  const auto cfg = write("blowup.json", R"({"scenarios": [
      {"name": "blowup", "preset": "oxygen-3000rpm", "duration": 40}]})");
  const auto r = run({"simulate", "--config", cfg.string(), "--out", dir.string()});
  CHECK(r.code == cli::kHalted);
  const auto m = io::json::parse(slurp(dir / "blowup.metrics.json"));
  CHECK(m["status"] == "unstable");
  CHECK(m["halted"] == true);
}
