#include <algorithm>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "lpvsd/io.hpp"
#include "lpvsd/svg.hpp"
#include "support.hpp"

using namespace lpvsd;
using namespace lpvsd::io;

TEST_CASE("config round trip keeps every field") {
  RunConfig c;
  c.engine.speed_rate = 250.0;
  c.engine.convention = engine::SamplingConvention::physical_120;
  c.synthesis.lambda3 = {0.5, 2.0};
  c.synthesis.dependence.X = synthesis::Dependence::affine;
  c.synthesis.solver.kernel = sdp::Kernel::reference;
  auto sc = sim::preset("energy-mixed");
  sc.name = "custom";
  sc.interpolation = sim::Interpolation::cubic;
  c.scenarios = {sc, sim::preset("oxygen-800rpm")};
  c.output_dir = "elsewhere";
  c.plots = false;
  c.seed = 99;
  const json j = config_to_json(c);
  const RunConfig back = config_from_json(j);
  CHECK(config_to_json(back).dump() == j.dump());
  CHECK(back.engine.convention == engine::SamplingConvention::physical_120);
  CHECK(back.scenarios.size() == 2);
  CHECK(back.scenarios[0].interpolation == sim::Interpolation::cubic);
}

TEST_CASE("config defaults and unknown keys") {
  const auto c = config_from_json(json::object());
  CHECK(c.engine.speed_min == 800.0);
  CHECK(c.synthesis.lambda2.size() == 3);
  CHECK_THROWS_AS(config_from_json(json{{"engine", {{"cylinder", 6}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"colour", 1}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"engine", {{"speed_min", 900}, {"speed_max", 900}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"scenarios", {"no-such-preset"}}}), ConfigError);
}

TEST_CASE("scenario overrides on top of a preset") {
  const json j = json::parse(R"({"scenarios": [
      {"name": "short", "preset": "oxygen-800rpm", "duration": 5,
       "disturbance": {"kind": "pulse-train", "breakpoints": [[1, 0.02]], "width": 0.5}},
      "oxygen-3000rpm"]})");
  const auto c = config_from_json(j);
  REQUIRE(c.scenarios.size() == 2);
  CHECK(c.scenarios[0].duration == 5.0);
  CHECK(c.scenarios[0].speed.value(0) == 800.0);
  CHECK(c.scenarios[0].disturbance.value(1.2) == 0.02);
  CHECK(c.scenarios[1].name == "oxygen-3000rpm");
}

TEST_CASE("parse errors carry the line number") {
  const std::string text = "{\n  \"seed\": 1,\n  \"plots\": tru\n}\n";
  try {
    (void)parse_json_text(text, "cfg.json");
    FAIL("expected a parse error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).rfind("cfg.json:3:", 0) == 0);
  }
}

TEST_CASE("matrix and affine json") {
  const Matrix m = (Matrix(2, 3) << 1, 2, 3, 4, 5, 6.5e-300).finished();
  const json j = matrix_to_json(m);
  CHECK(j["data"][1] == 2.0);
  CHECK(matrix_from_json(j) == m);
  CHECK_THROWS_AS(matrix_from_json(json{{"rows", 2}, {"cols", 2}, {"data", {1, 2, 3}}}), ConfigError);

  const AffineMatrixFn f(m, {2 * m});
  const auto g = affine_from_json(affine_to_json(f));
  CHECK(g.base() == f.base());
  CHECK(g.slope(0) == f.slope(0));
}

TEST_CASE("certificate json round trip") {
  const auto& cert = testing::afr_certificate();
  const std::string fp = plant_fingerprint(engine::EngineConfig{}, testing::afr_plant());
  const json j = certificate_to_json(cert, fp);
  CHECK(j["format"] == "lpvsd-certificate");
  CHECK(j["fingerprint"] == fp);
  CHECK(j["trials"][0].count("seconds") == 0);
  const auto back = certificate_from_json(j);
  CHECK(back.gamma == cert.gamma);
  CHECK(back.P.base() == cert.P.base());
  CHECK(back.A_samp_hat.slope(0) == cert.A_samp_hat.slope(0));
  CHECK(back.Q_tau == cert.Q_tau);
  CHECK(back.grid.points.size() == cert.grid.points.size());
  CHECK(certificate_to_json(back, fp).dump() == j.dump());
  CHECK_THROWS_AS(certificate_from_json(json{{"format", "other"}}), ConfigError);
  CHECK(trials_to_json(cert.trials, true)[0].count("seconds") == 1);
}

TEST_CASE("plant fingerprint follows the configuration") {
  engine::EngineConfig a, b;
  b.convention = engine::SamplingConvention::physical_120;
  const auto pa = engine::build_afr_plant(a);
  const auto pb = engine::build_afr_plant(b);
  CHECK(plant_fingerprint(a, pa) == plant_fingerprint(a, pa));
  CHECK(plant_fingerprint(a, pa) != plant_fingerprint(b, pb));
}

TEST_CASE("svg output is deterministic and well formed") {
  std::vector<double> x, y;
  for (int i = 0; i < 5000; ++i) {
    x.push_back(i * 0.01);
    y.push_back(std::sin(i * 0.01));
  }
  const std::vector<svg::Panel> panels{{"p", "y", {{"sin", x, y}, {"ref", x, y, "#d62728", true}}}};
  const auto a = svg::render("t", "time", panels);
  const auto b = svg::render("t", "time", panels);
  CHECK(a == b);
  CHECK(a.rfind("<svg", 0) == 0);
  CHECK(a.find("</svg>") != std::string::npos);
  CHECK(a.find("stroke-dasharray") != std::string::npos);
  CHECK(a.size() < 400000);
}

TEST_CASE("shipped default config and schema agree with the code") {
  const std::filesystem::path root = LPVSD_SOURCE_DIR;
  const auto cfg = load_config(root / "configs" / "default.json");
  CHECK(config_to_json(cfg) == config_to_json(RunConfig{}));

  std::ifstream in(root / "schema" / "config.schema.json");
  const auto schema = json::parse(in);
  const auto presets = schema["$defs"]["scenario"]["properties"]["preset"]["enum"];
  auto listed = presets.get<std::vector<std::string>>();
  auto known = sim::preset_names();
  std::sort(listed.begin(), listed.end());
  std::sort(known.begin(), known.end());
  CHECK(listed == known);
  const auto engine_keys = schema["properties"]["engine"]["properties"];
  for (const auto& [k, v] : config_to_json(RunConfig{})["engine"].items()) {
    CHECK_MESSAGE(engine_keys.contains(k), k);
  }
  const auto syn_keys = schema["properties"]["synthesis"]["properties"];
  for (const auto& [k, v] : config_to_json(RunConfig{})["synthesis"].items()) {
    CHECK_MESSAGE(syn_keys.contains(k), k);
  }
}
