#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "lpvsd/engine_afr.hpp"
#include "lpvsd/hybrid_sim.hpp"
#include "lpvsd/synthesis.hpp"

namespace lpvsd::io {

using json = nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  engine::EngineConfig engine;
  synthesis::SynthesisOptions synthesis;
  std::vector<sim::Scenario> scenarios;  // empty selects every preset
  std::string output_dir = "out";
  bool plots = true;
  std::uint64_t seed = 0;
};

/// Missing keys keep their defaults; unknown keys are rejected.
RunConfig config_from_json(const json& j);
json config_to_json(const RunConfig& c);
/// Parse failures carry the line number of the offending input.
RunConfig load_config(const std::filesystem::path& path);
json parse_json_text(const std::string& text, const std::string& origin);

json scenario_to_json(const sim::Scenario& s);
sim::Scenario scenario_from_json(const json& j);

json matrix_to_json(const Matrix& m);  // {"rows", "cols", "data" row-major}
Matrix matrix_from_json(const json& j);
json affine_to_json(const AffineMatrixFn& f);
AffineMatrixFn affine_from_json(const json& j);

/// Stable text fingerprint of the engine configuration and plant dimensions;
/// a certificate is only accepted for a plant with the same fingerprint.
std::string plant_fingerprint(const engine::EngineConfig& cfg, const LPVDelayPlant& plant);

json certificate_to_json(const synthesis::SynthesisCertificate& cert,
                         const std::string& fingerprint);
synthesis::SynthesisCertificate certificate_from_json(const json& j);

/// Wall-clock seconds are left out unless asked for, so written files stay reproducible.
json trials_to_json(const std::vector<synthesis::TrialRecord>& trials, bool with_timing = false);
/// Plain-text table of lambda trials.
std::string trials_table(const std::vector<synthesis::TrialRecord>& trials);

json margin_to_json(const synthesis::MarginReport& r);
json metrics_to_json(const sim::Metrics& m, const sim::SimulationTrace& tr);

/// Writes text to a file, creating parent directories. Throws std::runtime_error.
void write_file(const std::filesystem::path& path, const std::string& text);

}  // namespace lpvsd::io
