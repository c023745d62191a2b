#include "lpvsd/io.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace lpvsd::io {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

synthesis::Dependence parse_dependence(const std::string& s, const std::string& where) {
  if (s == "constant") return synthesis::Dependence::constant;
  if (s == "affine") return synthesis::Dependence::affine;
  throw ConfigError(where + ": dependence must be 'constant' or 'affine'");
}

std::string dependence_name(synthesis::Dependence d) {
  return d == synthesis::Dependence::constant ? "constant" : "affine";
}

sdp::Status parse_status(const std::string& s) {
  for (auto st : {sdp::Status::optimal, sdp::Status::feasible, sdp::Status::infeasible,
                  sdp::Status::numerical_failure}) {
    if (sdp::to_string(st) == s) return st;
  }
  throw ConfigError("unknown solver status '" + s + "'");
}

// Field table for the dependence block; keeps reading and writing in step.
std::vector<std::pair<const char*, synthesis::Dependence synthesis::VariableDependence::*>>
dependence_fields() {
  using V = synthesis::VariableDependence;
  return {{"P", &V::P},         {"X", &V::X},
          {"Y", &V::Y},         {"A_hat", &V::A_hat},
          {"A_tau_hat", &V::A_tau_hat}, {"A_samp_hat", &V::A_samp_hat},
          {"B_hat", &V::B_hat}, {"C_hat", &V::C_hat},
          {"D_K", &V::D_K}};
}

json engine_to_json(const engine::EngineConfig& e) {
  return {{"cylinders", e.cylinders},
          {"omega_gain", e.omega_gain},
          {"lambda_pole", e.lambda_pole},
          {"eps1", e.eps1},
          {"eps2", e.eps2},
          {"weight_tracking", e.weight_tracking},
          {"weight_oxygen", e.weight_oxygen},
          {"weight_effort", e.weight_effort},
          {"speed_min", e.speed_min},
          {"speed_max", e.speed_max},
          {"speed_rate", e.speed_rate},
          {"convention", engine::to_string(e.convention)}};
}

engine::EngineConfig engine_from_json(const json& j) {
  const std::string w = "engine";
  reject_unknown(j,
                 {"cylinders", "omega_gain", "lambda_pole", "eps1", "eps2", "weight_tracking",
                  "weight_oxygen", "weight_effort", "speed_min", "speed_max", "speed_rate",
                  "convention"},
                 w);
  engine::EngineConfig e;
  read(j, "cylinders", e.cylinders, w);
  read(j, "omega_gain", e.omega_gain, w);
  read(j, "lambda_pole", e.lambda_pole, w);
  read(j, "eps1", e.eps1, w);
  read(j, "eps2", e.eps2, w);
  read(j, "weight_tracking", e.weight_tracking, w);
  read(j, "weight_oxygen", e.weight_oxygen, w);
  read(j, "weight_effort", e.weight_effort, w);
  read(j, "speed_min", e.speed_min, w);
  read(j, "speed_max", e.speed_max, w);
  read(j, "speed_rate", e.speed_rate, w);
  std::string conv = engine::to_string(e.convention);
  read(j, "convention", conv, w);
  try {
    e.convention = engine::parse_convention(conv);
    e.validate();
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(w + ": " + ex.what());
  }
  return e;
}

json synthesis_to_json(const synthesis::SynthesisOptions& o) {
  json dep = json::object();
  for (const auto& [name, field] : dependence_fields()) {
    dep[name] = dependence_name(o.dependence.*field);
  }
  return {{"grid_counts", o.grid_counts},
          {"lambda2", o.lambda2},
          {"lambda3", o.lambda3},
          {"lambda4", o.lambda4},
          {"lambda5", o.lambda5},
          {"margin", o.margin},
          {"verification_counts", o.verification_counts},
          {"dependence", dep},
          {"solver",
           {{"feasibility_tol", o.solver.tol.feas},
            {"gap_tol", o.solver.tol.gap},
            {"max_iterations", o.solver.tol.max_iterations},
            {"kernel", o.solver.kernel == sdp::Kernel::parallel ? "parallel" : "reference"}}}};
}

synthesis::SynthesisOptions synthesis_from_json(const json& j) {
  const std::string w = "synthesis";
  reject_unknown(j,
                 {"grid_counts", "lambda2", "lambda3", "lambda4", "lambda5", "margin",
                  "verification_counts", "dependence", "solver"},
                 w);
  synthesis::SynthesisOptions o;
  read(j, "grid_counts", o.grid_counts, w);
  read(j, "lambda2", o.lambda2, w);
  read(j, "lambda3", o.lambda3, w);
  read(j, "lambda4", o.lambda4, w);
  read(j, "lambda5", o.lambda5, w);
  read(j, "margin", o.margin, w);
  read(j, "verification_counts", o.verification_counts, w);
  if (auto it = j.find("dependence"); it != j.end()) {
    std::set<std::string> names;
    for (const auto& [name, _] : dependence_fields()) names.insert(name);
    reject_unknown(*it, names, w + ".dependence");
    for (const auto& [name, field] : dependence_fields()) {
      if (auto f = it->find(name); f != it->end()) {
        if (!f->is_string()) throw ConfigError(w + ".dependence." + name + ": expected a string");
        o.dependence.*field = parse_dependence(f->get<std::string>(), w + ".dependence." + name);
      }
    }
  }
  if (auto it = j.find("solver"); it != j.end()) {
    const std::string ws = w + ".solver";
    reject_unknown(*it, {"feasibility_tol", "gap_tol", "max_iterations", "kernel"}, ws);
    read(*it, "feasibility_tol", o.solver.tol.feas, ws);
    read(*it, "gap_tol", o.solver.tol.gap, ws);
    read(*it, "max_iterations", o.solver.tol.max_iterations, ws);
    std::string kernel = "parallel";
    read(*it, "kernel", kernel, ws);
    if (kernel == "parallel") o.solver.kernel = sdp::Kernel::parallel;
    else if (kernel == "reference") o.solver.kernel = sdp::Kernel::reference;
    else throw ConfigError(ws + ".kernel: expected 'parallel' or 'reference'");
  }
  try {
    o.validate();
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(w + ": " + ex.what());
  }
  return o;
}

json signal_to_json(const sim::SignalSpec& s) {
  json bp = json::array();
  for (const auto& [t, v] : s.breakpoints) bp.push_back({t, v});
  json out = {{"kind", sim::to_string(s.kind)}, {"breakpoints", bp}};
  if (s.kind == sim::SignalSpec::Kind::pulse_train) out["width"] = s.width;
  return out;
}

sim::SignalSpec signal_from_json(const json& j, const std::string& where) {
  if (j.is_number()) return sim::SignalSpec::constant(j.get<double>());
  reject_unknown(j, {"kind", "breakpoints", "width"}, where);
  sim::SignalSpec s;
  std::string kind = "constant";
  read(j, "kind", kind, where);
  try {
    s.kind = sim::parse_signal_kind(kind);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
  std::vector<std::pair<double, double>> bp;
  if (auto it = j.find("breakpoints"); it != j.end()) {
    if (!it->is_array()) throw ConfigError(where + ".breakpoints: expected an array");
    for (const auto& p : *it) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
        throw ConfigError(where + ".breakpoints: entries must be [time, value]");
      }
      bp.emplace_back(p[0].get<double>(), p[1].get<double>());
    }
    s.breakpoints = std::move(bp);
  }
  read(j, "width", s.width, where);
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return s;
}

}  // namespace

json scenario_to_json(const sim::Scenario& s) {
  return {{"name", s.name},
          {"duration", s.duration},
          {"speed", signal_to_json(s.speed)},
          {"reference", signal_to_json(s.reference)},
          {"disturbance", signal_to_json(s.disturbance)},
          {"step", s.step},
          {"operating_lambda", s.operating_lambda},
          {"interpolation", s.interpolation == sim::Interpolation::linear ? "linear" : "cubic"},
          {"seed", s.seed}};
}

sim::Scenario scenario_from_json(const json& j) {
  if (j.is_string()) {
    try {
      return sim::preset(j.get<std::string>());
    } catch (const std::out_of_range& e) {
      throw ConfigError(std::string("scenarios: ") + e.what());
    }
  }
  const std::string w = "scenario";
  reject_unknown(j,
                 {"name", "preset", "duration", "speed", "reference", "disturbance", "step",
                  "operating_lambda", "interpolation", "seed"},
                 w);
  sim::Scenario s;
  if (auto it = j.find("preset"); it != j.end()) {
    try {
      s = sim::preset(it->get<std::string>());
    } catch (const std::exception& e) {
      throw ConfigError(w + ".preset: " + e.what());
    }
  }
  read(j, "name", s.name, w);
  if (s.name.empty()) throw ConfigError(w + ": a name is required");
  const std::string ws = "scenario '" + s.name + "'";
  read(j, "duration", s.duration, ws);
  if (auto it = j.find("speed"); it != j.end()) s.speed = signal_from_json(*it, ws + ".speed");
  if (auto it = j.find("reference"); it != j.end()) {
    s.reference = signal_from_json(*it, ws + ".reference");
  }
  if (auto it = j.find("disturbance"); it != j.end()) {
    s.disturbance = signal_from_json(*it, ws + ".disturbance");
  }
  read(j, "step", s.step, ws);
  read(j, "operating_lambda", s.operating_lambda, ws);
  read(j, "seed", s.seed, ws);
  std::string interp = s.interpolation == sim::Interpolation::linear ? "linear" : "cubic";
  read(j, "interpolation", interp, ws);
  if (interp == "linear") s.interpolation = sim::Interpolation::linear;
  else if (interp == "cubic") s.interpolation = sim::Interpolation::cubic;
  else throw ConfigError(ws + ".interpolation: expected 'linear' or 'cubic'");
  if (!(s.duration > 0.0)) throw ConfigError(ws + ": duration must be positive");
  return s;
}

RunConfig config_from_json(const json& j) {
  reject_unknown(j, {"engine", "synthesis", "scenarios", "output_dir", "plots", "seed"}, "config");
  RunConfig c;
  if (auto it = j.find("engine"); it != j.end()) c.engine = engine_from_json(*it);
  if (auto it = j.find("synthesis"); it != j.end()) c.synthesis = synthesis_from_json(*it);
  if (auto it = j.find("scenarios"); it != j.end()) {
    if (!it->is_array()) throw ConfigError("scenarios: expected an array");
    for (const auto& s : *it) c.scenarios.push_back(scenario_from_json(s));
  }
  read(j, "output_dir", c.output_dir, "config");
  read(j, "plots", c.plots, "config");
  read(j, "seed", c.seed, "config");
  return c;
}

json config_to_json(const RunConfig& c) {
  json sc = json::array();
  for (const auto& s : c.scenarios) sc.push_back(scenario_to_json(s));
  return {{"engine", engine_to_json(c.engine)},
          {"synthesis", synthesis_to_json(c.synthesis)},
          {"scenarios", sc},
          {"output_dir", c.output_dir},
          {"plots", c.plots},
          {"seed", c.seed}};
}

json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // e.byte counts the offending character itself; a token cut short by a
    // newline belongs to the line before it.
    std::size_t line = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') ++line;
    }
    std::string msg = e.what();
    const auto col = msg.find("column");
    if (col != std::string::npos && msg.find(": ", col) != std::string::npos) {
      msg = msg.substr(msg.find(": ", col) + 2);
    }
    throw ConfigError(origin + ":" + std::to_string(line) + ": " + msg);
  }
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(parse_json_text(ss.str(), path.string()));
}

json matrix_to_json(const Matrix& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index k = 0; k < m.cols(); ++k) data.push_back(m(i, k));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw ConfigError("matrix data does not match its shape");
  }
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = data[static_cast<std::size_t>(i * cols + k)];
  }
  return m;
}

json affine_to_json(const AffineMatrixFn& f) {
  json slopes = json::array();
  for (const auto& s : f.slopes()) slopes.push_back(matrix_to_json(s));
  return {{"base", matrix_to_json(f.base())}, {"slopes", slopes}};
}

AffineMatrixFn affine_from_json(const json& j) {
  std::vector<Matrix> slopes;
  for (const auto& s : j.at("slopes")) slopes.push_back(matrix_from_json(s));
  return AffineMatrixFn(matrix_from_json(j.at("base")), std::move(slopes));
}

std::string plant_fingerprint(const engine::EngineConfig& cfg, const LPVDelayPlant& plant) {
  std::ostringstream s;
  s << "cyl=" << cfg.cylinders << ";Omega=" << fmt(cfg.omega_gain)
    << ";Lambda=" << fmt(cfg.lambda_pole) << ";eps1=" << fmt(cfg.eps1)
    << ";eps2=" << fmt(cfg.eps2) << ";phi=" << fmt(cfg.weight_tracking)
    << ";psi=" << fmt(cfg.weight_oxygen) << ";xi=" << fmt(cfg.weight_effort)
    << ";speed=[" << fmt(cfg.speed_min) << "," << fmt(cfg.speed_max) << "]"
    << ";rate=" << fmt(cfg.speed_rate) << ";conv=" << engine::to_string(cfg.convention)
    << ";dims=" << plant.n << "," << plant.n_w << "," << plant.n_u << "," << plant.n_z << ","
    << plant.n_y << "," << plant.n_params();
  // FNV-1a keeps the stored token short.
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s.str()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json trials_to_json(const std::vector<synthesis::TrialRecord>& trials, bool with_timing) {
  json out = json::array();
  for (const auto& t : trials) {
    out.push_back({{"lambda2", t.lambda.l2},
                   {"lambda3", t.lambda.l3},
                   {"lambda4", t.lambda.l4},
                   {"lambda5", t.lambda.l5},
                   {"gamma", t.solver_feasible() ? json(t.gamma) : json(nullptr)},
                   {"status", sdp::to_string(t.status)},
                   {"iterations", t.iterations},
                   {"max_residual", t.max_residual}});
    if (with_timing) out.back()["seconds"] = t.seconds;
  }
  return out;
}

std::string trials_table(const std::vector<synthesis::TrialRecord>& trials) {
  std::ostringstream s;
  char line[160];
  std::snprintf(line, sizeof line, "%8s %8s %8s %12s %-18s %5s\n", "lambda2", "lambda3",
                "lambda4", "gamma", "status", "iter");
  s << line;
  for (const auto& t : trials) {
    char g[32];
    if (t.solver_feasible()) std::snprintf(g, sizeof g, "%12.6g", t.gamma);
    else std::snprintf(g, sizeof g, "%12s", "-");
    std::snprintf(line, sizeof line, "%8g %8g %8g %s %-18s %5d\n", t.lambda.l2, t.lambda.l3,
                  t.lambda.l4, g, sdp::to_string(t.status).c_str(), t.iterations);
    s << line;
  }
  return s.str();
}

json certificate_to_json(const synthesis::SynthesisCertificate& c, const std::string& fingerprint) {
  json grid_points = json::array();
  for (const auto& p : c.grid.points) {
    grid_points.push_back(std::vector<double>(p.data(), p.data() + p.size()));
  }
  json vars = {{"P", affine_to_json(c.P)},
               {"X", affine_to_json(c.X)},
               {"Y", affine_to_json(c.Y)},
               {"Q_tau", matrix_to_json(c.Q_tau)},
               {"Q_samp", matrix_to_json(c.Q_samp)},
               {"R_tau", matrix_to_json(c.R_tau)},
               {"R_samp", matrix_to_json(c.R_samp)},
               {"T_tau", matrix_to_json(c.T_tau)},
               {"A_hat", affine_to_json(c.A_hat)},
               {"A_tau_hat", affine_to_json(c.A_tau_hat)},
               {"A_samp_hat", affine_to_json(c.A_samp_hat)},
               {"B_hat", affine_to_json(c.B_hat)},
               {"C_hat", affine_to_json(c.C_hat)},
               {"D_K", affine_to_json(c.D_K)}};
  return {{"format", "lpvsd-certificate"},
          {"version", 1},
          {"fingerprint", fingerprint},
          {"dimensions",
           {{"n", c.n}, {"n_w", c.n_w}, {"n_u", c.n_u}, {"n_z", c.n_z}, {"n_y", c.n_y},
            {"n_params", c.n_params}}},
          {"gamma", c.gamma},
          {"lambda",
           {{"lambda2", c.lambda.l2},
            {"lambda3", c.lambda.l3},
            {"lambda4", c.lambda.l4},
            {"lambda5", c.lambda.l5}}},
          {"horizons", {{"delay", c.horizons.delay}, {"sampling", c.horizons.sampling}}},
          {"variables", vars},
          {"grid", {{"counts", c.grid.counts}, {"points", grid_points}}},
          {"options", synthesis_to_json(c.options)},
          {"trials", trials_to_json(c.trials)}};
}

synthesis::SynthesisCertificate certificate_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "lpvsd-certificate") {
      throw ConfigError("not a certificate document");
    }
    synthesis::SynthesisCertificate c;
    const auto& d = j.at("dimensions");
    c.n = d.at("n");
    c.n_w = d.at("n_w");
    c.n_u = d.at("n_u");
    c.n_z = d.at("n_z");
    c.n_y = d.at("n_y");
    c.n_params = d.at("n_params");
    c.gamma = j.at("gamma");
    const auto& l = j.at("lambda");
    c.lambda = {l.at("lambda2"), l.at("lambda3"), l.at("lambda4"), l.at("lambda5")};
    c.horizons = {j.at("horizons").at("delay"), j.at("horizons").at("sampling")};
    const auto& v = j.at("variables");
    c.P = affine_from_json(v.at("P"));
    c.X = affine_from_json(v.at("X"));
    c.Y = affine_from_json(v.at("Y"));
    c.Q_tau = matrix_from_json(v.at("Q_tau"));
    c.Q_samp = matrix_from_json(v.at("Q_samp"));
    c.R_tau = matrix_from_json(v.at("R_tau"));
    c.R_samp = matrix_from_json(v.at("R_samp"));
    c.T_tau = matrix_from_json(v.at("T_tau"));
    c.A_hat = affine_from_json(v.at("A_hat"));
    c.A_tau_hat = affine_from_json(v.at("A_tau_hat"));
    c.A_samp_hat = affine_from_json(v.at("A_samp_hat"));
    c.B_hat = affine_from_json(v.at("B_hat"));
    c.C_hat = affine_from_json(v.at("C_hat"));
    c.D_K = affine_from_json(v.at("D_K"));
    c.grid.counts = j.at("grid").at("counts").get<std::vector<int>>();
    for (const auto& p : j.at("grid").at("points")) {
      auto vals = p.get<std::vector<double>>();
      c.grid.points.push_back(Eigen::Map<const Vector>(vals.data(), static_cast<Eigen::Index>(vals.size())));
    }
    c.options = synthesis_from_json(j.at("options"));
    for (const auto& t : j.at("trials")) {
      synthesis::TrialRecord r;
      r.lambda = {t.at("lambda2"), t.at("lambda3"), t.at("lambda4"), t.at("lambda5")};
      r.status = parse_status(t.at("status").get<std::string>());
      r.gamma = t.at("gamma").is_null() ? 0.0 : t.at("gamma").get<double>();
      r.iterations = t.at("iterations");
      r.max_residual = t.at("max_residual");
      r.seconds = t.value("seconds", 0.0);
      c.trials.push_back(r);
    }
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed certificate: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("malformed certificate: ") + e.what());
  }
}

json margin_to_json(const synthesis::MarginReport& r) {
  return {{"max_lmi_eigenvalue", r.max_lmi_eigenvalue},
          {"min_P_eigenvalue", r.min_P_eigenvalue},
          {"min_V_eigenvalue", r.min_V_eigenvalue},
          {"min_constant_eigenvalue", r.min_constant_eigenvalue},
          {"worst_point", std::vector<double>(r.worst_point.data(),
                                              r.worst_point.data() + r.worst_point.size())},
          {"points_checked", r.points_checked},
          {"lmis_checked", r.lmis_checked},
          {"pass", r.pass}};
}

json metrics_to_json(const sim::Metrics& m, const sim::SimulationTrace& tr) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json segs = json::array();
  for (const auto& s : m.segments) {
    segs.push_back({{"t0", s.window.t0},
                    {"t1", s.window.t1},
                    {"reference", s.reference},
                    {"overshoot_pct", s.overshoot_pct},
                    {"settling_time", opt(s.settling_time)},
                    {"steady_state_error", s.steady_state_error}});
  }
  json rec = json::array();
  for (const auto& r : m.dm_o2_recovery) rec.push_back(opt(r));
  return {{"controller", tr.controller},
          {"halted", tr.halted},
          {"halt_time", tr.halted ? json(tr.halt_time) : json(nullptr)},
          {"halt_reason", tr.halt_reason},
          {"rows", tr.size()},
          {"samples", tr.samples},
          {"clamped_steps", tr.clamped_steps},
          {"warmup_steps", tr.warmup_steps},
          {"window", {m.window.t0, m.window.t1}},
          {"segments", segs},
          {"l2",
           {{"z_norm", m.z_norm},
            {"w_norm", m.w_norm},
            {"gain", opt(m.l2_gain)},
            {"undefined", !m.l2_gain.has_value()}}},
          {"dm_o2",
           {{"max_abs", m.max_abs_dm_o2},
            {"final_abs", m.final_abs_dm_o2},
            {"tolerance", m.dm_o2_tolerance},
            {"recovery_after_disturbance", rec}}}};
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace lpvsd::io
