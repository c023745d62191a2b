#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "lpvsd/baseline.hpp"
#include "lpvsd/engine_afr.hpp"
#include "lpvsd/hybrid_sim.hpp"
#include "lpvsd/io.hpp"
#include "lpvsd/realization.hpp"
#include "lpvsd/svg.hpp"
#include "lpvsd/synthesis.hpp"

namespace lpvsd::cli {

namespace fs = std::filesystem;
using io::json;

namespace {

struct Flags {
  std::string config;
  std::string out;
  std::string scenario;
  std::string certificate;
  std::string convention;
  std::optional<std::uint64_t> seed;
  int dense_grid = 0;
  bool no_plots = false;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Context {
  io::RunConfig cfg;
  fs::path out_dir;
  LPVDelayPlant plant;
  std::string fingerprint;
};

Context resolve(const Flags& f) {
  Context c;
  if (!f.config.empty()) c.cfg = io::load_config(f.config);
  if (!f.convention.empty()) {
    try {
      c.cfg.engine.convention = engine::parse_convention(f.convention);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  if (f.seed) {
    c.cfg.seed = *f.seed;
  }
  for (auto& s : c.cfg.scenarios) s.seed = c.cfg.seed;
  if (f.no_plots) c.cfg.plots = false;
  c.out_dir = f.out.empty() ? fs::path(c.cfg.output_dir) : fs::path(f.out);
  c.plant = engine::build_afr_plant(c.cfg.engine);
  c.fingerprint = io::plant_fingerprint(c.cfg.engine, c.plant);
  return c;
}

std::string available_scenarios(const io::RunConfig& cfg) {
  std::string s;
  for (const auto& n : sim::preset_names()) s += "  " + n + "\n";
  for (const auto& sc : cfg.scenarios) s += "  " + sc.name + " (config)\n";
  return s;
}

std::vector<sim::Scenario> pick_scenarios(const Context& c, const std::string& name,
                                          const std::string& fallback) {
  const std::string wanted = name.empty() ? fallback : name;
  std::vector<sim::Scenario> out;
  if (wanted.empty()) {
    if (!c.cfg.scenarios.empty()) return c.cfg.scenarios;
    for (const auto& n : sim::preset_names()) out.push_back(sim::preset(n));
  } else {
    for (const auto& sc : c.cfg.scenarios) {
      if (sc.name == wanted) out.push_back(sc);
    }
    if (out.empty()) {
      try {
        out.push_back(sim::preset(wanted));
      } catch (const std::out_of_range&) {
        throw UsageError("unknown scenario '" + wanted + "'; available:\n" +
                         available_scenarios(c.cfg));
      }
    }
  }
  for (auto& s : out) s.seed = c.cfg.seed;
  return out;
}

synthesis::SynthesisCertificate load_certificate(const Flags& f, const Context& c) {
  const fs::path path = f.certificate.empty() ? c.out_dir / "certificate.json" : fs::path(f.certificate);
  std::ifstream in(path);
  if (!in) throw io::ConfigError("cannot open certificate '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const json j = io::parse_json_text(ss.str(), path.string());
  if (j.value("fingerprint", std::string()) != c.fingerprint) {
    throw io::ConfigError("certificate '" + path.string() +
                          "' was synthesized for a different plant configuration");
  }
  return io::certificate_from_json(j);
}

std::string csv_text(const sim::SimulationTrace& tr) {
  std::ostringstream s;
  sim::write_csv(s, tr);
  return s.str();
}

std::optional<sim::Metrics> safe_metrics(const sim::SimulationTrace& tr, const sim::Scenario& sc) {
  if (tr.size() < 2) return std::nullopt;
  return sim::metrics(tr, sc);
}

json metrics_document(const sim::SimulationTrace& tr, const sim::Scenario& sc,
                      const std::optional<sim::Metrics>& m, double gamma) {
  json j = m ? io::metrics_to_json(*m, tr) : json{{"controller", tr.controller}, {"halted", tr.halted}};
  j["scenario"] = sc.name;
  j["seed"] = sc.seed;
  j["gamma"] = gamma;
  j["status"] = tr.halted ? "unstable" : "completed";
  return j;
}

std::vector<double> column(const std::vector<Vector>& v, int i) {
  std::vector<double> out(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = v[k][i];
  return out;
}

std::string trace_svg(const sim::SimulationTrace& tr, const sim::Scenario& sc) {
  std::vector<svg::Panel> panels;
  panels.push_back({"air-fuel ratio", "lambda",
                    {{"lambda_up", tr.t, tr.lambda_up, "#1f77b4"},
                     {"reference", tr.t, tr.r, "#d62728", true}}});
  panels.push_back({"control effort", "u", {{"u", tr.t, column(tr.u, 0), "#2ca02c"}}});
  panels.push_back({"catalyst oxygen storage deviation", "dm_O2",
                    {{"dm_O2", tr.t, tr.dm_o2, "#9467bd"}}});
  panels.push_back({"engine speed", "rpm", {{"omega", tr.t, tr.omega, "#8c564b"}}});
  return svg::render(sc.name + " (" + tr.controller + ")", "time [s]", panels);
}

std::string overlay_svg(const sim::SimulationTrace& a, const sim::SimulationTrace& b,
                        const sim::Scenario& sc) {
  std::vector<svg::Panel> panels;
  panels.push_back({"air-fuel ratio", "lambda",
                    {{a.controller, a.t, a.lambda_up, "#1f77b4"},
                     {b.controller, b.t, b.lambda_up, "#ff7f0e"},
                     {"reference", a.t, a.r, "#d62728", true}}});
  panels.push_back({"control effort", "u",
                    {{a.controller, a.t, column(a.u, 0), "#1f77b4"},
                     {b.controller, b.t, column(b.u, 0), "#ff7f0e"}}});
  panels.push_back({"catalyst oxygen storage deviation", "dm_O2",
                    {{a.controller, a.t, a.dm_o2, "#1f77b4"},
                     {b.controller, b.t, b.dm_o2, "#ff7f0e"}}});
  return svg::render(sc.name + ": proposed vs baseline", "time [s]", panels);
}

// ------------------------------------------------------------------ verbs

int cmd_validate(const Flags& f, std::ostream& out, std::ostream& err) {
  Context c = resolve(f);
  c.cfg.synthesis.validate();
  const auto report = validate_plant(c.plant);
  for (const auto& fnd : report.findings) err << "plant: " << fnd.message << "\n";
  int bad = static_cast<int>(report.findings.size());
  for (const auto& sc : pick_scenarios(c, f.scenario, "")) {
    try {
      sc.validate(c.plant);
    } catch (const std::invalid_argument& e) {
      err << "scenario '" << sc.name << "': " << e.what() << "\n";
      ++bad;
    }
  }
  if (bad > 0) return kUsage;
  out << "configuration ok (plant fingerprint " << c.fingerprint << ")\n";
  return kOk;
}

int cmd_synthesize(const Flags& f, std::ostream& out, std::ostream& err) {
  Context c = resolve(f);
  const auto& opts = c.cfg.synthesis;
  std::vector<int> dense = opts.verification_counts;
  if (f.dense_grid > 0) dense.assign(static_cast<std::size_t>(c.plant.n_params()), f.dense_grid);
  const Grid dense_grid = make_grid(c.plant.schedule, dense);

  out << "synthesizing over " << opts.lambda2.size() * opts.lambda3.size() * opts.lambda4.size()
      << " lambda tuples\n";
  const auto t0 = std::chrono::steady_clock::now();
  synthesis::SynthesisCertificate cert;
  try {
    cert = synthesis::synthesize(c.plant, opts);
  } catch (const synthesis::InfeasibleEverywhere& e) {
    const auto table = io::trials_table(e.trials());
    io::write_file(c.out_dir / "lambda_table.txt", table);
    io::write_file(c.out_dir / "synthesis_report.json",
                   json{{"feasible", false},
                        {"fingerprint", c.fingerprint},
                        {"trials", io::trials_to_json(e.trials())}}
                           .dump(2) + "\n");
    out << table;
    err << "synthesis infeasible for every lambda tuple\n";
    return kInfeasible;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto margin = synthesis::check_certificate(cert, c.plant, dense_grid);

  const auto table = io::trials_table(cert.trials);
  io::write_file(c.out_dir / "certificate.json", io::certificate_to_json(cert, c.fingerprint).dump(2) + "\n");
  io::write_file(c.out_dir / "lambda_table.txt", table);
  io::write_file(c.out_dir / "synthesis_report.json",
                 json{{"feasible", true},
                      {"verified", margin.pass},
                      {"gamma", cert.gamma},
                      {"lambda", {cert.lambda.l2, cert.lambda.l3, cert.lambda.l4, cert.lambda.l5}},
                      {"fingerprint", c.fingerprint},
                      {"margin", io::margin_to_json(margin)},
                      {"trials", io::trials_to_json(cert.trials)}}
                         .dump(2) + "\n");

  out << table;
  char line[256];
  std::snprintf(line, sizeof line,
                "gamma = %.6g at (lambda2, lambda3, lambda4) = (%g, %g, %g); %zu trials in %.1f s\n",
                cert.gamma, cert.lambda.l2, cert.lambda.l3, cert.lambda.l4, cert.trials.size(),
                secs);
  out << line;
  std::snprintf(line, sizeof line,
                "dense grid (%zu points): max LMI eigenvalue %.3e, min eig P %.3e, min eig V %.3e -> %s\n",
                margin.points_checked, margin.max_lmi_eigenvalue, margin.min_P_eigenvalue,
                margin.min_V_eigenvalue, margin.pass ? "pass" : "FAIL");
  out << line;
  out << "wrote " << (c.out_dir / "certificate.json").string() << "\n";
  if (!margin.pass) {
    err << "certificate failed dense-grid verification\n";
    return kInfeasible;
  }
  return kOk;
}

struct Branch {
  sim::SimulationTrace trace;
  std::optional<sim::Metrics> metrics;
};

int cmd_simulate(const Flags& f, std::ostream& out, std::ostream& err) {
  Context c = resolve(f);
  const auto scenarios = pick_scenarios(c, f.scenario, "");
  for (const auto& sc : scenarios) sc.validate(c.plant);
  const auto cert = load_certificate(f, c);
  const auto ctrl = std::make_shared<const realization::ContinuousController>(cert, c.plant);

  std::vector<Branch> results(scenarios.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < static_cast<long>(scenarios.size()); ++i) {
    sim::ExactDigitalController dc(ctrl);
    auto& r = results[static_cast<std::size_t>(i)];
    r.trace = sim::simulate(scenarios[static_cast<std::size_t>(i)], c.plant, dc);
    r.metrics = safe_metrics(r.trace, scenarios[static_cast<std::size_t>(i)]);
  }

  bool halted = false;
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    const auto& sc = scenarios[i];
    const auto& r = results[i];
    io::write_file(c.out_dir / (sc.name + ".trace.csv"), csv_text(r.trace));
    io::write_file(c.out_dir / (sc.name + ".metrics.json"),
                   metrics_document(r.trace, sc, r.metrics, cert.gamma).dump(2) + "\n");
    if (c.cfg.plots) io::write_file(c.out_dir / (sc.name + ".svg"), trace_svg(r.trace, sc));
    out << sc.name << ": ";
    if (r.trace.halted) {
      halted = true;
      out << "HALTED at t=" << r.trace.halt_time << " (" << r.trace.halt_reason << ")\n";
      continue;
    }
    double worst_sse = 0.0;
    for (const auto& s : r.metrics->segments) worst_sse = std::max(worst_sse, std::abs(s.steady_state_error));
    char line[256];
    std::snprintf(line, sizeof line, "max |SSE| %.3g, L2 ratio %s, max |dm_O2| %.3g\n", worst_sse,
                  r.metrics->l2_gain ? std::to_string(*r.metrics->l2_gain).c_str() : "undefined",
                  r.metrics->max_abs_dm_o2);
    out << line;
  }
  if (halted) {
    err << "simulation halted on instability\n";
    return kHalted;
  }
  return kOk;
}

json delta_rows(const std::optional<sim::Metrics>& a, const std::optional<sim::Metrics>& b) {
  json rows = json::array();
  auto add = [&](const std::string& name, std::optional<double> x, std::optional<double> y) {
    json row = {{"metric", name},
                {"proposed", x ? json(*x) : json(nullptr)},
                {"baseline", y ? json(*y) : json(nullptr)}};
    row["delta"] = (x && y) ? json(*y - *x) : json(nullptr);
    rows.push_back(row);
  };
  auto get = [](const std::optional<sim::Metrics>& m, auto fn) -> std::optional<double> {
    if (!m) return std::nullopt;
    return fn(*m);
  };
  const std::size_t segs = std::max(a ? a->segments.size() : 0, b ? b->segments.size() : 0);
  for (std::size_t i = 0; i < segs; ++i) {
    auto seg = [&](const std::optional<sim::Metrics>& m) -> const sim::StepMetrics* {
      return (m && i < m->segments.size()) ? &m->segments[i] : nullptr;
    };
    const std::string p = "segment " + std::to_string(i + 1) + " ";
    auto f = [&](auto field) {
      return std::pair{seg(a) ? field(*seg(a)) : std::nullopt, seg(b) ? field(*seg(b)) : std::nullopt};
    };
    auto [o1, o2] = f([](const sim::StepMetrics& s) -> std::optional<double> { return s.overshoot_pct; });
    add(p + "overshoot_pct", o1, o2);
    auto [s1, s2] = f([](const sim::StepMetrics& s) { return s.settling_time; });
    add(p + "settling_time", s1, s2);
    auto [e1, e2] = f([](const sim::StepMetrics& s) -> std::optional<double> { return s.steady_state_error; });
    add(p + "steady_state_error", e1, e2);
  }
  add("l2_gain", get(a, [](const sim::Metrics& m) { return m.l2_gain; }),
      get(b, [](const sim::Metrics& m) { return m.l2_gain; }));
  add("z_norm", get(a, [](const sim::Metrics& m) -> std::optional<double> { return m.z_norm; }),
      get(b, [](const sim::Metrics& m) -> std::optional<double> { return m.z_norm; }));
  add("max_abs_dm_o2", get(a, [](const sim::Metrics& m) -> std::optional<double> { return m.max_abs_dm_o2; }),
      get(b, [](const sim::Metrics& m) -> std::optional<double> { return m.max_abs_dm_o2; }));
  add("final_abs_dm_o2", get(a, [](const sim::Metrics& m) -> std::optional<double> { return m.final_abs_dm_o2; }),
      get(b, [](const sim::Metrics& m) -> std::optional<double> { return m.final_abs_dm_o2; }));
  return rows;
}

std::string delta_table(const json& rows, const sim::SimulationTrace& a,
                        const sim::SimulationTrace& b) {
  std::ostringstream s;
  char line[200];
  auto cell = [](const json& v) {
    char buf[32];
    if (v.is_null()) return std::string("-");
    std::snprintf(buf, sizeof buf, "%.6g", v.get<double>());
    return std::string(buf);
  };
  std::snprintf(line, sizeof line, "%-32s %14s %14s %14s\n", "metric", "proposed", "baseline",
                "delta");
  s << line;
  std::snprintf(line, sizeof line, "%-32s %14s %14s %14s\n", "status",
                a.halted ? "unstable" : "completed", b.halted ? "unstable" : "completed", "");
  s << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-32s %14s %14s %14s\n",
                  r["metric"].get<std::string>().c_str(), cell(r["proposed"]).c_str(),
                  cell(r["baseline"]).c_str(), cell(r["delta"]).c_str());
    s << line;
  }
  return s.str();
}

int cmd_compare(const Flags& f, std::ostream& out, std::ostream& err) {
  Context c = resolve(f);
  const auto scenarios = pick_scenarios(c, f.scenario, "tracking-no-disturbance");
  for (const auto& sc : scenarios) sc.validate(c.plant);
  const auto cert = load_certificate(f, c);
  const auto ctrl = std::make_shared<const realization::ContinuousController>(cert, c.plant);

  bool proposed_halted = false;
  for (const auto& sc : scenarios) {
    Branch prop, base;
#pragma omp parallel sections
    {
#pragma omp section
      {
        sim::ExactDigitalController dc(ctrl);
        prop.trace = sim::simulate(sc, c.plant, dc);
        prop.metrics = safe_metrics(prop.trace, sc);
      }
#pragma omp section
      {
        baseline::TustinController tc(ctrl);
        base.trace = sim::simulate(sc, c.plant, tc);
        base.metrics = safe_metrics(base.trace, sc);
      }
    }
    const json rows = delta_rows(prop.metrics, base.metrics);
    const std::string table = delta_table(rows, prop.trace, base.trace);
    const std::string stem = sc.name;
    io::write_file(c.out_dir / (stem + ".proposed.trace.csv"), csv_text(prop.trace));
    io::write_file(c.out_dir / (stem + ".baseline.trace.csv"), csv_text(base.trace));
    io::write_file(c.out_dir / (stem + ".compare.json"),
                   json{{"scenario", sc.name},
                        {"seed", sc.seed},
                        {"gamma", cert.gamma},
                        {"proposed", metrics_document(prop.trace, sc, prop.metrics, cert.gamma)},
                        {"baseline", metrics_document(base.trace, sc, base.metrics, cert.gamma)},
                        {"delta", rows}}
                           .dump(2) + "\n");
    io::write_file(c.out_dir / (stem + ".compare.txt"), table);
    io::write_file(c.out_dir / (stem + ".compare.svg"), overlay_svg(prop.trace, base.trace, sc));
    out << sc.name << "\n" << table;
    proposed_halted = proposed_halted || prop.trace.halted;
  }
  if (proposed_halted) {
    err << "proposed controller halted on instability\n";
    return kHalted;
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sampled-data gain-scheduled controller synthesis for delayed LPV plants", "lpvsd"};
  app.require_subcommand(1);
  Flags f;

  auto common = [&](CLI::App* sub, bool certificate) {
    sub->add_option("--config", f.config, "JSON run configuration")->envname("LPVSD_CONFIG");
    sub->add_option("--out", f.out, "output directory")->envname("LPVSD_OUT");
    sub->add_option("--seed", f.seed, "scenario seed recorded in the outputs")->envname("LPVSD_SEED");
    sub->add_option("--convention", f.convention, "sampling law: literal-4pi | physical-120")
        ->envname("LPVSD_CONVENTION");
    if (certificate) {
      sub->add_option("--certificate", f.certificate, "certificate JSON (default OUT/certificate.json)")
          ->envname("LPVSD_CERTIFICATE");
    }
  };

  auto* syn = app.add_subcommand("synthesize", "solve the lambda search and verify the certificate");
  common(syn, false);
  syn->add_option("--dense-grid", f.dense_grid, "verification grid points per axis")
      ->envname("LPVSD_DENSE_GRID")
      ->check(CLI::Range(2, 100000));

  auto* simc = app.add_subcommand("simulate", "simulate scenarios with the certified controller");
  common(simc, true);
  simc->add_option("--scenario", f.scenario, "scenario name")->envname("LPVSD_SCENARIO");
  simc->add_flag("--no-plots", f.no_plots, "skip SVG output");

  auto* cmp = app.add_subcommand("compare", "run the proposed and the baseline controller side by side");
  common(cmp, true);
  cmp->add_option("--scenario", f.scenario, "scenario name")->envname("LPVSD_SCENARIO");

  auto* val = app.add_subcommand("validate", "check a configuration without solving");
  common(val, false);
  val->add_option("--scenario", f.scenario, "scenario name")->envname("LPVSD_SCENARIO");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (syn->parsed()) return cmd_synthesize(f, out, err);
    if (simc->parsed()) return cmd_simulate(f, out, err);
    if (cmp->parsed()) return cmd_compare(f, out, err);
    if (val->parsed()) return cmd_validate(f, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const io::ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const realization::FactorizationError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}

}  // namespace lpvsd::cli
