#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "fsoacq/fsoacq.hpp"

namespace fsoacq::cli {

namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------- schema

const std::map<std::string, std::set<std::string>>& section_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"geometry", {"beam_radius", "dwell_time", "sigma", "region_radius"}},
      {"channel",
       {"signal_count", "noise_count", "signal_power", "noise_intensity", "detector_area", "obs_interval"}},
      {"detector", {"p_fa_target"}},
      {"location", {"truncated"}},
      {"scheme", {"type", "n", "radii", "objective", "tau", "sigma0"}},
      {"compare", {"n_values", "objective", "tau"}},
      {"waypoints", {"out_radius"}},
      {"mc",
       {"trials", "seed", "exact_shot_geometry", "photon_level", "location_mode", "reach_mode", "workers",
        "dump", "max_shots"}},
      {"ga",
       {"population_size", "generations", "tournament_size", "crossover_rate", "blend_alpha", "mutation_rate",
        "mutation_scale", "elite_count", "stall_generations", "seed"}},
  };
  return keys;
}

const std::set<std::string>& top_level_keys() {
  static const std::set<std::string> keys{"schema_version", "command", "description", "p_d", "taus",
                                          "sweep", "geometry", "channel", "detector", "location",
                                          "scheme", "compare", "waypoints", "mc", "ga"};
  return keys;
}

// Sweep variable -> config locations it overrides.
const std::map<std::string, std::vector<json::json_pointer>>& sweep_targets() {
  using P = json::json_pointer;
  static const std::map<std::string, std::vector<P>> targets{
      {"p_d", {P("/p_d")}},
      {"n", {P("/scheme/n")}},
      {"sigma0", {P("/scheme/sigma0")}},
      {"radii_mode", {P("/scheme/radii")}},
      {"objective", {P("/scheme/objective"), P("/compare/objective")}},
      {"tau", {P("/taus"), P("/scheme/tau"), P("/compare/tau")}},
      {"noise_count", {P("/channel/noise_count")}},
      {"signal_count", {P("/channel/signal_count")}},
      {"sigma", {P("/geometry/sigma")}},
      {"beam_radius", {P("/geometry/beam_radius")}},
      {"dwell_time", {P("/geometry/dwell_time")}},
      {"region_radius", {P("/geometry/region_radius")}},
      {"truncated", {P("/location/truncated")}},
  };
  return targets;
}

void merge_defaults(json& target, const json& defaults) {
  for (auto it = defaults.begin(); it != defaults.end(); ++it) {
    if (!target.contains(it.key())) target[it.key()] = it.value();
  }
}

double num(const json& cfg, const char* pointer) {
  const auto& v = cfg.at(json::json_pointer(pointer));
  if (!v.is_number()) throw ConfigError(std::string(pointer) + " must be a number");
  return v.get<double>();
}

std::int64_t integer(const json& cfg, const char* pointer) {
  const auto& v = cfg.at(json::json_pointer(pointer));
  if (!v.is_number_integer()) throw ConfigError(std::string(pointer) + " must be an integer");
  return v.get<std::int64_t>();
}

std::uint64_t seed_of(const json& cfg, const char* pointer) {
  const auto& v = cfg.at(json::json_pointer(pointer));
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
    throw ConfigError(std::string(pointer) + " must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

bool flag(const json& cfg, const char* pointer) {
  const auto& v = cfg.at(json::json_pointer(pointer));
  if (!v.is_boolean()) throw ConfigError(std::string(pointer) + " must be a boolean");
  return v.get<bool>();
}

std::string text(const json& cfg, const char* pointer) {
  const auto& v = cfg.at(json::json_pointer(pointer));
  if (!v.is_string()) throw ConfigError(std::string(pointer) + " must be a string");
  return v.get<std::string>();
}

std::size_t count_of(const json& cfg, const char* pointer) {
  const auto v = integer(cfg, pointer);
  if (v < 0) throw ConfigError(std::string(pointer) + " must be non-negative");
  return static_cast<std::size_t>(v);
}

ScanGeometry geometry_of(const json& cfg) {
  ScanGeometry g{num(cfg, "/geometry/beam_radius"), num(cfg, "/geometry/dwell_time"), num(cfg, "/geometry/sigma"),
                 num(cfg, "/geometry/region_radius")};
  g.validate();
  return g;
}

LocationModel location_of(const json& cfg, const ScanGeometry& g) {
  return LocationModel::from(g, flag(cfg, "/location/truncated"));
}

double p_d_of(const json& cfg) {
  const double p = num(cfg, "/p_d");
  if (!(p > 0.0 && p <= 1.0)) throw ConfigError("p_d must lie in (0, 1]");
  return p;
}

std::vector<double> taus_of(const json& cfg) {
  const auto& t = cfg.at("taus");
  std::vector<double> out;
  if (t.is_number()) {
    out.push_back(t.get<double>());
  } else if (t.is_array()) {
    for (const auto& v : t) {
      if (!v.is_number()) throw ConfigError("taus must be numbers");
      out.push_back(v.get<double>());
    }
  } else {
    throw ConfigError("taus must be a number or an array of numbers");
  }
  for (double tau : out) {
    if (!(tau >= 0.0)) throw ConfigError("taus must be non-negative");
  }
  return out;
}

ga::ObjectiveSpec objective_of(const json& cfg, const char* kind_ptr, const char* tau_ptr) {
  const auto kind = text(cfg, kind_ptr);
  ga::ObjectiveSpec spec;
  if (kind == "mean") {
    spec.kind = ga::Objective::mean;
  } else if (kind == "ccdf") {
    spec.kind = ga::Objective::ccdf;
  } else {
    throw ConfigError(std::string(kind_ptr) + " must be \"mean\" or \"ccdf\"");
  }
  spec.tau = num(cfg, tau_ptr);
  if (!(spec.tau >= 0.0)) throw ConfigError(std::string(tau_ptr) + " must be non-negative");
  return spec;
}

ga::GaConfig ga_of(const json& cfg) {
  ga::GaConfig c;
  c.population = count_of(cfg, "/ga/population_size");
  c.generations = count_of(cfg, "/ga/generations");
  c.tournament = count_of(cfg, "/ga/tournament_size");
  c.crossover_rate = num(cfg, "/ga/crossover_rate");
  c.blx_alpha = num(cfg, "/ga/blend_alpha");
  c.mutation_rate = num(cfg, "/ga/mutation_rate");
  c.mutation_scale = num(cfg, "/ga/mutation_scale");
  c.elites = count_of(cfg, "/ga/elite_count");
  c.stall_generations = count_of(cfg, "/ga/stall_generations");
  c.seed = seed_of(cfg, "/ga/seed");
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

json default_config(const std::string& command) {
  json d = {
      {"schema_version", kSchemaVersion},
      {"p_d", 0.05},
      {"taus", json::array({80.0})},
      {"geometry", {{"beam_radius", 0.2}, {"dwell_time", 1e-4}, {"sigma", 15.0}, {"region_radius", 50.0}}},
      {"location", {{"truncated", true}}},
      {"detector", {{"p_fa_target", 1e-12}}},
      {"mc",
       {{"trials", 100000},
        {"seed", 20260101},
        {"exact_shot_geometry", false},
        {"photon_level", false},
        {"location_mode", "fixed"},
        {"reach_mode", "continuous"},
        {"workers", 0},
        {"dump", false},
        {"max_shots", 1e9}}},
      {"ga",
       {{"population_size", 100},
        {"generations", 200},
        {"tournament_size", 3},
        {"crossover_rate", 0.9},
        {"blend_alpha", 0.5},
        {"mutation_rate", 0.1},
        {"mutation_scale", 0.05},
        {"elite_count", 2},
        {"stall_generations", 30},
        {"seed", 20260102}}},
  };
  if (command == "detect") {
    d["channel"] = {{"signal_count", 25.0}, {"noise_count", 13.0}};
  }
  if (command == "compare") {
    d["compare"] = {{"n_values", json::array({1, 2, 3, 4, 5, 6, 7})}, {"objective", "mean"}, {"tau", 80.0}};
  }
  if (command == "waypoints") d["waypoints"] = json::object();
  return d;
}

json default_scheme(const std::string& type) {
  if (type == "adaptive_spiral") {
    return {{"type", type}, {"n", 7}, {"radii", "uniform"}, {"objective", "mean"}, {"tau", 80.0}};
  }
  if (type == "shotgun") return {{"type", type}, {"sigma0", "optimize"}, {"objective", "mean"}, {"tau", 80.0}};
  throw ConfigError("scheme.type must be \"adaptive_spiral\" or \"shotgun\"");
}

void check_keys(const json& cfg) {
  if (!cfg.is_object()) throw ConfigError("config must be a JSON object");
  for (auto it = cfg.begin(); it != cfg.end(); ++it) {
    if (!top_level_keys().count(it.key())) throw ConfigError("unknown config key: " + it.key());
    const auto section = section_keys().find(it.key());
    if (section == section_keys().end()) continue;
    if (!it.value().is_object()) throw ConfigError("config section " + it.key() + " must be an object");
    for (auto jt = it.value().begin(); jt != it.value().end(); ++jt) {
      if (!section->second.count(jt.key())) throw ConfigError("unknown key " + it.key() + "." + jt.key());
    }
  }
}

// ---------------------------------------------------------------- sweeps

std::vector<json> sweep_values(const json& axis) {
  if (!axis.is_object() || !axis.contains("variable")) throw ConfigError("each sweep axis needs a variable");
  std::vector<json> values;
  if (axis.contains("values")) {
    if (!axis["values"].is_array() || axis["values"].empty()) throw ConfigError("sweep values must be a non-empty array");
    for (const auto& v : axis["values"]) values.push_back(v);
    return values;
  }
  if (!axis.contains("start") || !axis.contains("stop")) {
    throw ConfigError("sweep axis needs values or start/stop");
  }
  const double start = num(axis, "/start");
  const double stop = num(axis, "/stop");
  const bool integral = axis["start"].is_number_integer() && axis["stop"].is_number_integer();
  if (axis.contains("step")) {
    const double step = num(axis, "/step");
    if (!(step > 0.0) || stop < start) throw ConfigError("sweep step must be positive with stop >= start");
    const auto count = static_cast<std::int64_t>(std::floor((stop - start) / step + 1e-9)) + 1;
    if (count > 10'000'000) throw ConfigError("sweep too large");
    const bool int_step = integral && axis["step"].is_number_integer();
    for (std::int64_t i = 0; i < count; ++i) {
      if (int_step) {
        values.emplace_back(axis["start"].get<std::int64_t>() + i * axis["step"].get<std::int64_t>());
      } else {
        values.emplace_back(start + static_cast<double>(i) * step);
      }
    }
    return values;
  }
  if (axis.contains("steps")) {
    const auto steps = integer(axis, "/steps");
    if (steps < 1) throw ConfigError("sweep steps must be >= 1");
    for (std::int64_t i = 0; i < steps; ++i) {
      const double v = steps == 1 ? start : start + (stop - start) * static_cast<double>(i) / static_cast<double>(steps - 1);
      if (integral && (stop - start) == static_cast<double>(steps - 1)) {
        values.emplace_back(static_cast<std::int64_t>(std::llround(v)));
      } else {
        values.emplace_back(v);
      }
    }
    return values;
  }
  throw ConfigError("sweep axis needs values, step or steps");
}

// ---------------------------------------------------------------- rows

using Row = std::vector<std::pair<std::string, Cell>>;

Cell cell(double v) { return v; }
Cell cell(std::int64_t v) { return v; }
Cell cell(std::size_t v) { return static_cast<std::int64_t>(v); }
Cell cell(std::string v) { return v; }

std::string join_radii(std::span<const double> radii) {
  std::string out;
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (i) out += ';';
    out += format_double(radii[i]);
  }
  return out;
}

Partition partition_of(const json& cfg, const ScanGeometry& g, double p_d, std::string& mode,
                       std::size_t* evaluations = nullptr) {
  const auto n = count_of(cfg, "/scheme/n");
  if (n < 1) throw ConfigError("scheme.n must be >= 1");
  const auto& radii = cfg.at("/scheme/radii"_json_pointer);
  if (radii.is_array()) {
    mode = "explicit";
    std::vector<double> r;
    for (const auto& v : radii) {
      if (!v.is_number()) throw ConfigError("scheme.radii entries must be numbers");
      r.push_back(v.get<double>());
    }
    if (r.size() != n) throw ConfigError("scheme.radii must list n radii ending at the region radius");
    try {
      return Partition(std::move(r), g);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (!radii.is_string()) throw ConfigError("scheme.radii must be \"uniform\", \"optimize\" or an array");
  mode = radii.get<std::string>();
  if (mode == "uniform") return Partition::uniform(n, g);
  if (mode == "optimize") {
    const auto spec = objective_of(cfg, "/scheme/objective", "/scheme/tau");
    auto result = ga::optimize(n, spec, g, p_d, ga_of(cfg), flag(cfg, "/location/truncated"));
    if (evaluations) *evaluations = result.evaluations;
    return result.partition;
  }
  throw ConfigError("scheme.radii must be \"uniform\", \"optimize\" or an array");
}

void require_scheme(const json& cfg, const std::string& type) {
  if (text(cfg, "/scheme/type") != type) throw ConfigError("this command needs scheme.type = " + type);
}

mc::McConfig mc_of(const json& cfg) {
  mc::McConfig c;
  const auto trials = integer(cfg, "/mc/trials");
  if (trials < 1) throw ConfigError("mc.trials must be >= 1");
  c.trials = static_cast<std::uint64_t>(trials);
  c.seed = seed_of(cfg, "/mc/seed");
  c.exact_shot_geometry = flag(cfg, "/mc/exact_shot_geometry");
  c.photon_level = flag(cfg, "/mc/photon_level");
  const auto loc = text(cfg, "/mc/location_mode");
  if (loc == "fixed") {
    c.location_mode = mc::LocationMode::fixed;
  } else if (loc == "per_scan") {
    c.location_mode = mc::LocationMode::per_scan;
  } else {
    throw ConfigError("mc.location_mode must be \"fixed\" or \"per_scan\"");
  }
  const auto reach = text(cfg, "/mc/reach_mode");
  if (reach == "continuous") {
    c.reach_mode = mc::ReachMode::continuous;
  } else if (reach == "waypoint_walk") {
    c.reach_mode = mc::ReachMode::waypoint_walk;
  } else {
    throw ConfigError("mc.reach_mode must be \"continuous\" or \"waypoint_walk\"");
  }
  c.workers = static_cast<unsigned>(count_of(cfg, "/mc/workers"));
  c.max_shots = num(cfg, "/mc/max_shots");
  c.ccdf_taus = taus_of(cfg);
  c.keep_times = flag(cfg, "/mc/dump");
  return c;
}

struct Detector {
  ChannelParams channel;
  DetectorConfig config;
  double mu0;
  double mu1;
  double p_d;
};

Detector detector_of(const json& cfg, const ScanGeometry& g) {
  if (!cfg.contains("channel")) throw ConfigError("this command needs a channel section");
  const auto& ch = cfg["channel"];
  ChannelParams params;
  if (ch.contains("signal_count") || ch.contains("noise_count")) {
    params = ChannelParams::from_counts(num(cfg, "/channel/signal_count"), num(cfg, "/channel/noise_count"),
                                        g.beam_radius);
  } else {
    params = ChannelParams{num(cfg, "/channel/signal_power"), num(cfg, "/channel/noise_intensity"),
                           num(cfg, "/channel/detector_area"), num(cfg, "/channel/obs_interval")};
    params.validate();
  }
  Detector d{params, threshold_for_pfa(params.noise_mean(), num(cfg, "/detector/p_fa_target")),
             params.noise_mean(), params.signal_plus_noise_mean(g.beam_radius), 0.0};
  d.p_d = prob_detection(params, g.beam_radius, d.config);
  return d;
}

// ---------------------------------------------------------------- commands

std::vector<Row> run_detect(const json& cfg, std::size_t) {
  const auto g = geometry_of(cfg);
  const auto d = detector_of(cfg, g);
  Row row{{"noise_mean", cell(d.mu0)},
          {"signal_plus_noise_mean", cell(d.mu1)},
          {"gamma0", cell(d.config.count_threshold)},
          {"p_fa", cell(prob_false_alarm(d.mu0, d.config))},
          {"p_d", cell(d.p_d)}};
  return {row};
}

std::vector<Row> run_spiral(const json& cfg, std::size_t) {
  require_scheme(cfg, "adaptive_spiral");
  const auto g = geometry_of(cfg);
  const double p_d = p_d_of(cfg);
  std::string mode;
  const auto partition = partition_of(cfg, g, p_d, mode);
  const auto probs = spiral::event_probs(partition, p_d, location_of(cfg, g));
  const spiral::AcquisitionTime law(partition, probs);
  const double mean = law.mean();
  std::vector<Row> rows;
  for (double tau : taus_of(cfg)) {
    rows.push_back({{"n", cell(partition.size())},
                    {"p_d", cell(p_d)},
                    {"radii_mode", cell(mode)},
                    {"truncated", cell(std::string(flag(cfg, "/location/truncated") ? "true" : "false"))},
                    {"p_fail", cell(probs.p_fail)},
                    {"mean_s", cell(mean)},
                    {"tau", cell(tau)},
                    {"ccdf", cell(law.ccdf(tau))},
                    {"radii", cell(join_radii(partition.radii()))}});
  }
  return rows;
}

double shotgun_sigma0(const json& cfg, const ScanGeometry& g, double p_d, std::string& mode) {
  const auto& s = cfg.at("/scheme/sigma0"_json_pointer);
  if (s.is_number()) {
    mode = "explicit";
    return s.get<double>();
  }
  if (!s.is_string() || s.get<std::string>() != "optimize") {
    throw ConfigError("scheme.sigma0 must be a number or \"optimize\"");
  }
  mode = "optimize";
  const auto spec = objective_of(cfg, "/scheme/objective", "/scheme/tau");
  if (spec.kind == ga::Objective::mean) return shotgun::optimal_sigma0_mean(g.sigma);
  return shotgun::optimal_sigma0_ccdf(spec.tau, g, p_d).sigma0;
}

double shotgun_mean_or_inf(double sigma0, const ScanGeometry& g, double p_d) {
  try {
    return shotgun::mean_acq_time(sigma0, g, p_d);
  } catch (const DivergenceError&) {
    return std::numeric_limits<double>::infinity();
  }
}

std::vector<Row> run_shotgun(const json& cfg, std::size_t) {
  require_scheme(cfg, "shotgun");
  const auto g = geometry_of(cfg);
  const double p_d = p_d_of(cfg);
  std::string mode;
  const double sigma0 = shotgun_sigma0(cfg, g, p_d, mode);
  if (!(sigma0 > 0.0)) throw ConfigError("scheme.sigma0 must be positive");
  const double mean = shotgun_mean_or_inf(sigma0, g, p_d);
  std::vector<Row> rows;
  for (double tau : taus_of(cfg)) {
    const auto series = shotgun::ccdf_series(tau, sigma0, g, p_d);
    rows.push_back({{"sigma0", cell(sigma0)},
                    {"sigma0_mode", cell(mode)},
                    {"p_d", cell(p_d)},
                    {"mean_s", cell(mean)},
                    {"tau", cell(tau)},
                    {"ccdf", cell(series.value)},
                    {"series_terms", cell(series.terms)}});
  }
  return rows;
}

struct OptimizeRun {
  Row row;
  std::vector<ga::GenerationStats> history;
};

OptimizeRun optimize_point(const json& cfg) {
  require_scheme(cfg, "adaptive_spiral");
  const auto g = geometry_of(cfg);
  const double p_d = p_d_of(cfg);
  const auto n = count_of(cfg, "/scheme/n");
  if (n < 1) throw ConfigError("scheme.n must be >= 1");
  const auto spec = objective_of(cfg, "/scheme/objective", "/scheme/tau");
  const bool truncated = flag(cfg, "/location/truncated");
  const auto result = ga::optimize(n, spec, g, p_d, ga_of(cfg), truncated);
  const double baseline = ga::evaluate_objective(ga::uniform_inner(n, g.region_radius), spec, g, p_d, truncated);
  Row row{{"n", cell(n)},
          {"p_d", cell(p_d)},
          {"objective", cell(text(cfg, "/scheme/objective"))},
          {"tau", cell(spec.tau)},
          {"value", cell(result.objective_value)},
          {"uniform_value", cell(baseline)},
          {"evaluations", cell(result.evaluations)},
          {"generations", cell(result.history.size() - 1)},
          {"stop_reason", cell(result.stop_reason)},
          {"radii", cell(join_radii(result.partition.radii()))}};
  return {row, result.history};
}

struct SimulateRun {
  std::vector<Row> rows;
  std::vector<double> times;
};

SimulateRun simulate_point(const json& cfg) {
  const auto g = geometry_of(cfg);
  auto mc_cfg = mc_of(cfg);
  const auto model = location_of(cfg, g);
  double p_d = p_d_of(cfg);
  if (mc_cfg.photon_level) {
    const auto d = detector_of(cfg, g);
    mc_cfg.photon = {d.mu1, d.config.count_threshold};
    p_d = d.p_d;
  }
  const auto type = text(cfg, "/scheme/type");
  std::string param_name;
  double param = 0.0;
  double closed_mean = 0.0;
  std::vector<double> closed_ccdf;
  mc::McSummary summary;
  if (type == "adaptive_spiral") {
    std::string mode;
    const auto partition = partition_of(cfg, g, p_d, mode);
    const spiral::AcquisitionTime law(partition, spiral::event_probs(partition, p_d, model));
    param_name = "n";
    param = static_cast<double>(partition.size());
    closed_mean = law.mean();
    for (double tau : mc_cfg.ccdf_taus) closed_ccdf.push_back(law.ccdf(tau));
    try {
      summary = mc::simulate_adaptive_spiral(partition, p_d, model, mc_cfg);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  } else if (type == "shotgun") {
    std::string mode;
    const double sigma0 = shotgun_sigma0(cfg, g, p_d, mode);
    param_name = "sigma0";
    param = sigma0;
    closed_mean = shotgun_mean_or_inf(sigma0, g, p_d);
    for (double tau : mc_cfg.ccdf_taus) closed_ccdf.push_back(shotgun::ccdf(tau, sigma0, g, p_d));
    summary = mc::simulate_shotgun({sigma0}, g, p_d, model, mc_cfg);
  } else {
    throw ConfigError("scheme.type must be \"adaptive_spiral\" or \"shotgun\"");
  }
  SimulateRun out;
  for (std::size_t i = 0; i < summary.ccdf_points.size(); ++i) {
    const auto& pt = summary.ccdf_points[i];
    out.rows.push_back({{"scheme", cell(type)},
                        {"parameter", cell(param_name)},
                        {"value", cell(param)},
                        {"p_d", cell(p_d)},
                        {"location_mode", cell(text(cfg, "/mc/location_mode"))},
                        {"trials", cell(static_cast<std::int64_t>(summary.trials_used))},
                        {"closed_mean_s", cell(closed_mean)},
                        {"mc_mean_s", cell(summary.empirical_mean)},
                        {"mc_mean_stderr_s", cell(summary.mean_stderr)},
                        {"tau", cell(pt.tau)},
                        {"closed_ccdf", cell(closed_ccdf[i])},
                        {"mc_ccdf", cell(pt.estimate)},
                        {"mc_ccdf_stderr", cell(pt.std_error)}});
  }
  out.times = std::move(summary.times);
  return out;
}

std::vector<Row> run_compare(const json& cfg, std::size_t) {
  const auto g = geometry_of(cfg);
  const double p_d = p_d_of(cfg);
  const auto spec = objective_of(cfg, "/compare/objective", "/compare/tau");
  const bool truncated = flag(cfg, "/location/truncated");
  const auto ga_cfg = ga_of(cfg);
  const auto& ns = cfg.at("/compare/n_values"_json_pointer);
  if (!ns.is_array() || ns.empty()) throw ConfigError("compare.n_values must be a non-empty array");
  std::vector<Row> rows;
  for (const auto& nv : ns) {
    if (!nv.is_number_integer() || nv.get<std::int64_t>() < 1) throw ConfigError("compare.n_values must be positive integers");
    const auto n = static_cast<std::size_t>(nv.get<std::int64_t>());
    const auto result = ga::optimize(n, spec, g, p_d, ga_cfg, truncated);
    rows.push_back({{"p_d", cell(p_d)},
                    {"scheme", cell(std::string("adaptive_spiral"))},
                    {"n", cell(n)},
                    {"sigma0", cell(std::numeric_limits<double>::quiet_NaN())},
                    {"objective", cell(text(cfg, "/compare/objective"))},
                    {"tau", cell(spec.tau)},
                    {"value", cell(result.objective_value)}});
  }
  double sigma0 = 0.0;
  double value = 0.0;
  if (spec.kind == ga::Objective::mean) {
    sigma0 = shotgun::optimal_sigma0_mean(g.sigma);
    value = shotgun::mean_acq_time(sigma0, g, p_d);
  } else {
    const auto best = shotgun::optimal_sigma0_ccdf(spec.tau, g, p_d);
    sigma0 = best.sigma0;
    value = best.objective;
  }
  rows.push_back({{"p_d", cell(p_d)},
                  {"scheme", cell(std::string("shotgun"))},
                  {"n", cell(std::int64_t{0})},
                  {"sigma0", cell(sigma0)},
                  {"objective", cell(text(cfg, "/compare/objective"))},
                  {"tau", cell(spec.tau)},
                  {"value", cell(value)}});
  return rows;
}

Table waypoint_table(const json& cfg) {
  const auto g = geometry_of(cfg);
  double out_radius = g.region_radius;
  if (cfg["waypoints"].contains("out_radius")) out_radius = num(cfg, "/waypoints/out_radius");
  if (!(out_radius > 0.0 && out_radius <= g.region_radius)) {
    throw ConfigError("waypoints.out_radius must lie in (0, region_radius]");
  }
  Table t{"waypoints", {"index", "r_s_m", "theta_s_rad", "x_m", "y_m"}, {}};
  const auto pts = spiral_waypoints(g, out_radius);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    t.rows.push_back({cell(i), cell(pts[i].r), cell(pts[i].theta), cell(pts[i].x()), cell(pts[i].y())});
  }
  return t;
}

// Runs `fn(point, index)` for every sweep point on a small pool; results
// come back in sweep order.
template <class Fn>
auto parallel_points(const std::vector<json>& points, Fn fn) {
  using Result = decltype(fn(points.front(), std::size_t{0}));
  std::vector<Result> results(points.size());
  std::vector<std::exception_ptr> errors(points.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < points.size(); i = next++) {
      try {
        results[i] = fn(points[i], i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const auto workers = static_cast<unsigned>(std::min<std::size_t>(hw, points.size()));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

Table rows_to_table(const std::string& name, const std::vector<std::vector<Row>>& per_point) {
  Table t{name, {}, {}};
  for (const auto& rows : per_point) {
    for (const auto& row : rows) {
      if (t.header.empty()) {
        for (const auto& [k, v] : row) t.header.push_back(k);
      }
      std::vector<Cell> cells;
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (row[i].first != t.header.at(i)) throw std::logic_error("inconsistent CSV columns");
        cells.push_back(row[i].second);
      }
      t.rows.push_back(std::move(cells));
    }
  }
  return t;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------- public

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string to_csv(const Table& table) {
  std::string out;
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (i) out += ',';
    out += table.header[i];
  }
  out += '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      std::visit(
          [&out](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, double>) {
              out += format_double(v);
            } else if constexpr (std::is_same_v<T, std::int64_t>) {
              out += std::to_string(v);
            } else {
              out += v;
            }
          },
          row[i]);
    }
    out += '\n';
  }
  return out;
}

std::vector<std::string> preset_names() {
  return {"fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9", "fig10"};
}

json preset(const std::string& name) {
  const json pd_set = json::array({0.02, 0.05, 0.08});
  const json n_axis = {{"variable", "n"}, {"start", 1}, {"stop", 7}, {"step", 1}};
  const json pd_axis = {{"variable", "p_d"}, {"values", pd_set}};
  const json sigma0_axis = {{"variable", "sigma0"}, {"start", 15.05}, {"stop", 60.0}, {"step", 0.05}};
  const json pd_fine = {{"variable", "p_d"}, {"values", json::array({0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08})}};
  json p = {{"schema_version", kSchemaVersion}};
  if (name == "fig1" || name == "fig2") {
    p["command"] = "spiral";
    p["description"] = name == "fig1" ? "mean time vs N, uniform radii" : "P(T > 80 s) vs N, uniform radii";
    p["scheme"] = {{"type", "adaptive_spiral"}, {"radii", "uniform"}};
    p["sweep"] = json::array({pd_axis, n_axis});
  } else if (name == "fig3" || name == "fig4") {
    p["command"] = "spiral";
    p["description"] = name == "fig3" ? "mean time vs N, uniform and optimized radii"
                                      : "P(T > 80 s) vs N, uniform and optimized radii";
    p["p_d"] = 0.05;
    p["scheme"] = {{"type", "adaptive_spiral"}, {"objective", name == "fig3" ? "mean" : "ccdf"}, {"tau", 80.0}};
    p["sweep"] = json::array({n_axis, {{"variable", "radii_mode"}, {"values", json::array({"uniform", "optimize"})}}});
  } else if (name == "fig5" || name == "fig6") {
    p["command"] = "compare";
    p["description"] = name == "fig5" ? "optimized mean time vs P_D, spiral and shotgun"
                                      : "optimized P(T > 80 s) vs P_D, spiral and shotgun";
    p["compare"] = {{"n_values", json::array({1, 2, 3, 4, 5, 6, 7})},
                    {"objective", name == "fig5" ? "mean" : "ccdf"},
                    {"tau", 80.0}};
    p["sweep"] = pd_fine;
  } else if (name == "fig7") {
    p["command"] = "optimize";
    p["description"] = "optimized N = 7 radii for the mean time at P_D = 0.05";
    p["p_d"] = 0.05;
    p["scheme"] = {{"type", "adaptive_spiral"}, {"n", 7}, {"objective", "mean"}};
  } else if (name == "fig8") {
    p["command"] = "shotgun";
    p["description"] = "shotgun mean time vs sigma0";
    p["scheme"] = {{"type", "shotgun"}, {"objective", "mean"}};
    p["sweep"] = json::array({pd_axis, sigma0_axis});
  } else if (name == "fig9") {
    p["command"] = "shotgun";
    p["description"] = "shotgun P(T > 80 s) vs sigma0 for several P_D";
    p["taus"] = json::array({80.0});
    p["scheme"] = {{"type", "shotgun"}, {"objective", "ccdf"}};
    p["sweep"] = json::array({pd_axis, sigma0_axis});
  } else if (name == "fig10") {
    p["command"] = "shotgun";
    p["description"] = "shotgun P(T > tau) vs sigma0 at P_D = 0.05 for several tau";
    p["p_d"] = 0.05;
    p["taus"] = json::array({40.0, 80.0, 120.0, 160.0});
    p["scheme"] = {{"type", "shotgun"}, {"objective", "ccdf"}};
    p["sweep"] = sigma0_axis;
  } else {
    throw ConfigError("unknown preset: " + name);
  }
  return p;
}

json resolve(const json& config, const std::string& command) {
  if (std::find(commands().begin(), commands().end(), command) == commands().end()) {
    throw ConfigError("unknown command: " + command);
  }
  check_keys(config);
  if (!config.contains("schema_version") || config["schema_version"] != kSchemaVersion) {
    throw ConfigError("schema_version must be 1");
  }
  json cfg = config;
  cfg["command"] = command;
  const json defaults = default_config(command);
  merge_defaults(cfg, defaults);
  for (const char* section : {"geometry", "location", "detector", "mc", "ga", "channel", "compare", "waypoints"}) {
    if (defaults.contains(section) && cfg.contains(section)) merge_defaults(cfg[section], defaults[section]);
  }
  const bool needs_scheme = command == "spiral" || command == "shotgun" || command == "optimize" || command == "simulate";
  if (needs_scheme) {
    std::string type = command == "shotgun" ? "shotgun" : "adaptive_spiral";
    if (cfg.contains("scheme") && cfg["scheme"].contains("type")) type = text(cfg, "/scheme/type");
    if (!cfg.contains("scheme")) cfg["scheme"] = json::object();
    merge_defaults(cfg["scheme"], default_scheme(type));
  }
  // Touch every field once so type errors surface before any work starts.
  geometry_of(cfg);
  p_d_of(cfg);
  taus_of(cfg);
  ga_of(cfg);
  mc_of(cfg);
  if (cfg.contains("sweep")) {
    const auto& s = cfg["sweep"];
    const json axes = s.is_array() ? s : json::array({s});
    for (const auto& axis : axes) {
      if (!axis.is_object() || !axis.contains("variable") || !axis["variable"].is_string()) {
        throw ConfigError("each sweep axis needs a string variable");
      }
      if (!sweep_targets().count(axis["variable"].get<std::string>())) {
        throw ConfigError("unknown sweep variable: " + axis["variable"].get<std::string>());
      }
      sweep_values(axis);
    }
  }
  return cfg;
}

std::vector<json> expand_sweep(const json& resolved) {
  std::vector<json> points{resolved};
  if (!resolved.contains("sweep")) return points;
  const auto& s = resolved["sweep"];
  const json axes = s.is_array() ? s : json::array({s});
  for (const auto& axis : axes) {
    const auto var = axis.at("variable").get<std::string>();
    const auto it = sweep_targets().find(var);
    if (it == sweep_targets().end()) throw ConfigError("unknown sweep variable: " + var);
    const auto values = sweep_values(axis);
    std::vector<json> next;
    next.reserve(points.size() * values.size());
    for (const auto& base : points) {
      for (const auto& v : values) {
        json p = base;
        for (const auto& ptr : it->second) {
          const std::string section = ptr.parent_pointer().to_string();
          if (!section.empty() && !p.contains(json::json_pointer(section))) continue;
          p[ptr] = ptr.to_string() == "/taus" ? json::array({v}) : v;
        }
        next.push_back(std::move(p));
      }
    }
    points = std::move(next);
  }
  for (auto& p : points) p.erase("sweep");
  return points;
}

RunOutput execute(const std::string& command, const json& resolved) {
  RunOutput out;
  if (command == "waypoints") {
    out.tables.push_back(waypoint_table(resolved));
    return out;
  }
  const auto points = expand_sweep(resolved);
  if (command == "optimize") {
    const auto runs = parallel_points(points, [](const json& p, std::size_t) { return optimize_point(p); });
    std::vector<std::vector<Row>> rows;
    for (const auto& r : runs) rows.push_back({r.row});
    out.tables.push_back(rows_to_table("optimize", rows));
    for (std::size_t i = 0; i < runs.size(); ++i) {
      Table trace{runs.size() == 1 ? "trace" : "trace_" + std::to_string(i), {"generation", "best", "mean", "worst"}, {}};
      for (const auto& h : runs[i].history) {
        trace.rows.push_back({cell(h.generation), cell(h.best), cell(h.mean), cell(h.worst)});
      }
      out.tables.push_back(std::move(trace));
    }
    return out;
  }
  if (command == "simulate") {
    auto runs = parallel_points(points, [](const json& p, std::size_t) { return simulate_point(p); });
    std::vector<std::vector<Row>> rows;
    for (auto& r : runs) rows.push_back(r.rows);
    out.tables.push_back(rows_to_table("simulate", rows));
    if (flag(resolved, "/mc/dump")) {
      for (std::size_t i = 0; i < runs.size(); ++i) {
        out.dumps.push_back({runs.size() == 1 ? "trials" : "trials_" + std::to_string(i), std::move(runs[i].times)});
      }
    }
    return out;
  }
  std::vector<Row> (*fn)(const json&, std::size_t) = nullptr;
  if (command == "detect") fn = run_detect;
  if (command == "spiral") fn = run_spiral;
  if (command == "shotgun") fn = run_shotgun;
  if (command == "compare") fn = run_compare;
  if (!fn) throw ConfigError("unknown command: " + command);
  out.tables.push_back(rows_to_table(command, parallel_points(points, fn)));
  return out;
}

// ---------------------------------------------------------------- main

namespace {

struct Options {
  std::string config_path;
  std::string preset_name;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> trials;
};

json load_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config: " + path);
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON in ") + path + ": " + e.what());
  }
}

void write_file(const fs::path& path, const std::string& content, std::vector<fs::path>& written) {
  written.push_back(path);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << content;
  if (!os) throw ConfigError("failed writing " + path.string());
}

int run_command(std::string command, const Options& opt) {
  const auto started = std::chrono::steady_clock::now();
  std::vector<fs::path> written;
  try {
    json config;
    if (!opt.config_path.empty() && !opt.preset_name.empty()) {
      throw ConfigError("--config and --preset are mutually exclusive");
    }
    if (!opt.preset_name.empty()) {
      config = preset(opt.preset_name);
    } else if (!opt.config_path.empty()) {
      config = load_json(opt.config_path);
      if (config.is_object() && config.contains("resolved_config")) config = config["resolved_config"];
    } else {
      config = {{"schema_version", kSchemaVersion}};
    }
    if (config.is_object() && config.contains("command")) {
      if (!config["command"].is_string()) throw ConfigError("command must be a string");
      const auto named = config["command"].get<std::string>();
      if (command == "run") {
        command = named;
      } else if (named != command) {
        throw ConfigError("config is for command '" + named + "', not '" + command + "'");
      }
    }
    if (command == "run") throw ConfigError("run needs a config or preset that names its command");
    if (opt.seed) {
      config["mc"]["seed"] = *opt.seed;
      config["ga"]["seed"] = *opt.seed;
    }
    if (opt.trials) config["mc"]["trials"] = *opt.trials;

    const json resolved = resolve(config, command);
    const auto output = execute(command, resolved);

    fs::create_directories(opt.out_dir);
    json files = json::array();
    for (const auto& table : output.tables) {
      const auto path = fs::path(opt.out_dir) / (table.name + ".csv");
      write_file(path, to_csv(table), written);
      files.push_back(path.filename().string());
    }
    for (const auto& dump : output.dumps) {
      const auto path = fs::path(opt.out_dir) / (dump.name + ".bin");
      written.push_back(path);
      mc::write_trial_dump(path.string(), dump.times);
      files.push_back(path.filename().string());
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    json manifest = {{"tool", "fsoacq"},
                     {"version", kVersion},
                     {"command", command},
                     {"preset", opt.preset_name.empty() ? json(nullptr) : json(opt.preset_name)},
                     {"resolved_config", resolved},
                     {"seeds", {{"mc", resolved["mc"]["seed"]}, {"ga", resolved["ga"]["seed"]}}},
                     {"outputs", files},
                     {"started_utc", utc_now()},
                     {"wall_time_s", wall}};
    write_file(fs::path(opt.out_dir) / "manifest.json", manifest.dump(2) + "\n", written);
    std::cout << "wrote " << files.size() << " output file(s) to " << opt.out_dir << "\n";
    return 0;
  } catch (const NumericalError& e) {
    for (const auto& p : written) fs::remove(p);
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    for (const auto& p : written) fs::remove(p);
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace

int main_entry(int argc, char** argv) {
  CLI::App app{"Acquisition-time analysis for photon-limited free-space optical links"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  Options opt;
  std::string selected;
  auto add = [&](const std::string& name, const std::string& help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config_path, "JSON config file (or a run manifest)");
    sub->add_option("--preset", opt.preset_name, "built-in figure config: fig1 .. fig10");
    sub->add_option("--out", opt.out_dir, "output directory")->capture_default_str();
    sub->add_option("--seed", opt.seed, "override the Monte-Carlo and GA seeds");
    sub->add_option("--trials", opt.trials, "override the Monte-Carlo trial count");
    sub->callback([&selected, name] { selected = name; });
  };
  add("detect", "photon-counting threshold and detection probabilities");
  add("spiral", "adaptive spiral mean time and CCDF");
  add("shotgun", "shotgun mean time and CCDF");
  add("optimize", "genetic optimization of the subregion radii");
  add("simulate", "Monte-Carlo simulation next to the closed forms");
  add("compare", "optimized adaptive spiral against optimized shotgun");
  add("waypoints", "export spiral scan waypoints");
  add("run", "replay a config or manifest that names its command");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  return run_command(selected, opt);
}

}  // namespace fsoacq::cli
