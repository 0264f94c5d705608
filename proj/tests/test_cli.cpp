#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "cli.hpp"
#include "fsoacq/adaptive_spiral.hpp"
#include "fsoacq/shotgun.hpp"

using namespace fsoacq;
using cli::json;
namespace fs = std::filesystem;

namespace {

const ScanGeometry kGeom{};

std::size_t column(const cli::Table& t, const std::string& name) {
  const auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end()) throw std::runtime_error("missing column " + name);
  return static_cast<std::size_t>(it - t.header.begin());
}

double as_double(const cli::Cell& c) {
  if (const auto* d = std::get_if<double>(&c)) return *d;
  return static_cast<double>(std::get<std::int64_t>(c));
}

std::string as_text(const cli::Cell& c) { return std::get<std::string>(c); }

cli::RunOutput run_preset(const std::string& name) {
  const auto p = cli::preset(name);
  const auto command = p.at("command").get<std::string>();
  return cli::execute(command, cli::resolve(p, command));
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("fsoacq_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int tool(const std::string& args) {
  const std::string cmd = std::string(FSOACQ_TOOL_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream os(p);
  os << j.dump(2);
}

}  // namespace

TEST(Csv, FormatAndLineEndings) {
  cli::Table t{"x", {"a", "b", "c"}, {{1.0 / 3.0, std::int64_t{7}, std::string("u")},
                                      {std::numeric_limits<double>::infinity(), std::int64_t{-2}, std::string("")}}};
  EXPECT_EQ(cli::to_csv(t), "a,b,c\n0.333333333,7,u\ninf,-2,\n");
  EXPECT_EQ(cli::to_csv({"e", {"only"}, {}}), "only\n");
  EXPECT_EQ(cli::format_double(69.187654321), "69.1876543");
  EXPECT_EQ(cli::format_double(std::numeric_limits<double>::quiet_NaN()), "nan");
  EXPECT_EQ(cli::format_double(1e-12), "1e-12");
}

TEST(Resolve, FillsDefaults) {
  const auto r = cli::resolve({{"schema_version", 1}}, "spiral");
  EXPECT_EQ(r["p_d"], 0.05);
  EXPECT_EQ(r["geometry"]["sigma"], 15.0);
  EXPECT_EQ(r["scheme"]["type"], "adaptive_spiral");
  EXPECT_EQ(r["scheme"]["n"], 7);
  EXPECT_EQ(r["mc"]["trials"], 100000);
  EXPECT_EQ(r["command"], "spiral");
}

TEST(Resolve, RejectsBadConfigs) {
  EXPECT_THROW(cli::resolve({{"schema_version", 2}}, "spiral"), cli::ConfigError);
  EXPECT_THROW(cli::resolve(json::object(), "spiral"), cli::ConfigError);
  EXPECT_THROW(cli::resolve({{"schema_version", 1}}, "plot"), cli::ConfigError);
  EXPECT_THROW(cli::resolve({{"schema_version", 1}, {"colour", 1}}, "spiral"), cli::ConfigError);
  EXPECT_THROW(cli::resolve({{"schema_version", 1}, {"geometry", {{"sigmaa", 1}}}}, "spiral"), cli::ConfigError);
  EXPECT_THROW(cli::resolve({{"schema_version", 1}, {"sweep", {{"variable", "bogus"}, {"values", {1}}}}}, "spiral"),
               cli::ConfigError);
  EXPECT_THROW(cli::resolve({{"schema_version", 1}, {"sweep", {{"variable", "n"}}}}, "spiral"), cli::ConfigError);
  EXPECT_THROW(
      cli::resolve({{"schema_version", 1}, {"sweep", {{"variable", "n"}, {"start", 3}, {"stop", 1}, {"step", 1}}}},
                   "spiral"),
      cli::ConfigError);
  EXPECT_THROW(cli::resolve({{"schema_version", 1}, {"scheme", {{"type", "raster"}}}}, "spiral"), cli::ConfigError);
  EXPECT_THROW(cli::preset("fig11"), cli::ConfigError);
}

TEST(Sweep, CartesianGridInOrder) {
  const json cfg = {{"schema_version", 1},
                    {"sweep",
                     {{{"variable", "p_d"}, {"values", {0.02, 0.08}}},
                      {{"variable", "n"}, {"start", 1}, {"stop", 3}, {"step", 1}}}}};
  const auto points = cli::expand_sweep(cli::resolve(cfg, "spiral"));
  ASSERT_EQ(points.size(), 6u);
  EXPECT_EQ(points[0]["p_d"], 0.02);
  EXPECT_EQ(points[0]["scheme"]["n"], 1);
  EXPECT_EQ(points[2]["scheme"]["n"], 3);
  EXPECT_EQ(points[3]["p_d"], 0.08);
  for (const auto& p : points) EXPECT_FALSE(p.contains("sweep"));
}

TEST(Sweep, StepsForm) {
  const json cfg = {{"schema_version", 1}, {"sweep", {{"variable", "sigma0"}, {"start", 20.0}, {"stop", 30.0}, {"steps", 5}}}};
  const auto points = cli::expand_sweep(cli::resolve(cfg, "shotgun"));
  ASSERT_EQ(points.size(), 5u);
  EXPECT_DOUBLE_EQ(points[1]["scheme"]["sigma0"].get<double>(), 22.5);
  EXPECT_DOUBLE_EQ(points[4]["scheme"]["sigma0"].get<double>(), 30.0);
}

TEST(Presets, AllResolve) {
  for (const auto& name : cli::preset_names()) {
    const auto p = cli::preset(name);
    EXPECT_NO_THROW(cli::resolve(p, p.at("command").get<std::string>())) << name;
  }
  const auto fig8 = cli::preset("fig8");
  EXPECT_EQ(cli::expand_sweep(cli::resolve(fig8, "shotgun")).size(), 3u * 900u);
}

TEST(Presets, Fig3SevenRegionRows) {
  const auto out = run_preset("fig3");
  ASSERT_EQ(out.tables.size(), 1u);
  const auto& t = out.tables[0];
  EXPECT_EQ(t.rows.size(), 14u);
  bool saw_uniform = false;
  bool saw_optimized = false;
  for (const auto& row : t.rows) {
    if (as_double(row[column(t, "n")]) != 7.0) continue;
    const double mean = as_double(row[column(t, "mean_s")]);
    if (as_text(row[column(t, "radii_mode")]) == "uniform") {
      saw_uniform = true;
      EXPECT_NEAR(mean, 69.19, 0.01 * 69.19);
    } else {
      saw_optimized = true;
      EXPECT_LE(mean, 55.0);
    }
  }
  EXPECT_TRUE(saw_uniform && saw_optimized);
}

TEST(Presets, Fig8Argmin) {
  const auto out = run_preset("fig8");
  const auto& t = out.tables[0];
  double best = std::numeric_limits<double>::infinity();
  double arg = 0.0;
  for (const auto& row : t.rows) {
    if (as_double(row[column(t, "p_d")]) != 0.05) continue;
    const double m = as_double(row[column(t, "mean_s")]);
    if (m < best) {
      best = m;
      arg = as_double(row[column(t, "sigma0")]);
    }
  }
  EXPECT_NEAR(arg, 21.2132, 0.05);
  EXPECT_NEAR(best, 90.0, 0.01);
}

TEST(SinglePoint, SpiralEqualsLibrary) {
  const json cfg = {{"schema_version", 1}, {"scheme", {{"n", 3}}}, {"p_d", 0.08}};
  const auto out = cli::execute("spiral", cli::resolve(cfg, "spiral"));
  const auto& t = out.tables[0];
  ASSERT_EQ(t.rows.size(), 1u);
  const auto part = Partition::uniform(3, kGeom);
  const spiral::AcquisitionTime law(part, spiral::event_probs(part, 0.08, LocationModel::from(kGeom, true)));
  EXPECT_EQ(as_double(t.rows[0][column(t, "mean_s")]), law.mean());
  EXPECT_EQ(as_double(t.rows[0][column(t, "ccdf")]), law.ccdf(80.0));
}

TEST(SinglePoint, ShotgunEqualsLibrary) {
  const json cfg = {{"schema_version", 1}, {"scheme", {{"sigma0", 30.0}}}, {"taus", {40.0, 120.0}}};
  const auto out = cli::execute("shotgun", cli::resolve(cfg, "shotgun"));
  const auto& t = out.tables[0];
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(as_double(t.rows[0][column(t, "mean_s")]), shotgun::mean_acq_time(30.0, kGeom, 0.05));
  EXPECT_EQ(as_double(t.rows[1][column(t, "ccdf")]), shotgun::ccdf(120.0, 30.0, kGeom, 0.05));
  EXPECT_EQ(as_text(t.rows[0][column(t, "sigma0_mode")]), "explicit");
}

TEST(SinglePoint, DetectRow) {
  const auto out = cli::execute("detect", cli::resolve({{"schema_version", 1}}, "detect"));
  const auto& t = out.tables[0];
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(as_double(t.rows[0][column(t, "gamma0")]), 45.0);
  EXPECT_NEAR(as_double(t.rows[0][column(t, "p_d")]), 0.113929, 1e-6);
}

TEST(Waypoints, Columns) {
  const json cfg = {{"schema_version", 1}, {"waypoints", {{"out_radius", 5.0}}}};
  const auto out = cli::execute("waypoints", cli::resolve(cfg, "waypoints"));
  const auto& t = out.tables[0];
  EXPECT_EQ(t.header, (std::vector<std::string>{"index", "r_s_m", "theta_s_rad", "x_m", "y_m"}));
  ASSERT_GT(t.rows.size(), 100u);
  const auto& last = t.rows.back();
  EXPECT_NEAR(std::hypot(as_double(last[3]), as_double(last[4])), as_double(last[1]), 1e-9);
  EXPECT_THROW(cli::execute("waypoints", cli::resolve({{"schema_version", 1}, {"waypoints", {{"out_radius", 60.0}}}},
                                                      "waypoints")),
               cli::ConfigError);
}

TEST(Tool, WritesCsvAndManifest) {
  const auto dir = scratch("ok");
  ASSERT_EQ(tool("spiral --out " + dir.string()), 0);
  EXPECT_TRUE(fs::exists(dir / "spiral.csv"));
  const auto manifest = json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(manifest["tool"], "fsoacq");
  EXPECT_EQ(manifest["command"], "spiral");
  EXPECT_EQ(manifest["seeds"]["mc"], 20260101);
  EXPECT_TRUE(manifest.contains("wall_time_s"));
  EXPECT_EQ(manifest["outputs"], json::array({"spiral.csv"}));
  fs::remove_all(dir);
}

TEST(Tool, ConfigErrorExitsTwo) {
  const auto dir = scratch("bad");
  write_json(dir / "cfg.json", {{"schema_version", 1}, {"nonsense", true}});
  EXPECT_EQ(tool("spiral --config " + (dir / "cfg.json").string() + " --out " + (dir / "out").string()), 2);
  EXPECT_FALSE(fs::exists(dir / "out" / "manifest.json"));
  EXPECT_EQ(tool("spiral --config " + (dir / "missing.json").string()), 2);
  EXPECT_EQ(tool("spiral --preset fig1 --config " + (dir / "cfg.json").string()), 2);
  EXPECT_EQ(tool("frobnicate"), 2);
  fs::remove_all(dir);
}

TEST(Tool, NumericalErrorExitsThreeAndLeavesNothing) {
  const auto dir = scratch("num");
  // Cancellation in the alternating series far below sigma.
  write_json(dir / "cfg.json", {{"schema_version", 1},
                                {"p_d", 0.08},
                                {"taus", {40.0, 300.0}},
                                {"scheme", {{"type", "shotgun"}, {"sigma0", 12.0}}}});
  const auto out = dir / "out";
  EXPECT_EQ(tool("shotgun --config " + (dir / "cfg.json").string() + " --out " + out.string()), 3);
  EXPECT_FALSE(fs::exists(out / "shotgun.csv"));
  EXPECT_FALSE(fs::exists(out / "manifest.json"));
  fs::remove_all(dir);
}

TEST(Tool, ManifestReplayIsByteIdentical) {
  const auto dir = scratch("replay");
  write_json(dir / "cfg.json", {{"schema_version", 1},
                                {"taus", {40.0, 80.0}},
                                {"scheme", {{"n", 3}}},
                                {"mc", {{"trials", 4000}, {"dump", true}}},
                                {"sweep", {{"variable", "p_d"}, {"values", {0.05, 0.08}}}}});
  ASSERT_EQ(tool("simulate --config " + (dir / "cfg.json").string() + " --seed 77 --out " + (dir / "a").string()), 0);
  ASSERT_EQ(tool("run --config " + (dir / "a" / "manifest.json").string() + " --out " + (dir / "b").string()), 0);
  for (const char* f : {"simulate.csv", "trials_0.bin", "trials_1.bin"}) {
    ASSERT_TRUE(fs::exists(dir / "a" / f)) << f;
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  }
  const auto manifest = json::parse(slurp(dir / "b" / "manifest.json"));
  EXPECT_EQ(manifest["seeds"]["mc"], 77);
  EXPECT_EQ(manifest["seeds"]["ga"], 77);
  fs::remove_all(dir);
}

TEST(Tool, PresetRunsThroughRun) {
  const auto dir = scratch("preset");
  ASSERT_EQ(tool("run --preset fig7 --out " + dir.string()), 0);
  EXPECT_TRUE(fs::exists(dir / "optimize.csv"));
  EXPECT_TRUE(fs::exists(dir / "trace.csv"));
  const auto csv = slurp(dir / "trace.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "generation,best,mean,worst");
  fs::remove_all(dir);
}

TEST(Docs, SampleConfigsRun) {
  int seen = 0;
  for (const auto& entry : fs::directory_iterator(fs::path(FSOACQ_DOCS_DIR) / "configs")) {
    if (entry.path().extension() != ".json") continue;
    ++seen;
    const auto cfg = json::parse(slurp(entry.path()));
    const auto command = cfg.at("command").get<std::string>();
    const auto out = cli::execute(command, cli::resolve(cfg, command));
    ASSERT_FALSE(out.tables.empty()) << entry.path();
    EXPECT_FALSE(out.tables[0].rows.empty()) << entry.path();
  }
  EXPECT_GE(seen, 5);
  EXPECT_NO_THROW((void)json::parse(slurp(fs::path(FSOACQ_DOCS_DIR) / "config.schema.json")));
}
