// Experiment runner behind the `fsoacq` executable: config resolution,
// sweep expansion, command execution and CSV / manifest output.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace fsoacq::cli {

using json = nlohmann::json;

inline constexpr const char* kVersion = "1.0.0";
inline constexpr int kSchemaVersion = 1;

/// Bad or inconsistent configuration; maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Cell = std::variant<double, std::int64_t, std::string>;

struct Table {
  std::string name;  ///< output file stem
  std::vector<std::string> header;
  std::vector<std::vector<Cell>> rows;
};

struct TrialDump {
  std::string name;
  std::vector<double> times;
};

struct RunOutput {
  std::vector<Table> tables;
  std::vector<TrialDump> dumps;
};

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> names{"detect",   "spiral",  "shotgun",   "optimize",
                                              "simulate", "compare", "waypoints"};
  return names;
}

/// Built-in figure configurations fig1 .. fig10 (including their "command").
json preset(const std::string& name);
std::vector<std::string> preset_names();

/// Checks the document against the schema and fills every default.
json resolve(const json& config, const std::string& command);

/// One fully resolved config per sweep point, in output order.
std::vector<json> expand_sweep(const json& resolved);

RunOutput execute(const std::string& command, const json& resolved);

/// Header row plus one line per row; doubles as %.9g, LF line endings.
std::string to_csv(const Table& table);

std::string format_double(double v);

/// Full command-line entry point; returns the process exit code.
int main_entry(int argc, char** argv);

}  // namespace fsoacq::cli
