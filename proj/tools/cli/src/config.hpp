#pragma once

// JSON run configurations. Parsing never stops at the first problem: every
// unknown key, missing field and bad value is collected into a Violations
// list so the user sees all of them at once.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ame/engine.hpp"
#include "ame/fedlab.hpp"
#include "ame/optim.hpp"
#include "ame/pseudograd.hpp"

namespace ame::cli {

using nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int kConfigVersion = 1;

class Violations {
 public:
  void add(const std::string& path, const std::string& message) {
    list_.push_back((path.empty() ? std::string("config") : path) + ": " + message);
  }
  bool empty() const { return list_.empty(); }
  const std::vector<std::string>& list() const { return list_; }
  // Throws ConfigError with everything collected so far.
  void raise_if_any() const;

 private:
  std::vector<std::string> list_;
};

json read_json_file(const fs::path& path);

// Sets a value at a dotted path ("ensemble.optimizer.lr"), creating objects.
void set_dotted(json& doc, const std::string& dotted, const json& value);

std::optional<Schedule> parse_schedule(const json& j, const std::string& path, Violations& v);
std::optional<OptimizerSpec> parse_optimizer(const json& j, const std::string& path, Violations& v);

struct IngredientSource {
  std::string id;
  fs::path path;
  std::optional<double> metric;
};

enum class EvaluatorKind { None, NegDistance, Command };

struct EvaluatorSpec {
  EvaluatorKind kind = EvaluatorKind::None;
  fs::path target;      // NegDistance
  std::string command;  // Command: run as `command <checkpoint>`, prints a number
};

enum class CenterKind { Soup, Pivot, Path };

struct ProjectionSpec {
  CenterKind center = CenterKind::Soup;
  fs::path center_path;
  double radius = 1.0;
};

struct MergeJob {
  std::vector<IngredientSource> ingredients;
  std::optional<fs::path> metrics_csv;
  EnsembleConfig ensemble;  // weights-dependent parts are filled at run time
  std::optional<fs::path> pivot_path;
  std::optional<ProjectionSpec> projection;
  EvaluatorSpec evaluator;
  fs::path checkpoint_out;
  fs::path log_out;
};

// base_dir resolves relative input paths; out_dir (if set) resolves outputs.
MergeJob parse_merge(const json& doc, const fs::path& base_dir,
                     const std::optional<fs::path>& out_dir, std::optional<std::uint64_t> seed,
                     Violations& v);

// Cells of a sweep section: each is an object of dotted path -> value.
std::vector<json> expand_sweep(const json& sweep, Violations& v);

// Hex FNV-1a 64 of the canonical dump of a cell.
std::string cell_hash(const json& cell);

struct FedJob {
  FedConfig config;
  fs::path checkpoint_out;
  fs::path log_out;
};

FedJob parse_fed(const json& doc, const fs::path& base_dir, const std::optional<fs::path>& out_dir,
                 std::optional<std::uint64_t> seed, Violations& v);

// Reads `id,metric` rows.
std::vector<std::pair<std::string, double>> read_metrics_csv(const fs::path& path);

}  // namespace ame::cli
