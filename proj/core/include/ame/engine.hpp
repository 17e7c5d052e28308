#pragma once

// Amortized ensembling runs: order ingredients, initialise the pivot, then
// take one optimizer step per batch of pseudogradients for a number of
// epochs, optionally accepting steps greedily.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ame/errors.hpp"
#include "ame/optim.hpp"
#include "ame/pseudograd.hpp"
#include "ame/weightstore.hpp"

namespace ame {

struct Ingredient {
  std::string id;
  WeightMap weights;
  std::optional<double> metric;  // held-out validation score
};

enum class Ordering { ByMetricDesc, ByMetricAsc, GivenOrder };

struct PivotInit {
  enum class Kind { Soup, Ingredient, Provided };
  Kind kind = Kind::Soup;
  std::string ingredient_id;  // Kind::Ingredient
  WeightMap weights;          // Kind::Provided

  static PivotInit soup() { return {}; }
  static PivotInit ingredient(std::string id) { return {Kind::Ingredient, std::move(id), {}}; }
  static PivotInit provided(WeightMap w) { return {Kind::Provided, {}, std::move(w)}; }
};

struct Projection {
  WeightMap center;
  double radius = 0.0;
};

using Evaluator = std::function<double(const WeightMap&)>;

struct StepLog {
  std::uint64_t step = 0;   // strictly increasing over the run, from 1
  std::uint64_t epoch = 0;  // from 0
  std::vector<std::string> batch_ids;
  double eta = 0.0;
  double zeta = 0.0;
  double grad_norm = 0.0;
  double displacement = 0.0;
  std::optional<double> metric;
  bool accepted = true;
};

struct RunRecord {
  std::vector<StepLog> steps;
  std::optional<double> initial_metric;  // greedy runs: metric of the pivot
};

struct EnsembleResult {
  WeightMap weights;
  RunRecord record;
};

using StepObserver = std::function<void(const StepLog&, const WeightMap&)>;

struct EnsembleConfig {
  PivotPolicy pivot_policy = PivotPolicy::adaptive();
  // When the pivot is an ingredient, that ingredient seeds w_0 and is not
  // replayed as a pseudogradient.
  PivotInit pivot_init = PivotInit::soup();
  OptimizerSpec optimizer = OptimizerSpec::gd(Schedule::harmonic(0));
  Schedule zeta = Schedule::constant(1.0);
  // Unset: the number of ingredients streamed through the optimizer.
  std::optional<std::uint64_t> n_divisor;
  std::uint64_t epochs = 1;
  std::uint64_t batch_size = 1;
  bool shuffle = false;
  std::uint64_t seed = 0;
  Ordering ordering = Ordering::ByMetricDesc;
  // Restart the learning-rate and amplification schedules every epoch.
  bool epoch_lr_reset = false;
  std::optional<Projection> projection;
  // Set to accept a step only when it strictly improves this metric.
  Evaluator greedy;
  // Called after every step with the log entry and the current weights.
  StepObserver on_step;
};

// Thrown when a greedy evaluator fails; carries the log up to the failure.
class RunAborted : public Error {
 public:
  RunAborted(const std::string& what, RunRecord partial)
      : Error(what), partial_(std::move(partial)) {}
  const RunRecord& partial() const noexcept { return partial_; }

 private:
  RunRecord partial_;
};

// Stable sort by metric with ties broken by id; GivenOrder is the identity.
std::vector<Ingredient> order_ingredients(std::span<const Ingredient> ingredients,
                                          Ordering ordering);

EnsembleResult run_ensemble(const EnsembleConfig& cfg, std::span<const Ingredient> ingredients);

EnsembleResult greedy_run(EnsembleConfig cfg, std::span<const Ingredient> ingredients,
                          Evaluator evaluate);

// Mean of the members' pseudogradients against one pivot.
WeightMap batch_pseudogradient(const WeightMap& pivot, std::span<const WeightMap* const> members,
                               double zeta, std::uint64_t n_divisor);

// CSV header: step,epoch,batch_ids,eta,zeta,grad_norm,displacement,metric,accepted
void write_run_csv(const RunRecord& record, std::ostream& out);

}  // namespace ame
