#pragma once

// Ensembling optimizers as stateful elementwise update rules over weight
// maps. Every step increments the state's step counter first, so the first
// update evaluates schedules at i = 1.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ame/pseudograd.hpp"
#include "ame/weightstore.hpp"

namespace ame {

struct GdParams {};

struct AdagradParams {
  double eps = 1e-10;
};

// The default update is the ensembling form
//   w -= 1/(1-b1^i) * lr * m / ((1-b2^i)^(-1/2) * sqrt(v) + eps)
// with m, v the running averages. standard_form switches to the
// "efficient" textbook variant where eps is added to the uncorrected sqrt(v):
//   w -= lr * sqrt(1-b2^i)/(1-b1^i) * m / (sqrt(v) + eps)
struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool standard_form = false;
  // Initial moments, broadcast to every element. v0 must be > 0 when set.
  std::optional<double> initial_m;
  std::optional<double> initial_v;
};

struct AdadeltaParams {
  double rho = 0.9;
  double eps = 1e-6;
};

struct OptimizerSpec {
  std::variant<GdParams, AdagradParams, AdamParams, AdadeltaParams> method;
  Schedule lr = Schedule::constant(1.0);
  // Decoupled: w <- w - lr_i * weight_decay * w before the update.
  double weight_decay = 0.0;

  static OptimizerSpec gd(Schedule lr, double weight_decay = 0.0);
  static OptimizerSpec adagrad(Schedule lr, double eps, double weight_decay = 0.0);
  static OptimizerSpec adam(Schedule lr, double beta1, double beta2, double eps,
                            double weight_decay = 0.0);
  static OptimizerSpec adadelta(Schedule lr, double rho, double eps, double weight_decay = 0.0);

  std::string_view name() const;
};

// Throws ConfigError listing every invalid field. Returns advisory warnings,
// e.g. Adam with beta1^2 >= beta2.
std::vector<std::string> validate(const OptimizerSpec& spec);

struct OptimizerState {
  std::uint64_t step = 0;
  // Schedules are evaluated at step - schedule_origin; moving the origin
  // restarts the learning-rate schedule without resetting moments.
  std::uint64_t schedule_origin = 0;

  std::optional<WeightMap> sq_sum;          // Adagrad
  std::optional<WeightMap> m;               // Adam
  std::optional<WeightMap> v;               // Adam
  std::optional<WeightMap> acc_grad_sq;     // Adadelta
  std::optional<WeightMap> acc_update_sq;   // Adadelta

  std::uint64_t schedule_step() const noexcept { return step - schedule_origin; }
};

WeightMap gd_step(const WeightMap& w, const WeightMap& g, OptimizerState& state,
                  const OptimizerSpec& spec);
WeightMap adagrad_step(const WeightMap& w, const WeightMap& g, OptimizerState& state,
                       const OptimizerSpec& spec);
WeightMap adam_step(const WeightMap& w, const WeightMap& g, OptimizerState& state,
                    const OptimizerSpec& spec);
WeightMap adadelta_step(const WeightMap& w, const WeightMap& g, OptimizerState& state,
                        const OptimizerSpec& spec);

// Dispatches on spec.method.
WeightMap optimizer_step(const WeightMap& w, const WeightMap& g, OptimizerState& state,
                         const OptimizerSpec& spec);

// Learning rate the most recent step used.
double last_learning_rate(const OptimizerState& state, const OptimizerSpec& spec);

// Euclidean projection onto the closed ball around center.
WeightMap project_to_ball(const WeightMap& w, const WeightMap& center, double radius);

}  // namespace ame
