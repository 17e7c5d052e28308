#include "ame/optim.hpp"

#include <cmath>

#include "ame/errors.hpp"

namespace ame {

OptimizerSpec OptimizerSpec::gd(Schedule lr, double weight_decay) {
  return {GdParams{}, std::move(lr), weight_decay};
}

OptimizerSpec OptimizerSpec::adagrad(Schedule lr, double eps, double weight_decay) {
  return {AdagradParams{eps}, std::move(lr), weight_decay};
}

OptimizerSpec OptimizerSpec::adam(Schedule lr, double beta1, double beta2, double eps,
                                  double weight_decay) {
  AdamParams p;
  p.beta1 = beta1;
  p.beta2 = beta2;
  p.eps = eps;
  return {p, std::move(lr), weight_decay};
}

OptimizerSpec OptimizerSpec::adadelta(Schedule lr, double rho, double eps, double weight_decay) {
  return {AdadeltaParams{rho, eps}, std::move(lr), weight_decay};
}

std::string_view OptimizerSpec::name() const {
  switch (method.index()) {
    case 0: return "gd";
    case 1: return "adagrad";
    case 2: return "adam";
    default: return "adadelta";
  }
}

std::vector<std::string> validate(const OptimizerSpec& spec) {
  std::vector<std::string> errors;
  std::vector<std::string> warnings;
  if (!(spec.weight_decay >= 0.0) || !std::isfinite(spec.weight_decay)) {
    errors.push_back("weight_decay must be finite and >= 0");
  }
  if (const auto* p = std::get_if<AdagradParams>(&spec.method)) {
    if (!(p->eps > 0.0)) errors.push_back("adagrad eps must be > 0");
  } else if (const auto* p = std::get_if<AdamParams>(&spec.method)) {
    if (!(p->beta1 >= 0.0 && p->beta1 < 1.0)) errors.push_back("adam beta1 must be in [0, 1)");
    if (!(p->beta2 >= 0.0 && p->beta2 < 1.0)) errors.push_back("adam beta2 must be in [0, 1)");
    if (!(p->eps > 0.0)) errors.push_back("adam eps must be > 0");
    if (p->initial_v && !(*p->initial_v > 0.0)) errors.push_back("adam initial_v must be > 0");
    if (p->beta1 * p->beta1 >= p->beta2) {
      warnings.push_back("adam beta1^2 >= beta2: the decaying-schedule convergence bound does not apply");
    }
  } else if (const auto* p = std::get_if<AdadeltaParams>(&spec.method)) {
    if (!(p->rho >= 0.0 && p->rho < 1.0)) errors.push_back("adadelta rho must be in [0, 1)");
    if (!(p->eps > 0.0)) errors.push_back("adadelta eps must be > 0");
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return warnings;
}

namespace {

// Zero numerator means zero update, even when the denominator is also zero.
inline double safe_ratio(double num, double den) { return num == 0.0 ? 0.0 : num / den; }

double begin_step(OptimizerState& state, const OptimizerSpec& spec) {
  ++state.step;
  return spec.lr.at(state.schedule_step());
}

WeightMap filled_like(const WeightMap& m, double value) {
  WeightMapBuilder b(m);
  for (std::size_t i = 0; i < b.size(); ++i) {
    for (auto& x : b.values(i)) x = value;
  }
  return std::move(b).build();
}

// out = decay(w) - update(e), where update is computed per element by f.
template <class F>
WeightMap apply_update(const WeightMap& w, const WeightMap& g, double lr,
                       const OptimizerSpec& spec, F&& update) {
  require_compatible(w, g);
  const double decay = lr * spec.weight_decay;
  WeightMapBuilder out(w);
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto dst = out.values(i);
    const auto& gv = g.tensors()[i].data;
    for (std::size_t e = 0; e < dst.size(); ++e) {
      double x = dst[e];
      if (decay != 0.0) x = x - decay * x;
      dst[e] = x - update(i, e, gv[e]);
    }
  }
  return std::move(out).build();
}

template <class P>
const P& params_as(const OptimizerSpec& spec, const char* what) {
  if (const auto* p = std::get_if<P>(&spec.method)) return *p;
  throw ConfigError(std::string(what) + " called with a " + std::string(spec.name()) +
                    " optimizer spec");
}

std::span<double> buffer(std::optional<WeightMap>& m, std::size_t i) {
  return m->values_mut(i);
}

}  // namespace

WeightMap gd_step(const WeightMap& w, const WeightMap& g, OptimizerState& state,
                  const OptimizerSpec& spec) {
  params_as<GdParams>(spec, "gd_step");
  double lr = begin_step(state, spec);
  return apply_update(w, g, lr, spec,
                      [lr](std::size_t, std::size_t, double ge) { return lr * ge; });
}

WeightMap adagrad_step(const WeightMap& w, const WeightMap& g, OptimizerState& state,
                       const OptimizerSpec& spec) {
  const auto& p = params_as<AdagradParams>(spec, "adagrad_step");
  require_compatible(w, g);
  double lr = begin_step(state, spec);
  if (!state.sq_sum) state.sq_sum = zeros_like(w);
  require_compatible(*state.sq_sum, g);
  return apply_update(w, g, lr, spec, [&](std::size_t i, std::size_t e, double ge) {
    auto& s = buffer(state.sq_sum, i)[e];
    s += ge * ge;
    return safe_ratio(lr * ge, std::sqrt(s) + p.eps);
  });
}

WeightMap adam_step(const WeightMap& w, const WeightMap& g, OptimizerState& state,
                    const OptimizerSpec& spec) {
  const auto& p = params_as<AdamParams>(spec, "adam_step");
  require_compatible(w, g);
  double lr = begin_step(state, spec);
  if (!state.m) state.m = filled_like(w, p.initial_m.value_or(0.0));
  if (!state.v) state.v = filled_like(w, p.initial_v.value_or(0.0));
  require_compatible(*state.m, g);
  require_compatible(*state.v, g);

  // Bias corrections use the global step, not the schedule step.
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(p.beta1, t);
  const double bc2 = 1.0 - std::pow(p.beta2, t);
  const double sqrt_bc2 = std::sqrt(bc2);

  return apply_update(w, g, lr, spec, [&](std::size_t i, std::size_t e, double ge) {
    auto& m = buffer(state.m, i)[e];
    auto& v = buffer(state.v, i)[e];
    m = p.beta1 * m + (1.0 - p.beta1) * ge;
    v = p.beta2 * v + (1.0 - p.beta2) * ge * ge;
    if (p.standard_form) {
      return safe_ratio(lr * (sqrt_bc2 / bc1) * m, std::sqrt(v) + p.eps);
    }
    return (1.0 / bc1) * safe_ratio(lr * m, (1.0 / sqrt_bc2) * std::sqrt(v) + p.eps);
  });
}

WeightMap adadelta_step(const WeightMap& w, const WeightMap& g, OptimizerState& state,
                        const OptimizerSpec& spec) {
  const auto& p = params_as<AdadeltaParams>(spec, "adadelta_step");
  require_compatible(w, g);
  double lr = begin_step(state, spec);
  if (!state.acc_grad_sq) state.acc_grad_sq = zeros_like(w);
  if (!state.acc_update_sq) state.acc_update_sq = zeros_like(w);
  require_compatible(*state.acc_grad_sq, g);
  require_compatible(*state.acc_update_sq, g);

  return apply_update(w, g, lr, spec, [&](std::size_t i, std::size_t e, double ge) {
    auto& ag = buffer(state.acc_grad_sq, i)[e];
    auto& au = buffer(state.acc_update_sq, i)[e];
    ag = p.rho * ag + (1.0 - p.rho) * ge * ge;
    double delta = -(std::sqrt(au + p.eps) / std::sqrt(ag + p.eps)) * ge;
    au = p.rho * au + (1.0 - p.rho) * delta * delta;
    // w + lr * delta, written as a subtraction of the update.
    return -(lr * delta);
  });
}

WeightMap optimizer_step(const WeightMap& w, const WeightMap& g, OptimizerState& state,
                         const OptimizerSpec& spec) {
  switch (spec.method.index()) {
    case 0: return gd_step(w, g, state, spec);
    case 1: return adagrad_step(w, g, state, spec);
    case 2: return adam_step(w, g, state, spec);
    default: return adadelta_step(w, g, state, spec);
  }
}

double last_learning_rate(const OptimizerState& state, const OptimizerSpec& spec) {
  if (state.schedule_step() == 0) return 0.0;
  return spec.lr.at(state.schedule_step());
}

WeightMap project_to_ball(const WeightMap& w, const WeightMap& center, double radius) {
  if (!(radius > 0.0)) throw ConfigError("projection radius must be > 0");
  double dist = l2_distance(w, center);
  if (dist <= radius) return w;
  double k = radius / dist;
  WeightMapBuilder out(center);
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto dst = out.values(i);
    const auto& x = w.tensors()[i].data;
    for (std::size_t e = 0; e < dst.size(); ++e) dst[e] = dst[e] + (x[e] - dst[e]) * k;
  }
  return std::move(out).build().with_metadata(w.metadata());
}

}  // namespace ame
