#include "ame/engine.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <set>

#include "ame/csv.hpp"
#include "ame/rng.hpp"

namespace ame {

std::vector<Ingredient> order_ingredients(std::span<const Ingredient> ingredients,
                                          Ordering ordering) {
  std::vector<Ingredient> out(ingredients.begin(), ingredients.end());
  if (ordering == Ordering::GivenOrder) return out;
  for (const auto& ing : out) {
    if (!ing.metric) throw ConfigError("ingredient \"" + ing.id + "\" has no metric to order by");
  }
  const bool desc = ordering == Ordering::ByMetricDesc;
  std::stable_sort(out.begin(), out.end(), [desc](const Ingredient& a, const Ingredient& b) {
    if (*a.metric != *b.metric) return desc ? *a.metric > *b.metric : *a.metric < *b.metric;
    return a.id < b.id;
  });
  return out;
}

WeightMap batch_pseudogradient(const WeightMap& pivot, std::span<const WeightMap* const> members,
                               double zeta, std::uint64_t n_divisor) {
  if (members.empty()) throw ConfigError("empty batch");
  if (n_divisor == 0) throw ConfigError("pseudogradient divisor must be >= 1");
  for (const auto* m : members) require_compatible(pivot, *m);
  const auto n = static_cast<double>(n_divisor);
  const auto b = static_cast<double>(members.size());
  WeightMapBuilder out(pivot);
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto dst = out.values(i);
    const auto& p = pivot.tensors()[i].data;
    for (auto& v : dst) v = 0.0;
    for (const auto* m : members) {
      const auto& x = m->tensors()[i].data;
      for (std::size_t e = 0; e < dst.size(); ++e) dst[e] += zeta * (p[e] - x[e]) / n;
    }
    for (auto& v : dst) v /= b;
  }
  return std::move(out).build();
}

namespace {

void check_config(const EnsembleConfig& cfg, std::span<const Ingredient> ingredients,
                  std::size_t streamed) {
  std::vector<std::string> errors;
  if (ingredients.empty()) errors.push_back("at least one ingredient is required");
  std::set<std::string> ids;
  for (const auto& ing : ingredients) {
    if (!ids.insert(ing.id).second) errors.push_back("duplicate ingredient id \"" + ing.id + "\"");
  }
  if (cfg.epochs == 0) errors.push_back("epochs must be >= 1");
  if (cfg.batch_size == 0) errors.push_back("batch_size must be >= 1");
  if (streamed > 0 && cfg.batch_size > streamed) {
    errors.push_back("batch_size " + std::to_string(cfg.batch_size) +
                     " exceeds the number of ingredients (" + std::to_string(streamed) + ")");
  }
  if (cfg.n_divisor && *cfg.n_divisor == 0) errors.push_back("n_divisor must be >= 1");
  if (cfg.ordering != Ordering::GivenOrder) {
    for (const auto& ing : ingredients) {
      if (!ing.metric) {
        errors.push_back("ordering by metric requires a metric for \"" + ing.id + "\"");
      }
    }
  }
  if (cfg.pivot_init.kind == PivotInit::Kind::Ingredient && !ids.count(cfg.pivot_init.ingredient_id)) {
    errors.push_back("pivot ingredient \"" + cfg.pivot_init.ingredient_id + "\" not found");
  }
  if (cfg.pivot_init.kind == PivotInit::Kind::Provided && cfg.pivot_init.weights.empty()) {
    errors.push_back("provided pivot has no tensors");
  }
  if (cfg.pivot_policy.kind == PivotPolicy::Kind::Ema &&
      !(cfg.pivot_policy.decay > 0.0 && cfg.pivot_policy.decay <= 1.0)) {
    errors.push_back("ema pivot decay must be in (0, 1]");
  }
  if (cfg.projection && !(cfg.projection->radius > 0.0)) {
    errors.push_back("projection radius must be > 0");
  }
  try {
    validate(cfg.optimizer);
  } catch (const ConfigError& e) {
    errors.insert(errors.end(), e.violations().begin(), e.violations().end());
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));
}

void ema_update(WeightMap& pivot, const WeightMap& w, double decay) {
  if (decay == 1.0) return;
  pivot = axpby(decay, pivot, 1.0 - decay, w);
}

}  // namespace

EnsembleResult run_ensemble(const EnsembleConfig& cfg, std::span<const Ingredient> ingredients) {
  const bool pivot_is_ingredient = cfg.pivot_init.kind == PivotInit::Kind::Ingredient;
  const std::size_t held_out = pivot_is_ingredient && !ingredients.empty() ? 1 : 0;
  check_config(cfg, ingredients, ingredients.size() - held_out);

  auto ordered = order_ingredients(ingredients, cfg.ordering);
  for (std::size_t i = 1; i < ordered.size(); ++i) {
    require_compatible(ordered.front().weights, ordered[i].weights);
  }

  WeightMap w;
  std::vector<const Ingredient*> stream;
  switch (cfg.pivot_init.kind) {
    case PivotInit::Kind::Soup: {
      std::vector<WeightMap> ws;
      ws.reserve(ordered.size());
      for (const auto& ing : ordered) ws.push_back(ing.weights);
      w = soup(ws);
      break;
    }
    case PivotInit::Kind::Ingredient:
      for (const auto& ing : ordered) {
        if (ing.id == cfg.pivot_init.ingredient_id) w = ing.weights;
      }
      break;
    case PivotInit::Kind::Provided:
      require_compatible(ordered.front().weights, cfg.pivot_init.weights);
      w = cfg.pivot_init.weights;
      break;
  }
  for (const auto& ing : ordered) {
    if (!(pivot_is_ingredient && ing.id == cfg.pivot_init.ingredient_id)) stream.push_back(&ing);
  }

  const std::uint64_t n_div = cfg.n_divisor.value_or(std::max<std::size_t>(stream.size(), 1));
  const WeightMap w0 = w;
  WeightMap ema = w;
  OptimizerState state;
  RunRecord record;
  std::uint64_t log_step = 0;

  std::optional<double> best;
  if (cfg.greedy) {
    try {
      best = cfg.greedy(w);
    } catch (const std::exception& e) {
      throw RunAborted(std::string("metric evaluator failed on the initial pivot: ") + e.what(),
                       record);
    }
    record.initial_metric = best;
  }

  std::vector<std::size_t> order(stream.size());
  std::vector<const WeightMap*> members;
  for (std::uint64_t epoch = 0; epoch < cfg.epochs && !stream.empty(); ++epoch) {
    if (epoch > 0 && cfg.epoch_lr_reset) state.schedule_origin = state.step;
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (cfg.shuffle) Rng(cfg.seed, epoch).shuffle(std::span<std::size_t>(order));

    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min<std::size_t>(begin + cfg.batch_size, order.size());
      StepLog log;
      log.step = ++log_step;
      log.epoch = epoch;
      members.clear();
      for (std::size_t k = begin; k < end; ++k) {
        members.push_back(&stream[order[k]]->weights);
        log.batch_ids.push_back(stream[order[k]]->id);
      }

      const WeightMap* pivot = &w;
      if (cfg.pivot_policy.kind == PivotPolicy::Kind::Fixed) pivot = &w0;
      if (cfg.pivot_policy.kind == PivotPolicy::Kind::Ema) pivot = &ema;

      log.zeta = cfg.zeta.at(state.schedule_step() + 1);
      WeightMap g = batch_pseudogradient(*pivot, members, log.zeta, n_div);
      log.grad_norm = global_l2_norm(g);

      std::optional<OptimizerState> snapshot;
      if (cfg.greedy) snapshot = state;
      WeightMap next = optimizer_step(w, g, state, cfg.optimizer);
      if (cfg.projection) next = project_to_ball(next, cfg.projection->center, cfg.projection->radius);
      log.eta = last_learning_rate(state, cfg.optimizer);
      log.displacement = l2_distance(next, w);

      if (cfg.greedy) {
        double metric;
        try {
          metric = cfg.greedy(next);
        } catch (const std::exception& e) {
          throw RunAborted("metric evaluator failed at step " + std::to_string(log.step) + ": " +
                               e.what(),
                           record);
        }
        log.metric = metric;
        log.accepted = metric > *best;
        if (log.accepted) {
          best = metric;
        } else {
          state = std::move(*snapshot);
        }
      }
      if (log.accepted) {
        w = std::move(next);
        if (cfg.pivot_policy.kind == PivotPolicy::Kind::Ema) {
          ema_update(ema, w, cfg.pivot_policy.decay);
        }
      }
      if (cfg.on_step) cfg.on_step(log, w);
      record.steps.push_back(std::move(log));
    }
  }
  return {std::move(w), std::move(record)};
}

EnsembleResult greedy_run(EnsembleConfig cfg, std::span<const Ingredient> ingredients,
                          Evaluator evaluate) {
  if (!evaluate) throw ConfigError("greedy ensembling requires a metric evaluator");
  cfg.greedy = std::move(evaluate);
  return run_ensemble(cfg, ingredients);
}

void write_run_csv(const RunRecord& record, std::ostream& out) {
  CsvWriter csv(out);
  csv.row({"step", "epoch", "batch_ids", "eta", "zeta", "grad_norm", "displacement", "metric",
           "accepted"});
  for (const auto& s : record.steps) {
    std::string ids;
    for (const auto& id : s.batch_ids) {
      if (!ids.empty()) ids += ';';
      ids += id;
    }
    csv.row({std::to_string(s.step), std::to_string(s.epoch), ids, format_double(s.eta),
             format_double(s.zeta), format_double(s.grad_norm), format_double(s.displacement),
             s.metric ? format_double(*s.metric) : std::string(), s.accepted ? "1" : "0"});
  }
}

}  // namespace ame
