#include "ame/fedlab.hpp"

#include <algorithm>
#include <ostream>
#include <set>

#include "ame/csv.hpp"
#include "ame/errors.hpp"
#include "ame/rng.hpp"

namespace ame {

WeightMap client_train(const WeightMap& start, const ClientSpec& spec) {
  if (spec.local_steps == 0) throw ConfigError("local_steps must be >= 1");
  require_compatible(start, spec.center);
  OptimizerState state;
  WeightMap w = start;
  for (std::uint64_t k = 0; k < spec.local_steps; ++k) {
    w = optimizer_step(w, axpby(1.0, w, -1.0, spec.center), state, spec.local_optimizer);
  }
  return w;
}

std::vector<std::size_t> sample_participants(std::size_t clients, std::size_t participants,
                                             std::uint64_t seed, std::uint64_t round) {
  Rng rng(seed, round);
  auto idx = sample_without_replacement(rng, clients, participants);
  std::sort(idx.begin(), idx.end());
  return idx;
}

namespace {

void check_fed_config(const FedConfig& cfg) {
  std::vector<std::string> errors;
  if (cfg.clients.empty()) errors.push_back("at least one client is required");
  if (cfg.rounds == 0) errors.push_back("rounds must be >= 1");
  if (cfg.participants == 0 || cfg.participants > cfg.clients.size()) {
    errors.push_back("participants must be in [1, number of clients]");
  }
  if (cfg.initial.empty()) errors.push_back("initial model has no tensors");
  std::set<std::string> ids;
  for (const auto& c : cfg.clients) {
    if (!ids.insert(c.id).second) errors.push_back("duplicate client id \"" + c.id + "\"");
    if (c.local_steps == 0) errors.push_back("client \"" + c.id + "\": local_steps must be >= 1");
    try {
      validate(c.local_optimizer);
    } catch (const ConfigError& e) {
      for (const auto& v : e.violations()) errors.push_back("client \"" + c.id + "\": " + v);
    }
  }
  try {
    validate(cfg.server);
  } catch (const ConfigError& e) {
    for (const auto& v : e.violations()) errors.push_back("server: " + v);
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));
  for (const auto& c : cfg.clients) require_compatible(cfg.initial, c.center);
}

WeightMap center_mean(const FedConfig& cfg) {
  std::vector<WeightMap> centers;
  for (const auto& c : cfg.clients) centers.push_back(c.center);
  return soup(centers);
}

struct RoundInput {
  std::vector<std::size_t> idx;
  std::vector<WeightMap> models;
};

RoundInput train_round(const FedConfig& cfg, const WeightMap& x, std::uint64_t round) {
  RoundInput in;
  in.idx = sample_participants(cfg.clients.size(), cfg.participants, cfg.seed, round);
  in.models.resize(in.idx.size());
  parallel_for(
      in.idx.size(),
      [&](std::size_t j) { in.models[j] = client_train(x, cfg.clients[in.idx[j]]); },
      cfg.threads);
  return in;
}

RoundLog make_log(const FedConfig& cfg, std::uint64_t round, const RoundInput& in,
                  const WeightMap& x, WeightMap delta, const WeightMap& centers) {
  RoundLog log;
  log.round = round;
  for (auto i : in.idx) log.participants.push_back(cfg.clients[i].id);
  log.model = x;
  log.delta_norm = global_l2_norm(delta);
  log.delta = std::move(delta);
  log.distance_to_center_mean = l2_distance(x, centers);
  return log;
}

}  // namespace

FedResult simulate_fedopt(const FedConfig& cfg) {
  check_fed_config(cfg);
  const WeightMap centers = center_mean(cfg);
  FedResult result;
  WeightMap x = cfg.initial;
  OptimizerState server;
  for (std::uint64_t t = 1; t <= cfg.rounds; ++t) {
    auto in = train_round(cfg, x, t);
    // mean(x_i - x) computed as mean(x_i) - x, the same arithmetic FedSoup
    // uses, so the two protocols agree bit for bit under the reduction.
    WeightMap delta = axpby(1.0, soup(in.models), -1.0, x);
    // Descend along -delta: GD with lr 1 lands on the client mean.
    x = optimizer_step(x, scale(-1.0, delta), server, cfg.server);
    result.rounds.push_back(make_log(cfg, t, in, x, std::move(delta), centers));
  }
  result.model = std::move(x);
  return result;
}

FedResult simulate_fedsoup(const FedConfig& cfg) {
  check_fed_config(cfg);
  const WeightMap centers = center_mean(cfg);
  FedResult result;
  WeightMap x = cfg.initial;
  OptimizerState stew;
  for (std::uint64_t t = 1; t <= cfg.rounds; ++t) {
    auto in = train_round(cfg, x, t);
    WeightMap w;
    if (cfg.client_soup.linear) {
      w = soup(in.models);
    } else {
      std::vector<Ingredient> ingredients;
      for (std::size_t j = 0; j < in.idx.size(); ++j) {
        ingredients.push_back({cfg.clients[in.idx[j]].id, in.models[j], {}});
      }
      w = run_ensemble(cfg.client_soup.ensemble, ingredients).weights;
    }
    // Server pseudogradient (zeta_t / (t+1)) (x_{t-1} - w_t).
    double factor = 1.0;
    if (cfg.stew_zeta) factor = cfg.stew_zeta->at(t) / static_cast<double>(t + 1);
    WeightMap g = axpby(factor, x, -factor, w);
    WeightMap delta = axpby(1.0, w, -1.0, x);
    x = optimizer_step(x, g, stew, cfg.server);
    result.rounds.push_back(make_log(cfg, t, in, x, std::move(delta), centers));
  }
  result.model = std::move(x);
  return result;
}

FedResult simulate(const FedConfig& cfg) {
  return cfg.algorithm == FedAlgorithm::FedOpt ? simulate_fedopt(cfg) : simulate_fedsoup(cfg);
}

std::vector<ClientSpec> make_clients(const DistributionSpec& spec, std::size_t count,
                                     std::uint64_t seed, const OptimizerSpec& local_optimizer,
                                     std::uint64_t local_steps) {
  auto points = sample_population(spec, count, seed);
  std::vector<ClientSpec> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back({"c" + std::to_string(i), WeightMap::vector(std::move(points[i])),
                   local_optimizer, local_steps});
  }
  return out;
}

void write_rounds_csv(const FedResult& result, std::ostream& out) {
  CsvWriter csv(out);
  csv.row({"round", "participants", "delta_norm", "distance_to_center_mean"});
  for (const auto& r : result.rounds) {
    std::string ids;
    for (const auto& id : r.participants) {
      if (!ids.empty()) ids += ';';
      ids += id;
    }
    csv.row({std::to_string(r.round), ids, format_double(r.delta_norm),
             format_double(r.distance_to_center_mean)});
  }
}

}  // namespace ame
