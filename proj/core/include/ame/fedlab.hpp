#pragma once

// Federated simulation over quadratic clients with local loss
// 1/2 |x - c_i|^2. FedOPT feeds the averaged client delta to a server
// optimizer; FedSoup aggregates clients with a soup (or a nested ensemble)
// and stews the result into the server model across rounds.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ame/engine.hpp"
#include "ame/optim.hpp"
#include "ame/pseudograd.hpp"
#include "ame/synthlab.hpp"
#include "ame/weightstore.hpp"

namespace ame {

struct ClientSpec {
  std::string id;
  WeightMap center;
  OptimizerSpec local_optimizer = OptimizerSpec::gd(Schedule::constant(1.0));
  std::uint64_t local_steps = 1;
};

enum class FedAlgorithm { FedOpt, FedSoup };

struct ClientSoupConfig {
  // Linear soup of the client models, or a nested ensemble run over them
  // with client ids as ingredient ids.
  bool linear = true;
  EnsembleConfig ensemble = [] {
    EnsembleConfig c;
    c.ordering = Ordering::GivenOrder;
    return c;
  }();
};

struct FedConfig {
  FedAlgorithm algorithm = FedAlgorithm::FedOpt;
  std::vector<ClientSpec> clients;
  WeightMap initial;
  std::size_t participants = 1;  // S, sampled uniformly without replacement
  std::uint64_t rounds = 1;
  std::uint64_t seed = 0;
  // Server optimizer (FedOPT) or stew optimizer (FedSoup). State persists
  // across rounds.
  OptimizerSpec server = OptimizerSpec::gd(Schedule::constant(1.0));
  ClientSoupConfig client_soup;
  // Stew amplification zeta_t; unset means t + 1, which cancels the 1/(t+1)
  // averaging factor.
  std::optional<Schedule> stew_zeta;
  unsigned threads = 0;
};

struct RoundLog {
  std::uint64_t round = 0;  // from 1
  std::vector<std::string> participants;
  WeightMap model;  // x_t
  WeightMap delta;  // mean client model minus x_{t-1}
  double delta_norm = 0.0;
  double distance_to_center_mean = 0.0;
};

struct FedResult {
  WeightMap model;
  std::vector<RoundLog> rounds;
};

// K steps of the local optimizer on the exact gradient x - c.
WeightMap client_train(const WeightMap& start, const ClientSpec& spec);

// Sorted client indices taking part in a round, from Rng(seed, round).
std::vector<std::size_t> sample_participants(std::size_t clients, std::size_t participants,
                                             std::uint64_t seed, std::uint64_t round);

FedResult simulate_fedopt(const FedConfig& cfg);
FedResult simulate_fedsoup(const FedConfig& cfg);
FedResult simulate(const FedConfig& cfg);

// Client centres drawn from a distribution, ids "c0", "c1", ...
std::vector<ClientSpec> make_clients(const DistributionSpec& spec, std::size_t count,
                                     std::uint64_t seed, const OptimizerSpec& local_optimizer,
                                     std::uint64_t local_steps);

// CSV header: round,participants,delta_norm,distance_to_center_mean
void write_rounds_csv(const FedResult& result, std::ostream& out);

}  // namespace ame
